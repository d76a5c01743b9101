#include "fcnpose/dataset.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numbers>
#include <sstream>

#include "json.hpp"

#include "fcnpose/errors.hpp"
#include "fcnpose/rng.hpp"
#include "parallel.hpp"

namespace fcnpose {
namespace {

using json = nlohmann::json;

enum SeedStream : std::uint64_t {
  kSceneStream = 0x5343454E,  // "SCEN"
  kSplitStream = 0x53504C54,  // "SPLT"
  kAugStream = 0x41554721,    // "AUG!"
};

struct Rgb {
  double r, g, b;
};

// One saturated, well separated color per keypoint.
constexpr std::array<Rgb, kKeypointCount> kJointPalette = {{
    {1.00, 0.10, 0.10},
    {1.00, 0.55, 0.00},
    {1.00, 1.00, 0.10},
    {0.10, 0.90, 0.10},
    {0.00, 0.90, 0.90},
    {0.15, 0.25, 1.00},
    {0.95, 0.10, 0.95},
    {1.00, 1.00, 1.00},
}};

double segment_distance_sq(double px, double py, double ax, double ay, double bx, double by) {
  const double dx = bx - ax;
  const double dy = by - ay;
  const double len_sq = dx * dx + dy * dy;
  double t = 0.0;
  if (len_sq > 0.0) t = std::clamp(((px - ax) * dx + (py - ay) * dy) / len_sq, 0.0, 1.0);
  const double cx = ax + t * dx - px;
  const double cy = ay + t * dy - py;
  return cx * cx + cy * cy;
}

struct PixelBox {
  std::size_t x0, x1, y0, y1;  // inclusive-exclusive
};

PixelBox clip_box(double lo_x, double hi_x, double lo_y, double hi_y, std::size_t height, std::size_t width) {
  auto clip = [](double v, std::size_t n) {
    return static_cast<std::size_t>(std::clamp(v, 0.0, static_cast<double>(n)));
  };
  return {clip(std::floor(lo_x), width), clip(std::floor(hi_x) + 1, width), clip(std::floor(lo_y), height),
          clip(std::floor(hi_y) + 1, height)};
}

bool inside_frame(const Keypoint& p, std::size_t height, std::size_t width, double margin) {
  return p.x >= margin && p.y >= margin && p.x <= static_cast<double>(width) - 1.0 - margin &&
         p.y <= static_cast<double>(height) - 1.0 - margin;
}

void blend(Tensor& image, std::size_t y, std::size_t x, const Rgb& color, double alpha) {
  const double rgb[3] = {color.r, color.g, color.b};
  for (std::size_t c = 0; c < 3; ++c) {
    float& v = image.at(c, y, x);
    v = static_cast<float>((1.0 - alpha) * v + alpha * rgb[c]);
  }
}

// Antialiased stroke: full coverage within half-width, linear ramp over one pixel.
void draw_segment(Tensor& image, double ax, double ay, double bx, double by, double width_px, const Rgb& color) {
  const double half = width_px / 2.0;
  const PixelBox box = clip_box(std::min(ax, bx) - half - 1, std::max(ax, bx) + half + 1,
                                std::min(ay, by) - half - 1, std::max(ay, by) + half + 1, image.height(),
                                image.width());
  for (std::size_t y = box.y0; y < box.y1; ++y) {
    for (std::size_t x = box.x0; x < box.x1; ++x) {
      const double d = std::sqrt(segment_distance_sq(static_cast<double>(x), static_cast<double>(y), ax, ay, bx, by));
      const double coverage = std::clamp(half + 0.5 - d, 0.0, 1.0);
      if (coverage > 0.0) blend(image, y, x, color, coverage);
    }
  }
}

void draw_disk(Tensor& image, double cx, double cy, double radius, const Rgb& color) {
  draw_segment(image, cx, cy, cx, cy, 2.0 * radius, color);
}

void draw_rect(Tensor& image, double x0, double y0, double x1, double y1, const Rgb& color) {
  const PixelBox box = clip_box(x0, x1, y0, y1, image.height(), image.width());
  for (std::size_t y = box.y0; y < box.y1; ++y) {
    for (std::size_t x = box.x0; x < box.x1; ++x) blend(image, y, x, color, 1.0);
  }
}

Rgb random_muted_color(Rng& rng) {
  const double gray = rng.uniform(0.1, 0.9);
  return {0.5 * gray + 0.5 * rng.uniform(), 0.5 * gray + 0.5 * rng.uniform(), 0.5 * gray + 0.5 * rng.uniform()};
}

void render_scene(Tensor& image, const ArmConfig& config, const KeypointSet& keypoints, Rng& rng) {
  const auto h = static_cast<double>(config.height);
  const auto w = static_cast<double>(config.width);
  const double s = std::min(h, w);

  // Background: base color with a linear gradient per channel.
  double base[3], gx[3], gy[3];
  for (int c = 0; c < 3; ++c) {
    base[c] = rng.uniform(0.15, 0.55);
    gx[c] = rng.uniform(-0.3, 0.3);
    gy[c] = rng.uniform(-0.3, 0.3);
  }
  for (std::size_t c = 0; c < 3; ++c) {
    for (std::size_t y = 0; y < config.height; ++y) {
      for (std::size_t x = 0; x < config.width; ++x) {
        image.at(c, y, x) = static_cast<float>(base[c] + gx[c] * (static_cast<double>(x) / w - 0.5) +
                                               gy[c] * (static_cast<double>(y) / h - 0.5));
      }
    }
  }

  for (std::size_t i = 0; i < config.clutter_count; ++i) {
    const Rgb color = random_muted_color(rng);
    const double cx = rng.uniform(0.0, w);
    const double cy = rng.uniform(0.0, h);
    const double size = rng.uniform(0.05, 0.25) * s;
    if (rng.uniform() < 0.5) {
      draw_rect(image, cx - size / 2, cy - size / 3, cx + size / 2, cy + size / 3, color);
    } else {
      draw_disk(image, cx, cy, size / 2, color);
    }
  }

  const double tone = rng.uniform(0.55, 0.85);
  const Rgb link_color{tone, tone, tone * rng.uniform(0.9, 1.1)};
  for (std::size_t i = 0; i < kLinkCount; ++i) {
    draw_segment(image, keypoints[i].x, keypoints[i].y, keypoints[i + 1].x, keypoints[i + 1].y,
                 config.link_width_px, link_color);
  }
  for (std::size_t i = 0; i < kKeypointCount; ++i) {
    draw_disk(image, keypoints[i].x, keypoints[i].y, config.joint_radius_px, kJointPalette[i]);
  }
}

void add_noise(Tensor& image, Rng& rng, double amplitude) {
  for (float& v : image.values()) v = static_cast<float>(v + rng.uniform(-amplitude, amplitude));
}

float bilinear_zero(const Tensor& image, std::size_t c, double x, double y) {
  const double fx = std::floor(x);
  const double fy = std::floor(y);
  const double ax = x - fx;
  const double ay = y - fy;
  const auto ix = static_cast<long>(fx);
  const auto iy = static_cast<long>(fy);
  auto px = [&](long yy, long xx) -> double {
    if (xx < 0 || yy < 0 || xx >= static_cast<long>(image.width()) || yy >= static_cast<long>(image.height())) {
      return 0.0;
    }
    return image.at(c, static_cast<std::size_t>(yy), static_cast<std::size_t>(xx));
  };
  const double top = (1 - ax) * px(iy, ix) + ax * px(iy, ix + 1);
  const double bottom = (1 - ax) * px(iy + 1, ix) + ax * px(iy + 1, ix + 1);
  return static_cast<float>((1 - ay) * top + ay * bottom);
}

json keypoints_to_json(const KeypointSet& keypoints) {
  json points = json::array();
  for (const Keypoint& p : keypoints) points.push_back({p.x, p.y, p.visible});
  return points;
}

KeypointSet keypoints_from_json(const json& points, const std::string& where) {
  if (!points.is_array() || points.size() != kKeypointCount) {
    throw ParseError(ParseErrorKind::bad_value, where + ": expected " + std::to_string(kKeypointCount) + " keypoints");
  }
  KeypointSet keypoints;
  for (std::size_t i = 0; i < kKeypointCount; ++i) {
    const json& p = points[i];
    if (!p.is_array() || p.size() != 3 || !p[0].is_number() || !p[1].is_number() || !p[2].is_boolean()) {
      throw ParseError(ParseErrorKind::bad_value, where + ": keypoint " + std::to_string(i) + " must be [x, y, visible]");
    }
    keypoints[i] = {p[0].get<double>(), p[1].get<double>(), p[2].get<bool>()};
  }
  return keypoints;
}

json read_json_file(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open " + path.string());
  try {
    return json::parse(in);
  } catch (const json::parse_error& e) {
    throw ParseError(ParseErrorKind::bad_value, path.string() + ": " + e.what());
  }
}

}  // namespace

MaskStyle MaskStyle::scaled_for(std::size_t height, std::size_t width) {
  const double scale = static_cast<double>(std::min(height, width)) / 1080.0;
  return {std::max(2.0, 6.0 * scale), std::max(2.0, 30.0 * scale)};
}

ArmConfig ArmConfig::for_resolution(std::size_t height, std::size_t width) {
  ArmConfig config;
  config.height = height;
  config.width = width;
  const double s = static_cast<double>(std::min(height, width));
  const double fractions[kLinkCount] = {0.17, 0.15, 0.13, 0.12, 0.10, 0.08, 0.07};
  // Five articulated joints on a fixed base; the two wrist links are rigid.
  for (std::size_t i = 0; i < kLinkCount; ++i) {
    config.link_lengths[i] = fractions[i] * s;
    config.joint_ranges[i] = i == 0 ? JointRange{-0.3, 0.3} : i < 5 ? JointRange{-0.5, 0.5} : JointRange{0.0, 0.0};
  }
  config.base_x_lo = config.base_x_hi = 0.5 * static_cast<double>(width);
  config.base_y_lo = config.base_y_hi = 0.85 * static_cast<double>(height);
  config.heading_jitter = 0.0;
  config.link_width_px = std::max(1.5, 0.05 * s);
  config.joint_radius_px = std::max(1.5, 0.04 * s);
  config.mask = MaskStyle::scaled_for(height, width);
  return config;
}

void ArmConfig::validate() const {
  if (height == 0 || width == 0 || height % kSpatialDivisor != 0 || width % kSpatialDivisor != 0) {
    throw ContractViolation("ArmConfig: resolution " + std::to_string(height) + "x" + std::to_string(width) +
                            " must be a positive multiple of " + std::to_string(kSpatialDivisor));
  }
  for (std::size_t i = 0; i < kLinkCount; ++i) {
    if (!(link_lengths[i] >= 0.0)) throw ContractViolation("ArmConfig: negative link length");
    if (joint_ranges[i].lo > joint_ranges[i].hi) throw ContractViolation("ArmConfig: empty joint range");
  }
  if (base_x_lo > base_x_hi || base_y_lo > base_y_hi) throw ContractViolation("ArmConfig: empty base range");
  if (!(mask.radius_px > 0.0) || !(mask.stroke_px > 0.0)) {
    throw ContractViolation("ArmConfig: mask radius and stroke must be positive");
  }
  if (max_attempts == 0) throw ContractViolation("ArmConfig: max_attempts must be positive");
}

KeypointSet forward_kinematics(const ArmConfig& config, double base_x, double base_y, double heading,
                               const std::array<double, kLinkCount>& joint_angles) {
  KeypointSet keypoints;
  keypoints[0] = {base_x, base_y, true};
  double angle = heading;
  for (std::size_t i = 0; i < kLinkCount; ++i) {
    angle += joint_angles[i];
    keypoints[i + 1] = {keypoints[i].x + config.link_lengths[i] * std::cos(angle),
                        keypoints[i].y + config.link_lengths[i] * std::sin(angle), true};
  }
  return keypoints;
}

Tensor rasterize_masks(const KeypointSet& keypoints, std::size_t height, std::size_t width, double radius_px,
                       double stroke_px) {
  if (!(radius_px > 0.0) || !(stroke_px > 0.0)) {
    throw ContractViolation("rasterize_masks: radius and stroke must be positive");
  }
  Tensor masks = Tensor::chw(kOutputChannels, height, width);
  const double r_sq = radius_px * radius_px;
  for (std::size_t c = 0; c < kKeypointCount; ++c) {
    const Keypoint& p = keypoints[c];
    if (!p.visible) continue;
    const PixelBox box = clip_box(p.x - radius_px, p.x + radius_px, p.y - radius_px, p.y + radius_px, height, width);
    for (std::size_t y = box.y0; y < box.y1; ++y) {
      for (std::size_t x = box.x0; x < box.x1; ++x) {
        const double dx = static_cast<double>(x) - p.x;
        const double dy = static_cast<double>(y) - p.y;
        if (dx * dx + dy * dy <= r_sq) masks.at(c, y, x) = 1.0f;
      }
    }
  }
  const double half = stroke_px / 2.0;
  const double half_sq = half * half;
  for (std::size_t i = 0; i < kLinkCount; ++i) {
    const Keypoint& a = keypoints[i];
    const Keypoint& b = keypoints[i + 1];
    const PixelBox box = clip_box(std::min(a.x, b.x) - half, std::max(a.x, b.x) + half, std::min(a.y, b.y) - half,
                                  std::max(a.y, b.y) + half, height, width);
    for (std::size_t y = box.y0; y < box.y1; ++y) {
      for (std::size_t x = box.x0; x < box.x1; ++x) {
        if (segment_distance_sq(static_cast<double>(x), static_cast<double>(y), a.x, a.y, b.x, b.y) <= half_sq) {
          masks.at(kSkeletonChannel, y, x) = 1.0f;
        }
      }
    }
  }
  return masks;
}

void quantize_to_8bit(Tensor& image) {
  for (float& v : image.values()) {
    const double level = std::round(std::clamp(static_cast<double>(v), 0.0, 1.0) * 255.0);
    v = static_cast<float>(level / 255.0);
  }
}

Sample gen_scene(const ArmConfig& config, std::uint64_t seed) {
  config.validate();
  Rng rng(seed);
  KeypointSet keypoints;
  bool placed = false;
  for (std::size_t attempt = 0; attempt < config.max_attempts && !placed; ++attempt) {
    const double bx = rng.uniform(config.base_x_lo, config.base_x_hi);
    const double by = rng.uniform(config.base_y_lo, config.base_y_hi);
    const double heading = config.base_heading + rng.uniform(-config.heading_jitter, config.heading_jitter);
    std::array<double, kLinkCount> angles{};
    for (std::size_t i = 0; i < kLinkCount; ++i) {
      angles[i] = rng.uniform(config.joint_ranges[i].lo, config.joint_ranges[i].hi);
    }
    keypoints = forward_kinematics(config, bx, by, heading, angles);
    placed = std::all_of(keypoints.begin(), keypoints.end(), [&](const Keypoint& p) {
      return inside_frame(p, config.height, config.width, config.margin_px);
    });
  }
  if (!placed) {
    throw DataError("gen_scene: no arm pose fit the frame after " + std::to_string(config.max_attempts) +
                    " attempts");
  }

  Sample sample;
  sample.image = Tensor::chw(3, config.height, config.width);
  render_scene(sample.image, config, keypoints, rng);

  if (config.occluders) {
    const double s = static_cast<double>(std::min(config.height, config.width));
    for (std::size_t i = 0; i < config.occluder_count; ++i) {
      const double cx = rng.uniform(0.0, static_cast<double>(config.width));
      const double cy = rng.uniform(0.0, static_cast<double>(config.height));
      const double half = rng.uniform(0.05, 0.15) * s;
      const Rgb color = random_muted_color(rng);
      draw_rect(sample.image, cx - half, cy - half, cx + half, cy + half, color);
      for (Keypoint& p : keypoints) {
        if (p.x >= cx - half && p.x <= cx + half && p.y >= cy - half && p.y <= cy + half) p.visible = false;
      }
    }
  }

  add_noise(sample.image, rng, 0.03);
  quantize_to_8bit(sample.image);
  sample.keypoints = keypoints;
  sample.masks = rasterize_masks(keypoints, config.height, config.width, config.mask);
  return sample;
}

Keypoint SpatialTransform::apply(const Keypoint& p, std::size_t height, std::size_t width) const {
  const double cx = (static_cast<double>(width) - 1.0) / 2.0;
  const double cy = (static_cast<double>(height) - 1.0) / 2.0;
  const double theta = rotation_deg * std::numbers::pi / 180.0;
  const double c = std::cos(theta);
  const double s = std::sin(theta);
  const double dx = p.x - cx;
  const double dy = p.y - cy;
  return {cx + c * dx - s * dy + shift_x, cy + s * dx + c * dy + shift_y, p.visible};
}

std::optional<Sample> transform_sample(const Sample& sample, const SpatialTransform& transform,
                                       const MaskStyle& style) {
  const std::size_t h = sample.image.height();
  const std::size_t w = sample.image.width();
  KeypointSet moved;
  for (std::size_t i = 0; i < kKeypointCount; ++i) {
    moved[i] = transform.apply(sample.keypoints[i], h, w);
    if (!inside_frame(moved[i], h, w, 0.0)) return std::nullopt;
  }

  Sample out;
  out.keypoints = moved;
  out.image = Tensor::chw(3, h, w);
  const double cx = (static_cast<double>(w) - 1.0) / 2.0;
  const double cy = (static_cast<double>(h) - 1.0) / 2.0;
  const double theta = transform.rotation_deg * std::numbers::pi / 180.0;
  const double c = std::cos(theta);
  const double s = std::sin(theta);
  for (std::size_t y = 0; y < h; ++y) {
    for (std::size_t x = 0; x < w; ++x) {
      // Inverse map: undo the shift, then rotate by -theta about the center.
      const double dx = static_cast<double>(x) - transform.shift_x - cx;
      const double dy = static_cast<double>(y) - transform.shift_y - cy;
      const double sx = cx + c * dx + s * dy;
      const double sy = cy - s * dx + c * dy;
      for (std::size_t ch = 0; ch < 3; ++ch) out.image.at(ch, y, x) = bilinear_zero(sample.image, ch, sx, sy);
    }
  }
  quantize_to_8bit(out.image);
  out.masks = rasterize_masks(moved, h, w, style);
  return out;
}

SpatialTransform draw_transform(std::uint64_t seed, const AugmentParams& params, AugmentMode* mode) {
  Rng rng(seed);
  const auto picked = static_cast<AugmentMode>(rng.below(3));
  if (mode != nullptr) *mode = picked;
  SpatialTransform t;
  if (picked != AugmentMode::padding) {
    t.rotation_deg = rng.uniform(-params.max_rotation_deg, params.max_rotation_deg);
  }
  if (picked != AugmentMode::rotation) {
    t.shift_x = rng.uniform(-params.max_shift_px, params.max_shift_px);
    t.shift_y = rng.uniform(-params.max_shift_px, params.max_shift_px);
  }
  return t;
}

std::optional<Sample> augment(const Sample& sample, std::uint64_t seed, const AugmentParams& params) {
  return transform_sample(sample, draw_transform(seed, params), params.mask);
}

DatasetSplit build_dataset(const ArmConfig& config, const DatasetOptions& options, std::uint64_t seed) {
  config.validate();
  if (!(options.val_fraction > 0.0 && options.val_fraction < 1.0)) {
    throw ContractViolation("build_dataset: val_fraction must lie in (0, 1)");
  }
  const auto n_val = static_cast<std::size_t>(std::llround(static_cast<double>(options.n_base) * options.val_fraction));
  if (n_val == 0 || n_val >= options.n_base) {
    throw ContractViolation("build_dataset: split leaves an empty train or validation set");
  }

  std::vector<Sample> base(options.n_base);
  detail::parallel_for(options.n_base, options.threads,
                       [&](std::size_t i) { base[i] = gen_scene(config, child_seed(seed, kSceneStream, i)); });

  std::vector<std::size_t> order(options.n_base);
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  Rng split_rng(child_seed(seed, kSplitStream));
  split_rng.shuffle(order.begin(), order.end());
  std::vector<std::size_t> val_ids(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(n_val));
  std::vector<std::size_t> train_ids(order.begin() + static_cast<std::ptrdiff_t>(n_val), order.end());
  std::sort(val_ids.begin(), val_ids.end());
  std::sort(train_ids.begin(), train_ids.end());

  DatasetSplit split;
  for (std::size_t id : val_ids) split.val.push_back(base[id]);

  const std::size_t per = options.augment_per_image + 1;
  split.train.resize(train_ids.size() * per);
  AugmentParams aug = options.augment;
  aug.mask = config.mask;
  detail::parallel_for(train_ids.size(), options.threads, [&](std::size_t t) {
    const std::size_t id = train_ids[t];
    split.train[t * per] = base[id];
    for (std::size_t k = 0; k < options.augment_per_image; ++k) {
      std::optional<Sample> augmented;
      for (std::size_t attempt = 0; attempt < options.max_augment_attempts && !augmented; ++attempt) {
        augmented = augment(base[id], child_seed(seed, kAugStream, (id * 64 + k) * 1024 + attempt), aug);
      }
      if (!augmented) {
        throw DataError("build_dataset: every augmentation of scene " + std::to_string(id) + " left the frame");
      }
      split.train[t * per + 1 + k] = std::move(*augmented);
    }
  });
  return split;
}

void write_ppm(const std::filesystem::path& path, const Tensor& image) {
  if (image.rank() != 3 || image.channels() != 3) throw ContractViolation("write_ppm: expected a (3,H,W) image");
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot open " + path.string() + " for writing");
  out << "P6\n" << image.width() << " " << image.height() << "\n255\n";
  std::vector<unsigned char> row(image.width() * 3);
  for (std::size_t y = 0; y < image.height(); ++y) {
    for (std::size_t x = 0; x < image.width(); ++x) {
      for (std::size_t c = 0; c < 3; ++c) {
        const double v = std::clamp(static_cast<double>(image.at(c, y, x)), 0.0, 1.0);
        row[x * 3 + c] = static_cast<unsigned char>(std::lround(v * 255.0));
      }
    }
    out.write(reinterpret_cast<const char*>(row.data()), static_cast<std::streamsize>(row.size()));
  }
  if (!out) throw IoError("failed writing " + path.string());
}

Tensor read_ppm(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  auto token = [&]() {
    std::string t;
    while (in >> std::ws && in.peek() == '#') {
      std::string comment;
      std::getline(in, comment);
    }
    in >> t;
    return t;
  };
  if (token() != "P6") throw ParseError(ParseErrorKind::bad_magic, path.string() + ": not a binary PPM (P6)");
  std::size_t width = 0, height = 0, maxval = 0;
  try {
    width = std::stoul(token());
    height = std::stoul(token());
    maxval = std::stoul(token());
  } catch (const std::exception&) {
    throw ParseError(ParseErrorKind::bad_value, path.string() + ": malformed PPM header");
  }
  if (maxval != 255 || width == 0 || height == 0) {
    throw ParseError(ParseErrorKind::bad_value, path.string() + ": only 8-bit PPM images are supported");
  }
  in.get();  // single whitespace after maxval
  std::vector<unsigned char> bytes(width * height * 3);
  in.read(reinterpret_cast<char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (in.gcount() != static_cast<std::streamsize>(bytes.size())) {
    throw ParseError(ParseErrorKind::truncated, path.string() + ": truncated pixel data");
  }
  Tensor image = Tensor::chw(3, height, width);
  for (std::size_t y = 0; y < height; ++y) {
    for (std::size_t x = 0; x < width; ++x) {
      for (std::size_t c = 0; c < 3; ++c) {
        image.at(c, y, x) = static_cast<float>(bytes[(y * width + x) * 3 + c] / 255.0);
      }
    }
  }
  return image;
}

void save_split(const std::filesystem::path& dir, const std::string& split, const std::vector<Sample>& samples,
                const MaskStyle& style) {
  std::filesystem::create_directories(dir);
  json doc;
  doc["split"] = split;
  doc["mask_radius_px"] = style.radius_px;
  doc["mask_stroke_px"] = style.stroke_px;
  doc["height"] = samples.empty() ? 0 : samples.front().image.height();
  doc["width"] = samples.empty() ? 0 : samples.front().image.width();
  json entries = json::array();
  for (std::size_t i = 0; i < samples.size(); ++i) {
    char name[64];
    std::snprintf(name, sizeof(name), "%s_%05zu.ppm", split.c_str(), i);
    write_ppm(dir / name, samples[i].image);
    entries.push_back({{"image", name}, {"keypoints", keypoints_to_json(samples[i].keypoints)}});
  }
  doc["samples"] = std::move(entries);
  std::ofstream out(dir / (split + ".json"), std::ios::trunc);
  if (!out) throw IoError("cannot write annotations for split " + split);
  out << doc.dump(1) << "\n";
}

MaskStyle load_mask_style(const std::filesystem::path& dir, const std::string& split) {
  const json doc = read_json_file(dir / (split + ".json"));
  try {
    return {doc.at("mask_radius_px").get<double>(), doc.at("mask_stroke_px").get<double>()};
  } catch (const json::exception& e) {
    throw ParseError(ParseErrorKind::bad_value, split + ".json: " + e.what());
  }
}

std::vector<Sample> load_split(const std::filesystem::path& dir, const std::string& split) {
  const auto path = dir / (split + ".json");
  const json doc = read_json_file(path);
  std::vector<Sample> samples;
  try {
    const MaskStyle style{doc.at("mask_radius_px").get<double>(), doc.at("mask_stroke_px").get<double>()};
    const json& entries = doc.at("samples");
    for (std::size_t i = 0; i < entries.size(); ++i) {
      Sample sample;
      sample.image = read_ppm(dir / entries[i].at("image").get<std::string>());
      sample.keypoints = keypoints_from_json(entries[i].at("keypoints"), path.string() + " sample " + std::to_string(i));
      sample.masks = rasterize_masks(sample.keypoints, sample.image.height(), sample.image.width(), style);
      samples.push_back(std::move(sample));
    }
  } catch (const json::exception& e) {
    throw ParseError(ParseErrorKind::bad_value, path.string() + ": " + e.what());
  }
  return samples;
}

}  // namespace fcnpose
