#include "cli.hpp"

#include <algorithm>
#include <cstdlib>
#include <fstream>
#include <functional>
#include <iostream>
#include <memory>
#include <sstream>

#include "CLI11.hpp"
#include "json.hpp"

#include "fcnpose/compressor.hpp"
#include "fcnpose/dataset.hpp"
#include "fcnpose/errors.hpp"
#include "fcnpose/metrics.hpp"
#include "fcnpose/network.hpp"
#include "fcnpose/postprocess.hpp"
#include "fcnpose/rng.hpp"
#include "fcnpose/trainer.hpp"

namespace fcnpose::cli {
namespace {

namespace fs = std::filesystem;
using nlohmann::json;

void log(const std::string& message) { std::cerr << "[fcnpose] " << message << std::endl; }

// Flat JSON object -> CLI11 config items; keys are long option names.
// Items are routed to the selected leaf subcommand, since CLI11 only reads
// config files at the root.
class JsonConfig : public CLI::Config {
 public:
  explicit JsonConfig(const CLI::App* root) : root_(root) {}

  std::string to_config(const CLI::App*, bool, bool, std::string) const override { return "{}"; }

  std::vector<CLI::ConfigItem> from_config(std::istream& input) const override {
    json doc;
    try {
      doc = json::parse(input);
    } catch (const json::exception& e) {
      throw CLI::ConversionError(std::string("config file is not valid JSON: ") + e.what());
    }
    if (!doc.is_object()) throw CLI::ConversionError("config file must hold a JSON object");
    std::vector<std::string> path;
    for (const CLI::App* app = root_; !app->get_subcommands().empty();) {
      app = app->get_subcommands().front();
      path.push_back(app->get_name());
    }
    const std::string command = CLI::detail::join(path, " ");
    if (doc.contains("command") && doc["command"] != command) {
      throw CLI::ConversionError("config file was written by '" + scalar(doc["command"]) + "', not '" + command + "'");
    }
    std::vector<CLI::ConfigItem> items;
    for (const auto& [key, value] : doc.items()) {
      if (key == "command") continue;
      CLI::ConfigItem item;
      item.parents = path;
      item.name = key;
      if (value.is_array()) {
        for (const auto& v : value) item.inputs.push_back(scalar(v));
      } else {
        item.inputs.push_back(scalar(value));
      }
      items.push_back(std::move(item));
    }
    return items;
  }

 private:
  static std::string scalar(const json& v) {
    if (v.is_string()) return v.get<std::string>();
    if (v.is_boolean()) return v.get<bool>() ? "true" : "false";
    return v.dump();
  }

  const CLI::App* root_;
};

int thread_count() {
  if (const char* env = std::getenv("FCNPOSE_NUM_THREADS")) {
    char* end = nullptr;
    const long n = std::strtol(env, &end, 10);
    if (end == env || *end != '\0' || n < 1) throw ContractViolation("FCNPOSE_NUM_THREADS must be a positive integer");
    return static_cast<int>(n);
  }
  return 1;
}

// Option registry: binds a variable and remembers how to dump its resolved value.
struct Command {
  CLI::App* app = nullptr;
  std::vector<std::function<void(json&)>> dumps;

  template <typename T>
  CLI::Option* option(const std::string& name, T& value, const std::string& help) {
    dumps.push_back([name, &value](json& j) { j[name] = value; });
    return app->add_option("--" + name, value, help)->capture_default_str();
  }

  CLI::Option* flag(const std::string& name, bool& value, const std::string& help) {
    dumps.push_back([name, &value](json& j) { j[name] = value; });
    return app->add_flag("--" + name, value, help);
  }

  json resolved() const {
    json j;
    j["command"] = app->get_parent() != nullptr && app->get_parent()->get_parent() != nullptr
                       ? app->get_parent()->get_name() + " " + app->get_name()
                       : app->get_name();
    for (const auto& dump : dumps) dump(j);
    return j;
  }
};

void prepare_output(const fs::path& dir) {
  if (dir.empty()) throw ContractViolation("--out is required");
  std::error_code ec;
  if (fs::exists(dir, ec)) {
    if (!fs::is_directory(dir) || !fs::is_empty(dir)) {
      throw IoError("refusing to overwrite existing output " + dir.string());
    }
  } else if (!fs::create_directories(dir, ec) && ec) {
    throw IoError("cannot create " + dir.string() + ": " + ec.message());
  }
}

void write_run_config(const fs::path& dir, const Command& command) {
  write_text(dir / "run_config.json", command.resolved().dump(2) + "\n");
}

struct Common {
  std::uint64_t seed = 1;
  std::string resolution = "64";
};

struct TrainFlags {
  std::size_t epochs = 200;
  std::size_t batch_size = 8;
  double lr = 1e-3;
  std::size_t patience = 20;
  double min_delta = 1e-4;

  void add(Command& c) {
    c.option("epochs", epochs, "Maximum training epochs");
    c.option("batch-size", batch_size, "Mini-batch size");
    c.option("lr", lr, "Adam learning rate");
    c.option("patience", patience, "Early-stopping patience in epochs");
    c.option("min-delta", min_delta, "Minimum loss improvement that resets patience");
  }

  TrainConfig config(std::uint64_t seed) const {
    TrainConfig t;
    t.max_epochs = epochs;
    t.batch_size = batch_size;
    t.learning_rate = lr;
    t.patience = patience;
    t.min_delta = min_delta;
    t.seed = seed;
    return t;
  }
};

struct EvalFlags {
  double alpha = 0.5;
  std::string normalization = "bbox-diagonal";
  double reference = 0.0;
  float threshold = kDefaultThreshold;
  double distance_m = kDefaultClusterDistance;

  void add(Command& c) {
    c.option("alpha", alpha, "PCK threshold fraction");
    c.option("normalization", normalization, "PCK length: bbox-diagonal | reference-link | absolute-pixels")
        ->check(CLI::IsMember({"bbox-diagonal", "reference-link", "absolute-pixels"}));
    c.option("reference", reference, "Link index (reference-link) or pixel length (absolute-pixels)");
    c.option("threshold", threshold, "Activation binarization threshold");
    c.option("distance-m", distance_m, "Expansion Clustering distance M in pixels");
  }

  EvalOptions options() const {
    EvalOptions o;
    o.pck.alpha = alpha;
    o.pck.normalization = pck_normalization_from_string(normalization);
    o.pck.reference = reference;
    o.threshold = threshold;
    o.max_distance = distance_m;
    o.threads = static_cast<std::size_t>(thread_count());
    return o;
  }
};

json history_json(const TrainHistory& h) {
  return {{"epochs", h.epochs()}, {"best_epoch", h.best_epoch}, {"stop_reason", to_string(h.stop_reason)}};
}

// --- dataset ----------------------------------------------------------------

struct DatasetGen {
  Command cmd;
  Common common;
  std::string out;
  std::size_t n = 500;
  double val_fraction = 0.2;
  std::size_t augment = 0;
  bool occluders = false;

  void add(CLI::App& parent) {
    cmd.app = parent.add_subcommand("gen", "Generate a synthetic articulated-arm dataset");
    cmd.option("seed", common.seed, "Random seed");
    cmd.option("resolution", common.resolution, "HxW or N (multiples of 32)");
    cmd.option("out", out, "Output directory")->required();
    cmd.option("n", n, "Number of base scenes");
    cmd.option("val-fraction", val_fraction, "Fraction of base scenes held out for validation");
    cmd.option("augment", augment, "Augmented copies per training scene");
    cmd.flag("occluders", occluders, "Draw occluding boxes (covered keypoints become invisible)");
  }

  void run() {
    const auto [h, w] = parse_resolution(common.resolution);
    ArmConfig config = ArmConfig::for_resolution(h, w);
    config.occluders = occluders;
    DatasetOptions options;
    options.n_base = n;
    options.val_fraction = val_fraction;
    options.augment_per_image = augment;
    options.augment.mask = config.mask;
    options.threads = static_cast<std::size_t>(thread_count());
    prepare_output(out);
    log("generating " + std::to_string(n) + " scenes at " + std::to_string(h) + "x" + std::to_string(w));
    const DatasetSplit split = build_dataset(config, options, common.seed);
    save_split(out, "train", split.train, config.mask);
    save_split(out, "val", split.val, config.mask);
    write_run_config(out, cmd);
    log("wrote " + std::to_string(split.train.size()) + " train / " + std::to_string(split.val.size()) +
        " val samples to " + out);
  }
};

struct DatasetInspect {
  Command cmd;
  std::string data;

  void add(CLI::App& parent) {
    cmd.app = parent.add_subcommand("inspect", "Summarize a dataset directory");
    cmd.option("data", data, "Dataset directory")->required();
  }

  void run() {
    json report;
    for (const char* split : {"train", "val"}) {
      if (!fs::exists(fs::path(data) / (std::string(split) + ".json"))) continue;
      const auto samples = load_split(data, split);
      const MaskStyle style = load_mask_style(data, split);
      std::size_t visible = 0;
      for (const Sample& s : samples) {
        for (const Keypoint& k : s.keypoints) visible += k.visible ? 1 : 0;
      }
      json entry{{"samples", samples.size()},
                 {"mask_radius_px", style.radius_px},
                 {"mask_stroke_px", style.stroke_px},
                 {"visible_keypoints", visible}};
      if (!samples.empty()) {
        entry["height"] = samples.front().image.height();
        entry["width"] = samples.front().image.width();
      }
      report[split] = entry;
    }
    if (report.is_null()) throw DataError("no train.json or val.json in " + data);
    std::cout << report.dump(2) << std::endl;
  }
};

// --- model commands -----------------------------------------------------------

std::vector<Sample> load_optional(const std::string& dir, const std::string& split) {
  if (!fs::exists(fs::path(dir) / (split + ".json"))) return {};
  return load_split(dir, split);
}

struct Train {
  Command cmd;
  Common common;
  TrainFlags flags;
  std::string data, out, init;

  void add(CLI::App& app) {
    cmd.app = app.add_subcommand("train", "Train a model (from scratch or from --init)");
    cmd.option("seed", common.seed, "Seed for weight init and shuffling");
    cmd.option("data", data, "Dataset directory")->required();
    cmd.option("out", out, "Output directory")->required();
    cmd.option("init", init, "Start from this model file (e.g. a pruned model)");
    flags.add(cmd);
  }

  void run() {
    const auto train_set = load_split(data, "train");
    const auto val_set = load_optional(data, "val");
    const Model start = init.empty() ? build_fcn_pose(common.seed) : load_model(init);
    prepare_output(out);
    log("training " + std::to_string(count_params(start.spec)) + " parameters on " +
        std::to_string(train_set.size()) + " samples");
    const TrainResult result = train(start, train_set, val_set, flags.config(common.seed),
                                     [](std::size_t epoch, double tl, double vl) {
                                       if (epoch % 10 == 0) {
                                         log("epoch " + std::to_string(epoch) + " train " + std::to_string(tl) +
                                             " val " + std::to_string(vl));
                                       }
                                     });
    save_model(result.model, fs::path(out) / "model.fcnp");
    write_history_csv(result.history, fs::path(out) / "history.csv");
    write_text(fs::path(out) / "train.json", history_json(result.history).dump(2) + "\n");
    write_run_config(out, cmd);
    log("best epoch " + std::to_string(result.history.best_epoch) + " of " +
        std::to_string(result.history.epochs()) + " (" + to_string(result.history.stop_reason) + ")");
  }
};

struct Prune {
  Command cmd;
  std::string model, out, rate = "70";

  void add(CLI::App& app) {
    cmd.app = app.add_subcommand("prune", "L1 filter pruning");
    cmd.option("model", model, "Input model file")->required();
    cmd.option("rate", rate, "Pruning rate (fraction, or percentage if >= 1)");
    cmd.option("out", out, "Output directory")->required();
  }

  void run() {
    const auto rates = parse_rates(rate);
    if (rates.size() != 1) throw ContractViolation("prune takes exactly one --rate");
    const Model input = load_model(model);
    if (input.weights.dtype != DType::fp32) throw ContractViolation("prune expects an FP32 model");
    prepare_output(out);
    PruningPlan plan;
    const Model pruned = prune_model(input, rates.front(), &plan);
    save_model(pruned, fs::path(out) / "model.fcnp");
    save_plan(plan, fs::path(out) / "plan.json");
    write_run_config(out, cmd);
    log("parameters " + std::to_string(count_params(input.spec)) + " -> " + std::to_string(count_params(pruned.spec)));
  }
};

struct Quantize {
  Command cmd;
  std::string model, out;

  void add(CLI::App& app) {
    cmd.app = app.add_subcommand("quantize", "FP32 -> FP16 post-training quantization");
    cmd.option("model", model, "Input model file")->required();
    cmd.option("out", out, "Output directory")->required();
  }

  void run() {
    const Model input = load_model(model);
    prepare_output(out);
    if (input.weights.dtype == DType::fp16) {
      log("warning: " + model + " is already FP16; writing it unchanged");
      save_model(input, fs::path(out) / "model.fcnp");
    } else {
      save_model(quantize_model(input), fs::path(out) / "model.fcnp");
    }
    write_run_config(out, cmd);
  }
};

struct Eval {
  Command cmd;
  EvalFlags flags;
  std::string model, data, split = "val", out;

  void add(CLI::App& app) {
    cmd.app = app.add_subcommand("eval", "PCK evaluation with keypoint extraction");
    cmd.option("model", model, "Model file")->required();
    cmd.option("data", data, "Dataset directory")->required();
    cmd.option("split", split, "Dataset split")->check(CLI::IsMember({"train", "val"}));
    cmd.option("out", out, "Output directory")->required();
    flags.add(cmd);
  }

  void run() {
    const Model m = load_model(model);
    const auto samples = load_split(data, split);
    const EvalOptions options = flags.options();
    prepare_output(out);
    const PckSummary summary = evaluate_pck(m, samples, options);

    std::vector<ImagePrediction> predictions;
    for (std::size_t i = 0; i < samples.size(); ++i) {
      const auto prediction = extract_keypoints(forward(m, samples[i].image), options.threshold, options.max_distance);
      char name[32];
      std::snprintf(name, sizeof name, "%s_%05zu.ppm", split.c_str(), i);
      predictions.push_back({name, prediction.keypoints});
    }
    write_predictions_json(predictions, fs::path(out) / "predictions.json");
    const json metrics{{"pck_mean", summary.mean},
                       {"pck_std", summary.std},
                       {"images", samples.size()},
                       {"alpha", options.pck.alpha},
                       {"normalization", to_string(options.pck.normalization)},
                       {"per_image", summary.per_image}};
    write_text(fs::path(out) / "metrics.json", metrics.dump(2) + "\n");
    write_run_config(out, cmd);
    std::cout << "pck_mean " << summary.mean << " pck_std " << summary.std << std::endl;
  }
};

struct Bench {
  Command cmd;
  Common common;
  std::string model, data, out;
  std::size_t warmup = 5, reps = 50, images = 8;

  void add(CLI::App& app) {
    cmd.app = app.add_subcommand("bench", "Single-threaded inference latency");
    cmd.option("model", model, "Model file")->required();
    cmd.option("data", data, "Dataset directory (random inputs if omitted)");
    cmd.option("resolution", common.resolution, "Input resolution when --data is omitted");
    cmd.option("seed", common.seed, "Seed for random inputs");
    cmd.option("warmup", warmup, "Untimed warmup runs");
    cmd.option("reps", reps, "Timed runs");
    cmd.option("images", images, "Distinct inputs cycled through");
    cmd.option("out", out, "Output directory")->required();
  }

  void run() {
    const Model m = load_model(model);
    std::vector<Tensor> inputs;
    if (!data.empty()) {
      const auto samples = load_split(data, "val");
      for (std::size_t i = 0; i < std::min(images, samples.size()); ++i) inputs.push_back(samples[i].image);
    } else {
      const auto [h, w] = parse_resolution(common.resolution);
      Rng rng(common.seed);
      for (std::size_t i = 0; i < images; ++i) {
        Tensor t({m.spec.input_channels(), h, w});
        for (float& v : t.values()) v = static_cast<float>(rng.uniform());
        inputs.push_back(std::move(t));
      }
    }
    if (inputs.empty()) throw DataError("no benchmark inputs");
    prepare_output(out);
    BenchmarkOptions options;
    options.warmup = warmup;
    options.reps = reps;
    const BenchmarkResult r = benchmark_inference(m, inputs, options);
    const Accounting acc = account(fs::path(model), inputs.front().height(), inputs.front().width());
    const json report{{"infer_ms_mean", r.inference.mean * 1e3}, {"infer_ms_std", r.inference.std * 1e3},
                      {"fps_infer", r.inference.fps},           {"total_ms_mean", r.total.mean * 1e3},
                      {"fps_total", r.total.fps},               {"params", acc.params},
                      {"flops", acc.flops},                     {"size_bytes", acc.size_bytes}};
    write_text(fs::path(out) / "bench.json", report.dump(2) + "\n");
    write_run_config(out, cmd);
    std::cout << report.dump() << std::endl;
  }
};

struct Sweep {
  Command cmd;
  Common common;
  TrainFlags flags;
  EvalFlags eval;
  std::string model, data, out, rates = "0,30,50,70,90";
  std::size_t retrain_epochs = kRetrainEpochs, warmup = 5, reps = 50;
  bool no_quantize = false;

  void add(CLI::App& app) {
    cmd.app = app.add_subcommand("sweep", "Prune -> retrain -> quantize -> evaluate across pruning rates");
    cmd.option("seed", common.seed, "Seed for baseline training and retraining");
    cmd.option("data", data, "Dataset directory")->required();
    cmd.option("model", model, "Trained baseline (trained here from --data if omitted)");
    cmd.option("rates", rates, "Comma-separated pruning rates (fractions or percentages)");
    cmd.option("retrain-epochs", retrain_epochs, "Maximum retraining epochs after pruning");
    cmd.flag("no-quantize", no_quantize, "Skip FP16 quantization");
    cmd.option("warmup", warmup, "Benchmark warmup runs");
    cmd.option("reps", reps, "Benchmark timed runs");
    cmd.option("out", out, "Output directory")->required();
    flags.add(cmd);
    eval.add(cmd);
  }

  void run() {
    const auto train_set = load_split(data, "train");
    const auto val_set = load_split(data, "val");
    SweepConfig config;
    config.rates = parse_rates(rates);
    config.retrain = flags.config(common.seed);
    config.retrain.max_epochs = retrain_epochs;
    config.quantize = !no_quantize;
    config.eval = eval.options();
    config.bench.warmup = warmup;
    config.bench.reps = reps;
    config.bench.threshold = config.eval.threshold;
    config.bench.max_distance = config.eval.max_distance;
    config.validate();
    prepare_output(out);
    const fs::path dir(out);

    Model baseline;
    if (model.empty()) {
      log("training baseline for up to " + std::to_string(flags.epochs) + " epochs");
      const TrainResult result = train(build_fcn_pose(common.seed), train_set, val_set, flags.config(common.seed),
                                       [](std::size_t epoch, double tl, double vl) {
                                         if (epoch % 10 == 0) {
                                           log("baseline epoch " + std::to_string(epoch) + " train " +
                                               std::to_string(tl) + " val " + std::to_string(vl));
                                         }
                                       });
      baseline = result.model;
      save_model(baseline, dir / "baseline.fcnp");
      write_history_csv(result.history, dir / "baseline_history.csv");
    } else {
      baseline = load_model(model);
    }
    if (baseline.weights.dtype != DType::fp32) throw ContractViolation("sweep expects an FP32 baseline");

    const SweepReport report = sweep(baseline, train_set, val_set, config, log);
    for (const SweepStage& stage : report.stages) {
      char tag[16];
      std::snprintf(tag, sizeof tag, "%02d", static_cast<int>(std::lround(stage.rate * 100.0)));
      save_model(stage.model, dir / ("model_" + std::string(tag) + ".fcnp"));
      save_plan(stage.plan, dir / ("plan_" + std::string(tag) + ".json"));
      if (stage.history.epochs() > 0) write_history_csv(stage.history, dir / ("history_" + std::string(tag) + ".csv"));
    }
    write_text(dir / "sweep.csv", sweep_csv(report.rows));
    write_text(dir / "sweep.svg", sweep_svg(report.rows));
    write_run_config(out, cmd);
    std::cout << sweep_csv(report.rows);
  }
};

int exit_code(ErrorCategory category) {
  switch (category) {
    case ErrorCategory::config: return kExitConfig;
    case ErrorCategory::data: return kExitData;
    case ErrorCategory::numeric: return kExitNumeric;
    case ErrorCategory::io: return kExitIo;
  }
  return kExitConfig;
}

}  // namespace

std::vector<double> parse_rates(const std::string& text) {
  std::vector<double> rates;
  std::stringstream in(text);
  std::string item;
  while (std::getline(in, item, ',')) {
    item.erase(0, item.find_first_not_of(" \t"));
    item.erase(item.find_last_not_of(" \t") + 1);
    if (item.empty()) continue;
    std::size_t used = 0;
    double value = 0.0;
    try {
      value = std::stod(item, &used);
    } catch (const std::exception&) {
      used = 0;
    }
    if (used != item.size()) throw ContractViolation("bad pruning rate '" + item + "'");
    if (value >= 1.0) value /= 100.0;
    if (!(value >= 0.0 && value < 1.0)) throw ContractViolation("pruning rate '" + item + "' is outside [0, 1)");
    rates.push_back(value);
  }
  if (rates.empty()) throw ContractViolation("no pruning rates in '" + text + "'");
  return rates;
}

std::pair<std::size_t, std::size_t> parse_resolution(const std::string& text) {
  auto number = [&](const std::string& s) {
    std::size_t used = 0;
    unsigned long v = 0;
    try {
      v = std::stoul(s, &used);
    } catch (const std::exception&) {
      used = 0;
    }
    if (used == 0 || used != s.size() || v == 0) throw ContractViolation("bad resolution '" + text + "'");
    return static_cast<std::size_t>(v);
  };
  const auto x = text.find_first_of("xX");
  if (x == std::string::npos) {
    const std::size_t n = number(text);
    return {n, n};
  }
  return {number(text.substr(0, x)), number(text.substr(x + 1))};
}

int run(const std::vector<std::string>& args) {
  std::vector<const char*> argv;
  for (const auto& a : args) argv.push_back(a.c_str());
  return run(static_cast<int>(argv.size()), argv.data());
}

int run(int argc, const char* const* argv) {
  CLI::App app{"fcnpose: compact keypoint FCN toolkit (synthetic data, training, pruning, quantization, evaluation)"};
  app.require_subcommand(1);
  app.config_formatter(std::make_shared<JsonConfig>(&app));
  app.set_config("--config", "", "JSON file of option values (command-line flags take precedence)");

  CLI::App* dataset = app.add_subcommand("dataset", "Synthetic dataset tools");
  dataset->require_subcommand(1);
  DatasetGen gen;
  DatasetInspect inspect;
  gen.add(*dataset);
  inspect.add(*dataset);
  Train train_cmd;
  Prune prune_cmd;
  Quantize quantize_cmd;
  Eval eval_cmd;
  Bench bench_cmd;
  Sweep sweep_cmd;
  train_cmd.add(app);
  prune_cmd.add(app);
  quantize_cmd.add(app);
  eval_cmd.add(app);
  bench_cmd.add(app);
  sweep_cmd.add(app);

  const std::vector<std::pair<Command*, std::function<void()>>> commands{
      {&gen.cmd, [&] { gen.run(); }},
      {&inspect.cmd, [&] { inspect.run(); }},
      {&train_cmd.cmd, [&] { train_cmd.run(); }},
      {&prune_cmd.cmd, [&] { prune_cmd.run(); }},
      {&quantize_cmd.cmd, [&] { quantize_cmd.run(); }},
      {&eval_cmd.cmd, [&] { eval_cmd.run(); }},
      {&bench_cmd.cmd, [&] { bench_cmd.run(); }},
      {&sweep_cmd.cmd, [&] { sweep_cmd.run(); }},
  };
  // Lets --config follow the subcommand names.
  dataset->fallthrough();
  for (const auto& [command, fn] : commands) command->app->fallthrough();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kExitOk : kExitConfig;
  }

  try {
    for (const auto& [command, fn] : commands) {
      if (command->app->parsed()) {
        fn();
        return kExitOk;
      }
    }
    return kExitConfig;
  } catch (const Error& e) {
    std::cerr << "fcnpose: " << to_string(e.category()) << " error: " << e.what() << std::endl;
    return exit_code(e.category());
  } catch (const std::exception& e) {
    std::cerr << "fcnpose: io error: " << e.what() << std::endl;
    return kExitIo;
  }
}

}  // namespace fcnpose::cli
