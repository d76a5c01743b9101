#include <algorithm>
#include <cstdio>
#include <fstream>
#include <sstream>

#include "fcnpose/errors.hpp"
#include "fcnpose/metrics.hpp"

namespace fcnpose {
namespace {

std::string fmt(const char* pattern, double value) {
  char buffer[64];
  std::snprintf(buffer, sizeof buffer, pattern, value);
  return buffer;
}

struct Panel {
  double x, y, w, h;  // plot area in SVG units
  double x_lo, x_hi;

  double px(double v) const { return x + (x_hi > x_lo ? (v - x_lo) / (x_hi - x_lo) : 0.5) * w; }
  double py(double v) const { return y + (1.0 - std::clamp(v, 0.0, 1.0)) * h; }
};

void axes(std::ostringstream& svg, const Panel& p, const std::string& x_label, const std::string& title) {
  svg << "<rect x='" << p.x << "' y='" << p.y << "' width='" << p.w << "' height='" << p.h
      << "' fill='none' stroke='#444'/>\n";
  for (int i = 0; i <= 4; ++i) {
    const double v = i / 4.0;
    svg << "<line x1='" << p.x << "' x2='" << p.x + p.w << "' y1='" << p.py(v) << "' y2='" << p.py(v)
        << "' stroke='#ddd'/>\n";
    svg << "<text x='" << p.x - 6 << "' y='" << p.py(v) + 4 << "' font-size='11' text-anchor='end'>"
        << fmt("%.2f", v) << "</text>\n";
    const double xv = p.x_lo + (p.x_hi - p.x_lo) * v;
    svg << "<text x='" << p.px(xv) << "' y='" << p.y + p.h + 16 << "' font-size='11' text-anchor='middle'>"
        << fmt("%.2f", xv) << "</text>\n";
  }
  svg << "<text x='" << p.x + p.w / 2 << "' y='" << p.y + p.h + 34 << "' font-size='12' text-anchor='middle'>"
      << x_label << "</text>\n";
  svg << "<text x='" << p.x + p.w / 2 << "' y='" << p.y - 10 << "' font-size='13' text-anchor='middle'>" << title
      << "</text>\n";
}

void series(std::ostringstream& svg, const Panel& p, const std::vector<std::pair<double, double>>& points,
            const char* color, const std::vector<std::string>& labels = {}) {
  svg << "<polyline fill='none' stroke='" << color << "' stroke-width='2' points='";
  for (const auto& [x, y] : points) svg << p.px(x) << "," << p.py(y) << " ";
  svg << "'/>\n";
  for (std::size_t i = 0; i < points.size(); ++i) {
    svg << "<circle cx='" << p.px(points[i].first) << "' cy='" << p.py(points[i].second) << "' r='3' fill='" << color
        << "'/>\n";
    if (i < labels.size()) {
      svg << "<text x='" << p.px(points[i].first) + 5 << "' y='" << p.py(points[i].second) - 5
          << "' font-size='10'>" << labels[i] << "</text>\n";
    }
  }
}

}  // namespace

std::string sweep_csv(const std::vector<SweepRow>& rows) {
  std::ostringstream out;
  out << kSweepCsvHeader << "\n";
  for (const SweepRow& r : rows) {
    out << fmt("%.4g", r.rate) << "," << fmt("%.6f", r.pck_mean) << "," << fmt("%.6f", r.pck_std) << ","
        << fmt("%.4f", r.infer_ms_mean) << "," << fmt("%.4f", r.infer_ms_std) << "," << fmt("%.3f", r.fps_infer) << ","
        << fmt("%.3f", r.fps_total) << "," << r.params << "," << r.flops << "," << r.size_bytes << "\n";
  }
  return out.str();
}

std::string sweep_svg(const std::vector<SweepRow>& rows) {
  double max_fps = 0.0;
  double max_rate = 0.0;
  for (const SweepRow& r : rows) {
    max_fps = std::max(max_fps, r.fps_infer);
    max_rate = std::max(max_rate, r.rate);
  }
  std::vector<std::pair<double, double>> pck_by_rate, fps_by_rate, pck_by_fps;
  std::vector<std::string> labels;
  for (const SweepRow& r : rows) {
    const double fps = max_fps > 0.0 ? r.fps_infer / max_fps : 0.0;
    pck_by_rate.emplace_back(r.rate, r.pck_mean);
    fps_by_rate.emplace_back(r.rate, fps);
    pck_by_fps.emplace_back(fps, r.pck_mean);
    labels.push_back(fmt("%.0f%%", r.rate * 100.0));
  }

  std::ostringstream svg;
  svg << "<svg xmlns='http://www.w3.org/2000/svg' width='860' height='360' font-family='sans-serif'>\n";
  svg << "<rect width='100%' height='100%' fill='white'/>\n";
  const Panel left{60, 40, 340, 260, 0.0, max_rate > 0.0 ? max_rate : 1.0};
  const Panel right{490, 40, 340, 260, 0.0, 1.0};
  axes(svg, left, "pruning rate", "PCK and normalized FPS vs pruning rate");
  series(svg, left, pck_by_rate, "#1f77b4");
  series(svg, left, fps_by_rate, "#d62728");
  svg << "<text x='70' y='318' font-size='11' fill='#1f77b4'>PCK</text>\n";
  svg << "<text x='110' y='318' font-size='11' fill='#d62728'>FPS / max FPS</text>\n";
  axes(svg, right, "normalized FPS", "PCK vs normalized FPS");
  series(svg, right, pck_by_fps, "#2ca02c", labels);
  svg << "</svg>\n";
  return svg.str();
}

void write_text(const std::filesystem::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::trunc | std::ios::binary);
  if (!out) throw IoError("cannot open " + path.string() + " for writing");
  out << text;
  if (!out) throw IoError("failed writing " + path.string());
}

}  // namespace fcnpose
