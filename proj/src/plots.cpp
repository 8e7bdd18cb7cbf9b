#include "activity_airl/plots.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>

#include "activity_airl/common.hpp"

namespace activity_airl::plots {

namespace {

constexpr const char* kPalette[] = {"#4e79a7", "#f28e2b", "#59a14f", "#e15759", "#76b7b2", "#edc948", "#b07aa1",
                                    "#ff9da7"};

std::string escape(const std::string& s) {
  std::string out;
  for (char c : s) {
    switch (c) {
      case '<': out += "&lt;"; break;
      case '>': out += "&gt;"; break;
      case '&': out += "&amp;"; break;
      default: out += c;
    }
  }
  return out;
}

std::string num(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.2f", v);
  return buf;
}

std::string label_num(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.3g", v);
  return buf;
}

struct Svg {
  std::ostringstream body;
  int width, height;
  Svg(int w, int h) : width(w), height(h) {}

  void text(double x, double y, const std::string& s, int size = 12, const char* anchor = "middle",
            double rotate = 0.0) {
    body << "<text x=\"" << num(x) << "\" y=\"" << num(y) << "\" font-size=\"" << size
         << "\" font-family=\"sans-serif\" text-anchor=\"" << anchor << "\"";
    if (rotate != 0.0) body << " transform=\"rotate(" << num(rotate) << ' ' << num(x) << ' ' << num(y) << ")\"";
    body << '>' << escape(s) << "</text>\n";
  }
  void rect(double x, double y, double w, double h, const std::string& fill) {
    body << "<rect x=\"" << num(x) << "\" y=\"" << num(y) << "\" width=\"" << num(w) << "\" height=\"" << num(h)
         << "\" fill=\"" << fill << "\"/>\n";
  }
  void line(double x1, double y1, double x2, double y2, const char* stroke = "#333") {
    body << "<line x1=\"" << num(x1) << "\" y1=\"" << num(y1) << "\" x2=\"" << num(x2) << "\" y2=\"" << num(y2)
         << "\" stroke=\"" << stroke << "\"/>\n";
  }
  void save(const std::filesystem::path& path) const {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw Error("cannot write " + path.string());
    out << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << width << "\" height=\"" << height
        << "\" viewBox=\"0 0 " << width << ' ' << height << "\">\n"
        << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n"
        << body.str() << "</svg>\n";
  }
};

std::string diverging(double v, double limit) {
  const double t = limit > 0.0 ? std::clamp(v / limit, -1.0, 1.0) : 0.0;
  int r = 255, g = 255, b = 255;
  if (t > 0) {
    g = b = static_cast<int>(std::lround(255 * (1.0 - t)));
  } else {
    r = g = static_cast<int>(std::lround(255 * (1.0 + t)));
  }
  char buf[16];
  std::snprintf(buf, sizeof buf, "#%02x%02x%02x", r, g, b);
  return buf;
}

}  // namespace

void heatmap(const std::filesystem::path& path, const Eigen::MatrixXd& values, const std::string& title,
             const std::string& x_label, const std::string& y_label) {
  const int left = 60, top = 40, plot_w = 640, plot_h = 400;
  Svg svg(left + plot_w + 90, top + plot_h + 50);
  svg.text(left + plot_w / 2.0, 22, title, 14);
  const double limit = values.size() ? values.cwiseAbs().maxCoeff() : 0.0;
  const double cw = values.cols() ? static_cast<double>(plot_w) / values.cols() : 0.0;
  const double ch = values.rows() ? static_cast<double>(plot_h) / values.rows() : 0.0;
  for (Eigen::Index i = 0; i < values.rows(); ++i)
    for (Eigen::Index j = 0; j < values.cols(); ++j)
      svg.rect(left + j * cw, top + i * ch, cw + 0.05, ch + 0.05, diverging(values(i, j), limit));
  svg.text(left + plot_w / 2.0, top + plot_h + 35, x_label);
  svg.text(20, top + plot_h / 2.0, y_label, 12, "middle", -90);
  // Colour key.
  const int kx = left + plot_w + 20;
  for (int s = 0; s < 100; ++s)
    svg.rect(kx, top + s * plot_h / 100.0, 16, plot_h / 100.0 + 0.05, diverging(limit * (1.0 - s / 49.5), limit));
  svg.text(kx + 20, top + 10, label_num(limit), 10, "start");
  svg.text(kx + 20, top + plot_h, label_num(-limit), 10, "start");
  svg.save(path);
}

void histograms(const std::filesystem::path& path, const std::vector<Series>& series, int bins,
                const std::string& title) {
  bins = std::max(bins, 1);
  double lo = 0.0, hi = 0.0;
  bool any = false;
  for (const auto& s : series)
    for (double v : s.values) {
      if (!any) lo = hi = v;
      lo = std::min(lo, v);
      hi = std::max(hi, v);
      any = true;
    }
  if (hi <= lo) hi = lo + 1.0;
  const int panel_w = 260, panel_h = 180, cols = 3;
  const int rows = std::max(1, static_cast<int>((series.size() + cols - 1) / cols));
  Svg svg(cols * (panel_w + 30) + 30, rows * (panel_h + 60) + 50);
  svg.text(svg.width / 2.0, 22, title, 14);
  for (std::size_t p = 0; p < series.size(); ++p) {
    const double ox = 30 + static_cast<double>(p % cols) * (panel_w + 30);
    const double oy = 50 + static_cast<double>(p / cols) * (panel_h + 60);
    std::vector<int> counts(static_cast<std::size_t>(bins), 0);
    for (double v : series[p].values) {
      int b = static_cast<int>((v - lo) / (hi - lo) * bins);
      ++counts[static_cast<std::size_t>(std::clamp(b, 0, bins - 1))];
    }
    const int peak = std::max(1, *std::max_element(counts.begin(), counts.end()));
    const double bw = static_cast<double>(panel_w) / bins;
    for (int b = 0; b < bins; ++b) {
      const double h = panel_h * counts[static_cast<std::size_t>(b)] / static_cast<double>(peak);
      svg.rect(ox + b * bw, oy + panel_h - h, bw, h, kPalette[p % 8]);
    }
    svg.line(ox, oy + panel_h, ox + panel_w, oy + panel_h);
    svg.text(ox + panel_w / 2.0, oy - 6, series[p].name + " (n=" + std::to_string(series[p].values.size()) + ")");
    svg.text(ox, oy + panel_h + 16, label_num(lo), 10, "start");
    svg.text(ox + panel_w, oy + panel_h + 16, label_num(hi), 10, "end");
  }
  svg.save(path);
}

void line_chart(const std::filesystem::path& path, const std::vector<double>& x, const std::vector<double>& y,
                const std::string& title, const std::string& x_label, const std::string& y_label) {
  if (x.size() != y.size()) throw ValidationError("line chart needs aligned x and y");
  const int left = 80, top = 40, plot_w = 480, plot_h = 300;
  Svg svg(left + plot_w + 30, top + plot_h + 60);
  svg.text(left + plot_w / 2.0, 22, title, 14);
  svg.line(left, top + plot_h, left + plot_w, top + plot_h);
  svg.line(left, top, left, top + plot_h);
  if (!x.empty()) {
    const auto [xmin, xmax] = std::minmax_element(x.begin(), x.end());
    const auto [ymin, ymax] = std::minmax_element(y.begin(), y.end());
    const double xr = *xmax > *xmin ? *xmax - *xmin : 1.0;
    const double yr = *ymax > *ymin ? *ymax - *ymin : 1.0;
    std::ostringstream pts;
    for (std::size_t i = 0; i < x.size(); ++i) {
      const double px = left + (x[i] - *xmin) / xr * plot_w;
      const double py = top + plot_h - (y[i] - *ymin) / yr * plot_h;
      pts << num(px) << ',' << num(py) << ' ';
      svg.body << "<circle cx=\"" << num(px) << "\" cy=\"" << num(py) << "\" r=\"3\" fill=\"" << kPalette[0]
               << "\"/>\n";
      svg.text(px, top + plot_h + 16, label_num(x[i]), 10);
    }
    svg.body << "<polyline fill=\"none\" stroke=\"" << kPalette[0] << "\" points=\"" << pts.str() << "\"/>\n";
    svg.text(left - 6, top + 4, label_num(*ymax), 10, "end");
    svg.text(left - 6, top + plot_h, label_num(*ymin), 10, "end");
  }
  svg.text(left + plot_w / 2.0, top + plot_h + 40, x_label);
  svg.text(20, top + plot_h / 2.0, y_label, 12, "middle", -90);
  svg.save(path);
}

void grouped_bars(const std::filesystem::path& path, const std::vector<std::string>& categories,
                  const std::vector<Series>& series, const std::string& title) {
  const int left = 60, top = 40, plot_h = 300;
  const int group_w = std::max(40, static_cast<int>(series.size()) * 14 + 16);
  const int plot_w = std::max(200, group_w * static_cast<int>(categories.size()));
  Svg svg(left + plot_w + 160, top + plot_h + 110);
  svg.text(left + plot_w / 2.0, 22, title, 14);
  double peak = 0.0;
  for (const auto& s : series)
    for (double v : s.values) peak = std::max(peak, v);
  if (peak <= 0.0) peak = 1.0;
  svg.line(left, top + plot_h, left + plot_w, top + plot_h);
  const double bw = static_cast<double>(group_w - 16) / std::max<std::size_t>(series.size(), 1);
  for (std::size_t c = 0; c < categories.size(); ++c) {
    const double gx = left + static_cast<double>(c) * group_w + 8;
    for (std::size_t s = 0; s < series.size(); ++s) {
      const double v = c < series[s].values.size() ? series[s].values[c] : 0.0;
      const double h = plot_h * std::max(v, 0.0) / peak;
      svg.rect(gx + s * bw, top + plot_h - h, bw, h, kPalette[s % 8]);
    }
    svg.text(gx + (group_w - 16) / 2.0, top + plot_h + 14, categories[c], 9, "end", -40);
  }
  for (std::size_t s = 0; s < series.size(); ++s) {
    svg.rect(left + plot_w + 20, top + 20.0 * s, 12, 12, kPalette[s % 8]);
    svg.text(left + plot_w + 38, top + 20.0 * s + 10, series[s].name, 11, "start");
  }
  svg.text(left - 6, top + 4, label_num(peak), 10, "end");
  svg.save(path);
}

void write_index(const std::filesystem::path& path, const std::vector<IndexEntry>& entries) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot write " + path.string());
  for (const auto& e : entries) out << e.file << '\t' << e.description << '\n';
}

}  // namespace activity_airl::plots
