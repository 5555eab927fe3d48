#pragma once

// Minimal static line plots. Output depends only on the data, so reruns are
// byte-identical.

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>
#include <string>
#include <vector>

namespace cnnrecover {

struct PlotSeries {
  std::string name;
  std::vector<double> x;
  std::vector<double> y;
};

struct LinePlot {
  std::string title;
  std::string x_label;
  std::string y_label;
  bool log_x = false;
  bool log_y = true;
  std::vector<PlotSeries> series;
};

namespace detail {

inline std::string svg_escape(const std::string& s) {
  std::string out;
  for (char c : s) {
    switch (c) {
      case '&': out += "&amp;"; break;
      case '<': out += "&lt;"; break;
      case '>': out += "&gt;"; break;
      case '"': out += "&quot;"; break;
      default: out += c;
    }
  }
  return out;
}

inline std::string fixed(double v, int digits = 2) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.*f", digits, v);
  return buf;
}

inline std::string tick_label(double v, bool log_axis) {
  if (log_axis) return "1e" + std::to_string(static_cast<int>(std::lround(v)));
  char buf[64];
  std::snprintf(buf, sizeof buf, "%g", v);
  return buf;
}

}  // namespace detail

/// Renders the plot. Points that are non-finite, or non-positive on a log axis, are skipped.
inline std::string render_svg(const LinePlot& plot) {
  constexpr double kWidth = 720, kHeight = 480, kLeft = 80, kRight = 170, kTop = 40, kBottom = 60;
  static const char* kColors[] = {"#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b", "#17becf", "#7f7f7f"};

  auto tx = [&](double v) { return plot.log_x ? std::log10(v) : v; };
  auto ty = [&](double v) { return plot.log_y ? std::log10(v) : v; };
  auto usable = [&](double x, double y) {
    return std::isfinite(x) && std::isfinite(y) && (!plot.log_x || x > 0) && (!plot.log_y || y > 0);
  };

  double x0 = std::numeric_limits<double>::infinity(), x1 = -x0, y0 = x0, y1 = -x0;
  for (const auto& s : plot.series)
    for (std::size_t i = 0; i < std::min(s.x.size(), s.y.size()); ++i)
      if (usable(s.x[i], s.y[i])) {
        x0 = std::min(x0, tx(s.x[i]));
        x1 = std::max(x1, tx(s.x[i]));
        y0 = std::min(y0, ty(s.y[i]));
        y1 = std::max(y1, ty(s.y[i]));
      }
  if (!std::isfinite(x0)) x0 = 0, x1 = 1, y0 = 0, y1 = 1;
  if (plot.log_y) y0 = std::floor(y0), y1 = std::ceil(y1);
  if (plot.log_x) x0 = std::floor(x0), x1 = std::ceil(x1);
  if (x1 <= x0) x1 = x0 + 1;
  if (y1 <= y0) y1 = y0 + 1;

  const double pw = kWidth - kLeft - kRight, ph = kHeight - kTop - kBottom;
  auto px = [&](double v) { return kLeft + (v - x0) / (x1 - x0) * pw; };
  auto py = [&](double v) { return kTop + (1.0 - (v - y0) / (y1 - y0)) * ph; };
  using detail::fixed;

  std::string out;
  out += "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" + fixed(kWidth, 0) + "\" height=\"" + fixed(kHeight, 0) +
         "\" font-family=\"sans-serif\" font-size=\"12\">\n";
  out += "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
  out += "<text x=\"" + fixed(kLeft + pw / 2) + "\" y=\"24\" text-anchor=\"middle\" font-size=\"15\">" +
         detail::svg_escape(plot.title) + "</text>\n";
  out += "<rect x=\"" + fixed(kLeft) + "\" y=\"" + fixed(kTop) + "\" width=\"" + fixed(pw) + "\" height=\"" + fixed(ph) +
         "\" fill=\"none\" stroke=\"black\"/>\n";

  auto ticks = [](double lo, double hi, bool log_axis) {
    std::vector<double> v;
    if (log_axis) {
      const int step = std::max(1, static_cast<int>(std::ceil((hi - lo) / 10.0)));
      for (double e = lo; e <= hi + 1e-9; e += step) v.push_back(e);
    } else {
      for (int i = 0; i <= 5; ++i) v.push_back(lo + (hi - lo) * i / 5.0);
    }
    return v;
  };
  for (double v : ticks(x0, x1, plot.log_x)) {
    out += "<line x1=\"" + fixed(px(v)) + "\" y1=\"" + fixed(kTop + ph) + "\" x2=\"" + fixed(px(v)) + "\" y2=\"" +
           fixed(kTop + ph + 5) + "\" stroke=\"black\"/>\n";
    out += "<text x=\"" + fixed(px(v)) + "\" y=\"" + fixed(kTop + ph + 18) + "\" text-anchor=\"middle\">" +
           detail::tick_label(v, plot.log_x) + "</text>\n";
  }
  for (double v : ticks(y0, y1, plot.log_y)) {
    out += "<line x1=\"" + fixed(kLeft - 5) + "\" y1=\"" + fixed(py(v)) + "\" x2=\"" + fixed(kLeft + pw) + "\" y2=\"" +
           fixed(py(v)) + "\" stroke=\"#dddddd\"/>\n";
    out += "<text x=\"" + fixed(kLeft - 8) + "\" y=\"" + fixed(py(v) + 4) + "\" text-anchor=\"end\">" +
           detail::tick_label(v, plot.log_y) + "</text>\n";
  }
  out += "<text x=\"" + fixed(kLeft + pw / 2) + "\" y=\"" + fixed(kHeight - 15) + "\" text-anchor=\"middle\">" +
         detail::svg_escape(plot.x_label) + "</text>\n";
  out += "<text x=\"18\" y=\"" + fixed(kTop + ph / 2) + "\" text-anchor=\"middle\" transform=\"rotate(-90 18 " +
         fixed(kTop + ph / 2) + ")\">" + detail::svg_escape(plot.y_label) + "</text>\n";

  for (std::size_t si = 0; si < plot.series.size(); ++si) {
    const auto& s = plot.series[si];
    const char* color = kColors[si % (sizeof kColors / sizeof *kColors)];
    std::string points;
    for (std::size_t i = 0; i < std::min(s.x.size(), s.y.size()); ++i) {
      if (!usable(s.x[i], s.y[i])) continue;
      if (!points.empty()) points += ' ';
      points += fixed(px(tx(s.x[i]))) + "," + fixed(py(ty(s.y[i])));
    }
    out += "<polyline fill=\"none\" stroke=\"" + std::string(color) + "\" stroke-width=\"1.5\" points=\"" + points +
           "\"/>\n";
    const double ly = kTop + 10 + 18.0 * static_cast<double>(si);
    out += "<line x1=\"" + fixed(kLeft + pw + 12) + "\" y1=\"" + fixed(ly) + "\" x2=\"" + fixed(kLeft + pw + 36) +
           "\" y2=\"" + fixed(ly) + "\" stroke=\"" + color + "\" stroke-width=\"2\"/>\n";
    out += "<text x=\"" + fixed(kLeft + pw + 42) + "\" y=\"" + fixed(ly + 4) + "\">" + detail::svg_escape(s.name) +
           "</text>\n";
  }
  out += "</svg>\n";
  return out;
}

}  // namespace cnnrecover
