#pragma once

// Self-contained SVG line charts on log-log axes.

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "orme/core.hpp"
#include "orme/harness/report.hpp"

namespace orme {

struct Series {
  std::string name;
  std::vector<std::pair<double, double>> points;  // (x, y), both > 0
};

struct ChartLabels {
  std::string title = "error vs T";
  std::string x = "T";
  std::string y = "l2 error";
};

namespace detail {

inline std::string xml_escape(const std::string& s) {
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

// Tick values in [lo, hi]: decades, plus 2 and 5 multiples when the span is short.
inline std::vector<double> log_ticks(double lo, double hi) {
  std::vector<double> ticks;
  const int a = static_cast<int>(std::floor(std::log10(lo)));
  const int b = static_cast<int>(std::ceil(std::log10(hi)));
  const bool fine = b - a <= 2;
  for (int e = a; e <= b; ++e) {
    for (double m : fine ? std::vector<double>{1, 2, 5} : std::vector<double>{1}) {
      const double v = m * std::pow(10.0, e);
      if (v >= lo * (1 - 1e-12) && v <= hi * (1 + 1e-12)) ticks.push_back(v);
    }
  }
  if (ticks.empty()) ticks = {lo, hi};
  return ticks;
}

inline std::string tick_label(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%g", v);
  return buf;
}

}  // namespace detail

inline std::string render_svg(const std::vector<Series>& series, const ChartLabels& labels = {}) {
  if (series.empty()) throw ConfigError("svg: no series to plot");
  double xlo = INFINITY, xhi = -INFINITY, ylo = INFINITY, yhi = -INFINITY;
  for (const auto& s : series) {
    if (s.points.empty()) throw ConfigError("svg: series '" + s.name + "' is empty");
    for (auto [x, y] : s.points) {
      if (!std::isfinite(x) || !std::isfinite(y))
        throw ConfigError("svg: series '" + s.name + "' contains a NaN or infinite value");
      if (x <= 0.0 || y <= 0.0)
        throw ConfigError("svg: series '" + s.name + "' has a nonpositive value on a log axis");
      xlo = std::min(xlo, x), xhi = std::max(xhi, x), ylo = std::min(ylo, y), yhi = std::max(yhi, y);
    }
  }
  // Pad single-valued ranges so the axes are never degenerate.
  if (xhi / xlo < 1.0001) xlo /= 2, xhi *= 2;
  if (yhi / ylo < 1.0001) ylo /= 2, yhi *= 2;
  const double lx0 = std::log10(xlo), lx1 = std::log10(xhi), ly0 = std::log10(ylo), ly1 = std::log10(yhi);

  const double W = 720, H = 460, left = 80, right = 180, top = 40, bottom = 60;
  const double pw = W - left - right, ph = H - top - bottom;
  auto px = [&](double x) { return left + (std::log10(x) - lx0) / (lx1 - lx0) * pw; };
  auto py = [&](double y) { return top + ph - (std::log10(y) - ly0) / (ly1 - ly0) * ph; };
  auto f = [](double v) { return format_number(std::round(v * 100.0) / 100.0); };

  static const char* palette[] = {"#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b", "#e377c2"};
  std::string o;
  o += "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" + f(W) + "\" height=\"" + f(H) + "\" viewBox=\"0 0 " +
       f(W) + " " + f(H) + "\" font-family=\"sans-serif\" font-size=\"12\">\n";
  o += "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
  o += "<text x=\"" + f(left + pw / 2) + "\" y=\"24\" text-anchor=\"middle\" font-size=\"15\">" +
       detail::xml_escape(labels.title) + "</text>\n";
  o += "<g class=\"axes\" stroke=\"#333\" fill=\"none\">\n";
  o += "<rect x=\"" + f(left) + "\" y=\"" + f(top) + "\" width=\"" + f(pw) + "\" height=\"" + f(ph) + "\"/>\n";
  o += "</g>\n<g class=\"ticks\">\n";
  for (double v : detail::log_ticks(xlo, xhi)) {
    const double x = px(v);
    o += "<line x1=\"" + f(x) + "\" y1=\"" + f(top) + "\" x2=\"" + f(x) + "\" y2=\"" + f(top + ph) +
         "\" stroke=\"#ddd\"/>\n";
    o += "<text x=\"" + f(x) + "\" y=\"" + f(top + ph + 18) + "\" text-anchor=\"middle\">" + detail::tick_label(v) +
         "</text>\n";
  }
  for (double v : detail::log_ticks(ylo, yhi)) {
    const double y = py(v);
    o += "<line x1=\"" + f(left) + "\" y1=\"" + f(y) + "\" x2=\"" + f(left + pw) + "\" y2=\"" + f(y) +
         "\" stroke=\"#ddd\"/>\n";
    o += "<text x=\"" + f(left - 6) + "\" y=\"" + f(y + 4) + "\" text-anchor=\"end\">" + detail::tick_label(v) +
         "</text>\n";
  }
  o += "</g>\n";
  o += "<text x=\"" + f(left + pw / 2) + "\" y=\"" + f(H - 16) + "\" text-anchor=\"middle\">" +
       detail::xml_escape(labels.x) + " (log)</text>\n";
  o += "<text x=\"18\" y=\"" + f(top + ph / 2) + "\" text-anchor=\"middle\" transform=\"rotate(-90 18 " +
       f(top + ph / 2) + ")\">" + detail::xml_escape(labels.y) + " (log)</text>\n";

  for (std::size_t k = 0; k < series.size(); ++k) {
    const auto& s = series[k];
    const std::string color = palette[k % (sizeof palette / sizeof *palette)];
    o += "<g class=\"series\" data-name=\"" + detail::xml_escape(s.name) + "\">\n";
    if (s.points.size() > 1) {
      o += "<polyline fill=\"none\" stroke=\"" + color + "\" stroke-width=\"2\" points=\"";
      for (std::size_t i = 0; i < s.points.size(); ++i)
        o += (i ? " " : "") + f(px(s.points[i].first)) + "," + f(py(s.points[i].second));
      o += "\"/>\n";
    }
    for (auto [x, y] : s.points)
      o += "<circle cx=\"" + f(px(x)) + "\" cy=\"" + f(py(y)) + "\" r=\"3\" fill=\"" + color + "\"/>\n";
    const double ly = top + 16 + 20 * static_cast<double>(k);
    o += "<line x1=\"" + f(left + pw + 14) + "\" y1=\"" + f(ly) + "\" x2=\"" + f(left + pw + 38) + "\" y2=\"" + f(ly) +
         "\" stroke=\"" + color + "\" stroke-width=\"2\"/>\n";
    o += "<text x=\"" + f(left + pw + 44) + "\" y=\"" + f(ly + 4) + "\">" + detail::xml_escape(s.name) + "</text>\n";
    o += "</g>\n";
  }
  o += "</svg>\n";
  return o;
}

}  // namespace orme
