#pragma once

#include <algorithm>
#include <charconv>
#include <string>
#include <vector>

#include "recdiff/core/errors.hpp"

namespace recdiff {

// Small deterministic SVG plots: fixed canvas, fixed palette, numbers
// printed locale-independently, no timestamps, so the same data always
// yields the same bytes.

namespace detail {

inline std::string fmt_num(double x, int precision = 6) {
  char buf[64];
  const auto res =
      std::to_chars(buf, buf + sizeof(buf), x, std::chars_format::general, precision);
  if (res.ec != std::errc()) throw IoError("cannot format a number");
  return std::string(buf, res.ptr);
}

inline std::string xml_escape(const std::string& s) {
  std::string out;
  out.reserve(s.size());
  for (char c : s) {
    switch (c) {
      case '&': out += "&amp;"; break;
      case '<': out += "&lt;"; break;
      case '>': out += "&gt;"; break;
      case '"': out += "&quot;"; break;
      default: out.push_back(c);
    }
  }
  return out;
}

inline const char* plot_color(size_t i) {
  static const char* kPalette[] = {"#1f77b4", "#ff7f0e", "#2ca02c",
                                   "#d62728", "#9467bd", "#8c564b"};
  return kPalette[i % (sizeof(kPalette) / sizeof(kPalette[0]))];
}

struct PlotFrame {
  double width = 640, height = 400;
  double left = 64, right = 16, top = 40, bottom = 48;
  double x_min = 0, x_max = 1, y_min = 0, y_max = 1;

  double px(double x) const {
    return left + (x - x_min) / (x_max - x_min) * (width - left - right);
  }
  double py(double y) const {
    return height - bottom - (y - y_min) / (y_max - y_min) * (height - top - bottom);
  }
};

inline void svg_open(std::string& s, const PlotFrame& f, const std::string& title) {
  s += "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" + fmt_num(f.width) +
       "\" height=\"" + fmt_num(f.height) + "\" viewBox=\"0 0 " + fmt_num(f.width) +
       " " + fmt_num(f.height) + "\">\n";
  s += "<rect x=\"0\" y=\"0\" width=\"" + fmt_num(f.width) + "\" height=\"" +
       fmt_num(f.height) + "\" fill=\"#ffffff\"/>\n";
  s += "<text x=\"" + fmt_num(f.width / 2) +
       "\" y=\"22\" font-family=\"sans-serif\" font-size=\"15\" "
       "text-anchor=\"middle\">" +
       xml_escape(title) + "</text>\n";
}

inline void svg_axes(std::string& s, const PlotFrame& f, const std::string& y_label) {
  s += "<line x1=\"" + fmt_num(f.left) + "\" y1=\"" + fmt_num(f.py(f.y_min)) +
       "\" x2=\"" + fmt_num(f.width - f.right) + "\" y2=\"" + fmt_num(f.py(f.y_min)) +
       "\" stroke=\"#000000\"/>\n";
  s += "<line x1=\"" + fmt_num(f.left) + "\" y1=\"" + fmt_num(f.py(f.y_min)) +
       "\" x2=\"" + fmt_num(f.left) + "\" y2=\"" + fmt_num(f.py(f.y_max)) +
       "\" stroke=\"#000000\"/>\n";
  for (int i = 0; i <= 4; ++i) {
    const double v = f.y_min + (f.y_max - f.y_min) * i / 4.0;
    const double y = f.py(v);
    s += "<line x1=\"" + fmt_num(f.left - 4) + "\" y1=\"" + fmt_num(y) + "\" x2=\"" +
         fmt_num(f.left) + "\" y2=\"" + fmt_num(y) + "\" stroke=\"#000000\"/>\n";
    s += "<text x=\"" + fmt_num(f.left - 8) + "\" y=\"" + fmt_num(y + 4) +
         "\" font-family=\"sans-serif\" font-size=\"11\" text-anchor=\"end\">" +
         fmt_num(v, 3) + "</text>\n";
  }
  s += "<text x=\"14\" y=\"" + fmt_num((f.top + f.height - f.bottom) / 2) +
       "\" font-family=\"sans-serif\" font-size=\"12\" text-anchor=\"middle\" "
       "transform=\"rotate(-90 14 " +
       fmt_num((f.top + f.height - f.bottom) / 2) + ")\">" + xml_escape(y_label) +
       "</text>\n";
}

}  // namespace detail

struct BarDatum {
  std::string label;
  double value = 0.0;
  double err = 0.0;  // half-width of the error bar; 0 draws none
};

inline std::string render_bars_svg(const std::vector<BarDatum>& bars,
                                   const std::string& title,
                                   const std::string& y_label) {
  if (bars.empty()) throw ParameterError("bar chart needs at least one bar");
  detail::PlotFrame f;
  double top = 0.0;
  for (const BarDatum& b : bars) top = std::max(top, b.value + b.err);
  f.y_max = top > 0.0 ? top * 1.15 : 1.0;
  f.x_min = 0.0;
  f.x_max = static_cast<double>(bars.size());

  std::string s;
  detail::svg_open(s, f, title);
  detail::svg_axes(s, f, y_label);
  const double slot = (f.width - f.left - f.right) / static_cast<double>(bars.size());
  for (size_t i = 0; i < bars.size(); ++i) {
    const BarDatum& b = bars[i];
    const double cx = f.left + slot * (static_cast<double>(i) + 0.5);
    const double w = slot * 0.6;
    const double y = f.py(b.value);
    s += "<rect x=\"" + detail::fmt_num(cx - w / 2) + "\" y=\"" + detail::fmt_num(y) +
         "\" width=\"" + detail::fmt_num(w) + "\" height=\"" +
         detail::fmt_num(f.py(f.y_min) - y) + "\" fill=\"" + detail::plot_color(i) +
         "\"/>\n";
    if (b.err > 0.0) {
      const double y0 = f.py(b.value - b.err), y1 = f.py(b.value + b.err);
      s += "<line x1=\"" + detail::fmt_num(cx) + "\" y1=\"" + detail::fmt_num(y0) +
           "\" x2=\"" + detail::fmt_num(cx) + "\" y2=\"" + detail::fmt_num(y1) +
           "\" stroke=\"#000000\"/>\n";
      for (double ye : {y0, y1})
        s += "<line x1=\"" + detail::fmt_num(cx - 6) + "\" y1=\"" + detail::fmt_num(ye) +
             "\" x2=\"" + detail::fmt_num(cx + 6) + "\" y2=\"" + detail::fmt_num(ye) +
             "\" stroke=\"#000000\"/>\n";
    }
    s += "<text x=\"" + detail::fmt_num(cx) + "\" y=\"" +
         detail::fmt_num(f.height - f.bottom + 18) +
         "\" font-family=\"sans-serif\" font-size=\"12\" text-anchor=\"middle\">" +
         detail::xml_escape(b.label) + "</text>\n";
  }
  s += "</svg>\n";
  return s;
}

struct TraceSeries {
  std::string label;
  std::vector<double> values;  // one point per check, in order
};

// Likelihood traces across recovery attempts with the decision threshold.
inline std::string render_trace_svg(const std::vector<TraceSeries>& series,
                                    double threshold, const std::string& title,
                                    const std::string& y_label) {
  if (series.empty()) throw ParameterError("trace plot needs at least one series");
  size_t longest = 0;
  double lo = threshold, hi = threshold;
  for (const TraceSeries& t : series) {
    if (t.values.empty()) throw ParameterError("trace series must be nonempty");
    longest = std::max(longest, t.values.size());
    for (double v : t.values) {
      lo = std::min(lo, v);
      hi = std::max(hi, v);
    }
  }
  if (hi == lo) {
    hi += 1.0;
    lo -= 1.0;
  }
  detail::PlotFrame f;
  const double pad = (hi - lo) * 0.1;
  f.y_min = lo - pad;
  f.y_max = hi + pad;
  f.x_min = 0.0;
  f.x_max = longest > 1 ? static_cast<double>(longest - 1) : 1.0;

  std::string s;
  detail::svg_open(s, f, title);
  detail::svg_axes(s, f, y_label);
  const double ty = f.py(threshold);
  s += "<line x1=\"" + detail::fmt_num(f.left) + "\" y1=\"" + detail::fmt_num(ty) +
       "\" x2=\"" + detail::fmt_num(f.width - f.right) + "\" y2=\"" +
       detail::fmt_num(ty) + "\" stroke=\"#888888\" stroke-dasharray=\"6 4\"/>\n";
  for (size_t i = 0; i < series.size(); ++i) {
    const TraceSeries& t = series[i];
    const char* color = detail::plot_color(i);
    std::string pts;
    for (size_t k = 0; k < t.values.size(); ++k) {
      if (k) pts.push_back(' ');
      pts += detail::fmt_num(f.px(static_cast<double>(k))) + "," +
             detail::fmt_num(f.py(t.values[k]));
    }
    s += "<polyline points=\"" + pts + "\" fill=\"none\" stroke=\"" + color +
         "\" stroke-width=\"1.5\"/>\n";
    for (size_t k = 0; k < t.values.size(); ++k)
      s += "<circle cx=\"" + detail::fmt_num(f.px(static_cast<double>(k))) +
           "\" cy=\"" + detail::fmt_num(f.py(t.values[k])) + "\" r=\"2.5\" fill=\"" +
           color + "\"/>\n";
    s += "<text x=\"" + detail::fmt_num(f.width - f.right - 4) + "\" y=\"" +
         detail::fmt_num(f.top + 14 * static_cast<double>(i + 1)) +
         "\" font-family=\"sans-serif\" font-size=\"11\" text-anchor=\"end\" fill=\"" +
         color + "\">" + detail::xml_escape(t.label) + "</text>\n";
  }
  s += "</svg>\n";
  return s;
}

struct AngleSeries {
  std::vector<double> theta;       // one sample per executed step
  std::vector<bool> in_recovery;   // same length as theta
  double goal = 0.0;
};

// Valve angle over an episode; recovery steps are shaded behind the curve.
inline std::string render_angle_svg(const AngleSeries& a, const std::string& title) {
  if (a.theta.empty()) throw ParameterError("angle plot needs at least one step");
  if (a.in_recovery.size() != a.theta.size())
    throw DimensionError("angle plot flags must match steps");
  double lo = a.goal, hi = a.goal;
  for (double v : a.theta) {
    lo = std::min(lo, v);
    hi = std::max(hi, v);
  }
  if (hi == lo) {
    hi += 0.1;
    lo -= 0.1;
  }
  detail::PlotFrame f;
  const double pad = (hi - lo) * 0.1;
  f.y_min = lo - pad;
  f.y_max = hi + pad;
  f.x_min = 0.0;
  f.x_max = a.theta.size() > 1 ? static_cast<double>(a.theta.size() - 1) : 1.0;

  std::string s;
  detail::svg_open(s, f, title);
  // Shade contiguous recovery stretches first so the curve draws on top.
  size_t i = 0;
  while (i < a.in_recovery.size()) {
    if (!a.in_recovery[i]) {
      ++i;
      continue;
    }
    size_t j = i;
    while (j < a.in_recovery.size() && a.in_recovery[j]) ++j;
    const double x0 = f.px(static_cast<double>(i) - 0.5);
    const double x1 = f.px(static_cast<double>(j - 1) + 0.5);
    s += "<rect x=\"" + detail::fmt_num(std::max(x0, f.left)) + "\" y=\"" +
         detail::fmt_num(f.top) + "\" width=\"" +
         detail::fmt_num(std::min(x1, f.width - f.right) - std::max(x0, f.left)) +
         "\" height=\"" + detail::fmt_num(f.height - f.top - f.bottom) +
         "\" fill=\"#fdd1d1\"/>\n";
    i = j;
  }
  detail::svg_axes(s, f, "valve angle [rad]");
  const double gy = f.py(a.goal);
  s += "<line x1=\"" + detail::fmt_num(f.left) + "\" y1=\"" + detail::fmt_num(gy) +
       "\" x2=\"" + detail::fmt_num(f.width - f.right) + "\" y2=\"" +
       detail::fmt_num(gy) + "\" stroke=\"#2ca02c\" stroke-dasharray=\"6 4\"/>\n";
  std::string pts;
  for (size_t k = 0; k < a.theta.size(); ++k) {
    if (k) pts.push_back(' ');
    pts += detail::fmt_num(f.px(static_cast<double>(k))) + "," +
           detail::fmt_num(f.py(a.theta[k]));
  }
  s += "<polyline points=\"" + pts +
       "\" fill=\"none\" stroke=\"#1f77b4\" stroke-width=\"1.5\"/>\n";
  s += "</svg>\n";
  return s;
}

}  // namespace recdiff
