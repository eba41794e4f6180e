#pragma once

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <span>
#include <string>
#include <vector>

#include "chfkit/errors.hpp"

namespace chfkit::svg {

/// Minimal self-contained SVG emitters for the two figure styles the
/// pipeline needs: parity scatters with +-10% bounds and overlaid
/// histograms. No external renderer involved; output is deterministic.

struct Series {
  std::string label;
  std::string color;
  std::vector<double> values;  // histogram: samples; parity: predictions
};

namespace detail {

inline constexpr int kWidth = 820;
inline constexpr int kHeight = 620;
inline constexpr int kMarginLeft = 80;
inline constexpr int kMarginRight = 30;
inline constexpr int kMarginTop = 50;
inline constexpr int kMarginBottom = 70;

inline std::string fmt(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.6g", v);
  return buf;
}

struct Canvas {
  std::string body;
  double x_min = 0.0, x_max = 1.0, y_min = 0.0, y_max = 1.0;

  double px(double x) const {
    return kMarginLeft + (x - x_min) / (x_max - x_min) * (kWidth - kMarginLeft - kMarginRight);
  }
  double py(double y) const {
    return kHeight - kMarginBottom -
           (y - y_min) / (y_max - y_min) * (kHeight - kMarginTop - kMarginBottom);
  }

  void line(double x1, double y1, double x2, double y2, const std::string& color,
            double width, const std::string& dash = "") {
    body += "<line x1=\"" + fmt(px(x1)) + "\" y1=\"" + fmt(py(y1)) + "\" x2=\"" + fmt(px(x2)) +
            "\" y2=\"" + fmt(py(y2)) + "\" stroke=\"" + color + "\" stroke-width=\"" +
            fmt(width) + "\"" + (dash.empty() ? "" : " stroke-dasharray=\"" + dash + "\"") +
            "/>\n";
  }
  void circle(double x, double y, double r, const std::string& color) {
    body += "<circle cx=\"" + fmt(px(x)) + "\" cy=\"" + fmt(py(y)) + "\" r=\"" + fmt(r) +
            "\" fill=\"" + color + "\" fill-opacity=\"0.55\"/>\n";
  }
  void rect(double x1, double y1, double x2, double y2, const std::string& color,
            double opacity) {
    body += "<rect x=\"" + fmt(px(x1)) + "\" y=\"" + fmt(py(y2)) + "\" width=\"" +
            fmt(px(x2) - px(x1)) + "\" height=\"" + fmt(py(y1) - py(y2)) + "\" fill=\"" + color +
            "\" fill-opacity=\"" + fmt(opacity) + "\"/>\n";
  }
  void text(double px_abs, double py_abs, const std::string& s, int size,
            const std::string& anchor = "middle", const std::string& color = "#222") {
    body += "<text x=\"" + fmt(px_abs) + "\" y=\"" + fmt(py_abs) + "\" font-size=\"" +
            std::to_string(size) + "\" font-family=\"sans-serif\" text-anchor=\"" + anchor +
            "\" fill=\"" + color + "\">" + s + "</text>\n";
  }

  void axes(const std::string& x_label, const std::string& y_label, const std::string& title) {
    const double x0 = kMarginLeft, x1 = kWidth - kMarginRight;
    const double y0 = kHeight - kMarginBottom, y1 = kMarginTop;
    body += "<rect x=\"" + fmt(x0) + "\" y=\"" + fmt(y1) + "\" width=\"" + fmt(x1 - x0) +
            "\" height=\"" + fmt(y0 - y1) + "\" fill=\"none\" stroke=\"#444\"/>\n";
    for (int i = 0; i <= 5; ++i) {
      const double fx = x_min + (x_max - x_min) * i / 5.0;
      const double fy = y_min + (y_max - y_min) * i / 5.0;
      text(px(fx), y0 + 22, fmt(fx), 12);
      text(x0 - 8, py(fy) + 4, fmt(fy), 12, "end");
      line(fx, y_min, fx, y_min + (y_max - y_min) * 0.012, "#444", 1.0);
    }
    text((x0 + x1) / 2, kHeight - 18, x_label, 14);
    body += "<text x=\"22\" y=\"" + fmt((y0 + y1) / 2) +
            "\" font-size=\"14\" font-family=\"sans-serif\" text-anchor=\"middle\" "
            "fill=\"#222\" transform=\"rotate(-90 22 " +
            fmt((y0 + y1) / 2) + ")\">" + y_label + "</text>\n";
    text((x0 + x1) / 2, 28, title, 16);
  }

  void legend(const std::vector<Series>& series) {
    double y = kMarginTop + 16;
    for (const Series& s : series) {
      body += "<rect x=\"" + fmt(kMarginLeft + 12) + "\" y=\"" + fmt(y - 10) +
              "\" width=\"12\" height=\"12\" fill=\"" + s.color + "\" fill-opacity=\"0.7\"/>\n";
      text(kMarginLeft + 30, y, s.label, 13, "start");
      y += 18;
    }
  }

  void write(const std::filesystem::path& path) const {
    std::ofstream out(path);
    if (!out) throw DataError("cannot open plot file for writing: " + path.string());
    out << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << kWidth << "\" height=\""
        << kHeight << "\" viewBox=\"0 0 " << kWidth << " " << kHeight << "\">\n"
        << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n"
        << body << "</svg>\n";
    if (!out) throw DataError("plot write failed: " + path.string());
  }
};

}  // namespace detail

/// Predicted-vs-true scatter with the identity line and +-10% bounds.
inline void write_parity_plot(const std::filesystem::path& path, std::span<const double> truth,
                              const std::vector<Series>& series, const std::string& title,
                              const std::string& unit = "kW/m^2") {
  if (truth.empty()) throw DataError("parity plot: empty input");
  detail::Canvas c;
  double lo = truth[0], hi = truth[0];
  for (double t : truth) {
    lo = std::min(lo, t);
    hi = std::max(hi, t);
  }
  for (const Series& s : series) {
    if (s.values.size() != truth.size())
      throw DataError("parity plot: series length mismatch");
    for (double v : s.values) {
      lo = std::min(lo, v);
      hi = std::max(hi, v);
    }
  }
  if (hi <= lo) hi = lo + 1.0;
  const double pad = 0.05 * (hi - lo);
  c.x_min = c.y_min = lo - pad;
  c.x_max = c.y_max = hi + pad;
  c.axes("true CHF [" + unit + "]", "predicted / generated CHF [" + unit + "]", title);
  c.line(c.x_min, c.x_min, c.x_max, c.x_max, "#333", 1.2);
  c.line(c.x_min, 1.1 * c.x_min, c.x_max, 1.1 * c.x_max, "#888", 1.0, "6,4");
  c.line(c.x_min, 0.9 * c.x_min, c.x_max, 0.9 * c.x_max, "#888", 1.0, "6,4");
  for (const Series& s : series)
    for (std::size_t i = 0; i < truth.size(); ++i) c.circle(truth[i], s.values[i], 2.4, s.color);
  c.legend(series);
  c.write(path);
}

/// Overlaid histograms of one or more sample sets on a shared binning.
inline void write_histogram(const std::filesystem::path& path, const std::vector<Series>& series,
                            int bins, const std::string& title, const std::string& x_label) {
  if (series.empty()) throw DataError("histogram: no series");
  double lo = 0.0, hi = 0.0;
  bool first = true;
  std::size_t total = 0;
  for (const Series& s : series) {
    total += s.values.size();
    for (double v : s.values) {
      if (first) {
        lo = hi = v;
        first = false;
      }
      lo = std::min(lo, v);
      hi = std::max(hi, v);
    }
  }
  if (total == 0) throw DataError("histogram: empty input");
  if (hi <= lo) {  // all values identical: one bin around the value
    lo -= 0.5;
    hi += 0.5;
    bins = 1;
  }
  bins = std::max(1, bins);
  const double bw = (hi - lo) / bins;

  std::vector<std::vector<long>> counts(series.size(), std::vector<long>(static_cast<std::size_t>(bins), 0));
  long max_count = 0;
  for (std::size_t s = 0; s < series.size(); ++s) {
    for (double v : series[s].values) {
      int b = static_cast<int>((v - lo) / bw);
      b = std::clamp(b, 0, bins - 1);
      max_count = std::max(max_count, ++counts[s][static_cast<std::size_t>(b)]);
    }
  }

  detail::Canvas c;
  c.x_min = lo;
  c.x_max = hi;
  c.y_min = 0.0;
  c.y_max = static_cast<double>(max_count) * 1.05;
  c.axes(x_label, "count", title);
  for (std::size_t s = 0; s < series.size(); ++s)
    for (int b = 0; b < bins; ++b) {
      const long n = counts[s][static_cast<std::size_t>(b)];
      if (n > 0)
        c.rect(lo + b * bw, 0.0, lo + (b + 1) * bw, static_cast<double>(n), series[s].color,
               series.size() > 1 ? 0.55 : 0.85);
    }
  c.legend(series);
  c.write(path);
}

}  // namespace chfkit::svg
