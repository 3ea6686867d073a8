#pragma once

#include <algorithm>
#include <cmath>
#include <string>
#include <vector>

#include "amod/raster.hpp"

namespace amod {

namespace detail {

inline double quantile(std::vector<double> v, double q) {
  if (v.empty()) return 0;
  std::sort(v.begin(), v.end());
  double pos = q * (v.size() - 1);
  size_t lo = static_cast<size_t>(pos);
  size_t hi = std::min(lo + 1, v.size() - 1);
  double frac = pos - lo;
  return v[lo] * (1 - frac) + v[hi] * frac;
}

inline std::string format_number(double v) {
  char buf[32];
  if (std::abs(v) >= 100)
    std::snprintf(buf, sizeof buf, "%.0f", v);
  else
    std::snprintf(buf, sizeof buf, "%.2f", v);
  return buf;
}

}  // namespace detail

// Box-and-whisker chart, one labeled box per series.
inline void write_box_plot(const std::string& path, const std::vector<std::string>& labels,
                           const std::vector<std::vector<double>>& series,
                           const std::string& title) {
  const int w = 640, h = 420, margin = 56;
  Canvas canvas(w, h);
  canvas.draw_text(margin, 12, title, {10, 10, 10});
  double vmax = 1e-9, vmin = 0.0;
  for (const auto& s : series)
    for (double v : s) vmax = std::max(vmax, v);
  vmax *= 1.08;
  auto ypix = [&](double v) {
    return static_cast<int>(h - margin - (v - vmin) / (vmax - vmin) * (h - 2 * margin));
  };
  canvas.line(margin, h - margin, w - margin / 2, h - margin, {0, 0, 0});
  canvas.line(margin, h - margin, margin, margin / 2, {0, 0, 0});
  for (int tick = 0; tick <= 4; ++tick) {
    double v = vmin + (vmax - vmin) * tick / 4.0;
    int y = ypix(v);
    canvas.line(margin - 3, y, margin, y, {0, 0, 0});
    canvas.draw_text(4, y - 3, detail::format_number(v), {60, 60, 60});
  }
  const int n = static_cast<int>(series.size());
  for (int i = 0; i < n; ++i) {
    const auto& s = series[i];
    if (s.empty()) continue;
    int cx = margin + (i + 1) * (w - margin - margin / 2) / (n + 1);
    int half = std::max(12, (w - 2 * margin) / (4 * n));
    double q1 = detail::quantile(s, 0.25), q2 = detail::quantile(s, 0.5),
           q3 = detail::quantile(s, 0.75);
    double iqr = q3 - q1;
    double lo_fence = q1 - 1.5 * iqr, hi_fence = q3 + 1.5 * iqr;
    double lo = q1, hi = q3;
    for (double v : s) {
      if (v >= lo_fence) lo = std::min(lo, v);
      if (v <= hi_fence) hi = std::max(hi, v);
    }
    Rgb box{70, 110, 190}, line{20, 20, 20};
    canvas.line(cx, ypix(hi), cx, ypix(q3), line);
    canvas.line(cx, ypix(q1), cx, ypix(lo), line);
    canvas.line(cx - half / 2, ypix(hi), cx + half / 2, ypix(hi), line);
    canvas.line(cx - half / 2, ypix(lo), cx + half / 2, ypix(lo), line);
    for (int y = ypix(q3); y <= ypix(q1); ++y) {
      canvas.set(cx - half, y, box);
      canvas.set(cx + half, y, box);
    }
    canvas.line(cx - half, ypix(q3), cx + half, ypix(q3), box);
    canvas.line(cx - half, ypix(q1), cx + half, ypix(q1), box);
    canvas.line(cx - half, ypix(q2), cx + half, ypix(q2), {190, 60, 40});
    for (double v : s)
      if (v < lo_fence || v > hi_fence) {
        canvas.set(cx, ypix(v), {120, 120, 120});
        canvas.set(cx + 1, ypix(v), {120, 120, 120});
      }
    canvas.draw_text(cx - 3 * (int)labels[i].size(), h - margin + 10, labels[i],
                     {10, 10, 10});
  }
  write_png(path, w, h, canvas.rgb_bytes());
}

// Side-by-side histogram, one color per series.
inline void write_histogram(const std::string& path, const std::vector<std::string>& labels,
                            const std::vector<std::vector<double>>& series,
                            const std::string& title, int bins = 12) {
  const int w = 640, h = 420, margin = 56;
  Canvas canvas(w, h);
  canvas.draw_text(margin, 12, title, {10, 10, 10});
  double vmax = 1e-9;
  for (const auto& s : series)
    for (double v : s) vmax = std::max(vmax, v);
  vmax *= 1.02;
  std::vector<std::vector<int>> counts(series.size(), std::vector<int>(bins, 0));
  int cmax = 1;
  for (size_t si = 0; si < series.size(); ++si)
    for (double v : series[si]) {
      int b = std::min(bins - 1, static_cast<int>(v / vmax * bins));
      cmax = std::max(cmax, ++counts[si][b]);
    }
  canvas.line(margin, h - margin, w - margin / 2, h - margin, {0, 0, 0});
  canvas.line(margin, h - margin, margin, margin / 2, {0, 0, 0});
  const std::vector<Rgb> palette = {{70, 110, 190}, {190, 120, 40}, {60, 150, 90},
                                    {150, 60, 150}};
  int plot_w = w - margin - margin / 2;
  int group_w = plot_w / bins;
  int bar_w = std::max(2, group_w / (static_cast<int>(series.size()) + 1));
  for (int b = 0; b < bins; ++b)
    for (size_t si = 0; si < series.size(); ++si) {
      int x0 = margin + b * group_w + static_cast<int>(si) * bar_w + 1;
      int bh = static_cast<int>(
          static_cast<double>(counts[si][b]) / cmax * (h - 2 * margin));
      canvas.fill_rect(x0, h - margin - bh, x0 + bar_w - 2, h - margin - 1,
                       palette[si % palette.size()]);
    }
  for (int tick = 0; tick <= 4; ++tick) {
    double v = vmax * tick / 4.0;
    int x = margin + static_cast<int>(static_cast<double>(tick) / 4 * plot_w);
    canvas.draw_text(x - 8, h - margin + 10, detail::format_number(v), {60, 60, 60});
  }
  int ly = margin / 2;
  for (size_t si = 0; si < series.size(); ++si) {
    canvas.fill_rect(w - margin - 120, ly, w - margin - 108, ly + 8,
                     palette[si % palette.size()]);
    canvas.draw_text(w - margin - 102, ly, labels[si], {10, 10, 10});
    ly += 14;
  }
  write_png(path, w, h, canvas.rgb_bytes());
}

}  // namespace amod
