#pragma once

#include <cmath>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

#include "amod/raster.hpp"
#include "amod/world.hpp"

namespace amod {

enum class BevVariant { Scheduling, GraphEvolution };

inline const char* to_string(BevVariant v) {
  return v == BevVariant::Scheduling ? "scheduling" : "graph_evolution";
}

// Marker palette. Request red is reserved: nothing else is drawn with it, so
// its absence identifies a graph-evolution frame.
struct BevStyle {
  Rgb background{255, 255, 255};
  Rgb boundary{60, 60, 60};
  Rgb centerline{205, 205, 205};
  Rgb vehicle_free{30, 160, 60};
  Rgb vehicle_busy{230, 200, 40};
  Rgb request{220, 20, 20};
  Rgb vehicle_label{10, 10, 10};
  double vehicle_length = 4.2;  // m
  double vehicle_width = 1.9;   // m
  double request_size = 3.0;    // m
};

struct BevConfig {
  int width = 512;
  int height = 512;
  double meters_per_pixel = 0.5;
  bool fit_map = true;  // raise meters_per_pixel when the default cannot cover the map
  BevStyle style;
};

struct BevImage {
  int width = 0;
  int height = 0;
  double meters_per_pixel = 0.5;
  double origin_x = 0, origin_y = 0;  // world coordinates of the lower-left pixel corner
  BevVariant variant = BevVariant::Scheduling;
  std::vector<uint8_t> rgb;  // row-major, top row first
  int clipped = 0;           // markers partially outside the image

  Rgb pixel(int x, int y) const {
    size_t i = (static_cast<size_t>(y) * width + x) * 3;
    return {rgb[i], rgb[i + 1], rgb[i + 2]};
  }

  // world -> pixel center coordinates
  double px(double wx) const { return (wx - origin_x) / meters_per_pixel; }
  double py(double wy) const { return height - 1 - (wy - origin_y) / meters_per_pixel; }
};

inline BevImage render_bev(const WorldState& world, BevVariant variant,
                           const BevConfig& cfg = {}) {
  if (cfg.meters_per_pixel <= 0.0)
    throw std::invalid_argument("bev: meters_per_pixel must be > 0");
  if (!world.map) throw std::invalid_argument("bev: world has no map");
  const LaneGraph& map = *world.map;

  double mpp = cfg.meters_per_pixel;
  double span_x = map.max_x - map.min_x, span_y = map.max_y - map.min_y;
  if (cfg.fit_map) {
    double need = std::max(span_x / cfg.width, span_y / cfg.height);
    mpp = std::max(mpp, need);
  }
  BevImage img;
  img.width = cfg.width;
  img.height = cfg.height;
  img.meters_per_pixel = mpp;
  // center the map in the frame
  img.origin_x = map.min_x - (cfg.width * mpp - span_x) / 2.0;
  img.origin_y = map.min_y - (cfg.height * mpp - span_y) / 2.0;
  img.variant = variant;

  Canvas canvas(cfg.width, cfg.height, cfg.style.background);
  auto px = [&](double wx) { return static_cast<int>(std::llround(img.px(wx))); };
  auto py = [&](double wy) { return static_cast<int>(std::llround(img.py(wy))); };

  for (const auto& poly : map.boundaries)
    for (size_t i = 1; i < poly.size(); ++i)
      canvas.line(px(poly[i - 1].x), py(poly[i - 1].y), px(poly[i].x), py(poly[i].y),
                  cfg.style.boundary);
  for (const auto& e : map.edges)
    for (size_t i = 1; i < e.centerline.size(); ++i)
      canvas.line(px(e.centerline[i - 1].x), py(e.centerline[i - 1].y),
                  px(e.centerline[i].x), py(e.centerline[i].y), cfg.style.centerline);

  if (variant == BevVariant::Scheduling) {
    for (const auto& r : world.requests) {
      if (r.status != RequestStatus::Pending && r.status != RequestStatus::Assigned)
        continue;
      int half = std::max(1, static_cast<int>(std::llround(cfg.style.request_size / mpp / 2)));
      int cx = px(r.pickup.x), cy = py(r.pickup.y);
      canvas.fill_rect(cx - half, cy - half, cx + half, cy + half, cfg.style.request);
      canvas.draw_text(cx + half + 2, cy - 3, "R" + std::to_string(r.id), cfg.style.request);
    }
  }

  for (const auto& v : world.vehicles) {
    if (v.x < map.min_x || v.x > map.max_x || v.y < map.min_y || v.y > map.max_y)
      ++img.clipped;
    Rgb color = v.is_free() ? cfg.style.vehicle_free : cfg.style.vehicle_busy;
    double hl = cfg.style.vehicle_length / 2.0, hw = cfg.style.vehicle_width / 2.0;
    double c = std::cos(v.heading), s = std::sin(v.heading);
    std::array<std::pair<double, double>, 4> quad;
    const double corners[4][2] = {{hl, hw}, {hl, -hw}, {-hl, -hw}, {-hl, hw}};
    for (int i = 0; i < 4; ++i) {
      double wx = v.x + corners[i][0] * c - corners[i][1] * s;
      double wy = v.y + corners[i][0] * s + corners[i][1] * c;
      quad[i] = {img.px(wx), img.py(wy)};
    }
    canvas.fill_quad(quad, color);
    canvas.draw_text(px(v.x) + 4, py(v.y) - 9, std::to_string(v.id),
                     cfg.style.vehicle_label);
  }

  img.rgb = canvas.rgb_bytes();
  return img;
}

inline int count_pixels(const BevImage& img, Rgb color) {
  int n = 0;
  for (size_t i = 0; i + 2 < img.rgb.size(); i += 3)
    if (img.rgb[i] == color.r && img.rgb[i + 1] == color.g && img.rgb[i + 2] == color.b)
      ++n;
  return n;
}

inline void save_png(const BevImage& img, const std::string& path) {
  write_png(path, img.width, img.height, img.rgb);
}

}  // namespace amod
