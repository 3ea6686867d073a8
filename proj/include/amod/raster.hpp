#pragma once

#include <zlib.h>

#include <array>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <stdexcept>
#include <string>
#include <vector>

namespace amod {

struct Rgb {
  uint8_t r = 0, g = 0, b = 0;
  bool operator==(const Rgb& o) const { return r == o.r && g == o.g && b == o.b; }
};

// 5x7 bitmap glyphs, one row per byte (bit 4 = leftmost column). Fixed font
// keeps rendered frames byte-deterministic.
namespace font5x7 {

inline const uint8_t* glyph(char c) {
  static const std::array<std::array<uint8_t, 7>, 45> glyphs = {{
      {0x0E, 0x11, 0x13, 0x15, 0x19, 0x11, 0x0E},  // 0
      {0x04, 0x0C, 0x04, 0x04, 0x04, 0x04, 0x0E},  // 1
      {0x0E, 0x11, 0x01, 0x02, 0x04, 0x08, 0x1F},  // 2
      {0x1F, 0x02, 0x04, 0x02, 0x01, 0x11, 0x0E},  // 3
      {0x02, 0x06, 0x0A, 0x12, 0x1F, 0x02, 0x02},  // 4
      {0x1F, 0x10, 0x1E, 0x01, 0x01, 0x11, 0x0E},  // 5
      {0x06, 0x08, 0x10, 0x1E, 0x11, 0x11, 0x0E},  // 6
      {0x1F, 0x01, 0x02, 0x04, 0x08, 0x08, 0x08},  // 7
      {0x0E, 0x11, 0x11, 0x0E, 0x11, 0x11, 0x0E},  // 8
      {0x0E, 0x11, 0x11, 0x0F, 0x01, 0x02, 0x0C},  // 9
      {0x0E, 0x11, 0x11, 0x1F, 0x11, 0x11, 0x11},  // A
      {0x1E, 0x11, 0x11, 0x1E, 0x11, 0x11, 0x1E},  // B
      {0x0E, 0x11, 0x10, 0x10, 0x10, 0x11, 0x0E},  // C
      {0x1C, 0x12, 0x11, 0x11, 0x11, 0x12, 0x1C},  // D
      {0x1F, 0x10, 0x10, 0x1E, 0x10, 0x10, 0x1F},  // E
      {0x1F, 0x10, 0x10, 0x1E, 0x10, 0x10, 0x10},  // F
      {0x0E, 0x11, 0x10, 0x17, 0x11, 0x11, 0x0F},  // G
      {0x11, 0x11, 0x11, 0x1F, 0x11, 0x11, 0x11},  // H
      {0x0E, 0x04, 0x04, 0x04, 0x04, 0x04, 0x0E},  // I
      {0x07, 0x02, 0x02, 0x02, 0x02, 0x12, 0x0C},  // J
      {0x11, 0x12, 0x14, 0x18, 0x14, 0x12, 0x11},  // K
      {0x10, 0x10, 0x10, 0x10, 0x10, 0x10, 0x1F},  // L
      {0x11, 0x1B, 0x15, 0x15, 0x11, 0x11, 0x11},  // M
      {0x11, 0x11, 0x19, 0x15, 0x13, 0x11, 0x11},  // N
      {0x0E, 0x11, 0x11, 0x11, 0x11, 0x11, 0x0E},  // O
      {0x1E, 0x11, 0x11, 0x1E, 0x10, 0x10, 0x10},  // P
      {0x0E, 0x11, 0x11, 0x11, 0x15, 0x12, 0x0D},  // Q
      {0x1E, 0x11, 0x11, 0x1E, 0x14, 0x12, 0x11},  // R
      {0x0F, 0x10, 0x10, 0x0E, 0x01, 0x01, 0x1E},  // S
      {0x1F, 0x04, 0x04, 0x04, 0x04, 0x04, 0x04},  // T
      {0x11, 0x11, 0x11, 0x11, 0x11, 0x11, 0x0E},  // U
      {0x11, 0x11, 0x11, 0x11, 0x11, 0x0A, 0x04},  // V
      {0x11, 0x11, 0x11, 0x15, 0x15, 0x1B, 0x11},  // W
      {0x11, 0x11, 0x0A, 0x04, 0x0A, 0x11, 0x11},  // X
      {0x11, 0x11, 0x0A, 0x04, 0x04, 0x04, 0x04},  // Y
      {0x1F, 0x01, 0x02, 0x04, 0x08, 0x10, 0x1F},  // Z
      {0x00, 0x00, 0x00, 0x1F, 0x00, 0x00, 0x00},  // -
      {0x00, 0x00, 0x00, 0x00, 0x00, 0x0C, 0x0C},  // .
      {0x00, 0x0C, 0x0C, 0x00, 0x0C, 0x0C, 0x00},  // :
      {0x01, 0x02, 0x02, 0x04, 0x08, 0x08, 0x10},  // /
      {0x19, 0x1A, 0x02, 0x04, 0x08, 0x0B, 0x13},  // %
      {0x00, 0x00, 0x00, 0x00, 0x0C, 0x04, 0x08},  // ,
      {0x00, 0x00, 0x00, 0x00, 0x00, 0x00, 0x00},  // space
      {0x04, 0x04, 0x04, 0x04, 0x04, 0x00, 0x04},  // !
      {0x00, 0x04, 0x00, 0x1F, 0x00, 0x04, 0x00},  // (division placeholder)
  }};
  if (c >= '0' && c <= '9') return glyphs[c - '0'].data();
  if (c >= 'A' && c <= 'Z') return glyphs[10 + (c - 'A')].data();
  if (c >= 'a' && c <= 'z') return glyphs[10 + (c - 'a')].data();
  switch (c) {
    case '-': return glyphs[36].data();
    case '.': return glyphs[37].data();
    case ':': return glyphs[38].data();
    case '/': return glyphs[39].data();
    case '%': return glyphs[40].data();
    case ',': return glyphs[41].data();
    case '!': return glyphs[43].data();
    default: return glyphs[42].data();
  }
}

}  // namespace font5x7

class Canvas {
 public:
  Canvas(int width, int height, Rgb fill = {255, 255, 255})
      : width_(width), height_(height), pixels_(static_cast<size_t>(width) * height, fill) {
    if (width <= 0 || height <= 0) throw std::invalid_argument("canvas: bad size");
  }

  int width() const { return width_; }
  int height() const { return height_; }

  bool inside(int x, int y) const { return x >= 0 && x < width_ && y >= 0 && y < height_; }

  void set(int x, int y, Rgb c) {
    if (inside(x, y)) pixels_[static_cast<size_t>(y) * width_ + x] = c;
  }
  Rgb at(int x, int y) const { return pixels_[static_cast<size_t>(y) * width_ + x]; }

  void fill_rect(int x0, int y0, int x1, int y1, Rgb c) {
    for (int y = std::max(0, y0); y <= std::min(height_ - 1, y1); ++y)
      for (int x = std::max(0, x0); x <= std::min(width_ - 1, x1); ++x)
        pixels_[static_cast<size_t>(y) * width_ + x] = c;
  }

  void line(int x0, int y0, int x1, int y1, Rgb c, int thickness = 1) {
    int dx = std::abs(x1 - x0), dy = -std::abs(y1 - y0);
    int sx = x0 < x1 ? 1 : -1, sy = y0 < y1 ? 1 : -1;
    int err = dx + dy;
    int t = thickness / 2;
    while (true) {
      if (thickness <= 1)
        set(x0, y0, c);
      else
        fill_rect(x0 - t, y0 - t, x0 + t, y0 + t, c);
      if (x0 == x1 && y0 == y1) break;
      int e2 = 2 * err;
      if (e2 >= dy) {
        err += dy;
        x0 += sx;
      }
      if (e2 <= dx) {
        err += dx;
        y0 += sy;
      }
    }
  }

  // Filled convex quad via point-in-polygon scan over the bounding box.
  // Either winding is accepted.
  void fill_quad(const std::array<std::pair<double, double>, 4>& q, Rgb c) {
    double minx = q[0].first, maxx = q[0].first, miny = q[0].second, maxy = q[0].second;
    for (const auto& p : q) {
      minx = std::min(minx, p.first);
      maxx = std::max(maxx, p.first);
      miny = std::min(miny, p.second);
      maxy = std::max(maxy, p.second);
    }
    double area2 = 0.0;
    for (int i = 0; i < 4; ++i) {
      auto [ax, ay] = q[i];
      auto [bx, by] = q[(i + 1) % 4];
      area2 += ax * by - bx * ay;
    }
    const double sign = area2 >= 0 ? 1.0 : -1.0;
    for (int y = std::max(0, (int)std::floor(miny)); y <= std::min(height_ - 1, (int)std::ceil(maxy)); ++y)
      for (int x = std::max(0, (int)std::floor(minx)); x <= std::min(width_ - 1, (int)std::ceil(maxx)); ++x) {
        double px = x + 0.5, py = y + 0.5;
        bool in = true;
        for (int i = 0; i < 4; ++i) {
          auto [ax, ay] = q[i];
          auto [bx, by] = q[(i + 1) % 4];
          if (sign * ((bx - ax) * (py - ay) - (by - ay) * (px - ax)) < 0) {
            in = false;
            break;
          }
        }
        if (in) pixels_[static_cast<size_t>(y) * width_ + x] = c;
      }
  }

  void draw_text(int x, int y, const std::string& text, Rgb c, int scale = 1) {
    int cx = x;
    for (char ch : text) {
      const uint8_t* g = font5x7::glyph(ch);
      for (int row = 0; row < 7; ++row)
        for (int col = 0; col < 5; ++col)
          if (g[row] & (1 << (4 - col)))
            for (int sy = 0; sy < scale; ++sy)
              for (int sx = 0; sx < scale; ++sx)
                set(cx + col * scale + sx, y + row * scale + sy, c);
      cx += 6 * scale;
    }
  }

  const std::vector<Rgb>& pixels() const { return pixels_; }

  std::vector<uint8_t> rgb_bytes() const {
    std::vector<uint8_t> out;
    out.reserve(pixels_.size() * 3);
    for (const Rgb& p : pixels_) {
      out.push_back(p.r);
      out.push_back(p.g);
      out.push_back(p.b);
    }
    return out;
  }

 private:
  int width_, height_;
  std::vector<Rgb> pixels_;
};

namespace detail {

inline uint32_t png_crc32(const uint8_t* data, size_t len, uint32_t seed) {
  return static_cast<uint32_t>(
      ::crc32(seed, reinterpret_cast<const Bytef*>(data), static_cast<uInt>(len)));
}

inline void push_u32(std::vector<uint8_t>& v, uint32_t x) {
  v.push_back((x >> 24) & 0xFF);
  v.push_back((x >> 16) & 0xFF);
  v.push_back((x >> 8) & 0xFF);
  v.push_back(x & 0xFF);
}

inline void push_chunk(std::vector<uint8_t>& out, const char type[4],
                       const std::vector<uint8_t>& payload) {
  push_u32(out, static_cast<uint32_t>(payload.size()));
  size_t start = out.size();
  out.insert(out.end(), type, type + 4);
  out.insert(out.end(), payload.begin(), payload.end());
  uint32_t crc = png_crc32(out.data() + start, out.size() - start, ::crc32(0, nullptr, 0));
  push_u32(out, crc);
}

}  // namespace detail

// Minimal 8-bit RGB PNG encoder (zlib-deflated at a fixed level, so identical
// input always yields identical bytes).
inline std::vector<uint8_t> encode_png(int width, int height,
                                       const std::vector<uint8_t>& rgb) {
  if (rgb.size() != static_cast<size_t>(width) * height * 3)
    throw std::invalid_argument("png: buffer size mismatch");
  std::vector<uint8_t> raw;
  raw.reserve(rgb.size() + height);
  for (int y = 0; y < height; ++y) {
    raw.push_back(0);  // filter: none
    raw.insert(raw.end(), rgb.begin() + static_cast<size_t>(y) * width * 3,
               rgb.begin() + static_cast<size_t>(y + 1) * width * 3);
  }
  uLongf bound = ::compressBound(static_cast<uLong>(raw.size()));
  std::vector<uint8_t> compressed(bound);
  if (::compress2(compressed.data(), &bound, raw.data(), static_cast<uLong>(raw.size()), 6) != Z_OK)
    throw std::runtime_error("png: deflate failed");
  compressed.resize(bound);

  std::vector<uint8_t> out = {0x89, 'P', 'N', 'G', 0x0D, 0x0A, 0x1A, 0x0A};
  std::vector<uint8_t> ihdr;
  detail::push_u32(ihdr, static_cast<uint32_t>(width));
  detail::push_u32(ihdr, static_cast<uint32_t>(height));
  ihdr.push_back(8);  // bit depth
  ihdr.push_back(2);  // color type: truecolor
  ihdr.push_back(0);
  ihdr.push_back(0);
  ihdr.push_back(0);
  detail::push_chunk(out, "IHDR", ihdr);
  detail::push_chunk(out, "IDAT", compressed);
  detail::push_chunk(out, "IEND", {});
  return out;
}

inline void write_png(const std::string& path, int width, int height,
                      const std::vector<uint8_t>& rgb) {
  auto bytes = encode_png(width, height, rgb);
  std::ofstream f(path, std::ios::binary);
  if (!f) throw std::runtime_error("png: cannot open " + path);
  f.write(reinterpret_cast<const char*>(bytes.data()), bytes.size());
}

}  // namespace amod
