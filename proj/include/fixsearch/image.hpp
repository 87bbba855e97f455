#ifndef FIXSEARCH_IMAGE_HPP
#define FIXSEARCH_IMAGE_HPP

#include <zlib.h>

#include <array>
#include <cstdint>
#include <string>
#include <vector>

#include "fixsearch/common.hpp"

namespace fixsearch::image {

struct Rgb {
  std::uint8_t r = 0, g = 0, b = 0;
  bool operator==(const Rgb&) const = default;
};

struct ImageRgb {
  int width = 0;
  int height = 0;
  std::vector<Rgb> pixels;  // row-major

  ImageRgb() = default;
  ImageRgb(int w, int h, Rgb fill = {255, 255, 255})
      : width(w), height(h), pixels(static_cast<std::size_t>(w) * h, fill) {}

  Rgb& at(int x, int y) { return pixels[static_cast<std::size_t>(y) * width + x]; }
  const Rgb& at(int x, int y) const { return pixels[static_cast<std::size_t>(y) * width + x]; }
  bool in_bounds(int x, int y) const { return x >= 0 && x < width && y >= 0 && y < height; }
};

// ---------------------------------------------------------------------------
// Colormap
//
// Heatmaps use the classic piecewise-linear jet ramp:
//   r(t) = clamp(1.5 - |4t - 3|),  g(t) = clamp(1.5 - |4t - 2|),
//   b(t) = clamp(1.5 - |4t - 1|),  t in [0, 1].
// ---------------------------------------------------------------------------

inline Rgb jet_color(double t) {
  if (t < 0.0) t = 0.0;
  if (t > 1.0) t = 1.0;
  auto channel = [](double v) {
    if (v < 0.0) v = 0.0;
    if (v > 1.0) v = 1.0;
    return static_cast<std::uint8_t>(v * 255.0 + 0.5);
  };
  return Rgb{channel(1.5 - std::abs(4.0 * t - 3.0)), channel(1.5 - std::abs(4.0 * t - 2.0)),
             channel(1.5 - std::abs(4.0 * t - 1.0))};
}

// ---------------------------------------------------------------------------
// PNG encode/decode (8-bit RGB, no interlace)
// ---------------------------------------------------------------------------

namespace detail {

inline void put_u32be(std::vector<std::uint8_t>& out, std::uint32_t v) {
  out.push_back(static_cast<std::uint8_t>((v >> 24) & 0xff));
  out.push_back(static_cast<std::uint8_t>((v >> 16) & 0xff));
  out.push_back(static_cast<std::uint8_t>((v >> 8) & 0xff));
  out.push_back(static_cast<std::uint8_t>(v & 0xff));
}

inline std::uint32_t get_u32be(const std::uint8_t* p) {
  return (static_cast<std::uint32_t>(p[0]) << 24) | (static_cast<std::uint32_t>(p[1]) << 16) |
         (static_cast<std::uint32_t>(p[2]) << 8) | static_cast<std::uint32_t>(p[3]);
}

inline void append_chunk(std::vector<std::uint8_t>& out, const char type[4],
                         const std::vector<std::uint8_t>& data) {
  put_u32be(out, static_cast<std::uint32_t>(data.size()));
  std::size_t crc_start = out.size();
  out.insert(out.end(), type, type + 4);
  out.insert(out.end(), data.begin(), data.end());
  std::uint32_t crc = static_cast<std::uint32_t>(
      ::crc32(0L, out.data() + crc_start, static_cast<uInt>(out.size() - crc_start)));
  put_u32be(out, crc);
}

}  // namespace detail

inline std::vector<std::uint8_t> encode_png(const ImageRgb& img) {
  if (img.width <= 0 || img.height <= 0) throw InvalidInputError("encode_png: empty image");
  std::vector<std::uint8_t> raw;
  raw.reserve(static_cast<std::size_t>(img.height) * (1 + static_cast<std::size_t>(img.width) * 3));
  for (int y = 0; y < img.height; ++y) {
    raw.push_back(0);  // filter: none
    for (int x = 0; x < img.width; ++x) {
      const Rgb& p = img.at(x, y);
      raw.push_back(p.r);
      raw.push_back(p.g);
      raw.push_back(p.b);
    }
  }
  uLongf bound = ::compressBound(static_cast<uLong>(raw.size()));
  std::vector<std::uint8_t> compressed(bound);
  if (::compress2(compressed.data(), &bound, raw.data(), static_cast<uLong>(raw.size()), 6) != Z_OK)
    throw IoError("encode_png: deflate failed");
  compressed.resize(bound);

  std::vector<std::uint8_t> out = {0x89, 'P', 'N', 'G', 0x0d, 0x0a, 0x1a, 0x0a};
  std::vector<std::uint8_t> ihdr;
  detail::put_u32be(ihdr, static_cast<std::uint32_t>(img.width));
  detail::put_u32be(ihdr, static_cast<std::uint32_t>(img.height));
  ihdr.push_back(8);   // bit depth
  ihdr.push_back(2);   // color type: truecolor
  ihdr.push_back(0);   // compression
  ihdr.push_back(0);   // filter
  ihdr.push_back(0);   // interlace
  detail::append_chunk(out, "IHDR", ihdr);
  detail::append_chunk(out, "IDAT", compressed);
  detail::append_chunk(out, "IEND", {});
  return out;
}

/// Decodes 8-bit truecolor PNGs (the only kind this toolkit writes).
inline ImageRgb decode_png(const std::vector<std::uint8_t>& bytes) {
  static const std::uint8_t sig[8] = {0x89, 'P', 'N', 'G', 0x0d, 0x0a, 0x1a, 0x0a};
  if (bytes.size() < 8 || std::memcmp(bytes.data(), sig, 8) != 0)
    throw FormatError("decode_png: bad signature", 0);

  int width = 0, height = 0;
  std::vector<std::uint8_t> idat;
  std::size_t pos = 8;
  while (pos + 8 <= bytes.size()) {
    std::uint32_t len = detail::get_u32be(bytes.data() + pos);
    if (pos + 12 + len > bytes.size())
      throw FormatError("decode_png: truncated chunk", static_cast<std::int64_t>(pos));
    std::string type(bytes.begin() + pos + 4, bytes.begin() + pos + 8);
    const std::uint8_t* data = bytes.data() + pos + 8;
    if (type == "IHDR") {
      width = static_cast<int>(detail::get_u32be(data));
      height = static_cast<int>(detail::get_u32be(data + 4));
      if (data[8] != 8 || data[9] != 2 || data[12] != 0)
        throw FormatError("decode_png: unsupported format (need 8-bit RGB, no interlace)",
                          static_cast<std::int64_t>(pos + 8));
    } else if (type == "IDAT") {
      idat.insert(idat.end(), data, data + len);
    } else if (type == "IEND") {
      break;
    }
    pos += 12 + len;
  }
  if (width <= 0 || height <= 0) throw FormatError("decode_png: missing IHDR");

  const std::size_t stride = static_cast<std::size_t>(width) * 3;
  std::vector<std::uint8_t> raw(static_cast<std::size_t>(height) * (stride + 1));
  uLongf raw_len = static_cast<uLongf>(raw.size());
  if (::uncompress(raw.data(), &raw_len, idat.data(), static_cast<uLong>(idat.size())) != Z_OK ||
      raw_len != raw.size())
    throw FormatError("decode_png: inflate failed");

  ImageRgb img(width, height);
  std::vector<std::uint8_t> prev(stride, 0), cur(stride);
  for (int y = 0; y < height; ++y) {
    const std::uint8_t* line = raw.data() + static_cast<std::size_t>(y) * (stride + 1);
    std::uint8_t filter = line[0];
    const std::uint8_t* src = line + 1;
    for (std::size_t i = 0; i < stride; ++i) {
      int a = i >= 3 ? cur[i - 3] : 0;        // left
      int b = prev[i];                        // up
      int c = i >= 3 ? prev[i - 3] : 0;       // up-left
      int x = src[i];
      int v;
      switch (filter) {
        case 0: v = x; break;
        case 1: v = x + a; break;
        case 2: v = x + b; break;
        case 3: v = x + (a + b) / 2; break;
        case 4: {
          int p = a + b - c;
          int pa = std::abs(p - a), pb = std::abs(p - b), pc = std::abs(p - c);
          int pred = (pa <= pb && pa <= pc) ? a : (pb <= pc ? b : c);
          v = x + pred;
          break;
        }
        default:
          throw FormatError("decode_png: bad filter " + std::to_string(filter));
      }
      cur[i] = static_cast<std::uint8_t>(v & 0xff);
    }
    for (int x = 0; x < width; ++x)
      img.at(x, y) = Rgb{cur[x * 3u], cur[x * 3u + 1], cur[x * 3u + 2]};
    std::swap(prev, cur);
  }
  return img;
}

// ---------------------------------------------------------------------------
// Drawing (plot rendering for reports)
// ---------------------------------------------------------------------------

namespace detail {

// 5x7 bitmap glyphs, one byte per row, low 5 bits used (MSB of the 5 = left).
inline const std::uint8_t* glyph5x7(char c) {
  static const std::uint8_t digits[10][7] = {
      {0x0E, 0x11, 0x13, 0x15, 0x19, 0x11, 0x0E}, {0x04, 0x0C, 0x04, 0x04, 0x04, 0x04, 0x0E},
      {0x0E, 0x11, 0x01, 0x02, 0x04, 0x08, 0x1F}, {0x1F, 0x02, 0x04, 0x02, 0x01, 0x11, 0x0E},
      {0x02, 0x06, 0x0A, 0x12, 0x1F, 0x02, 0x02}, {0x1F, 0x10, 0x1E, 0x01, 0x01, 0x11, 0x0E},
      {0x06, 0x08, 0x10, 0x1E, 0x11, 0x11, 0x0E}, {0x1F, 0x01, 0x02, 0x04, 0x04, 0x04, 0x04},
      {0x0E, 0x11, 0x11, 0x0E, 0x11, 0x11, 0x0E}, {0x0E, 0x11, 0x11, 0x0F, 0x01, 0x02, 0x0C}};
  static const std::uint8_t letters[26][7] = {
      {0x0E, 0x11, 0x11, 0x1F, 0x11, 0x11, 0x11}, {0x1E, 0x11, 0x11, 0x1E, 0x11, 0x11, 0x1E},
      {0x0E, 0x11, 0x10, 0x10, 0x10, 0x11, 0x0E}, {0x1C, 0x12, 0x11, 0x11, 0x11, 0x12, 0x1C},
      {0x1F, 0x10, 0x10, 0x1E, 0x10, 0x10, 0x1F}, {0x1F, 0x10, 0x10, 0x1E, 0x10, 0x10, 0x10},
      {0x0E, 0x11, 0x10, 0x17, 0x11, 0x11, 0x0F}, {0x11, 0x11, 0x11, 0x1F, 0x11, 0x11, 0x11},
      {0x0E, 0x04, 0x04, 0x04, 0x04, 0x04, 0x0E}, {0x07, 0x02, 0x02, 0x02, 0x02, 0x12, 0x0C},
      {0x11, 0x12, 0x14, 0x18, 0x14, 0x12, 0x11}, {0x10, 0x10, 0x10, 0x10, 0x10, 0x10, 0x1F},
      {0x11, 0x1B, 0x15, 0x15, 0x11, 0x11, 0x11}, {0x11, 0x11, 0x19, 0x15, 0x13, 0x11, 0x11},
      {0x0E, 0x11, 0x11, 0x11, 0x11, 0x11, 0x0E}, {0x1E, 0x11, 0x11, 0x1E, 0x10, 0x10, 0x10},
      {0x0E, 0x11, 0x11, 0x11, 0x15, 0x12, 0x0D}, {0x1E, 0x11, 0x11, 0x1E, 0x14, 0x12, 0x11},
      {0x0F, 0x10, 0x10, 0x0E, 0x01, 0x01, 0x1E}, {0x1F, 0x04, 0x04, 0x04, 0x04, 0x04, 0x04},
      {0x11, 0x11, 0x11, 0x11, 0x11, 0x11, 0x0E}, {0x11, 0x11, 0x11, 0x11, 0x11, 0x0A, 0x04},
      {0x11, 0x11, 0x11, 0x15, 0x15, 0x15, 0x0A}, {0x11, 0x11, 0x0A, 0x04, 0x0A, 0x11, 0x11},
      {0x11, 0x11, 0x11, 0x0A, 0x04, 0x04, 0x04}, {0x1F, 0x01, 0x02, 0x04, 0x08, 0x10, 0x1F}};
  static const std::uint8_t dot[7] = {0, 0, 0, 0, 0, 0x0C, 0x0C};
  static const std::uint8_t dash[7] = {0, 0, 0, 0x1F, 0, 0, 0};
  static const std::uint8_t percent[7] = {0x18, 0x19, 0x02, 0x04, 0x08, 0x13, 0x03};
  static const std::uint8_t slash[7] = {0x01, 0x01, 0x02, 0x04, 0x08, 0x10, 0x10};
  static const std::uint8_t colon[7] = {0, 0x0C, 0x0C, 0, 0x0C, 0x0C, 0};
  static const std::uint8_t underscore[7] = {0, 0, 0, 0, 0, 0, 0x1F};
  static const std::uint8_t space[7] = {0, 0, 0, 0, 0, 0, 0};
  if (c >= '0' && c <= '9') return digits[c - '0'];
  if (c >= 'A' && c <= 'Z') return letters[c - 'A'];
  if (c >= 'a' && c <= 'z') return letters[c - 'a'];
  switch (c) {
    case '.': return dot;
    case '-': return dash;
    case '%': return percent;
    case '/': return slash;
    case ':': return colon;
    case '_': return underscore;
    default: return space;
  }
}

}  // namespace detail

struct Canvas {
  ImageRgb img;

  Canvas(int w, int h, Rgb bg = {255, 255, 255}) : img(w, h, bg) {}

  void set(int x, int y, Rgb c) {
    if (img.in_bounds(x, y)) img.at(x, y) = c;
  }

  void fill_rect(int x0, int y0, int w, int h, Rgb c) {
    for (int y = y0; y < y0 + h; ++y)
      for (int x = x0; x < x0 + w; ++x) set(x, y, c);
  }

  void draw_line(int x0, int y0, int x1, int y1, Rgb c) {
    int dx = std::abs(x1 - x0), dy = -std::abs(y1 - y0);
    int sx = x0 < x1 ? 1 : -1, sy = y0 < y1 ? 1 : -1;
    int err = dx + dy;
    for (;;) {
      set(x0, y0, c);
      if (x0 == x1 && y0 == y1) break;
      int e2 = 2 * err;
      if (e2 >= dy) { err += dy; x0 += sx; }
      if (e2 <= dx) { err += dx; y0 += sy; }
    }
  }

  void draw_text(int x, int y, const std::string& text, Rgb c, int scale = 1) {
    int cx = x;
    for (char ch : text) {
      const std::uint8_t* rows = detail::glyph5x7(ch);
      for (int ry = 0; ry < 7; ++ry)
        for (int rx = 0; rx < 5; ++rx)
          if (rows[ry] & (1 << (4 - rx)))
            fill_rect(cx + rx * scale, y + ry * scale, scale, scale, c);
      cx += 6 * scale;
    }
  }

  static int text_width(const std::string& text, int scale = 1) {
    return static_cast<int>(text.size()) * 6 * scale - (text.empty() ? 0 : scale);
  }
};

}  // namespace fixsearch::image

#endif  // FIXSEARCH_IMAGE_HPP
