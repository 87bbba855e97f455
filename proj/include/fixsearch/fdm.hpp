#ifndef FIXSEARCH_FDM_HPP
#define FIXSEARCH_FDM_HPP

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include "fixsearch/common.hpp"
#include "fixsearch/image.hpp"
#include "fixsearch/ingest.hpp"

namespace fixsearch::fdm {

struct PixelFixation {
  int x = 0;
  int y = 0;
  bool operator==(const PixelFixation&) const = default;
};

/// Non-negative 2-D grid summing to 1; the fixation-density-map representation
/// shared by predictions and ground truth.
struct DensityMap {
  int width = 0;
  int height = 0;
  std::vector<double> values;  // row-major

  DensityMap() = default;
  DensityMap(int w, int h) : width(w), height(h), values(static_cast<std::size_t>(w) * h, 0.0) {}

  double& at(int x, int y) { return values[static_cast<std::size_t>(y) * width + x]; }
  double at(int x, int y) const { return values[static_cast<std::size_t>(y) * width + x]; }
  std::size_t size() const { return values.size(); }

  void validate(double tolerance = 1e-9) const {
    if (width <= 0 || height <= 0 || values.size() != static_cast<std::size_t>(width) * height)
      throw InvalidInputError("DensityMap: inconsistent dims");
    double sum = 0.0;
    for (double v : values) {
      if (!(v >= 0.0)) throw InvalidInputError("DensityMap: negative or NaN value");
      sum += v;
    }
    if (std::abs(sum - 1.0) > tolerance)
      throw InvalidInputError("DensityMap: sum " + format_double(sum) + " differs from 1");
  }
};

/// Boolean grid marking fixated pixels; input to the location-based metrics.
struct BinaryFixationMap {
  int width = 0;
  int height = 0;
  std::vector<std::uint8_t> bits;  // row-major 0/1
  std::int64_t fixation_count = 0;

  BinaryFixationMap() = default;
  BinaryFixationMap(int w, int h) : width(w), height(h), bits(static_cast<std::size_t>(w) * h, 0) {}

  bool at(int x, int y) const { return bits[static_cast<std::size_t>(y) * width + x] != 0; }
  std::size_t size() const { return bits.size(); }
};

/// Converts a trial's continuous coordinates to integer map pixels (nearest
/// pixel, clamped into the grid).
inline std::vector<PixelFixation> pixel_fixations(const ingest::FixationTrial& trial) {
  std::vector<PixelFixation> out;
  out.reserve(trial.fixations.size());
  for (const auto& f : trial.fixations) {
    int x = static_cast<int>(std::llround(f.x));
    int y = static_cast<int>(std::llround(f.y));
    out.push_back({std::clamp(x, 0, trial.image_dims.width - 1),
                   std::clamp(y, 0, trial.image_dims.height - 1)});
  }
  return out;
}

inline std::vector<PixelFixation> pixel_fixations(const std::vector<ingest::FixationTrial>& trials) {
  std::vector<PixelFixation> out;
  for (const auto& t : trials) {
    auto f = pixel_fixations(t);
    out.insert(out.end(), f.begin(), f.end());
  }
  return out;
}

namespace detail {

// Grid sum accumulated with horizontally mirrored pairs. IEEE addition is
// commutative, so this total is bit-identical for a map and its horizontal
// flip — the property the flip-commutation contract needs.
inline double symmetric_grid_sum(const std::vector<double>& v, int width, int height) {
  double total = 0.0;
  for (int y = 0; y < height; ++y) {
    const double* row = v.data() + static_cast<std::size_t>(y) * width;
    double acc = 0.0;
    for (int x = 0; x < width / 2; ++x) acc += row[x] + row[width - 1 - x];
    if (width % 2) acc += row[width / 2];
    total += acc;
  }
  return total;
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Map construction
// ---------------------------------------------------------------------------

/// Sums an isotropic Gaussian kernel at each fixation, truncated at radius
/// ceil(truncation_sigmas * sigma), then divides by the grid sum. No
/// per-kernel normalization: the single global division is the probability
/// normalization.
inline DensityMap build_density_map(const std::vector<PixelFixation>& fixations, int width,
                                    int height, double sigma, double truncation_sigmas = 3.0) {
  if (fixations.empty()) throw InvalidInputError("build_density_map: empty fixation list");
  if (sigma <= 0.0) throw InvalidInputError("build_density_map: sigma must be positive");
  if (width <= 0 || height <= 0) throw InvalidInputError("build_density_map: bad dims");
  for (const auto& f : fixations)
    if (f.x < 0 || f.x >= width || f.y < 0 || f.y >= height)
      throw InvalidInputError("build_density_map: fixation (" + std::to_string(f.x) + "," +
                              std::to_string(f.y) + ") outside " + std::to_string(width) + "x" +
                              std::to_string(height));

  DensityMap map(width, height);
  const int radius = static_cast<int>(std::ceil(truncation_sigmas * sigma));
  const double inv_two_sigma_sq = 1.0 / (2.0 * sigma * sigma);
  for (const auto& f : fixations) {
    const int y0 = std::max(0, f.y - radius);
    const int y1 = std::min(height - 1, f.y + radius);
    const int x0 = std::max(0, f.x - radius);
    const int x1 = std::min(width - 1, f.x + radius);
    for (int y = y0; y <= y1; ++y) {
      const double dy = y - f.y;
      double* row = map.values.data() + static_cast<std::size_t>(y) * width;
      for (int x = x0; x <= x1; ++x) {
        const double dx = x - f.x;
        row[x] += std::exp(-(dx * dx + dy * dy) * inv_two_sigma_sq);
      }
    }
  }
  const double total = detail::symmetric_grid_sum(map.values, width, height);
  if (!(total > 0.0)) throw InvalidInputError("build_density_map: zero total mass");
  for (double& v : map.values) v /= total;
  return map;
}

/// Marks each fixated pixel; duplicate fixations collapse to one bit.
inline BinaryFixationMap build_binary_map(const std::vector<PixelFixation>& fixations, int width,
                                          int height) {
  if (fixations.empty()) throw InvalidInputError("build_binary_map: empty fixation list");
  BinaryFixationMap map(width, height);
  for (const auto& f : fixations) {
    if (f.x < 0 || f.x >= width || f.y < 0 || f.y >= height)
      throw InvalidInputError("build_binary_map: fixation outside grid");
    map.bits[static_cast<std::size_t>(f.y) * width + f.x] = 1;
  }
  map.fixation_count = 0;
  for (auto b : map.bits) map.fixation_count += b;
  return map;
}

/// Cross-image baseline for information gain: the element-wise sum of every
/// map except the excluded one, renormalized to sum 1.
inline DensityMap build_baseline_map(const std::vector<DensityMap>& maps, std::size_t exclude) {
  if (maps.size() < 2) throw InvalidInputError("build_baseline_map: need at least 2 maps");
  if (exclude >= maps.size()) throw InvalidInputError("build_baseline_map: exclude index out of range");
  const int w = maps[0].width, h = maps[0].height;
  for (const auto& m : maps)
    if (m.width != w || m.height != h)
      throw InvalidInputError("build_baseline_map: dims mismatch (" + std::to_string(m.width) + "x" +
                              std::to_string(m.height) + " vs " + std::to_string(w) + "x" +
                              std::to_string(h) + ")");
  DensityMap out(w, h);
  for (std::size_t i = 0; i < maps.size(); ++i) {
    if (i == exclude) continue;
    for (std::size_t k = 0; k < out.values.size(); ++k) out.values[k] += maps[i].values[k];
  }
  const double total = detail::symmetric_grid_sum(out.values, w, h);
  if (!(total > 0.0)) throw InvalidInputError("build_baseline_map: zero total mass");
  for (double& v : out.values) v /= total;
  return out;
}

/// Horizontal flip of a density map (used by augmentation consistency checks).
inline DensityMap hflip(const DensityMap& map) {
  DensityMap out(map.width, map.height);
  for (int y = 0; y < map.height; ++y)
    for (int x = 0; x < map.width; ++x) out.at(x, y) = map.at(map.width - 1 - x, y);
  return out;
}

// ---------------------------------------------------------------------------
// FDM1 container
//
// Bit-exact layout, little-endian:
//   bytes 0..3   magic "FDM1"
//   byte  4      kind: 0 = density (float64 payload), 1 = binary (byte payload)
//   bytes 5..7   reserved (zero)
//   bytes 8..11  height (u32)
//   bytes 12..15 width  (u32)
//   bytes 16..   payload, row-major: height*width float64 | height*width bytes
// ---------------------------------------------------------------------------

inline constexpr std::size_t kFdm1HeaderSize = 16;

inline std::vector<std::uint8_t> serialize_map(const DensityMap& map) {
  std::vector<std::uint8_t> out;
  out.reserve(kFdm1HeaderSize + map.values.size() * 8);
  out.insert(out.end(), {'F', 'D', 'M', '1'});
  out.push_back(0);
  out.insert(out.end(), {0, 0, 0});
  put_u32le(out, static_cast<std::uint32_t>(map.height));
  put_u32le(out, static_cast<std::uint32_t>(map.width));
  for (double v : map.values) put_f64le(out, v);
  return out;
}

inline std::vector<std::uint8_t> serialize_map(const BinaryFixationMap& map) {
  std::vector<std::uint8_t> out;
  out.reserve(kFdm1HeaderSize + map.bits.size());
  out.insert(out.end(), {'F', 'D', 'M', '1'});
  out.push_back(1);
  out.insert(out.end(), {0, 0, 0});
  put_u32le(out, static_cast<std::uint32_t>(map.height));
  put_u32le(out, static_cast<std::uint32_t>(map.width));
  out.insert(out.end(), map.bits.begin(), map.bits.end());
  return out;
}

namespace detail {

inline void check_fdm1_header(const std::vector<std::uint8_t>& bytes) {
  if (bytes.size() < kFdm1HeaderSize)
    throw FormatError("FDM1: truncated header", static_cast<std::int64_t>(bytes.size()));
  static const char magic[4] = {'F', 'D', 'M', '1'};
  for (int i = 0; i < 4; ++i)
    if (bytes[i] != static_cast<std::uint8_t>(magic[i]))
      throw FormatError("FDM1: bad magic byte", i);
}

}  // namespace detail

inline int fdm1_kind(const std::vector<std::uint8_t>& bytes) {
  detail::check_fdm1_header(bytes);
  return bytes[4];
}

inline DensityMap deserialize_density(const std::vector<std::uint8_t>& bytes) {
  detail::check_fdm1_header(bytes);
  if (bytes[4] != 0) throw FormatError("FDM1: expected density kind 0, got " + std::to_string(bytes[4]), 4);
  const std::uint32_t h = get_u32le(bytes.data() + 8);
  const std::uint32_t w = get_u32le(bytes.data() + 12);
  const std::size_t expect = kFdm1HeaderSize + static_cast<std::size_t>(h) * w * 8;
  if (bytes.size() != expect)
    throw FormatError("FDM1: payload size " + std::to_string(bytes.size() - kFdm1HeaderSize) +
                          " does not match dims " + std::to_string(w) + "x" + std::to_string(h),
                      kFdm1HeaderSize);
  DensityMap map(static_cast<int>(w), static_cast<int>(h));
  for (std::size_t i = 0; i < map.values.size(); ++i)
    map.values[i] = get_f64le(bytes.data() + kFdm1HeaderSize + i * 8);
  return map;
}

inline BinaryFixationMap deserialize_binary(const std::vector<std::uint8_t>& bytes) {
  detail::check_fdm1_header(bytes);
  if (bytes[4] != 1) throw FormatError("FDM1: expected binary kind 1, got " + std::to_string(bytes[4]), 4);
  const std::uint32_t h = get_u32le(bytes.data() + 8);
  const std::uint32_t w = get_u32le(bytes.data() + 12);
  const std::size_t expect = kFdm1HeaderSize + static_cast<std::size_t>(h) * w;
  if (bytes.size() != expect)
    throw FormatError("FDM1: payload size " + std::to_string(bytes.size() - kFdm1HeaderSize) +
                          " does not match dims " + std::to_string(w) + "x" + std::to_string(h),
                      kFdm1HeaderSize);
  BinaryFixationMap map(static_cast<int>(w), static_cast<int>(h));
  map.fixation_count = 0;
  for (std::size_t i = 0; i < map.bits.size(); ++i) {
    std::uint8_t b = bytes[kFdm1HeaderSize + i];
    if (b > 1)
      throw FormatError("FDM1: binary payload byte " + std::to_string(b),
                        static_cast<std::int64_t>(kFdm1HeaderSize + i));
    map.bits[i] = b;
    map.fixation_count += b;
  }
  return map;
}

// ---------------------------------------------------------------------------
// Heatmap rendering
// ---------------------------------------------------------------------------

/// Min-max normalizes the map, applies the jet ramp, and alpha-blends at 0.5
/// over the underlay when one is given. A constant map renders as all-zeros
/// (the documented degenerate rule).
inline std::vector<std::uint8_t> render_heatmap(const DensityMap& map,
                                                const image::ImageRgb* underlay = nullptr) {
  if (underlay && (underlay->width != map.width || underlay->height != map.height))
    throw InvalidInputError("render_heatmap: underlay dims " + std::to_string(underlay->width) + "x" +
                            std::to_string(underlay->height) + " do not match map " +
                            std::to_string(map.width) + "x" + std::to_string(map.height));
  double lo = map.values[0], hi = map.values[0];
  for (double v : map.values) {
    lo = std::min(lo, v);
    hi = std::max(hi, v);
  }
  const double range = hi - lo;
  image::ImageRgb img(map.width, map.height);
  for (int y = 0; y < map.height; ++y)
    for (int x = 0; x < map.width; ++x) {
      const double t = range > 0.0 ? (map.at(x, y) - lo) / range : 0.0;
      image::Rgb heat = image::jet_color(t);
      if (underlay) {
        const image::Rgb& u = underlay->at(x, y);
        heat.r = static_cast<std::uint8_t>((heat.r + u.r) / 2);
        heat.g = static_cast<std::uint8_t>((heat.g + u.g) / 2);
        heat.b = static_cast<std::uint8_t>((heat.b + u.b) / 2);
      }
      img.at(x, y) = heat;
    }
  return image::encode_png(img);
}

}  // namespace fixsearch::fdm

#endif  // FIXSEARCH_FDM_HPP
