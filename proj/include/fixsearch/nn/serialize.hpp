#ifndef FIXSEARCH_NN_SERIALIZE_HPP
#define FIXSEARCH_NN_SERIALIZE_HPP

#include <string>
#include <utility>
#include <vector>

#include "fixsearch/common.hpp"
#include "fixsearch/nn/tensor.hpp"

namespace fixsearch::nn {

/// Parameter checkpoint container "NNP1" (little-endian, bit-exact):
///   magic "NNP1" | u32 param count |
///   per param: u32 name length | name bytes | u32 ndim | u32 extents... |
///   then all payloads concatenated in manifest order as float64 LE.
inline std::vector<std::uint8_t> serialize_params(
    const std::vector<std::pair<std::string, Tensor>>& params) {
  std::vector<std::uint8_t> out;
  out.insert(out.end(), {'N', 'N', 'P', '1'});
  put_u32le(out, static_cast<std::uint32_t>(params.size()));
  for (const auto& [name, t] : params) {
    put_u32le(out, static_cast<std::uint32_t>(name.size()));
    out.insert(out.end(), name.begin(), name.end());
    put_u32le(out, static_cast<std::uint32_t>(t.shape().size()));
    for (auto d : t.shape()) put_u32le(out, static_cast<std::uint32_t>(d));
  }
  for (const auto& [name, t] : params)
    for (double v : t.values()) put_f64le(out, v);
  return out;
}

inline std::vector<std::pair<std::string, Tensor>> deserialize_params(
    const std::vector<std::uint8_t>& bytes) {
  std::size_t pos = 0;
  auto need = [&](std::size_t n, const char* what) {
    if (pos + n > bytes.size())
      throw FormatError(std::string("NNP1: truncated ") + what, static_cast<std::int64_t>(pos));
  };
  need(4, "magic");
  if (std::memcmp(bytes.data(), "NNP1", 4) != 0) throw FormatError("NNP1: bad magic", 0);
  pos = 4;
  need(4, "count");
  const std::uint32_t count = get_u32le(bytes.data() + pos);
  pos += 4;

  std::vector<std::pair<std::string, Shape>> manifest;
  manifest.reserve(count);
  for (std::uint32_t i = 0; i < count; ++i) {
    need(4, "name length");
    const std::uint32_t name_len = get_u32le(bytes.data() + pos);
    pos += 4;
    need(name_len, "name");
    std::string name(bytes.begin() + pos, bytes.begin() + pos + name_len);
    pos += name_len;
    need(4, "ndim");
    const std::uint32_t ndim = get_u32le(bytes.data() + pos);
    pos += 4;
    Shape shape(ndim);
    for (std::uint32_t d = 0; d < ndim; ++d) {
      need(4, "extent");
      shape[d] = static_cast<std::int64_t>(get_u32le(bytes.data() + pos));
      pos += 4;
    }
    manifest.emplace_back(std::move(name), std::move(shape));
  }

  std::vector<std::pair<std::string, Tensor>> out;
  out.reserve(count);
  for (auto& [name, shape] : manifest) {
    const std::int64_t n = shape_numel(shape);
    need(static_cast<std::size_t>(n) * 8, "payload");
    std::vector<double> values(static_cast<std::size_t>(n));
    for (std::int64_t k = 0; k < n; ++k) values[k] = get_f64le(bytes.data() + pos + k * 8);
    pos += static_cast<std::size_t>(n) * 8;
    out.emplace_back(std::move(name), Tensor::from(std::move(shape), std::move(values)));
  }
  if (pos != bytes.size())
    throw FormatError("NNP1: trailing bytes", static_cast<std::int64_t>(pos));
  return out;
}

}  // namespace fixsearch::nn

#endif  // FIXSEARCH_NN_SERIALIZE_HPP
