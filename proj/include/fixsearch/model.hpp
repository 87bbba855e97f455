#ifndef FIXSEARCH_MODEL_HPP
#define FIXSEARCH_MODEL_HPP

#include <array>
#include <chrono>
#include <cmath>
#include <map>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "fixsearch/common.hpp"
#include "fixsearch/fdm.hpp"
#include "fixsearch/nn/ops.hpp"
#include "fixsearch/nn/optim.hpp"
#include "fixsearch/nn/serialize.hpp"
#include "fixsearch/nn/tensor.hpp"

namespace fixsearch::model {

using nn::Padding;
using nn::Tensor;

// ---------------------------------------------------------------------------
// Configuration
// ---------------------------------------------------------------------------

/// Desk-scale analog of the two-stream encoder/ASPP/decoder. Channel widths
/// keep the full-scale ratios: encoder blocks at {B,2B,4B,8B,8B} (VGG widths
/// are this ladder at B=64), ASPP branches at F (256 at full scale), decoder
/// at {F/2,F/4,F/8} (128/64/32 at F=256).
struct ModelConfig {
  int base_channels = 8;
  int feature_channels = 16;
  std::array<int, 3> aspp_rates = {4, 8, 12};
  int image_h = 64;
  int image_w = 128;
  int target_h = 16;
  int target_w = 16;
  int image_channels = 3;
  double lr = 1e-3;
  int epochs = 30;
  int batch = 1;
  std::uint64_t seed = 7;
  bool one_stream = false;        // ablation: no target stream / cross conv
  bool decoder_smoothing = true;  // ablation: drop the post-upsample convs

  void validate() const {
    if (image_h % 8 || image_w % 8 || target_h % 8 || target_w % 8)
      throw ConfigError("ModelConfig: image and target dims must be divisible by 8");
    if (base_channels < 1 || feature_channels < 2)
      throw ConfigError("ModelConfig: channel widths too small");
    if (batch != 1) throw ConfigError("ModelConfig: only batch size 1 is supported");
    for (int r : aspp_rates)
      if (r < 1) throw ConfigError("ModelConfig: ASPP dilation rates must be >= 1");
  }
};

// ---------------------------------------------------------------------------
// Parameter bundles
// ---------------------------------------------------------------------------

struct ConvParams {
  Tensor w;  // (Co,Ci,Kh,Kw)
  Tensor b;  // (Co)
};

struct AsppParams {
  ConvParams pointwise;                 // 1x1 on the concatenated features
  std::array<ConvParams, 3> dilated;    // 3x3 at the configured rates
  ConvParams global;                    // 1x1 on the spatial mean
  ConvParams fuse;                      // 1x1 after concatenation
  std::array<int, 3> rates;
};

/// Five branches at F channels each (1x1, three dilated 3x3, global mean ->
/// 1x1 -> broadcast), concatenated to 5F and fused back to F by a 1x1 conv
/// with ReLU. A straight-line composition of the nn primitives.
inline Tensor aspp_forward(const Tensor& features, const AsppParams& p) {
  const std::int64_t h = features.dim(2), w = features.dim(3);
  std::vector<Tensor> branches;
  branches.push_back(nn::relu(nn::conv2d(features, p.pointwise.w, p.pointwise.b, 1, 1, Padding::Same)));
  for (int i = 0; i < 3; ++i)
    branches.push_back(
        nn::relu(nn::conv2d(features, p.dilated[i].w, p.dilated[i].b, 1, p.rates[i], Padding::Same)));
  Tensor pooled = nn::mean_spatial(features);
  Tensor ctx = nn::relu(nn::conv2d(pooled, p.global.w, p.global.b, 1, 1, Padding::Same));
  branches.push_back(nn::broadcast_spatial(ctx, h, w));
  Tensor cat = nn::concat_channels(branches);
  return nn::relu(nn::conv2d(cat, p.fuse.w, p.fuse.b, 1, 1, Padding::Same));
}

/// Cross-stream convolution: the target feature tensor acts as a per-channel
/// filter sliding over the image feature tensor, same padding, no
/// nonlinearity. Output keeps F channels at the image feature resolution.
inline Tensor cross_convolve(const Tensor& image_feats, const Tensor& target_feats) {
  if (image_feats.dim(1) != target_feats.dim(1))
    throw ShapeError("cross_convolve: channel mismatch " + nn::shape_str(image_feats.shape()) +
                     " vs " + nn::shape_str(target_feats.shape()));
  if (target_feats.dim(2) > image_feats.dim(2) || target_feats.dim(3) > image_feats.dim(3))
    throw ShapeError("cross_convolve: target features exceed image feature extent");
  return nn::depthwise_xcorr2d(image_feats, target_feats);
}

/// Min-max then sum-to-one normalization, differentiable through the input.
/// A constant input falls back to the uniform map (kept constant so the loss
/// stays finite at pathological initializations).
inline Tensor minmax_sum_normalize(const Tensor& x) {
  Tensor lo = nn::reduce_min(x), hi = nn::reduce_max(x);
  if (!(hi.item() - lo.item() > 0.0))
    return Tensor::full(x.shape(), 1.0 / static_cast<double>(x.numel()));
  Tensor scaled = nn::div(nn::sub(x, lo), nn::sub(hi, lo));
  return nn::div(scaled, nn::sum(scaled));
}

/// KL-divergence training loss: sum_i Q_i * ln(eps + Q_i / (eps + P_i)) with
/// Q the ground truth; differentiable through the prediction.
inline Tensor kl_loss(const Tensor& pred, const Tensor& gt, double epsilon = 1e-7) {
  if (pred.shape() != gt.shape())
    throw ShapeError("kl_loss: shapes " + nn::shape_str(pred.shape()) + " vs " +
                     nn::shape_str(gt.shape()));
  Tensor ratio = nn::div(gt, nn::add_scalar(pred, epsilon));
  return nn::sum(nn::mul(gt, nn::log(nn::add_scalar(ratio, epsilon))));
}

// ---------------------------------------------------------------------------
// Model
// ---------------------------------------------------------------------------

class SearchSaliencyModel {
 public:
  // Convs per encoder block; block 5 keeps the three dilated convolutions.
  static constexpr std::array<int, 5> kBlockConvs = {1, 1, 2, 2, 3};

  explicit SearchSaliencyModel(const ModelConfig& cfg) : cfg_(cfg) {
    cfg_.validate();
    Rng rng(mix_seed(cfg_.seed, 0x1a17));
    const int B = cfg_.base_channels;
    const std::array<int, 5> widths = {B, 2 * B, 4 * B, 8 * B, 8 * B};
    int in_ch = cfg_.image_channels;
    for (int blk = 0; blk < 5; ++blk) {
      for (int i = 0; i < kBlockConvs[blk]; ++i) {
        encoder_.push_back(make_conv("enc.b" + std::to_string(blk + 1) + ".c" + std::to_string(i),
                                     widths[blk], in_ch, 3, rng));
        in_ch = widths[blk];
      }
    }
    concat_channels_ = widths[2] + widths[3] + widths[4];
    const int F = cfg_.feature_channels;
    aspp_.rates = cfg_.aspp_rates;
    aspp_.pointwise = make_conv("aspp.branch0", F, concat_channels_, 1, rng);
    for (int i = 0; i < 3; ++i)
      aspp_.dilated[i] = make_conv("aspp.branch" + std::to_string(i + 1), F, concat_channels_, 3, rng);
    aspp_.global = make_conv("aspp.global", F, concat_channels_, 1, rng);
    aspp_.fuse = make_conv("aspp.fuse", F, 5 * F, 1, rng);

    const std::array<int, 3> dec_widths = {std::max(1, F / 2), std::max(1, F / 4),
                                           std::max(1, F / 8)};
    int dec_in = F;
    for (int i = 0; i < 3; ++i) {
      decoder_[i] = make_conv("dec.c" + std::to_string(i), dec_widths[i], dec_in, 3, rng);
      dec_in = dec_widths[i];
    }
    decoder_out_ = make_conv("dec.out", 1, cfg_.decoder_smoothing ? dec_in : F, 3, rng);
  }

  const ModelConfig& config() const { return cfg_; }
  int aspp_input_channels() const { return concat_channels_; }

  /// Shared-weight encoder + ASPP: both streams run through these parameters,
  /// so identical inputs produce bit-identical features.
  Tensor encode(const Tensor& input) const {
    Tensor x = input;
    std::size_t conv_idx = 0;
    std::vector<Tensor> taps;  // outputs of pools 3..5
    for (int blk = 0; blk < 5; ++blk) {
      const std::int64_t dilation = blk == 4 ? 2 : 1;
      for (int i = 0; i < kBlockConvs[blk]; ++i) {
        const auto& c = encoder_[conv_idx++];
        x = nn::relu(nn::conv2d(x, c.w, c.b, 1, dilation, Padding::Same));
      }
      const std::int64_t pool_stride = blk >= 3 ? 1 : 2;  // strides removed on the last two pools
      x = nn::max_pool2d(x, 2, pool_stride, Padding::Same);
      if (blk >= 2) taps.push_back(x);
    }
    Tensor cat = nn::concat_channels(taps);
    return aspp_forward(cat, aspp_);
  }

  /// Decoder: three bilinear x2 upsamples each followed by a 3x3 conv + ReLU,
  /// then a final 3x3 conv to one channel (no ReLU) and the probabilistic
  /// normalization. With smoothing disabled the staged decoder is replaced by
  /// a single one-shot x8 upsample of the coarse map — the decoder-removal
  /// ablation that shows checkerboard artifacts.
  Tensor decode(const Tensor& features) const {
    if (!cfg_.decoder_smoothing) {
      Tensor coarse = nn::conv2d(features, decoder_out_.w, decoder_out_.b, 1, 1, Padding::Same);
      return minmax_sum_normalize(nn::bilinear_upsample2d(coarse, 8));
    }
    Tensor x = features;
    for (int i = 0; i < 3; ++i) {
      x = nn::bilinear_upsample2d(x);
      x = nn::relu(nn::conv2d(x, decoder_[i].w, decoder_[i].b, 1, 1, Padding::Same));
    }
    x = nn::conv2d(x, decoder_out_.w, decoder_out_.b, 1, 1, Padding::Same);
    return minmax_sum_normalize(x);
  }

  Tensor forward(const Tensor& image, const Tensor& target_patch) const {
    Tensor img_feats = encode(image);
    if (cfg_.one_stream) return decode(img_feats);
    Tensor tgt_feats = encode(target_patch);
    return decode(cross_convolve(img_feats, tgt_feats));
  }

  fdm::DensityMap predict(const Tensor& image, const Tensor& target_patch) const {
    nn::NoGradGuard guard;
    Tensor out = forward(image, target_patch);
    fdm::DensityMap map(static_cast<int>(out.dim(3)), static_cast<int>(out.dim(2)));
    map.values = out.values();
    return map;
  }

  std::vector<std::pair<std::string, Tensor>> named_params() const {
    std::vector<std::pair<std::string, Tensor>> out;
    for (const auto& [name, t] : params_) out.emplace_back(name, t);
    return out;
  }

  std::vector<Tensor> params() const {
    std::vector<Tensor> out;
    for (const auto& [name, t] : params_) out.push_back(t);
    return out;
  }

  void zero_grad() {
    for (auto& [name, t] : params_) t.zero_grad();
  }

  std::vector<std::uint8_t> save() const { return nn::serialize_params(named_params()); }

  void load(const std::vector<std::uint8_t>& bytes) {
    auto loaded = nn::deserialize_params(bytes);
    std::map<std::string, Tensor> by_name(loaded.begin(), loaded.end());
    for (auto& [name, t] : params_) {
      auto it = by_name.find(name);
      if (it == by_name.end()) throw FormatError("checkpoint missing parameter '" + name + "'");
      if (it->second.shape() != t.shape())
        throw ShapeError("checkpoint parameter '" + name + "' shape " +
                         nn::shape_str(it->second.shape()) + " vs model " + nn::shape_str(t.shape()));
      t.values() = it->second.values();
    }
  }

 private:
  ConvParams make_conv(const std::string& name, int co, int ci, int k, Rng& rng) {
    // Kaiming-uniform fan-in init for the conv weights, zero biases.
    const double bound = std::sqrt(6.0 / (static_cast<double>(ci) * k * k));
    std::vector<double> w(static_cast<std::size_t>(co) * ci * k * k);
    for (auto& v : w) v = rng.uniform(-bound, bound);
    ConvParams p;
    p.w = Tensor::from({co, ci, k, k}, std::move(w), true);
    p.b = Tensor::zeros({co}, true);
    params_.emplace_back(name + ".w", p.w);
    params_.emplace_back(name + ".b", p.b);
    return p;
  }

  ModelConfig cfg_;
  std::vector<ConvParams> encoder_;
  AsppParams aspp_;
  std::array<ConvParams, 3> decoder_;
  ConvParams decoder_out_;
  int concat_channels_ = 0;
  std::vector<std::pair<std::string, Tensor>> params_;
};

// ---------------------------------------------------------------------------
// Synthetic search data
//
// Desk-scale stand-in for the search dataset: each image carries one target
// glyph from a small shape alphabet plus distractors. One distractor always
// comes from the category visually paired with the target's, and the ground
// truth places lesser mass there — similar objects attract fixations.
// ---------------------------------------------------------------------------

inline constexpr int kSynthCategories = 6;

/// Visually paired category (disk~ring, square~diamond, plus~triangle).
inline int similar_category(int cat) {
  static constexpr std::array<int, 6> pair = {1, 0, 3, 2, 5, 4};
  return pair[static_cast<std::size_t>(cat)];
}

struct SynthSample {
  Tensor image;                     // (1,3,H,W), values in [0,1]
  int category = 0;
  Tensor gt;                        // (1,1,H,W), sums to 1
  std::array<int, 4> target_bbox{}; // x0,y0,x1,y1 inclusive
  std::vector<std::pair<int, int>> gt_points;  // fixated pixels behind the gt mass
};

struct SyntheticDataset {
  int height = 0, width = 0;
  int target_h = 0, target_w = 0;
  std::vector<SynthSample> samples;
  std::vector<std::array<Tensor, 5>> target_pools;  // five exemplars per category
};

namespace detail {

struct GlyphSpec {
  int category;
  int cx, cy, radius;
  std::array<double, 3> color;
};

inline bool glyph_hit(int category, int dx, int dy, int r) {
  const std::int64_t d2 = static_cast<std::int64_t>(dx) * dx + static_cast<std::int64_t>(dy) * dy;
  switch (category) {
    case 0: return d2 <= static_cast<std::int64_t>(r) * r;                       // disk
    case 1: return d2 <= static_cast<std::int64_t>(r) * r && d2 >= (r * r) / 3;  // ring
    case 2: return std::abs(dx) <= (3 * r) / 4 && std::abs(dy) <= (3 * r) / 4;   // square
    case 3: return std::abs(dx) + std::abs(dy) <= r;                             // diamond
    case 4: return (std::abs(dx) <= r / 3 && std::abs(dy) <= r) ||
                   (std::abs(dy) <= r / 3 && std::abs(dx) <= r);                 // plus
    case 5: return dy >= -r && dy <= r && 2 * std::abs(dx) <= (dy + r);          // triangle
    default: return false;
  }
}

// Colors are maximally separated; the similar-category pairing is by shape
// family (disk~ring, square~diamond, plus~triangle).
inline std::array<double, 3> category_color(int category) {
  static constexpr std::array<std::array<double, 3>, 6> base = {{
      {0.92, 0.15, 0.15},  // disk: red
      {0.15, 0.25, 0.92},  // ring: blue
      {0.15, 0.85, 0.25},  // square: green
      {0.92, 0.88, 0.12},  // diamond: yellow
      {0.88, 0.15, 0.85},  // plus: magenta
      {0.10, 0.85, 0.88},  // triangle: cyan
  }};
  return base[static_cast<std::size_t>(category)];
}

inline void paint_glyph(std::vector<double>& rgb, int h, int w, const GlyphSpec& g) {
  const std::size_t plane = static_cast<std::size_t>(h) * w;
  for (int y = std::max(0, g.cy - g.radius); y <= std::min(h - 1, g.cy + g.radius); ++y)
    for (int x = std::max(0, g.cx - g.radius); x <= std::min(w - 1, g.cx + g.radius); ++x)
      if (glyph_hit(g.category, x - g.cx, y - g.cy, g.radius))
        for (int ch = 0; ch < 3; ++ch)
          rgb[plane * ch + static_cast<std::size_t>(y) * w + x] = g.color[ch];
}

inline Tensor render_target_patch(int category, int th, int tw, Rng& rng) {
  std::vector<double> rgb(static_cast<std::size_t>(3) * th * tw);
  for (auto& v : rgb) v = rng.uniform(0.0, 0.02);
  auto color = category_color(category);
  for (auto& c : color) c = std::clamp(c + rng.uniform(-0.03, 0.03), 0.0, 1.0);
  const int max_r = std::max(2, std::min(th, tw) / 2 - 2);
  GlyphSpec g{category,
              tw / 2 + static_cast<int>(rng.uniform_int(-1, 1)),
              th / 2 + static_cast<int>(rng.uniform_int(-1, 1)),
              static_cast<int>(rng.uniform_int(std::max(2, max_r - 2), max_r)), color};
  paint_glyph(rgb, th, tw, g);
  return Tensor::from({1, 3, th, tw}, std::move(rgb));
}

}  // namespace detail

/// pool_seed controls the five target exemplars per category; splits of one
/// experiment share it (the dataset has one fixed exemplar set, as the five
/// sample target images per category are fixed), while the image seed varies.
inline SyntheticDataset generate_synthetic(std::uint64_t seed, int n, int height, int width,
                                           int target_h = 16, int target_w = 16,
                                           std::optional<std::uint64_t> pool_seed = {}) {
  if (height % 8 || width % 8) throw ConfigError("generate_synthetic: dims must be divisible by 8");
  SyntheticDataset ds;
  ds.height = height;
  ds.width = width;
  ds.target_h = target_h;
  ds.target_w = target_w;

  Rng pool_rng(mix_seed(pool_seed.value_or(seed), 0x9001));
  ds.target_pools.resize(kSynthCategories);
  for (int c = 0; c < kSynthCategories; ++c)
    for (int e = 0; e < 5; ++e)
      ds.target_pools[c][e] = detail::render_target_patch(c, target_h, target_w, pool_rng);

  Rng rng(mix_seed(seed, 0x5a3c));
  const double sigma = 5.0;
  const int r_hi = std::clamp(std::min(height, width) / 5, 3, 9);
  const int r_lo = std::max(3, r_hi - 2);
  ds.samples.reserve(static_cast<std::size_t>(n));
  for (int s = 0; s < n; ++s) {
    SynthSample sample;
    sample.category = static_cast<int>(rng.below(kSynthCategories));

    std::vector<double> rgb(static_cast<std::size_t>(3) * height * width);
    for (auto& v : rgb) v = rng.uniform(0.0, 0.02);

    // Target, one similar-category distractor, then two unrelated distractors
    // when there is room for them.
    std::vector<detail::GlyphSpec> glyphs;
    auto place = [&](int category) {
      for (int attempt = 0; attempt < 200; ++attempt) {
        const int r = static_cast<int>(rng.uniform_int(r_lo, r_hi));
        const int cx = static_cast<int>(rng.uniform_int(r + 1, width - r - 2));
        const int cy = static_cast<int>(rng.uniform_int(r + 1, height - r - 2));
        bool clear = true;
        for (const auto& g : glyphs)
          if (std::abs(g.cx - cx) <= g.radius + r + 2 && std::abs(g.cy - cy) <= g.radius + r + 2)
            clear = false;
        if (!clear) continue;
        glyphs.push_back({category, cx, cy, r, detail::category_color(category)});
        return true;
      }
      return false;
    };
    if (!place(sample.category) || !place(similar_category(sample.category)))
      throw ConfigError("generate_synthetic: image too small for target and similar distractor");
    {
      int cat;
      do {
        cat = static_cast<int>(rng.below(kSynthCategories));
      } while (cat == sample.category || cat == similar_category(sample.category));
      place(cat);
    }
    for (const auto& g : glyphs) detail::paint_glyph(rgb, height, width, g);
    sample.image = Tensor::from({1, 3, height, width}, std::move(rgb));

    const auto& target = glyphs[0];
    sample.target_bbox = {std::max(0, target.cx - target.radius), std::max(0, target.cy - target.radius),
                          std::min(width - 1, target.cx + target.radius),
                          std::min(height - 1, target.cy + target.radius)};

    // Ground truth: full mass on the target, lesser mass on the similar
    // distractor.
    std::vector<double> gt(static_cast<std::size_t>(height) * width, 0.0);
    auto splat = [&](int cx, int cy, double weight) {
      const double inv = 1.0 / (2.0 * sigma * sigma);
      for (int y = 0; y < height; ++y)
        for (int x = 0; x < width; ++x) {
          const double dx = x - cx, dy = y - cy;
          gt[static_cast<std::size_t>(y) * width + x] += weight * std::exp(-(dx * dx + dy * dy) * inv);
        }
    };
    splat(target.cx, target.cy, 1.0);
    splat(glyphs[1].cx, glyphs[1].cy, 0.15);
    sample.gt_points = {{target.cx, target.cy}, {glyphs[1].cx, glyphs[1].cy}};
    double total = 0.0;
    for (double v : gt) total += v;
    for (double& v : gt) v /= total;
    sample.gt = Tensor::from({1, 1, height, width}, std::move(gt));

    ds.samples.push_back(std::move(sample));
  }
  return ds;
}

// ---------------------------------------------------------------------------
// Training
// ---------------------------------------------------------------------------

/// Mirrors a (N,C,H,W) tensor along the x axis (augmentation helper).
inline Tensor hflip_tensor(const Tensor& t) {
  const auto& s = t.shape();
  Tensor out = Tensor::zeros(s);
  const std::int64_t planes = s[0] * s[1], h = s[2], w = s[3];
  for (std::int64_t p = 0; p < planes; ++p)
    for (std::int64_t y = 0; y < h; ++y)
      for (std::int64_t x = 0; x < w; ++x)
        out.values()[static_cast<std::size_t>((p * h + y) * w + w - 1 - x)] =
            t.values()[static_cast<std::size_t>((p * h + y) * w + x)];
  return out;
}

struct TrainOptions {
  int epochs = 30;
  double lr = 1e-3;
  std::uint64_t seed = 7;
  double kl_epsilon = 1e-7;
  // -1 draws a fresh exemplar per (epoch, sample), mirroring the per-epoch
  // random choice among the five samples; >= 0 pins one exemplar.
  int fixed_exemplar = -1;
  // Horizontal-flip augmentation of search image and ground truth, the same
  // augmentation the fixation pipeline applies to real data.
  bool hflip_augment = true;
};

struct TrainReport {
  std::vector<double> train_loss;  // mean KL per epoch
  std::vector<double> valid_loss;
  int best_epoch = -1;             // epoch with the lowest validation loss
  double wall_seconds = 0.0;
  std::vector<std::uint8_t> best_checkpoint;
};

/// One pass per epoch at batch 1. The target patch for each sample is drawn
/// seeded from the category's five-exemplar pool each epoch; validation uses
/// exemplar 0. The best-validation parameter snapshot is kept.
inline TrainReport train(SearchSaliencyModel& model, const SyntheticDataset& train_set,
                         const SyntheticDataset& valid_set, const TrainOptions& opt) {
  if (train_set.samples.empty()) throw ConfigError("train: empty training set");
  for (const auto& ds : {&train_set, &valid_set})
    for (const auto& s : ds->samples)
      if (s.image.dim(2) != model.config().image_h || s.image.dim(3) != model.config().image_w)
        throw ConfigError("train: sample dims do not match the model config");

  const auto t0 = std::chrono::steady_clock::now();
  nn::Adam adam(model.params(), {.lr = opt.lr});
  Rng rng(mix_seed(opt.seed, 0x7e8d));
  TrainReport report;
  double best_valid = std::numeric_limits<double>::infinity();

  std::vector<std::size_t> order(train_set.samples.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;

  for (int epoch = 0; epoch < opt.epochs; ++epoch) {
    rng.shuffle(order);
    double epoch_loss = 0.0;
    for (std::size_t idx : order) {
      const auto& s = train_set.samples[idx];
      const auto& pool = train_set.target_pools[static_cast<std::size_t>(s.category)];
      const std::size_t exemplar = opt.fixed_exemplar >= 0
                                       ? static_cast<std::size_t>(opt.fixed_exemplar)
                                       : static_cast<std::size_t>(rng.below(5));
      const Tensor& patch = pool[exemplar];
      const bool flip = opt.hflip_augment && rng.uniform() < 0.5;
      model.zero_grad();
      Tensor pred = model.forward(flip ? hflip_tensor(s.image) : s.image, patch);
      Tensor loss = kl_loss(pred, flip ? hflip_tensor(s.gt) : s.gt, opt.kl_epsilon);
      epoch_loss += loss.item();
      loss.backward();
      adam.step();
    }
    report.train_loss.push_back(epoch_loss / static_cast<double>(train_set.samples.size()));

    double valid_loss = 0.0;
    if (!valid_set.samples.empty()) {
      nn::NoGradGuard guard;
      for (const auto& s : valid_set.samples) {
        const Tensor& patch = valid_set.target_pools[static_cast<std::size_t>(s.category)][0];
        valid_loss += kl_loss(model.forward(s.image, patch), s.gt, opt.kl_epsilon).item();
      }
      valid_loss /= static_cast<double>(valid_set.samples.size());
    }
    report.valid_loss.push_back(valid_loss);
    if (valid_loss < best_valid || valid_set.samples.empty()) {
      best_valid = valid_loss;
      report.best_epoch = epoch;
      report.best_checkpoint = model.save();
    }
    log_info("epoch " + std::to_string(epoch + 1) + "/" + std::to_string(opt.epochs) +
             ": train KL " + format_double(report.train_loss.back()) + ", valid KL " +
             format_double(valid_loss));
  }
  report.wall_seconds =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  return report;
}

/// Fraction of samples whose predicted-FDM argmax falls inside the target
/// glyph bounding box (validation uses exemplar 0 of the category pool).
inline double argmax_hit_rate(const SearchSaliencyModel& model, const SyntheticDataset& ds) {
  if (ds.samples.empty()) throw InvalidInputError("argmax_hit_rate: empty dataset");
  nn::NoGradGuard guard;
  std::size_t hits = 0;
  for (const auto& s : ds.samples) {
    const Tensor& patch = ds.target_pools[static_cast<std::size_t>(s.category)][0];
    Tensor pred = model.forward(s.image, patch);
    const auto& v = pred.values();
    std::size_t arg = 0;
    for (std::size_t i = 1; i < v.size(); ++i)
      if (v[i] > v[arg]) arg = i;
    const int w = static_cast<int>(pred.dim(3));
    const int x = static_cast<int>(arg % static_cast<std::size_t>(w));
    const int y = static_cast<int>(arg / static_cast<std::size_t>(w));
    const auto& bb = s.target_bbox;
    if (x >= bb[0] && x <= bb[2] && y >= bb[1] && y <= bb[3]) ++hits;
  }
  return static_cast<double>(hits) / static_cast<double>(ds.samples.size());
}

}  // namespace fixsearch::model

#endif  // FIXSEARCH_MODEL_HPP
