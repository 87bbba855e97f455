#ifndef FIXSEARCH_METRICS_HPP
#define FIXSEARCH_METRICS_HPP

#include <algorithm>
#include <array>
#include <cmath>
#include <optional>
#include <string>
#include <vector>

#include "fixsearch/common.hpp"
#include "fixsearch/fdm.hpp"

namespace fixsearch::metrics {

using fdm::BinaryFixationMap;
using fdm::DensityMap;

// ---------------------------------------------------------------------------
// Shared helpers
// ---------------------------------------------------------------------------

namespace detail {

inline void require_same_dims(int wa, int ha, int wb, int hb, const char* op) {
  if (wa != wb || ha != hb)
    throw InvalidInputError(std::string(op) + ": dims mismatch " + std::to_string(wa) + "x" +
                            std::to_string(ha) + " vs " + std::to_string(wb) + "x" +
                            std::to_string(hb));
}

/// Population mean/sd standardization; throws on a constant input.
inline std::vector<double> standardize(const std::vector<double>& v, const char* op) {
  double mean = 0.0;
  for (double x : v) mean += x;
  mean /= static_cast<double>(v.size());
  double var = 0.0;
  for (double x : v) var += (x - mean) * (x - mean);
  var /= static_cast<double>(v.size());
  const double sd = std::sqrt(var);
  if (!(sd > 0.0)) throw DegenerateInputError(std::string(op) + ": constant map (sd = 0)");
  std::vector<double> out(v.size());
  for (std::size_t i = 0; i < v.size(); ++i) out[i] = (v[i] - mean) / sd;
  return out;
}

/// Min-max to [0,1]; returns false (leaving out unmodified) on a constant map.
inline bool minmax_normalize(std::vector<double>& v) {
  double lo = v[0], hi = v[0];
  for (double x : v) {
    lo = std::min(lo, x);
    hi = std::max(hi, x);
  }
  if (!(hi > lo)) return false;
  const double range = hi - lo;
  for (double& x : v) x = (x - lo) / range;
  return true;
}

inline void sum_normalize(std::vector<double>& v, const char* op) {
  double total = 0.0;
  for (double x : v) total += x;
  if (!(total > 0.0)) throw DegenerateInputError(std::string(op) + ": zero total mass");
  for (double& x : v) x /= total;
}

/// Trapezoidal ROC area from per-threshold counts of values strictly above
/// each threshold. Exact integer arithmetic with one final division, so two
/// computations agreeing on counts agree bitwise. Points must be ordered with
/// nondecreasing counts (thresholds descending); the (0,0) and (n_neg, n_fix)
/// anchors are appended here.
struct RocPoint {
  std::int64_t neg_above = 0;  // false positives at this threshold
  std::int64_t fix_above = 0;  // true positives at this threshold
};

inline double auc_from_counts(std::vector<RocPoint> pts, std::int64_t n_fix, std::int64_t n_neg) {
  if (n_fix <= 0) throw InvalidInputError("auc: zero fixations");
  if (n_neg <= 0) throw InvalidInputError("auc: zero negatives");
  pts.insert(pts.begin(), RocPoint{0, 0});
  pts.push_back(RocPoint{n_neg, n_fix});
  std::int64_t twice_area = 0;  // in units of 1/(n_neg*n_fix)
  for (std::size_t i = 1; i < pts.size(); ++i) {
    const std::int64_t dk = pts[i].neg_above - pts[i - 1].neg_above;
    twice_area += dk * (pts[i].fix_above + pts[i - 1].fix_above);
  }
  return static_cast<double>(twice_area) / (2.0 * static_cast<double>(n_fix) * static_cast<double>(n_neg));
}

inline std::vector<std::size_t> fixated_indices(const BinaryFixationMap& gt) {
  std::vector<std::size_t> idx;
  idx.reserve(static_cast<std::size_t>(gt.fixation_count));
  for (std::size_t i = 0; i < gt.bits.size(); ++i)
    if (gt.bits[i]) idx.push_back(i);
  return idx;
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Distribution-based metrics
// ---------------------------------------------------------------------------

/// KL divergence per the training-loss formula: both maps are renormalized to
/// sum 1, then sum_i Q_i * ln(eps + Q_i / (eps + P_i)) with Q the ground truth.
inline double kld(const DensityMap& pred, const DensityMap& gt, double epsilon = 1e-7) {
  detail::require_same_dims(pred.width, pred.height, gt.width, gt.height, "kld");
  std::vector<double> p = pred.values;
  std::vector<double> q = gt.values;
  detail::sum_normalize(p, "kld(pred)");
  detail::sum_normalize(q, "kld(gt)");
  double out = 0.0;
  for (std::size_t i = 0; i < p.size(); ++i)
    out += q[i] * std::log(epsilon + q[i] / (epsilon + p[i]));
  return out;
}

enum class CcFormula {
  Pearson,   // sum(PQ) / sqrt(sum(P^2) * sum(Q^2)) on standardized maps
  PaperEq2,  // sum(PQ) / sqrt(sum(P^2 + Q^2)) on standardized maps, verbatim
};

/// Correlation coefficient between standardized maps. The published equation's
/// denominator sqrt(sum(P^2 + Q^2)) does not reduce to Pearson correlation (it
/// is not even 1 for identical maps), so both readings are provided; Pearson
/// is the default.
inline double cc(const DensityMap& pred, const DensityMap& gt, CcFormula formula = CcFormula::Pearson) {
  detail::require_same_dims(pred.width, pred.height, gt.width, gt.height, "cc");
  const std::vector<double> p = detail::standardize(pred.values, "cc(pred)");
  const std::vector<double> q = detail::standardize(gt.values, "cc(gt)");
  double pq = 0.0, pp = 0.0, qq = 0.0;
  for (std::size_t i = 0; i < p.size(); ++i) {
    pq += p[i] * q[i];
    pp += p[i] * p[i];
    qq += q[i] * q[i];
  }
  if (formula == CcFormula::Pearson) return pq / std::sqrt(pp * qq);
  return pq / std::sqrt(pp + qq);
}

/// Histogram intersection: min-max normalize each map, divide by its sum, and
/// sum the element-wise minima.
inline double sim(const DensityMap& pred, const DensityMap& gt) {
  detail::require_same_dims(pred.width, pred.height, gt.width, gt.height, "sim");
  std::vector<double> p = pred.values;
  std::vector<double> q = gt.values;
  if (!detail::minmax_normalize(p)) throw DegenerateInputError("sim: constant prediction map");
  if (!detail::minmax_normalize(q)) throw DegenerateInputError("sim: constant ground-truth map");
  detail::sum_normalize(p, "sim(pred)");
  detail::sum_normalize(q, "sim(gt)");
  double out = 0.0;
  for (std::size_t i = 0; i < p.size(); ++i) out += std::min(p[i], q[i]);
  return out;
}

// ---------------------------------------------------------------------------
// Location-based metrics
// ---------------------------------------------------------------------------

/// Mean of the standardized (zero-mean, unit-sd) prediction at fixated pixels.
inline double nss(const DensityMap& pred, const BinaryFixationMap& gt) {
  detail::require_same_dims(pred.width, pred.height, gt.width, gt.height, "nss");
  if (gt.fixation_count < 1) throw InvalidInputError("nss: ground truth has no fixations");
  const std::vector<double> z = detail::standardize(pred.values, "nss");
  double total = 0.0;
  for (std::size_t i = 0; i < z.size(); ++i)
    if (gt.bits[i]) total += z[i];
  return total / static_cast<double>(gt.fixation_count);
}

enum class IgLogBase { Bits, Nats };

/// Information gain of the prediction over the baseline at fixated pixels.
/// Both maps are min-max normalized then sum-normalized; the gain is the mean
/// of log2(P + eps) - log2(B + eps) (base configurable, bits by default).
inline double ig(const DensityMap& pred, const DensityMap& baseline, const BinaryFixationMap& gt,
                 double epsilon = 1e-7, IgLogBase base = IgLogBase::Bits) {
  detail::require_same_dims(pred.width, pred.height, gt.width, gt.height, "ig");
  detail::require_same_dims(baseline.width, baseline.height, gt.width, gt.height, "ig(baseline)");
  if (gt.fixation_count < 1) throw InvalidInputError("ig: ground truth has no fixations");
  std::vector<double> p = pred.values;
  std::vector<double> b = baseline.values;
  if (!detail::minmax_normalize(p)) throw DegenerateInputError("ig: constant prediction map");
  if (!detail::minmax_normalize(b)) throw DegenerateInputError("ig: constant baseline map");
  detail::sum_normalize(p, "ig(pred)");
  detail::sum_normalize(b, "ig(baseline)");
  double total = 0.0;
  for (std::size_t i = 0; i < p.size(); ++i)
    if (gt.bits[i]) total += std::log2(p[i] + epsilon) - std::log2(b[i] + epsilon);
  double out = total / static_cast<double>(gt.fixation_count);
  if (base == IgLogBase::Nats) out *= 0.6931471805599453094172321214582;  // ln 2
  return out;
}

/// AUC-Judd: thresholds at the distinct prediction values of fixated pixels;
/// TP rate counts fixated pixels strictly above threshold, FP rate counts
/// non-fixated pixels strictly above threshold. A constant prediction scores
/// the chance level 0.5 by convention.
inline double auc_judd(const DensityMap& pred, const BinaryFixationMap& gt) {
  detail::require_same_dims(pred.width, pred.height, gt.width, gt.height, "auc_judd");
  if (gt.fixation_count < 1) throw InvalidInputError("auc_judd: ground truth has no fixations");
  std::vector<double> p = pred.values;
  if (!detail::minmax_normalize(p)) return 0.5;

  const auto fix_idx = detail::fixated_indices(gt);
  std::vector<double> thresholds;
  thresholds.reserve(fix_idx.size());
  for (std::size_t i : fix_idx) thresholds.push_back(p[i]);
  std::sort(thresholds.begin(), thresholds.end(), std::greater<>());
  thresholds.erase(std::unique(thresholds.begin(), thresholds.end()), thresholds.end());

  const std::int64_t n_fix = gt.fixation_count;
  const std::int64_t n_neg = static_cast<std::int64_t>(p.size()) - n_fix;
  std::vector<detail::RocPoint> pts;
  pts.reserve(thresholds.size() * 2);
  for (double t : thresholds) {
    // Both the strictly-above point and the at-or-above point: the latter is
    // where the exhaustive-threshold curve lands just below t, and without it
    // the polyline would cut the corner of every TP jump.
    detail::RocPoint above, at_or_above;
    for (std::size_t i = 0; i < p.size(); ++i) {
      if (p[i] >= t) {
        const bool strict = p[i] > t;
        if (gt.bits[i]) {
          at_or_above.fix_above += 1;
          above.fix_above += strict ? 1 : 0;
        } else {
          at_or_above.neg_above += 1;
          above.neg_above += strict ? 1 : 0;
        }
      }
    }
    pts.push_back(above);
    pts.push_back(at_or_above);
  }
  return detail::auc_from_counts(std::move(pts), n_fix, n_neg);
}

namespace detail {

/// Shared core of AUC-Borji and sAUC: negatives per split come from the
/// sampler. step > 0 sweeps thresholds 0, step, 2*step, ... up to the map
/// maximum (the published recipe); step == 0 uses the distinct values of the
/// split's positive and negative samples, which makes the score exactly
/// invariant under monotone transforms of the prediction.
template <class NegativeSampler>
double auc_sampled(const DensityMap& pred, const BinaryFixationMap& gt, int n_splits, double step,
                   std::uint64_t seed, NegativeSampler&& sample_negative) {
  require_same_dims(pred.width, pred.height, gt.width, gt.height, "auc_sampled");
  if (gt.fixation_count < 1) throw InvalidInputError("auc: ground truth has no fixations");
  if (n_splits < 1) throw InvalidInputError("auc: n_splits must be >= 1");
  if (step < 0.0) throw InvalidInputError("auc: step must be >= 0");
  std::vector<double> p = pred.values;
  if (!minmax_normalize(p)) return 0.5;

  std::vector<double> fix_vals;
  fix_vals.reserve(static_cast<std::size_t>(gt.fixation_count));
  for (std::size_t i = 0; i < p.size(); ++i)
    if (gt.bits[i]) fix_vals.push_back(p[i]);
  const std::int64_t n_fix = static_cast<std::int64_t>(fix_vals.size());

  Rng rng(seed);
  double auc_sum = 0.0;
  std::vector<double> neg_vals(static_cast<std::size_t>(n_fix));
  for (int s = 0; s < n_splits; ++s) {
    for (auto& v : neg_vals) v = p[sample_negative(rng)];

    std::vector<double> thresholds;
    if (step > 0.0) {
      // The map maximum is 1 after min-max normalization.
      for (int k = 0; k * step <= 1.0 + 1e-12; ++k) thresholds.push_back(k * step);
      std::sort(thresholds.begin(), thresholds.end(), std::greater<>());
    } else {
      thresholds = fix_vals;
      thresholds.insert(thresholds.end(), neg_vals.begin(), neg_vals.end());
      std::sort(thresholds.begin(), thresholds.end(), std::greater<>());
      thresholds.erase(std::unique(thresholds.begin(), thresholds.end()), thresholds.end());
    }

    std::vector<RocPoint> pts;
    pts.reserve(thresholds.size() * 2);
    for (double t : thresholds) {
      RocPoint above, at_or_above;
      for (double v : fix_vals) {
        if (v >= t) {
          at_or_above.fix_above += 1;
          above.fix_above += v > t ? 1 : 0;
        }
      }
      for (double v : neg_vals) {
        if (v >= t) {
          at_or_above.neg_above += 1;
          above.neg_above += v > t ? 1 : 0;
        }
      }
      if (step > 0.0) {
        // The published sweep records one point per fixed-step threshold.
        pts.push_back(above);
      } else {
        pts.push_back(above);
        pts.push_back(at_or_above);
      }
    }
    auc_sum += auc_from_counts(std::move(pts), n_fix, n_fix);
  }
  return auc_sum / static_cast<double>(n_splits);
}

}  // namespace detail

/// AUC-Borji: per split, as many negatives as fixations are sampled uniformly
/// with replacement from all image pixels; the mean split AUC is returned.
inline double auc_borji(const DensityMap& pred, const BinaryFixationMap& gt, int n_splits = 100,
                        double step = 0.05, std::uint64_t seed = 0) {
  const std::uint64_t n_pixels = static_cast<std::uint64_t>(pred.values.size());
  return detail::auc_sampled(pred, gt, n_splits, step, seed,
                             [n_pixels](Rng& rng) { return static_cast<std::size_t>(rng.below(n_pixels)); });
}

/// Shuffled AUC: negatives are sampled from the set bits of another image's
/// binary fixation map, discounting center bias.
inline double sauc(const DensityMap& pred, const BinaryFixationMap& gt,
                   const BinaryFixationMap& other, int n_splits = 100, double step = 0.05,
                   std::uint64_t seed = 0) {
  detail::require_same_dims(other.width, other.height, gt.width, gt.height, "sauc(other)");
  if (other.fixation_count < 1) throw InvalidInputError("sauc: 'other' map has no fixations");
  const auto other_idx = detail::fixated_indices(other);
  return detail::auc_sampled(pred, gt, n_splits, step, seed, [&other_idx](Rng& rng) {
    return other_idx[static_cast<std::size_t>(rng.below(other_idx.size()))];
  });
}

// ---------------------------------------------------------------------------
// Batch evaluation
// ---------------------------------------------------------------------------

struct EvalConfig {
  double epsilon = 1e-7;
  double auc_step = 0.05;
  int auc_splits = 100;
  std::uint64_t seed = 0;
  IgLogBase ig_base = IgLogBase::Bits;
  CcFormula cc_formula = CcFormula::Pearson;
};

inline constexpr std::array<const char*, 8> kMetricNames = {
    "auc_judd", "auc_borji", "sauc", "nss", "kld", "cc", "sim", "ig"};

/// One image's scores; a metric that failed holds nullopt and its error text.
struct SaliencyScores {
  std::array<std::optional<double>, 8> values;
  std::array<std::string, 8> errors;

  std::optional<double>& operator[](std::size_t i) { return values[i]; }
  const std::optional<double>& operator[](std::size_t i) const { return values[i]; }
};

/// Runs all eight metrics, recording per-metric failures instead of aborting.
inline SaliencyScores evaluate_all(const DensityMap& pred, const DensityMap& gt_density,
                                   const BinaryFixationMap& gt_binary, const DensityMap& baseline,
                                   const BinaryFixationMap& other, const EvalConfig& cfg = {}) {
  SaliencyScores s;
  auto run = [&s](std::size_t slot, auto&& fn) {
    try {
      s.values[slot] = fn();
    } catch (const Error& e) {
      s.errors[slot] = e.what();
      log_warn(std::string(kMetricNames[slot]) + " failed: " + e.what());
    }
  };
  run(0, [&] { return auc_judd(pred, gt_binary); });
  run(1, [&] { return auc_borji(pred, gt_binary, cfg.auc_splits, cfg.auc_step, mix_seed(cfg.seed, 1)); });
  run(2, [&] { return sauc(pred, gt_binary, other, cfg.auc_splits, cfg.auc_step, mix_seed(cfg.seed, 2)); });
  run(3, [&] { return nss(pred, gt_binary); });
  run(4, [&] { return kld(pred, gt_density, cfg.epsilon); });
  run(5, [&] { return cc(pred, gt_density, cfg.cc_formula); });
  run(6, [&] { return sim(pred, gt_density); });
  run(7, [&] { return ig(pred, baseline, gt_binary, cfg.epsilon, cfg.ig_base); });
  return s;
}

struct ScoreAggregate {
  std::array<std::optional<double>, 8> mean;
  std::array<std::optional<double>, 8> sd;  // population sd
  std::array<std::int64_t, 8> count{};      // images scored per metric
};

inline ScoreAggregate aggregate_scores(const std::vector<SaliencyScores>& all) {
  ScoreAggregate agg;
  for (std::size_t m = 0; m < 8; ++m) {
    double sum = 0.0;
    std::int64_t n = 0;
    for (const auto& s : all)
      if (s.values[m]) {
        sum += *s.values[m];
        ++n;
      }
    agg.count[m] = n;
    if (n == 0) continue;
    const double mean = sum / static_cast<double>(n);
    double var = 0.0;
    for (const auto& s : all)
      if (s.values[m]) var += (*s.values[m] - mean) * (*s.values[m] - mean);
    agg.mean[m] = mean;
    agg.sd[m] = std::sqrt(var / static_cast<double>(n));
  }
  return agg;
}

}  // namespace fixsearch::metrics

#endif  // FIXSEARCH_METRICS_HPP
