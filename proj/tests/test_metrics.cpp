#include <catch2/catch_amalgamated.hpp>

#include "fixsearch/metrics.hpp"
#include "oracles.hpp"

using namespace fixsearch;
using namespace fixsearch::metrics;
using fixsearch::fdm::BinaryFixationMap;
using fixsearch::fdm::DensityMap;

namespace {

DensityMap random_density(Rng& rng, int w, int h) {
  DensityMap m(w, h);
  double total = 0.0;
  for (double& v : m.values) {
    v = rng.uniform(0.0, 1.0);
    total += v;
  }
  for (double& v : m.values) v /= total;
  return m;
}

BinaryFixationMap random_binary(Rng& rng, int w, int h, int n_fix) {
  BinaryFixationMap m(w, h);
  while (m.fixation_count < n_fix) {
    const std::size_t i = static_cast<std::size_t>(rng.below(m.bits.size()));
    if (!m.bits[i]) {
      m.bits[i] = 1;
      ++m.fixation_count;
    }
  }
  return m;
}

DensityMap uniform_map(int w, int h) {
  DensityMap m(w, h);
  for (double& v : m.values) v = 1.0 / static_cast<double>(w * h);
  return m;
}

}  // namespace

TEST_CASE("kld: identical maps score ~0; asymmetry; hand-computed case") {
  Rng rng(1);
  auto p = random_density(rng, 6, 6);
  CHECK(kld(p, p) <= 1e-6);

  DensityMap q = uniform_map(2, 2);
  DensityMap skew(2, 2);
  skew.values = {0.97, 0.01, 0.01, 0.01};
  const double direct = oracles::kld_direct(skew, q, 1e-7);
  CHECK(kld(skew, q) == Catch::Approx(direct).margin(1e-15));
  // Hand expansion of the four-term sum.
  double hand = 0.0;
  for (double pv : {0.97, 0.01, 0.01, 0.01}) hand += 0.25 * std::log(1e-7 + 0.25 / (1e-7 + pv));
  CHECK(kld(skew, q) == Catch::Approx(hand).margin(1e-15));
  CHECK(kld(skew, q) != kld(q, skew));
}

TEST_CASE("kld: nonnegative at tiny epsilon on distinct maps") {
  Rng rng(2);
  for (int i = 0; i < 50; ++i) {
    auto p = random_density(rng, 8, 8);
    auto q = random_density(rng, 8, 8);
    CHECK(kld(p, q, 1e-12) >= 0.0);
  }
}

TEST_CASE("kld: dim mismatch") {
  CHECK_THROWS_AS(kld(uniform_map(4, 4), uniform_map(4, 5)), InvalidInputError);
}

TEST_CASE("cc: identical maps give Pearson 1; Eq. 2 exposes the formula discrepancy") {
  Rng rng(3);
  auto p = random_density(rng, 5, 4);
  CHECK(cc(p, p, CcFormula::Pearson) == Catch::Approx(1.0).margin(1e-12));
  // Verbatim Eq. 2 denominator sqrt(sum(P^2 + Q^2)) equals sqrt(N/2) times the
  // Pearson value on identical standardized maps, so it cannot be 1.
  const double n = static_cast<double>(p.values.size());
  CHECK(cc(p, p, CcFormula::PaperEq2) == Catch::Approx(std::sqrt(n / 2.0)).margin(1e-9));
  CHECK(cc(p, p, CcFormula::PaperEq2) != Catch::Approx(1.0).margin(1e-3));
}

TEST_CASE("cc: anti-correlated standardized maps give Pearson -1") {
  DensityMap a(4, 2), b(4, 2);
  a.values = {0.2, 0.05, 0.2, 0.05, 0.2, 0.05, 0.2, 0.05};
  for (std::size_t i = 0; i < a.values.size(); ++i) b.values[i] = 0.25 - a.values[i];
  CHECK(cc(a, b, CcFormula::Pearson) == Catch::Approx(-1.0).margin(1e-12));
}

TEST_CASE("cc: random 4x4 pair matches the direct statistics oracle to 1e-12") {
  Rng rng(4);
  for (int i = 0; i < 100; ++i) {
    auto p = random_density(rng, 4, 4);
    auto q = random_density(rng, 4, 4);
    CHECK(cc(p, q, CcFormula::Pearson) ==
          Catch::Approx(oracles::cc_pearson_direct(p, q)).margin(1e-12));
    CHECK(cc(p, q, CcFormula::PaperEq2) ==
          Catch::Approx(oracles::cc_eq2_direct(p, q)).margin(1e-12));
  }
}

TEST_CASE("cc: constant map is degenerate") {
  Rng rng(5);
  auto p = random_density(rng, 4, 4);
  CHECK_THROWS_AS(cc(uniform_map(4, 4), p), DegenerateInputError);
}

TEST_CASE("sim: self-intersection 1, disjoint supports 0, fixture matches oracle") {
  Rng rng(6);
  auto p = random_density(rng, 5, 5);
  CHECK(sim(p, p) == Catch::Approx(1.0).margin(1e-12));

  DensityMap a(4, 1), b(4, 1);
  a.values = {0.5, 0.5, 0.0, 0.0};
  b.values = {0.0, 0.0, 0.5, 0.5};
  CHECK(sim(a, b) == 0.0);

  DensityMap x(3, 3), y(3, 3);
  x.values = {0.0, 0.1, 0.2, 0.1, 0.2, 0.1, 0.1, 0.1, 0.1};
  y.values = {0.2, 0.1, 0.0, 0.1, 0.1, 0.2, 0.1, 0.1, 0.1};
  CHECK(sim(x, y) == Catch::Approx(oracles::sim_direct(x, y)).margin(1e-12));
  CHECK(sim(x, y) == Catch::Approx(sim(y, x)).margin(1e-15));
}

TEST_CASE("nss: single fixation on the unique peak equals (max-mean)/sd") {
  DensityMap pred(4, 4);
  for (double& v : pred.values) v = 1.0;
  pred.values[5] = 9.0;
  double mean = 0;
  for (double v : pred.values) mean += v;
  mean /= 16.0;
  double var = 0;
  for (double v : pred.values) var += (v - mean) * (v - mean);
  var /= 16.0;
  BinaryFixationMap gt(4, 4);
  gt.bits[5] = 1;
  gt.fixation_count = 1;
  CHECK(nss(pred, gt) == Catch::Approx((9.0 - mean) / std::sqrt(var)).margin(1e-12));
  CHECK(nss(pred, gt) == Catch::Approx(oracles::nss_direct(pred, gt)).margin(1e-12));
}

TEST_CASE("nss: full coverage averages to 0; fixation on the minimum is negative") {
  Rng rng(7);
  auto pred = random_density(rng, 6, 6);
  BinaryFixationMap all(6, 6);
  for (auto& b : all.bits) b = 1;
  all.fixation_count = 36;
  CHECK(nss(pred, all) == Catch::Approx(0.0).margin(1e-12));

  std::size_t arg_min = 0;
  for (std::size_t i = 1; i < pred.values.size(); ++i)
    if (pred.values[i] < pred.values[arg_min]) arg_min = i;
  BinaryFixationMap at_min(6, 6);
  at_min.bits[arg_min] = 1;
  at_min.fixation_count = 1;
  CHECK(nss(pred, at_min) < 0.0);
}

TEST_CASE("nss: invariant under positive affine transforms of the prediction") {
  Rng rng(8);
  auto pred = random_density(rng, 8, 8);
  auto gt = random_binary(rng, 8, 8, 5);
  DensityMap scaled = pred;
  for (double& v : scaled.values) v = 3.5 * v + 0.125;
  CHECK(nss(scaled, gt) == Catch::Approx(nss(pred, gt)).margin(1e-12));
}

TEST_CASE("ig: pred equal to baseline gives exactly 0; concentration sign checks") {
  Rng rng(9);
  auto pred = random_density(rng, 6, 6);
  auto gt = random_binary(rng, 6, 6, 4);
  CHECK(ig(pred, pred, gt) == 0.0);

  // Mass concentrated on the single fixated pixel vs a gently-varying baseline.
  DensityMap conc(4, 4), base(4, 4);
  for (std::size_t i = 0; i < 16; ++i) {
    conc.values[i] = i == 5 ? 0.85 : 0.01;
    base.values[i] = 0.05 + 0.002 * static_cast<double>(i % 3);
  }
  BinaryFixationMap fix5(4, 4);
  fix5.bits[5] = 1;
  fix5.fixation_count = 1;
  const double gain = ig(conc, base, fix5);
  CHECK(gain > 0.0);
  CHECK(gain == Catch::Approx(oracles::ig_direct(conc, base, fix5, 1e-7)).margin(1e-12));
  const double loss = ig(base, conc, fix5);
  CHECK(loss < 0.0);
  CHECK(loss == Catch::Approx(oracles::ig_direct(base, conc, fix5, 1e-7)).margin(1e-12));
}

TEST_CASE("auc_judd: fixated pixels holding the top values score ~1 on 8x8") {
  Rng rng(10);
  auto gt = random_binary(rng, 8, 8, 5);
  DensityMap pred(8, 8);
  for (std::size_t i = 0; i < 64; ++i)
    pred.values[i] = gt.bits[i] ? 0.9 + 0.01 * static_cast<double>(i % 5) : rng.uniform(0.0, 0.5);
  double total = 0;
  for (double v : pred.values) total += v;
  for (double& v : pred.values) v /= total;
  CHECK(auc_judd(pred, gt) >= 0.99);
  CHECK(auc_judd(pred, gt) == oracles::auc_judd_oracle(pred, gt));
}

TEST_CASE("auc_judd: constant prediction scores chance") {
  Rng rng(11);
  auto gt = random_binary(rng, 8, 8, 3);
  CHECK(auc_judd(uniform_map(8, 8), gt) == 0.5);
}

TEST_CASE("auc_judd: equals the exhaustive brute-force oracle exactly on random instances") {
  Rng rng(12);
  for (int iter = 0; iter < 500; ++iter) {
    auto pred = random_density(rng, 8, 8);
    auto gt = random_binary(rng, 8, 8, 1 + static_cast<int>(rng.below(12)));
    REQUIRE(auc_judd(pred, gt) == oracles::auc_judd_oracle(pred, gt));
  }
}

TEST_CASE("auc_judd: ties between fixated and non-fixated pixels still match the oracle") {
  Rng rng(13);
  for (int iter = 0; iter < 200; ++iter) {
    DensityMap pred(8, 8);
    for (double& v : pred.values) v = static_cast<double>(rng.below(4));  // heavy ties
    pred.values[0] = 5.0;  // keep non-constant
    auto gt = random_binary(rng, 8, 8, 1 + static_cast<int>(rng.below(8)));
    REQUIRE(auc_judd(pred, gt) == oracles::auc_judd_oracle(pred, gt));
  }
}

TEST_CASE("auc_borji: perfect predictor beats 0.95; constant map 0.5; deterministic") {
  Rng rng(14);
  auto gt = random_binary(rng, 8, 8, 5);
  DensityMap pred(8, 8);
  for (std::size_t i = 0; i < 64; ++i)
    pred.values[i] = gt.bits[i] ? 0.95 + 0.01 * static_cast<double>(i % 4) : rng.uniform(0.0, 0.4);
  for (std::uint64_t seed : {0ull, 7ull, 99ull}) CHECK(auc_borji(pred, gt, 100, 0.05, seed) > 0.95);
  CHECK(auc_borji(uniform_map(8, 8), gt) == 0.5);
  CHECK(auc_borji(pred, gt, 100, 0.05, 42) == auc_borji(pred, gt, 100, 0.05, 42));
}

TEST_CASE("auc_borji: exact sweep matches a per-split exhaustive oracle") {
  // With step=0 the implementation must equal the oracle computed over the
  // same seeded negative samples.
  Rng rng(15);
  auto pred = random_density(rng, 8, 8);
  auto gt = random_binary(rng, 8, 8, 6);
  std::vector<double> p = pred.values;
  double lo = p[0], hi = p[0];
  for (double v : p) {
    lo = std::min(lo, v);
    hi = std::max(hi, v);
  }
  for (double& v : p) v = (v - lo) / (hi - lo);
  std::vector<double> fix_vals;
  for (std::size_t i = 0; i < p.size(); ++i)
    if (gt.bits[i]) fix_vals.push_back(p[i]);

  const std::uint64_t seed = 77;
  const int n_splits = 25;
  Rng sampler(seed);
  double oracle_sum = 0.0;
  for (int s = 0; s < n_splits; ++s) {
    std::vector<double> negs;
    for (std::size_t k = 0; k < fix_vals.size(); ++k)
      negs.push_back(p[static_cast<std::size_t>(sampler.below(p.size()))]);
    oracle_sum += oracles::auc_exhaustive(fix_vals, negs);
  }
  CHECK(auc_borji(pred, gt, n_splits, 0.0, seed) ==
        Catch::Approx(oracle_sum / n_splits).margin(1e-15));
}

TEST_CASE("sauc: center bias neutralized; peaked prediction wins; deterministic") {
  // Symmetric fixture: prediction is a center-bias bump, ground-truth
  // fixations sit at center, the other image's fixations sit at the same
  // ring of central pixels, so sampled negatives carry the same values.
  const int w = 9, h = 9;
  DensityMap center(w, h);
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) {
      const double d2 = (x - 4.0) * (x - 4.0) + (y - 4.0) * (y - 4.0);
      center.at(x, y) = std::exp(-d2 / 6.0);
    }
  BinaryFixationMap gt(w, h);
  gt.bits[4 * 9 + 4] = 1;
  gt.bits[4 * 9 + 3] = 1;
  gt.fixation_count = 2;
  BinaryFixationMap other(w, h);
  other.bits[4 * 9 + 4] = 1;
  other.bits[3 * 9 + 4] = 1;
  other.fixation_count = 2;
  const double score = sauc(center, gt, other, 200, 0.0, 5);
  CHECK(score > 0.35);
  CHECK(score < 0.65);

  // Prediction peaking exactly on gt fixations, other fixations elsewhere.
  Rng rng(16);
  DensityMap peaked(8, 8);
  auto gt2 = random_binary(rng, 8, 8, 4);
  for (std::size_t i = 0; i < 64; ++i)
    peaked.values[i] = gt2.bits[i] ? 0.9 + 0.02 * static_cast<double>(i % 3) : rng.uniform(0.0, 0.3);
  BinaryFixationMap other2(8, 8);
  for (std::size_t i = 0; i < 64 && other2.fixation_count < 6; ++i)
    if (!gt2.bits[i] && rng.uniform() < 0.2) {
      other2.bits[i] = 1;
      ++other2.fixation_count;
    }
  CHECK(sauc(peaked, gt2, other2, 100, 0.05, 3) > 0.9);
  CHECK(sauc(peaked, gt2, other2, 100, 0.05, 3) == sauc(peaked, gt2, other2, 100, 0.05, 3));
  BinaryFixationMap empty(8, 8);
  CHECK_THROWS_AS(sauc(peaked, gt2, empty, 100, 0.05, 3), InvalidInputError);
}

TEST_CASE("auc variants: exact-sweep scores invariant under pred -> pred^2") {
  Rng rng(17);
  for (int iter = 0; iter < 100; ++iter) {
    DensityMap pred(8, 8);
    for (double& v : pred.values) v = rng.uniform(0.01, 1.0);
    auto gt = random_binary(rng, 8, 8, 1 + static_cast<int>(rng.below(10)));
    auto other = random_binary(rng, 8, 8, 5);
    DensityMap squared = pred;
    for (double& v : squared.values) v *= v;

    REQUIRE(auc_judd(pred, gt) == auc_judd(squared, gt));
    REQUIRE(auc_borji(pred, gt, 20, 0.0, 9) == auc_borji(squared, gt, 20, 0.0, 9));
    REQUIRE(sauc(pred, gt, other, 20, 0.0, 9) == sauc(squared, gt, other, 20, 0.0, 9));
  }
}

TEST_CASE("evaluate_all: self-evaluation bundle and per-metric failure recording") {
  Rng rng(18);
  auto gt_density = random_density(rng, 8, 8);
  auto gt_binary = random_binary(rng, 8, 8, 5);
  // Make the fixated pixels hold strictly maximal values so auc_judd ~ 1.
  DensityMap pred = gt_density;
  for (std::size_t i = 0; i < 64; ++i)
    if (gt_binary.bits[i]) pred.values[i] += 1.0;
  double total = 0;
  for (double v : pred.values) total += v;
  for (double& v : pred.values) v /= total;

  auto baseline = random_density(rng, 8, 8);
  auto other = random_binary(rng, 8, 8, 4);
  auto self_scores = evaluate_all(gt_density, gt_density, gt_binary, baseline, other, {});
  CHECK(*self_scores[4] <= 1e-6);                                // kld
  CHECK(*self_scores[5] == Catch::Approx(1.0).margin(1e-12));    // cc
  CHECK(*self_scores[6] == Catch::Approx(1.0).margin(1e-12));    // sim
  auto peak_scores = evaluate_all(pred, gt_density, gt_binary, baseline, other, {});
  CHECK(*peak_scores[0] >= 0.99);                                // auc_judd

  // Constant prediction: AUCs degrade to 0.5, NSS/CC/SIM record failures.
  auto const_scores = evaluate_all(uniform_map(8, 8), gt_density, gt_binary, baseline, other, {});
  CHECK(*const_scores[0] == 0.5);
  CHECK(*const_scores[1] == 0.5);
  CHECK(*const_scores[2] == 0.5);
  CHECK_FALSE(const_scores[3].has_value());
  CHECK_FALSE(const_scores[5].has_value());
  CHECK_FALSE(const_scores[6].has_value());
  CHECK_FALSE(const_scores.errors[3].empty());
}

TEST_CASE("aggregate: mean of three fixture images equals direct arithmetic") {
  std::vector<SaliencyScores> scores(3);
  for (int i = 0; i < 3; ++i)
    for (std::size_t m = 0; m < 8; ++m) scores[static_cast<std::size_t>(i)].values[m] = 0.1 * (i + 1) + 0.01 * static_cast<double>(m);
  auto agg = aggregate_scores(scores);
  for (std::size_t m = 0; m < 8; ++m) {
    const double mean = 0.2 + 0.01 * static_cast<double>(m);
    CHECK(*agg.mean[m] == Catch::Approx(mean).margin(1e-12));
    const double sd = std::sqrt((0.01 + 0.0 + 0.01) / 3.0);
    CHECK(*agg.sd[m] == Catch::Approx(sd).margin(1e-12));
    CHECK(agg.count[m] == 3);
  }
}

TEST_CASE("kld self-divergence bounded by epsilon times grid mass") {
  Rng rng(19);
  for (double eps : {1e-7, 1e-9}) {
    auto p = random_density(rng, 12, 12);
    CHECK(std::abs(kld(p, p, eps)) <= eps * static_cast<double>(p.values.size()));
  }
}
