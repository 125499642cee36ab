#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include "aggbounds/inference.hpp"

#include <cmath>
#include <random>

using namespace aggbounds;

namespace {

// Exact binomial CDF via stable log pmf summation; no beta functions shared
// with the implementation under test.
double binom_cdf(long long x, long long n, double p) {
  if (p <= 0.0) return 1.0;
  if (p >= 1.0) return x >= n ? 1.0 : 0.0;
  double sum = 0.0;
  for (long long k = 0; k <= x; ++k) {
    const double lg = std::lgamma(n + 1.0) - std::lgamma(k + 1.0) - std::lgamma(n - k + 1.0) +
                      k * std::log(p) + (n - k) * std::log1p(-p);
    sum += std::exp(lg);
  }
  return std::min(sum, 1.0);
}

// Equal-tailed exact interval by direct bisection on the coverage equations:
// upper U solves P[Bin(n,U) <= x] = a/2, lower L solves P[Bin(n,L) >= x] = a/2.
Interval cp_oracle(long long x, long long n, double level) {
  const double half = (1.0 - level) / 2.0;
  double lo = 0.0, hi = 1.0;
  if (x > 0) {
    double a = 0.0, b = 1.0;
    for (int it = 0; it < 200; ++it) {
      const double m = 0.5 * (a + b);
      // P[Bin >= x] = 1 - cdf(x-1) increases in p
      if (1.0 - binom_cdf(x - 1, n, m) < half) a = m; else b = m;
    }
    lo = 0.5 * (a + b);
  }
  if (x < n) {
    double a = 0.0, b = 1.0;
    for (int it = 0; it < 200; ++it) {
      const double m = 0.5 * (a + b);
      if (binom_cdf(x, n, m) > half) a = m; else b = m;
    }
    hi = 0.5 * (a + b);
  }
  return {lo, hi};
}

AggregateDataset counted_dataset() {
  AggregateDataset ds;
  ds.support = CovariateSupport::product({{0.0, 1.0}});
  ds.range = {0.0, 1.0};
  ds.binary_outcome = true;
  GroupRecord g;
  g.id = "g1";
  g.share = 1.0;
  g.count = 400;
  g.y_mean = 0.6;
  g.marginals.resize(2);
  g.marginals << 0.3, 0.7;
  ds.groups.push_back(g);
  return ds;
}

Eigen::VectorXd contrast() {
  Eigen::VectorXd v(2);
  v << -1.0, 1.0;
  return v;
}

}  // namespace

TEST_CASE("Clopper-Pearson boundary counts use the closed forms") {
  const long long n = 100;
  const double level = 0.95;
  const double half = 0.025;
  const auto at0 = inference::clopper_pearson(0, n, level);
  CHECK(at0.lower == 0.0);
  CHECK(std::abs(at0.upper - (1.0 - std::pow(half, 1.0 / n))) <= 1e-10);
  const auto atn = inference::clopper_pearson(n, n, level);
  CHECK(atn.upper == 1.0);
  CHECK(std::abs(atn.lower - std::pow(half, 1.0 / n)) <= 1e-10);
}

TEST_CASE("Clopper-Pearson interior counts match a CDF-bisection oracle") {
  const struct { long long x, n; double level; } cases[] = {
      {1, 10, 0.95}, {5, 10, 0.95}, {9, 10, 0.95},   {3, 50, 0.90},
      {30, 50, 0.99}, {250, 1000, 0.95}, {1, 1000, 0.95}, {37, 123, 0.9875},
  };
  for (const auto& c : cases) {
    const auto got = inference::clopper_pearson(c.x, c.n, c.level);
    const auto want = cp_oracle(c.x, c.n, c.level);
    CHECK(std::abs(got.lower - want.lower) <= 1e-9);
    CHECK(std::abs(got.upper - want.upper) <= 1e-9);
  }
}

TEST_CASE("Clopper-Pearson widens monotonically in the level") {
  const auto a = inference::clopper_pearson(5, 10, 0.90);
  const auto b = inference::clopper_pearson(5, 10, 0.99);
  const auto c = inference::clopper_pearson(5, 10, 0.999999);
  CHECK(b.lower < a.lower);
  CHECK(b.upper > a.upper);
  CHECK(c.lower < b.lower);
  CHECK(c.upper > b.upper);
  CHECK(c.lower > 0.0);  // x strictly interior keeps the interval interior
  CHECK(c.upper < 1.0);
  CHECK(c.lower < 0.1);
  CHECK(c.upper > 0.9);
}

TEST_CASE("normal interval: exact z at 0.95 and degenerate se") {
  const auto exact = inference::normal_mean_ci(0.5, 0.0, 0.95);
  CHECK(exact.lower == 0.5);
  CHECK(exact.upper == 0.5);
  const auto r = inference::normal_mean_ci(0.5, 0.1, 0.95);
  CHECK(r.lower == doctest::Approx(0.5 - 1.959963984540054 * 0.1).epsilon(1e-9));
  CHECK(r.upper == doctest::Approx(0.5 + 1.959963984540054 * 0.1).epsilon(1e-9));
}

TEST_CASE("Bonferroni split levels") {
  CHECK(inference::bonferroni_level(0.05, 1) == doctest::Approx(0.95).epsilon(1e-15));
  CHECK(inference::bonferroni_level(0.05, 10) == doctest::Approx(0.995).epsilon(1e-15));
  CHECK(inference::bonferroni_level(0.10, 25) == doctest::Approx(0.996).epsilon(1e-15));
}

TEST_CASE("observation count: share + mean + all marginal rows, plus finer rows") {
  auto ds = counted_dataset();
  CHECK(inference::observation_count(ds, false) == 4);  // 1 share + 1 mean + 2 marginals
  FinerMoment fm;
  fm.covariate = 0;
  fm.value = 1.0;
  fm.y_mean = 0.7;
  fm.count = 280;
  ds.groups[0].finer.push_back(fm);
  CHECK(inference::observation_count(ds, false) == 4);  // ignored unless requested
  CHECK(inference::observation_count(ds, true) == 5);

  GroupRecord g2 = ds.groups[0];
  g2.id = "g2";
  ds.groups[0].share = 0.5;
  g2.share = 0.5;
  ds.groups.push_back(g2);
  CHECK(inference::observation_count(ds, true) == 10);
}

TEST_CASE("confidence report: interval bookkeeping on the binary fixture") {
  const auto ds = counted_dataset();
  const auto rep = inference::ci_identified_set(ds, contrast(), 0.05, nullptr, false, {});
  CHECK(rep.alpha == 0.05);
  CHECK(rep.M == 4);
  CHECK(rep.level_each == doctest::Approx(1.0 - 0.05 / 4).epsilon(1e-15));
  CHECK(rep.intervals.size() == 4);
  for (const auto& mi : rep.intervals) {
    CHECK(mi.method == "clopper_pearson");  // binary with counts: everything exact binomial
    CHECK(mi.ci.lower <= mi.estimate + 1e-12);
    CHECK(mi.ci.upper >= mi.estimate - 1e-12);
    CHECK(mi.ci.lower >= 0.0);
    CHECK(mi.ci.upper <= 1.0);
  }
  // estimates echo the dataset
  bool saw_share = false, saw_mean = false;
  for (const auto& mi : rep.intervals) {
    if (mi.kind == "group_share") { saw_share = true; CHECK(mi.estimate == 1.0); }
    if (mi.kind == "y_mean") { saw_mean = true; CHECK(mi.estimate == 0.6); }
  }
  CHECK(saw_share);
  CHECK(saw_mean);
}

TEST_CASE("confidence set contains the point-estimate bounds") {
  const auto ds = counted_dataset();
  const auto rep = inference::ci_identified_set(ds, contrast(), 0.05, nullptr, false, {});
  CHECK(rep.d_ci.lower <= rep.point.aggregate.lower + 1e-9);
  CHECK(rep.d_ci.upper >= rep.point.aggregate.upper - 1e-9);
  // the point run reproduces the known identified set
  CHECK(rep.point.aggregate.lower == doctest::Approx(-4.0 / 7.0).epsilon(1e-10));
  CHECK(rep.point.aggregate.upper == doctest::Approx(6.0 / 7.0).epsilon(1e-10));
  // per-group rows mirror the aggregate here (single group of share 1)
  REQUIRE(rep.per_group.size() == 1);
  CHECK(rep.per_group[0].group == "g1");
}

TEST_CASE("confidence sets nest across alpha") {
  const auto ds = counted_dataset();
  SearchOptions opts;
  opts.n_random_starts = 12;
  const auto wide = inference::ci_identified_set(ds, contrast(), 0.01, nullptr, false, opts);
  const auto mid = inference::ci_identified_set(ds, contrast(), 0.05, nullptr, false, opts);
  const auto slim = inference::ci_identified_set(ds, contrast(), 0.20, nullptr, false, opts);
  CHECK(wide.d_ci.lower <= mid.d_ci.lower + 1e-6);
  CHECK(wide.d_ci.upper >= mid.d_ci.upper - 1e-6);
  CHECK(mid.d_ci.lower <= slim.d_ci.lower + 1e-6);
  CHECK(mid.d_ci.upper >= slim.d_ci.upper - 1e-6);
}

TEST_CASE("finer moments enter the split and tighten nothing they should not") {
  auto ds = counted_dataset();
  FinerMoment fm;
  fm.covariate = 0;
  fm.value = 1.0;
  fm.y_mean = 6.0 / 7.0;  // consistent with an extreme corner
  fm.count = 280;
  ds.groups[0].finer.push_back(fm);

  const auto without = inference::ci_identified_set(ds, contrast(), 0.05, nullptr, false, {});
  const auto with = inference::ci_identified_set(ds, contrast(), 0.05, nullptr, true, {});
  CHECK(without.M == 4);
  CHECK(with.M == 5);
  for (const auto& mi : with.intervals)
    if (mi.kind == "finer_y_mean") {
      CHECK(mi.covariate == 0);
      CHECK(mi.value == 1.0);
      CHECK(mi.estimate == doctest::Approx(6.0 / 7.0).epsilon(1e-12));
    }
  // the finer moment pins the contrast at its upper corner
  CHECK(with.point.aggregate.width() < 1e-6);
  CHECK(with.point.aggregate.width() < without.point.aggregate.width());
}

TEST_CASE("missing counts are a validation error in binary mode") {
  auto ds = counted_dataset();
  ds.groups[0].count.reset();
  CHECK_THROWS_AS(inference::ci_identified_set(ds, contrast(), 0.05, nullptr, false, {}),
                  ValidationError);
}

TEST_CASE("non-binary outcomes fall back to normal intervals and need ses") {
  AggregateDataset ds;
  ds.support = CovariateSupport::product({{0.0, 1.0}});
  ds.range = {0.0, 10.0};
  ds.binary_outcome = false;
  GroupRecord g;
  g.id = "g1";
  g.share = 1.0;
  g.count = 500;
  g.y_mean = 4.0;
  g.y_se = 0.05;
  g.marginals.resize(2);
  g.marginals << 0.3, 0.7;
  ds.groups.push_back(g);

  Eigen::VectorXd lam = contrast();
  const auto rep = inference::ci_identified_set(ds, lam, 0.05, nullptr, false, {});
  bool saw_normal = false;
  for (const auto& mi : rep.intervals)
    if (mi.kind == "y_mean") {
      saw_normal = true;
      CHECK(mi.method == "normal");
    }
  CHECK(saw_normal);
  CHECK(rep.d_ci.lower <= rep.point.aggregate.lower + 1e-9);
  CHECK(rep.d_ci.upper >= rep.point.aggregate.upper - 1e-9);

  auto no_se = ds;
  no_se.groups[0].y_se.reset();
  CHECK_THROWS_AS(inference::ci_identified_set(no_se, lam, 0.05, nullptr, false, {}),
                  ValidationError);
}
