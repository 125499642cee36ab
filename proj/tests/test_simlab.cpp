#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include "aggbounds/io.hpp"
#include "aggbounds/simlab.hpp"

#include <cmath>
#include <set>

using namespace aggbounds;

namespace {

sim::JointSpec tiny_spec(double p1 = 0.7, double gamma0 = 0.2, double gamma1 = 0.8) {
  sim::JointSpec spec;
  spec.support = CovariateSupport::product({{0.0, 1.0}});
  spec.range = {0.0, 1.0};
  spec.binary_outcome = true;
  spec.group_ids = {"g1"};
  spec.joints.resize(1, 2);
  spec.joints << 1.0 - p1, p1;
  spec.cond_means.resize(1, 2);
  spec.cond_means << gamma0, gamma1;
  spec.shares.resize(1);
  spec.shares << 1.0;
  return spec;
}

Eigen::VectorXd vec2(double a, double b) {
  Eigen::VectorXd v(2);
  v << a, b;
  return v;
}

}  // namespace

TEST_CASE("spec check rejects malformed fields") {
  auto ok = tiny_spec();
  CHECK_NOTHROW(ok.check());

  auto bad_joint = tiny_spec();
  bad_joint.joints(0, 0) = 0.5;  // row no longer sums to one
  CHECK_THROWS_AS(bad_joint.check(), std::invalid_argument);

  auto bad_mean = tiny_spec();
  bad_mean.cond_means(0, 1) = 1.5;
  CHECK_THROWS_AS(bad_mean.check(), std::invalid_argument);

  auto bad_range = tiny_spec();
  bad_range.range = {0.0, 2.0};  // binary outcome demands [0,1]
  CHECK_THROWS_AS(bad_range.check(), std::invalid_argument);

  auto bad_share = tiny_spec();
  bad_share.shares(0) = 0.9;
  CHECK_THROWS_AS(bad_share.check(), std::invalid_argument);
}

TEST_CASE("generate: degenerate cell means give constant outcomes") {
  auto spec = tiny_spec(0.6, 1.0, 1.0);
  const auto sample = sim::generate(spec, 200, 11);
  REQUIRE(sample.records.size() == 200);
  for (const auto& r : sample.records) CHECK(r.y == 1.0);

  spec.cond_means << 0.0, 0.0;
  for (const auto& r : sim::generate(spec, 200, 11).records) CHECK(r.y == 0.0);
}

TEST_CASE("generate is deterministic in the seed") {
  const auto spec = tiny_spec();
  const auto a = sim::generate(spec, 500, 42);
  const auto b = sim::generate(spec, 500, 42);
  REQUIRE(a.records.size() == b.records.size());
  for (size_t i = 0; i < a.records.size(); ++i) {
    CHECK(a.records[i].cell == b.records[i].cell);
    CHECK(a.records[i].y == b.records[i].y);
  }
  const auto c = sim::generate(spec, 500, 43);
  bool any_diff = false;
  for (size_t i = 0; i < a.records.size() && !any_diff; ++i)
    any_diff = a.records[i].cell != c.records[i].cell || a.records[i].y != c.records[i].y;
  CHECK(any_diff);
}

TEST_CASE("generate: frequencies sit inside wide binomial bands") {
  const auto spec = tiny_spec(0.7, 0.2, 0.8);
  const long long n = 1300;
  const auto sample = sim::generate(spec, n, 314159);
  long long n1 = 0;
  double ysum = 0.0;
  for (const auto& r : sample.records) {
    n1 += r.cell == 1 ? 1 : 0;
    ysum += r.y;
  }
  const double f1 = static_cast<double>(n1) / n;
  const double band1 = 4.0 * std::sqrt(0.7 * 0.3 / n);
  CHECK(std::abs(f1 - 0.7) <= band1);
  const double ey = 0.3 * 0.2 + 0.7 * 0.8;  // population outcome mean
  const double bandy = 4.0 * std::sqrt(ey * (1.0 - ey) / n);
  CHECK(std::abs(ysum / n - ey) <= bandy);
}

TEST_CASE("aggregate_micro: exact arithmetic on a hand-built sample") {
  const auto spec = tiny_spec();
  sim::MicroSample sample;
  sample.records = {{0, 0, 0.0}, {0, 1, 1.0}, {0, 1, 1.0}, {0, 0, 1.0}};
  const auto ds = sim::aggregate_micro(sample, spec);
  REQUIRE(ds.groups.size() == 1);
  const auto& g = ds.groups[0];
  CHECK(g.id == "g1");
  CHECK(g.count == 4);
  CHECK(g.share == 1.0);
  CHECK(g.y_mean == doctest::Approx(0.75).epsilon(1e-15));
  CHECK(g.marginals(0) == doctest::Approx(0.5).epsilon(1e-15));
  CHECK(g.marginals(1) == doctest::Approx(0.5).epsilon(1e-15));
  // sample sd of (0,1,1,1) is sqrt(3)/4; se = sd / sqrt(4)
  CHECK(*g.y_se == doctest::Approx(std::sqrt(0.1875) / 2.0).epsilon(1e-12));

  sim::FinerSelection finer;
  finer.cells = {{0, 1.0}};
  const auto with = sim::aggregate_micro(sample, spec, &finer);
  REQUIRE(with.groups[0].finer.size() == 1);
  const auto& fm = with.groups[0].finer[0];
  CHECK(fm.covariate == 0);
  CHECK(fm.value == 1.0);
  CHECK(fm.y_mean == doctest::Approx(1.0).epsilon(1e-15));
  CHECK(fm.count == 2);
}

TEST_CASE("aggregate_micro: shares follow group counts") {
  auto spec = tiny_spec();
  spec.group_ids = {"a", "b"};
  spec.joints.resize(2, 2);
  spec.joints << 0.3, 0.7, 0.5, 0.5;
  spec.cond_means.resize(2, 2);
  spec.cond_means << 0.2, 0.8, 0.4, 0.6;
  spec.shares.resize(2);
  spec.shares << 0.25, 0.75;
  sim::MicroSample sample;
  for (int i = 0; i < 4; ++i) sample.records.push_back({0, 0, 1.0});
  for (int i = 0; i < 12; ++i) sample.records.push_back({1, 1, 0.0});
  const auto ds = sim::aggregate_micro(sample, spec);
  CHECK(ds.groups[0].share == doctest::Approx(0.25).epsilon(1e-15));
  CHECK(ds.groups[1].share == doctest::Approx(0.75).epsilon(1e-15));
  CHECK(validate(ds).empty());
}

TEST_CASE("aggregate_population reproduces the spec moments exactly") {
  const auto spec = sim::exercise_preset(1);
  const auto ds = sim::aggregate_population(spec);
  REQUIRE(ds.groups.size() == static_cast<size_t>(spec.num_groups()));
  const Eigen::MatrixXd A = indicator_matrix(spec.support);
  for (int g = 0; g < spec.num_groups(); ++g) {
    const auto& rec = ds.groups[g];
    CHECK(rec.share == doctest::Approx(spec.shares(g)).epsilon(1e-15));
    CHECK(!rec.count.has_value());
    const double want = spec.joints.row(g).dot(spec.cond_means.row(g));
    CHECK(rec.y_mean == doctest::Approx(want).epsilon(1e-14));
    const Eigen::VectorXd m = A * spec.joints.row(g).transpose();
    CHECK((rec.marginals - m).cwiseAbs().maxCoeff() <= 1e-14);
  }
  CHECK(validate(ds).empty());
}

TEST_CASE("brute force equals the search when the joint is pinned") {
  const auto spec = tiny_spec();
  const auto ds = sim::aggregate_population(spec);
  const auto lam = vec2(-1.0, 1.0);
  const auto oracle =
      sim::brute_force_ranges(ds.groups[0], ds.support, lam, ds.range, 0.01);
  const auto search = group_bounds(ds.groups[0], ds.support, lam, ds.range, nullptr, false, {});
  CHECK(oracle.bounds.lower == doctest::Approx(search.lower).epsilon(1e-12));
  CHECK(oracle.bounds.upper == doctest::Approx(search.upper).epsilon(1e-12));
  CHECK(oracle.L_range.width() <= 1e-12);
  CHECK(oracle.U_range.width() <= 1e-12);
}

TEST_CASE("brute force brackets the search on a one-dimensional chart") {
  // feasible family p(s) = (0.2+s, 0.3-s, 0.2-s, 0.3+s), s in [-0.2, 0.2];
  // with y = 0.8 the inner min of c_1 is max(0, (p_1-0.2)/p_1): flat at zero
  // until p_1 = 0.2, then rising to 0.5 at the vertex p_1 = 0.4
  const auto s = CovariateSupport::product({{0.0, 1.0}, {0.0, 1.0}});
  GroupRecord g;
  g.id = "g";
  g.share = 1.0;
  g.y_mean = 0.8;
  g.marginals.resize(4);
  g.marginals << 0.5, 0.5, 0.4, 0.6;
  Eigen::VectorXd lam(4);
  lam << 1.0, 0.0, 0.0, 0.0;

  const auto oracle = sim::brute_force_ranges(g, s, lam, {0.0, 1.0}, 0.005);
  const auto search = group_bounds(g, s, lam, {0.0, 1.0}, nullptr, false, {});
  CHECK(oracle.bounds.lower == doctest::Approx(0.0).epsilon(1e-12));
  CHECK(oracle.bounds.upper == doctest::Approx(1.0).epsilon(1e-12));
  CHECK(std::abs(search.lower - oracle.bounds.lower) <= 0.01);
  CHECK(std::abs(search.upper - oracle.bounds.upper) <= 0.01);
  // positive-dimensional feasible set: knowing the joint would tighten things;
  // the top of the range sits at the vertex p = (0.4, 0.1, 0, 0.5)
  CHECK(oracle.L_range.width() > 1e-4);
  CHECK(oracle.L_range.upper == doctest::Approx(0.5).epsilon(1e-9));
}

TEST_CASE("brute force respects shape constraints") {
  const auto s = CovariateSupport::product({{0.0, 1.0}, {0.0, 1.0}});
  GroupRecord g;
  g.id = "g";
  g.share = 1.0;
  g.y_mean = 0.5;
  g.marginals.resize(4);
  g.marginals << 0.5, 0.5, 0.4, 0.6;
  Eigen::VectorXd lam(4);
  lam << -1.0, -1.0, 1.0, 1.0;
  const auto shape = monotone_constraint(s, 0, Monotone::decreasing);
  const auto free_o = sim::brute_force_ranges(g, s, lam, {0.0, 1.0}, 0.01);
  const auto tight_o = sim::brute_force_ranges(g, s, lam, {0.0, 1.0}, 0.01, &shape);
  CHECK(tight_o.bounds.lower >= free_o.bounds.lower - 1e-12);
  CHECK(tight_o.bounds.upper <= free_o.bounds.upper + 1e-12);
  CHECK(tight_o.bounds.upper <= 1e-9);  // nonincreasing in x1 kills the positive contrast
}

TEST_CASE("brute force enforces its size guards") {
  const auto s = CovariateSupport::product(
      {{0.0, 1.0}, {0.0, 1.0}, {0.0, 1.0}, {0.0, 1.0}});  // K = 16
  GroupRecord g;
  g.id = "g";
  g.share = 1.0;
  g.y_mean = 0.5;
  g.marginals = Eigen::VectorXd::Constant(8, 0.5);
  Eigen::VectorXd lam = Eigen::VectorXd::Zero(16);
  lam(0) = 1.0;
  CHECK_THROWS_AS(sim::brute_force_ranges(g, s, lam, {0.0, 1.0}, 0.05), std::invalid_argument);
}

TEST_CASE("presets: structure, shared means, distinct spreads") {
  const auto p1 = sim::exercise_preset(1);
  const auto p2 = sim::exercise_preset(2);
  const auto p3 = sim::exercise_preset(3);
  for (const auto* p : {&p1, &p2, &p3}) {
    CHECK(p->num_groups() == 50);
    CHECK(p->support.num_points() == 8);
    CHECK(p->support.num_covariates() == 3);
    CHECK(p->binary_outcome);
    CHECK_NOTHROW(p->check());
    CHECK(p->shares.minCoeff() == doctest::Approx(0.02).epsilon(1e-15));
    CHECK(p->shares.maxCoeff() == doctest::Approx(0.02).epsilon(1e-15));
  }
  CHECK(p1.group_ids.front() == "g01");
  CHECK(p1.group_ids.back() == "g50");
  CHECK((p1.cond_means - p2.cond_means).cwiseAbs().maxCoeff() == 0.0);
  CHECK((p1.cond_means - p3.cond_means).cwiseAbs().maxCoeff() == 0.0);

  // marginal of the first covariate per group distinguishes the designs
  const Eigen::MatrixXd A = indicator_matrix(p1.support);
  const int row_w1 = p1.support.marginal_row(0, 1);
  for (int g = 0; g < 50; ++g) {
    const double w1_1 = (A * p1.joints.row(g).transpose())(row_w1);
    const double w1_2 = (A * p2.joints.row(g).transpose())(row_w1);
    const double w1_3 = (A * p3.joints.row(g).transpose())(row_w1);
    CHECK(w1_1 >= 0.50 - 1e-12);
    CHECK(w1_1 <= 0.95 + 1e-12);
    CHECK(w1_2 >= 0.90 - 1e-12);          // pushed toward one
    if (g % 2 == 0) CHECK(w1_3 <= 0.14 + 1e-12);   // split design
    else CHECK(w1_3 >= 0.86 - 1e-12);
  }
}

TEST_CASE("preset files on disk match the in-code designs") {
  for (int id = 1; id <= 3; ++id) {
    const auto want = sim::exercise_preset(id);
    const std::string path =
        std::string(AGG_DATA_DIR) + "/presets/exercise" + std::to_string(id) + ".json";
    const auto got = io::spec_from_json(io::read_json_file(path));
    CHECK(got.group_ids == want.group_ids);
    CHECK(got.binary_outcome == want.binary_outcome);
    CHECK((got.joints - want.joints).cwiseAbs().maxCoeff() <= 1e-15);
    CHECK((got.cond_means - want.cond_means).cwiseAbs().maxCoeff() <= 1e-15);
    CHECK((got.shares - want.shares).cwiseAbs().maxCoeff() <= 1e-15);
    CHECK((got.support.points() - want.support.points()).cwiseAbs().maxCoeff() == 0.0);
  }
}

TEST_CASE("coverage study: bookkeeping and nesting on a tiny spec") {
  auto spec = tiny_spec(0.7, 0.25, 0.75);
  spec.group_ids = {"a", "b"};
  spec.joints.resize(2, 2);
  spec.joints << 0.3, 0.7, 0.6, 0.4;
  spec.cond_means.resize(2, 2);
  spec.cond_means << 0.25, 0.75, 0.4, 0.6;
  spec.shares.resize(2);
  spec.shares << 0.5, 0.5;
  spec.check();

  sim::CoverageOptions opts;
  opts.reps = 3;
  opts.n_per_group = 400;
  opts.alpha = 0.05;
  opts.search.n_random_starts = 6;
  const auto res = sim::coverage_study(spec, vec2(-1.0, 1.0), opts);
  CHECK(res.reps == 3);
  CHECK(res.covered.size() == 3);
  CHECK(res.rep_point.size() == 3);
  CHECK(res.rep_ci.size() == 3);
  for (int r = 0; r < 3; ++r) {
    CHECK(res.rep_ci[r].lower <= res.rep_point[r].lower + 1e-9);
    CHECK(res.rep_ci[r].upper >= res.rep_point[r].upper - 1e-9);
  }
  CHECK(res.coverage_rate >= 2.0 / 3.0);  // seeded; conservative construction
  CHECK(res.max_err_lower >= 0.0);
  CHECK(res.max_err_upper >= 0.0);

  // population interval equals a direct run on the population aggregates
  const auto pop = identified_set(sim::aggregate_population(spec), vec2(-1.0, 1.0), nullptr,
                                  false, opts.search);
  CHECK(res.population.lower == doctest::Approx(pop.aggregate.lower).epsilon(1e-9));
  CHECK(res.population.upper == doctest::Approx(pop.aggregate.upper).epsilon(1e-9));
}
