#include "aggbounds/simlab.hpp"

#include "aggbounds/feasible.hpp"
#include "aggbounds/inference.hpp"

#include <algorithm>
#include <cmath>
#include <random>

namespace aggbounds::sim {

namespace {

double unit_uniform(std::mt19937_64& rng) {
  return static_cast<double>(rng() >> 11) * 0x1.0p-53;
}

}  // namespace

void JointSpec::check() const {
  const int G = num_groups();
  const int K = support.num_points();
  if (G == 0) throw std::invalid_argument("spec: no groups");
  if (joints.cols() != K || cond_means.rows() != G || cond_means.cols() != K)
    throw std::invalid_argument("spec: joint/mean matrices must be G x K");
  if (shares.size() != G || static_cast<int>(group_ids.size()) != G)
    throw std::invalid_argument("spec: shares and ids must have one entry per group");
  if (std::abs(shares.sum() - 1.0) > 1e-9 || shares.minCoeff() < 0.0)
    throw std::invalid_argument("spec: shares must be nonnegative and sum to 1");
  for (int g = 0; g < G; ++g) {
    if (std::abs(joints.row(g).sum() - 1.0) > 1e-9 || joints.row(g).minCoeff() < -1e-12)
      throw std::invalid_argument("spec: joint for group " + group_ids[g] + " not on the simplex");
    for (int k = 0; k < K; ++k)
      if (!range.contains(cond_means(g, k), 1e-12))
        throw std::invalid_argument("spec: conditional mean outside range in group " +
                                    group_ids[g]);
  }
  if (binary_outcome && (range.lo != 0.0 || range.hi != 1.0))
    throw std::invalid_argument("spec: binary outcome requires range [0,1]");
}

MicroSample generate(const JointSpec& spec, long long n_per_group, std::uint64_t seed) {
  spec.check();
  if (n_per_group <= 0) throw std::invalid_argument("generate: n_per_group must be positive");
  const int G = spec.num_groups();
  const int K = spec.support.num_points();

  MicroSample out;
  out.seed = seed;
  out.records.reserve(static_cast<size_t>(G * n_per_group));
  for (int g = 0; g < G; ++g) {
    std::mt19937_64 rng(mix_seed(seed, static_cast<std::uint64_t>(g)));
    Eigen::VectorXd cum(K);
    double acc = 0.0;
    for (int k = 0; k < K; ++k) {
      acc += std::max(spec.joints(g, k), 0.0);
      cum(k) = acc;
    }
    for (long long i = 0; i < n_per_group; ++i) {
      const double u = unit_uniform(rng) * acc;
      int cell = 0;
      while (cell < K - 1 && u >= cum(cell)) ++cell;
      const double gamma = spec.cond_means(g, cell);
      // binary: Bernoulli at the cell mean; otherwise the outcome is
      // degenerate at the cell mean (all sampling noise comes from the cells)
      const double y = spec.binary_outcome ? (unit_uniform(rng) < gamma ? 1.0 : 0.0) : gamma;
      out.records.push_back({g, cell, y});
    }
  }
  return out;
}

AggregateDataset aggregate_micro(const MicroSample& sample, const JointSpec& spec,
                                 const FinerSelection* finer) {
  const int G = spec.num_groups();
  const int K = spec.support.num_points();
  if (sample.records.empty()) throw std::invalid_argument("aggregate: empty sample");

  std::vector<long long> n(G, 0);
  std::vector<double> ysum(G, 0.0), ysq(G, 0.0);
  Eigen::MatrixXd cell_count = Eigen::MatrixXd::Zero(G, K);
  Eigen::MatrixXd cell_ysum = Eigen::MatrixXd::Zero(G, K);
  for (const auto& r : sample.records) {
    if (r.group < 0 || r.group >= G || r.cell < 0 || r.cell >= K)
      throw std::invalid_argument("aggregate: record outside the spec");
    ++n[r.group];
    ysum[r.group] += r.y;
    ysq[r.group] += r.y * r.y;
    cell_count(r.group, r.cell) += 1.0;
    cell_ysum(r.group, r.cell) += r.y;
  }
  long long n_total = 0;
  for (int g = 0; g < G; ++g) {
    if (n[g] == 0) throw std::invalid_argument("aggregate: group without records");
    n_total += n[g];
  }

  const Eigen::MatrixXd A = indicator_matrix(spec.support);
  AggregateDataset ds;
  ds.support = spec.support;
  ds.range = spec.range;
  ds.binary_outcome = spec.binary_outcome;
  for (int g = 0; g < G; ++g) {
    GroupRecord rec;
    rec.id = spec.group_ids[g];
    rec.count = n[g];
    rec.share = static_cast<double>(n[g]) / static_cast<double>(n_total);
    rec.y_mean = ysum[g] / static_cast<double>(n[g]);
    const double var =
        std::max(ysq[g] / static_cast<double>(n[g]) - rec.y_mean * rec.y_mean, 0.0);
    rec.y_se = std::sqrt(var / static_cast<double>(n[g]));
    const Eigen::VectorXd freq = cell_count.row(g).transpose() / static_cast<double>(n[g]);
    rec.marginals = A * freq;
    if (finer) {
      for (const auto& [cov, value] : finer->cells) {
        double cnt = 0.0, ys = 0.0;
        for (int k = 0; k < K; ++k)
          if (spec.support.points()(k, cov) == value) {
            cnt += cell_count(g, k);
            ys += cell_ysum(g, k);
          }
        if (cnt == 0.0) continue;  // conditioning event never happened
        FinerMoment fm;
        fm.covariate = cov;
        fm.value = value;
        fm.y_mean = ys / cnt;
        fm.count = static_cast<long long>(cnt);
        if (!spec.binary_outcome) {
          // subgroup second moment for the se
          double sq = 0.0;
          for (const auto& r : sample.records)
            if (r.group == g && spec.support.points()(r.cell, cov) == value) sq += r.y * r.y;
          const double v2 = std::max(sq / cnt - fm.y_mean * fm.y_mean, 0.0);
          fm.y_se = std::sqrt(v2 / cnt);
        }
        rec.finer.push_back(std::move(fm));
      }
    }
    ds.groups.push_back(std::move(rec));
  }
  return ds;
}

AggregateDataset aggregate_population(const JointSpec& spec, const FinerSelection* finer) {
  spec.check();
  const int G = spec.num_groups();
  const int K = spec.support.num_points();
  const Eigen::MatrixXd A = indicator_matrix(spec.support);

  AggregateDataset ds;
  ds.support = spec.support;
  ds.range = spec.range;
  ds.binary_outcome = spec.binary_outcome;
  for (int g = 0; g < G; ++g) {
    GroupRecord rec;
    rec.id = spec.group_ids[g];
    rec.share = spec.shares(g);
    const Eigen::VectorXd joint = spec.joints.row(g).transpose();
    rec.y_mean = spec.cond_means.row(g).dot(joint);
    rec.marginals = A * joint;
    if (finer) {
      for (const auto& [cov, value] : finer->cells) {
        double mass = 0.0, moment = 0.0;
        for (int k = 0; k < K; ++k)
          if (spec.support.points()(k, cov) == value) {
            mass += joint(k);
            moment += spec.cond_means(g, k) * joint(k);
          }
        if (mass <= 0.0) continue;
        FinerMoment fm;
        fm.covariate = cov;
        fm.value = value;
        fm.y_mean = moment / mass;
        rec.finer.push_back(std::move(fm));
      }
    }
    ds.groups.push_back(std::move(rec));
  }
  return ds;
}

OracleRanges brute_force_ranges(const GroupRecord& group, const CovariateSupport& support,
                                const Eigen::VectorXd& lambda, OutcomeRange range,
                                double grid_step, const ShapeConstraintSet* shape,
                                bool use_finer) {
  check_weights(lambda, support);
  if (grid_step <= 0.0) throw std::invalid_argument("oracle: grid_step must be positive");
  if (support.num_points() > 8)
    throw std::invalid_argument("oracle: instance too large (K > 8)");

  auto slack = feasible::min_slack_joint(support, group);
  const auto chart = feasible::chart(support, slack.base);
  const int d = chart.dim();
  if (d > 4) throw std::invalid_argument("oracle: instance too large (chart dimension > 4)");

  InnerProblem pr;
  pr.lambda = lambda;
  pr.range = range;
  pr.y_mean = group.y_mean;
  pr.S.resize(0, support.num_points());
  pr.a.resize(0);
  if (shape && !shape->empty()) {
    auto [S, a] = shape->rows_for(group.id);
    pr.S = std::move(S);
    pr.a = std::move(a);
  }
  if (use_finer) {
    for (const auto& fm : group.finer) {
      InnerProblem::FinerRow row;
      row.covariate = fm.covariate;
      row.value = fm.value;
      row.y_cond = fm.y_mean;
      row.prob = group.marginal(support, fm.covariate, fm.value);
      row.mask = Eigen::VectorXd::Zero(support.num_points());
      for (int k = 0; k < support.num_points(); ++k)
        if (support.points()(k, fm.covariate) == fm.value) row.mask(k) = 1.0;
      pr.finer.push_back(std::move(row));
    }
  }

  OracleRanges out;
  bool any = false;
  auto visit = [&](const Eigen::VectorXd& p) {
    if (p.minCoeff() < -1e-12) return;
    Eigen::VectorXd pc = p.cwiseMax(0.0);
    pr.p = pc;
    pr.direction = Direction::min;
    const InnerResult lo = pr.constrained() ? inner_lp(pr) : inner_bound(pr);
    if (!lo.feasible) return;
    pr.direction = Direction::max;
    const InnerResult hi = pr.constrained() ? inner_lp(pr) : inner_bound(pr);
    if (!hi.feasible) return;
    if (!any) {
      out.L_range = {lo.value, lo.value};
      out.U_range = {hi.value, hi.value};
      any = true;
      return;
    }
    out.L_range.lower = std::min(out.L_range.lower, lo.value);
    out.L_range.upper = std::max(out.L_range.upper, lo.value);
    out.U_range.lower = std::min(out.U_range.lower, hi.value);
    out.U_range.upper = std::max(out.U_range.upper, hi.value);
  };

  // the base and the axis vertices are always visited so the grid never
  // misses the extreme points of a thin box
  visit(chart.base);
  if (d > 0) {
    const auto box = feasible::axis_box(chart);
    for (const auto& v : box.vertices) visit(v);

    std::vector<long long> steps(d);
    long long total = 1;
    for (int i = 0; i < d; ++i) {
      const double width = box.w_range[i].upper - box.w_range[i].lower;
      steps[i] = std::max<long long>(1, static_cast<long long>(std::ceil(width / grid_step)));
      total *= steps[i] + 1;
      if (total > 50'000'000)
        throw std::invalid_argument("oracle: grid too large at this step; coarsen grid_step");
    }
    Eigen::VectorXd w(d);
    std::vector<long long> idx(d, 0);
    while (true) {
      for (int i = 0; i < d; ++i) {
        const auto& r = box.w_range[i];
        w(i) = idx[i] == steps[i] ? r.upper
                                  : r.lower + (r.upper - r.lower) *
                                                  (static_cast<double>(idx[i]) /
                                                   static_cast<double>(steps[i]));
      }
      visit(chart.point(w));
      int axis = d - 1;
      while (axis >= 0 && ++idx[axis] > steps[axis]) idx[axis--] = 0;
      if (axis < 0) break;
    }
  }

  if (!any)
    throw NumericalError("oracle: no feasible grid point for group " + group.id);
  out.bounds = {out.L_range.lower, out.U_range.upper};
  return out;
}

Interval brute_force_bounds(const GroupRecord& group, const CovariateSupport& support,
                            const Eigen::VectorXd& lambda, OutcomeRange range, double grid_step,
                            const ShapeConstraintSet* shape, bool use_finer) {
  return brute_force_ranges(group, support, lambda, range, grid_step, shape, use_finer).bounds;
}

CoverageResult coverage_study(const JointSpec& spec, const Eigen::VectorXd& lambda,
                              const CoverageOptions& opts) {
  spec.check();
  if (opts.reps <= 0) throw std::invalid_argument("coverage: reps must be positive");

  FinerSelection finer_sel;
  const FinerSelection* finer = nullptr;
  if (opts.use_finer) {
    // publish one conditional mean per covariate: the higher value of the
    // first covariate, the lower value of the rest
    for (int l = 0; l < spec.support.num_covariates(); ++l) {
      const auto& vals = spec.support.values(l);
      finer_sel.cells.emplace_back(l, l == 0 ? vals.back() : vals.front());
    }
    finer = &finer_sel;
  }

  AggregateDataset pop = aggregate_population(spec, finer);
  {
    ValidateOptions vo;
    auto viol = validate(pop, vo);
    if (!viol.empty()) throw ValidationError(std::move(viol));
  }
  CoverageResult out;
  SearchOptions search = opts.search;
  search.seed = mix_seed(opts.seed, 0xD1CEull);
  out.population =
      identified_set(pop, lambda, opts.shape, opts.use_finer, search).aggregate;
  out.reps = opts.reps;

  for (int rep = 0; rep < opts.reps; ++rep) {
    const std::uint64_t rep_seed = mix_seed(opts.seed, 1000003ull * (rep + 1));
    MicroSample sample = generate(spec, opts.n_per_group, rep_seed);
    AggregateDataset ds = aggregate_micro(sample, spec, finer);
    SearchOptions rs = opts.search;
    rs.seed = mix_seed(rep_seed, 0xB0B0ull);
    auto rep_report =
        inference::ci_identified_set(ds, lambda, opts.alpha, opts.shape, opts.use_finer, rs);

    const Interval& point = rep_report.point.aggregate;
    const bool cov = rep_report.d_ci.contains(out.population, 1e-12);
    const double err = std::max(std::abs(point.lower - out.population.lower),
                                std::abs(point.upper - out.population.upper));
    out.covered.push_back(cov);
    out.rep_max_err.push_back(err);
    out.rep_point.push_back(point);
    out.rep_ci.push_back(rep_report.d_ci);
    out.max_err_lower = std::max(out.max_err_lower,
                                 std::abs(point.lower - out.population.lower));
    out.max_err_upper = std::max(out.max_err_upper,
                                 std::abs(point.upper - out.population.upper));
  }
  long long hits = 0;
  for (const bool c : out.covered) hits += c ? 1 : 0;
  out.coverage_rate = static_cast<double>(hits) / static_cast<double>(opts.reps);
  return out;
}

namespace {

double frac(double x) { return x - std::floor(x); }

// low-discrepancy profile in [0,1): golden-ratio style rotations keep the
// marginal spreads even without a random draw
double seq1(int g) { return frac((g + 1) * 0.618033988749894848); }
double seq2(int g) { return frac((g + 1) * 0.414213562373095049); }
double seq3(int g) { return frac((g + 1) * 0.732050807568877294); }

}  // namespace

JointSpec exercise_preset(int id) {
  if (id < 1 || id > 3) throw std::invalid_argument("preset id must be 1, 2, or 3");
  const int G = 50;
  JointSpec spec;
  spec.support = CovariateSupport::product({{0.0, 1.0}, {0.0, 1.0}, {0.0, 1.0}});
  spec.range = {0.0, 1.0};
  spec.binary_outcome = true;
  const int K = spec.support.num_points();

  spec.group_ids.resize(G);
  spec.joints.resize(G, K);
  spec.cond_means.resize(G, K);
  spec.shares = Eigen::VectorXd::Constant(G, 1.0 / G);

  for (int g = 0; g < G; ++g) {
    char buf[8];
    std::snprintf(buf, sizeof(buf), "g%02d", g + 1);
    spec.group_ids[g] = buf;

    double mw, me, ml;
    switch (id) {
      case 1:
        mw = 0.50 + 0.45 * seq1(g);
        me = 0.20 + 0.40 * seq2(g);
        ml = 0.02 + 0.23 * seq3(g);
        break;
      case 2:
        mw = 0.90 + 0.095 * seq1(g);
        me = 0.005 + 0.12 * seq2(g);
        ml = 0.004 + 0.06 * seq3(g);
        break;
      default:  // 3: first covariate split between near-0 and near-1 groups
        mw = (g % 2 == 0) ? 0.02 + 0.12 * seq1(g) : 0.86 + 0.12 * seq1(g);
        me = 0.20 + 0.40 * seq2(g);
        ml = 0.02 + 0.23 * seq3(g);
        break;
    }

    for (int k = 0; k < K; ++k) {
      const double w = spec.support.points()(k, 0);
      const double e = spec.support.points()(k, 1);
      const double l = spec.support.points()(k, 2);
      // independent product joint with the chosen Bernoulli marginals
      spec.joints(g, k) = (w == 1.0 ? mw : 1.0 - mw) * (e == 1.0 ? me : 1.0 - me) *
                          (l == 1.0 ? ml : 1.0 - ml);
      // one conditional-mean surface for all exercises: increasing in the
      // first covariate, decreasing in the other two
      spec.cond_means(g, k) = 0.55 + 0.18 * w - 0.22 * e - 0.16 * l;
    }
  }
  return spec;
}

}  // namespace aggbounds::sim
