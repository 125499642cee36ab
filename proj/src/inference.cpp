#include "aggbounds/inference.hpp"

#include "aggbounds/feasible.hpp"
#include "aggbounds/linprog.hpp"

#include <boost/math/distributions/beta.hpp>
#include <boost/math/distributions/normal.hpp>

#include <Eigen/SVD>

#include <algorithm>
#include <cmath>

namespace aggbounds::inference {

namespace {

long long require_count(const GroupRecord& g) {
  if (!g.count || *g.count <= 0)
    throw ValidationError({{"group " + g.id,
                            "confidence intervals need observation counts; the exact binomial "
                            "intervals are built from counts, not proportions"}});
  return *g.count;
}

double require_se(const GroupRecord& g, const std::optional<double>& se, const std::string& what) {
  if (!se)
    throw ValidationError(
        {{"group " + g.id, what +
              " has no standard error; non-binary outcomes need observed sample standard errors "
              "for the normal intervals"}});
  return *se;
}

long long successes_from(double prob, long long n, const std::string& where) {
  const double x = prob * static_cast<double>(n);
  const long long r = std::llround(x);
  if (r < 0 || r > n)
    throw ValidationError({{where, "proportion inconsistent with the count"}});
  return r;
}

Interval clip(Interval iv, double lo, double hi) {
  return {std::min(std::max(iv.lower, lo), hi), std::min(std::max(iv.upper, lo), hi)};
}

}  // namespace

Interval clopper_pearson(long long x, long long n, double level) {
  if (n < 1 || x < 0 || x > n) throw std::invalid_argument("clopper_pearson: need 0 <= x <= n, n >= 1");
  if (!(level > 0.0 && level < 1.0)) throw std::invalid_argument("clopper_pearson: level in (0,1)");
  const double a = 1.0 - level;
  if (x == 0) return {0.0, 1.0 - std::pow(a / 2.0, 1.0 / static_cast<double>(n))};
  if (x == n) return {std::pow(a / 2.0, 1.0 / static_cast<double>(n)), 1.0};
  const boost::math::beta_distribution<double> lo_dist(static_cast<double>(x),
                                                       static_cast<double>(n - x + 1));
  const boost::math::beta_distribution<double> hi_dist(static_cast<double>(x + 1),
                                                       static_cast<double>(n - x));
  return {boost::math::quantile(lo_dist, a / 2.0), boost::math::quantile(hi_dist, 1.0 - a / 2.0)};
}

Interval normal_mean_ci(double mean, double se, double level) {
  if (se < 0.0 || !std::isfinite(se)) throw std::invalid_argument("normal_mean_ci: bad se");
  if (!(level > 0.0 && level < 1.0)) throw std::invalid_argument("normal_mean_ci: level in (0,1)");
  if (se == 0.0) return {mean, mean};
  const boost::math::normal_distribution<double> nd;
  const double z = boost::math::quantile(nd, 0.5 + level / 2.0);
  return {mean - z * se, mean + z * se};
}

double bonferroni_level(double alpha, long long M) {
  if (M < 1) throw std::invalid_argument("bonferroni_level: M >= 1");
  if (!(alpha > 0.0 && alpha < 1.0)) throw std::invalid_argument("bonferroni_level: alpha in (0,1)");
  return 1.0 - alpha / static_cast<double>(M);
}

long long observation_count(const AggregateDataset& ds, bool use_finer) {
  long long M = 0;
  for (const auto& g : ds.groups) {
    M += 2 + ds.support.marginal_dim();  // share, y_mean, every marginal entry
    if (use_finer) M += static_cast<long long>(g.finer.size());
  }
  return M;
}

namespace {

// chart of the simplex alone: base + span{sum-zero directions}; the CI bands
// replace the marginal equalities, so only sum-to-one stays exact
feasible::FeasibleSetChart simplex_chart(const Eigen::VectorXd& base) {
  const int K = static_cast<int>(base.size());
  Eigen::MatrixXd ones(1, K);
  ones.setOnes();
  Eigen::JacobiSVD<Eigen::MatrixXd> svd(ones, Eigen::ComputeFullV);
  feasible::FeasibleSetChart c;
  c.base = base;
  c.basis = svd.matrixV().rightCols(K - 1);
  return c;
}

struct GroupIntervals {
  Interval share;
  Interval y_mean;
  Eigen::VectorXd marg_lo, marg_hi;           // stacked like GroupRecord.marginals
  std::vector<Interval> finer_y;              // parallel to group.finer
  std::vector<Interval> finer_prob;           // CI of the conditioning marginal
};

}  // namespace

ConfidenceReport ci_identified_set(const AggregateDataset& ds, const Eigen::VectorXd& lambda,
                                   double alpha, const ShapeConstraintSet* shape, bool use_finer,
                                   const SearchOptions& opts) {
  check_weights(lambda, ds.support);
  const auto& s = ds.support;

  ConfidenceReport rep;
  rep.alpha = alpha;
  rep.M = observation_count(ds, use_finer);
  rep.level_each = bonferroni_level(alpha, rep.M);

  long long n_total = 0;
  for (const auto& g : ds.groups) n_total += require_count(g);

  // step 1: a level-(1 - alpha/M) interval around every observation
  std::vector<GroupIntervals> per_group(ds.groups.size());
  for (size_t gi = 0; gi < ds.groups.size(); ++gi) {
    const auto& g = ds.groups[gi];
    auto& iv = per_group[gi];
    const long long n_g = *g.count;

    iv.share = clopper_pearson(n_g, n_total, rep.level_each);
    rep.intervals.push_back({"group_share", g.id, -1, 0.0, g.share, iv.share, "clopper_pearson"});

    if (ds.binary_outcome) {
      iv.y_mean = clopper_pearson(successes_from(g.y_mean, n_g, "group " + g.id), n_g,
                                  rep.level_each);
      rep.intervals.push_back({"y_mean", g.id, -1, 0.0, g.y_mean, iv.y_mean, "clopper_pearson"});
    } else {
      iv.y_mean = clip(normal_mean_ci(g.y_mean, require_se(g, g.y_se, "y_mean"), rep.level_each),
                       ds.range.lo, ds.range.hi);
      rep.intervals.push_back({"y_mean", g.id, -1, 0.0, g.y_mean, iv.y_mean, "normal"});
    }

    iv.marg_lo.resize(s.marginal_dim());
    iv.marg_hi.resize(s.marginal_dim());
    for (int l = 0; l < s.num_covariates(); ++l)
      for (size_t v = 0; v < s.values(l).size(); ++v) {
        const int row = s.marginal_row(l, static_cast<int>(v));
        const double m = g.marginals(row);
        const Interval ci = clopper_pearson(
            successes_from(m, n_g, "group " + g.id), n_g, rep.level_each);
        iv.marg_lo(row) = ci.lower;
        iv.marg_hi(row) = ci.upper;
        rep.intervals.push_back(
            {"marginal", g.id, l, s.values(l)[v], m, ci, "clopper_pearson"});
      }

    if (use_finer) {
      for (const auto& fm : g.finer) {
        Interval yci;
        std::string method;
        if (ds.binary_outcome) {
          if (!fm.count)
            throw ValidationError({{"group " + g.id, "finer moment lacks a count; binary-outcome "
                                                     "intervals are built from counts"}});
          yci = clopper_pearson(successes_from(fm.y_mean, *fm.count, "group " + g.id), *fm.count,
                                rep.level_each);
          method = "clopper_pearson";
        } else {
          yci = clip(normal_mean_ci(fm.y_mean, require_se(g, fm.y_se, "finer moment"),
                                    rep.level_each),
                     ds.range.lo, ds.range.hi);
          method = "normal";
        }
        iv.finer_y.push_back(yci);
        const int row = s.marginal_row(fm.covariate, s.value_index(fm.covariate, fm.value));
        iv.finer_prob.push_back({iv.marg_lo(row), iv.marg_hi(row)});
        rep.intervals.push_back({"finer_y_mean", g.id, fm.covariate, fm.value, fm.y_mean, yci,
                                 method});
      }
    }
  }

  // point estimate with the same seeds; its witnesses seed the relaxed search
  rep.point = identified_set(ds, lambda, shape, use_finer, opts);

  const Eigen::MatrixXd A = indicator_matrix(s);
  double dci_lo = 0.0, dci_hi = 0.0;
  for (size_t gi = 0; gi < ds.groups.size(); ++gi) {
    const auto& g = ds.groups[gi];
    const auto& iv = per_group[gi];
    SearchOptions o = opts;
    o.seed = mix_seed(opts.seed, static_cast<std::uint64_t>(gi));

    // steps 2a-2c: marginal bands on p, mean band, finer product bands
    auto slack = feasible::min_slack_joint(s, g);
    const auto chart = simplex_chart(slack.base.p);
    ChartSearchProblem sp;
    sp.chart = &chart;
    for (const auto& st : feasible::sample_starts(feasible::chart(s, slack.base),
                                                  o.n_random_starts, o.seed))
      sp.starts.push_back(st.p);
    sp.starts.push_back(rep.point.groups[gi].lower_witness.p);
    sp.starts.push_back(rep.point.groups[gi].upper_witness.p);
    sp.band_violation = [&A, &iv](const Eigen::VectorXd& p) {
      const Eigen::VectorXd m = A * p;
      double viol = 0.0;
      for (int r = 0; r < m.size(); ++r) {
        viol += std::max(0.0, iv.marg_lo(r) - m(r));
        viol += std::max(0.0, m(r) - iv.marg_hi(r));
      }
      return viol;
    };

    InnerProblem pr;
    pr.lambda = lambda;
    pr.range = ds.range;
    pr.y_mean = g.y_mean;
    pr.y_band = clip(iv.y_mean, ds.range.lo, ds.range.hi);
    if (shape && !shape->empty()) {
      auto [S, a] = shape->rows_for(g.id);
      pr.S = std::move(S);
      pr.a = std::move(a);
    } else {
      pr.S.resize(0, s.num_points());
      pr.a.resize(0);
    }
    if (use_finer) {
      for (size_t fi = 0; fi < g.finer.size(); ++fi) {
        const auto& fm = g.finer[fi];
        InnerProblem::FinerRow row;
        row.covariate = fm.covariate;
        row.value = fm.value;
        row.y_cond = fm.y_mean;
        row.prob = g.marginal(s, fm.covariate, fm.value);
        row.y_cond_band = iv.finer_y[fi];
        row.prob_band = iv.finer_prob[fi];
        row.mask = Eigen::VectorXd::Zero(s.num_points());
        for (int k = 0; k < s.num_points(); ++k)
          if (s.points()(k, fm.covariate) == fm.value) row.mask(k) = 1.0;
        pr.finer.push_back(std::move(row));
      }
    }

    pr.direction = Direction::min;
    sp.inner = [&pr](const Eigen::VectorXd& p) {
      pr.p = p;
      return inner_bound(pr);
    };
    auto rl = minimize_over_chart(sp, o);
    pr.direction = Direction::max;
    sp.inner = [&pr](const Eigen::VectorXd& p) {
      pr.p = p;
      InnerResult r = inner_bound(pr);
      r.value = -r.value;
      return r;
    };
    auto ru = minimize_over_chart(sp, o);
    if (!rl.found || !ru.found)
      throw NumericalError("group " + g.id +
                           ": relaxed confidence program infeasible; this cannot happen when the "
                           "point estimate exists");

    // containment of the point estimate is structural: its witnesses are
    // relaxed-feasible starts, so the relaxed optimum can only be wider
    const GroupCI gci{g.id, rl.value, -ru.value};
    rep.per_group.push_back(gci);

    // step 3: share endpoints that widen the aggregate
    dci_lo += std::min(iv.share.lower * gci.lower, iv.share.upper * gci.lower);
    dci_hi += std::max(iv.share.lower * gci.upper, iv.share.upper * gci.upper);
  }
  rep.d_ci = {dci_lo, dci_hi};
  return rep;
}

}  // namespace aggbounds::inference
