#include "aggbounds/bounds.hpp"

#include "aggbounds/linprog.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

namespace aggbounds {

namespace {

constexpr double kPenalty = 1e3;
constexpr double kInfeasibleScore = 1e8;  // dominates any real bound value
constexpr double kZeroClamp = 1e-12;

// clamp tiny/negative mass to zero and renormalize; the inner formulas assume
// an exact simplex point
Eigen::VectorXd normalize_joint(const Eigen::VectorXd& p) {
  Eigen::VectorXd pc = p;
  for (int k = 0; k < pc.size(); ++k)
    if (pc(k) < kZeroClamp) pc(k) = 0.0;
  const double s = pc.sum();
  if (s <= 0.0) throw std::invalid_argument("inner: joint has no mass");
  return pc / s;
}

std::vector<int> ratio_order(const Eigen::VectorXd& lambda, const Eigen::VectorXd& pc) {
  std::vector<int> pos;
  pos.reserve(pc.size());
  for (int k = 0; k < pc.size(); ++k)
    if (pc(k) > 0.0) pos.push_back(k);
  std::sort(pos.begin(), pos.end(), [&](int i, int j) {
    const double ri = lambda(i) / pc(i), rj = lambda(j) / pc(j);
    if (ri != rj) return ri > rj;
    return i < j;
  });
  return pos;
}

}  // namespace

InnerResult inner_closed_form(const Eigen::VectorXd& lambda, const Eigen::VectorXd& p,
                              double y_mean, OutcomeRange range, Direction direction) {
  if (lambda.size() != p.size())
    throw std::invalid_argument("inner: lambda and p must have equal length");
  const Eigen::VectorXd pc = normalize_joint(p);
  const int K = static_cast<int>(pc.size());
  const double lo = range.lo, hi = range.hi, R = range.width();
  const double yb = std::min(std::max(y_mean, lo), hi);
  const bool minimize = direction == Direction::min;

  InnerResult out;
  out.feasible = true;
  out.c.resize(K);

  // zero-mass cells are decoupled from the mean constraint; take the endpoint
  // favored by the weight's sign
  for (int k = 0; k < K; ++k)
    if (pc(k) == 0.0) out.c(k) = (minimize == (lambda(k) >= 0.0)) ? lo : hi;

  // remaining cells: greedy fill in ratio order with one pivot cell binding
  // the mean constraint
  const std::vector<int> pos = ratio_order(lambda, pc);
  const double target = minimize ? hi - yb : yb - lo;
  double cum_prev = 0.0;
  for (const int k : pos) {
    const double cum = cum_prev + pc(k);
    double ck;
    if (R * cum <= target) {
      ck = minimize ? lo : hi;
    } else if (R * cum_prev <= target) {
      ck = minimize ? (yb - lo + R * (cum - 1.0)) / pc(k) + lo
                    : (yb - lo - R * cum_prev) / pc(k) + lo;
      ck = std::min(std::max(ck, lo), hi);
    } else {
      ck = minimize ? hi : lo;
    }
    out.c(k) = ck;
    cum_prev = cum;
  }
  out.value = lambda.dot(out.c);
  return out;
}

namespace {

// exact optimum of the unconstrained inner problem when the mean target is an
// interval: the LP value is piecewise linear in the target (convex for min,
// concave for max), so scanning the kinks and the band endpoints suffices
InnerResult scan_mean_band(const Eigen::VectorXd& lambda, const Eigen::VectorXd& p,
                           Interval band, OutcomeRange range, Direction direction) {
  const Eigen::VectorXd pc = normalize_joint(p);
  const double lo = range.lo, hi = range.hi, R = range.width();
  const double yL = std::max(band.lower, lo), yU = std::min(band.upper, hi);
  if (yL > yU) return {};  // band misses the outcome range entirely

  std::vector<double> cand = {yL, yU};
  const std::vector<int> pos = ratio_order(lambda, pc);
  double cum = 0.0;
  for (const int k : pos) {
    cum += pc(k);
    const double kink = direction == Direction::min ? hi - R * cum : lo + R * cum;
    if (kink > yL && kink < yU) cand.push_back(kink);
  }

  InnerResult best;
  for (const double y : cand) {
    InnerResult r = inner_closed_form(lambda, pc, y, range, direction);
    const bool better = direction == Direction::min ? r.value < best.value : r.value > best.value;
    if (!best.feasible || better) best = std::move(r);
  }
  return best;
}

Interval finer_rhs(const InnerProblem::FinerRow& row) {
  if (row.y_cond_band || row.prob_band) {
    const Interval yb = row.y_cond_band.value_or(Interval{row.y_cond, row.y_cond});
    const Interval pb = row.prob_band.value_or(Interval{row.prob, row.prob});
    return {yb.lower * pb.lower, yb.upper * pb.upper};
  }
  const double v = row.y_cond * row.prob;
  return {v, v};
}

}  // namespace

InnerResult inner_lp(const InnerProblem& pr) {
  const int K = static_cast<int>(pr.p.size());
  if (pr.lambda.size() != K)
    throw std::invalid_argument("inner: lambda and p must have equal length");
  const Eigen::VectorXd pc = normalize_joint(pr.p);

  lp::Problem lp;
  lp.c = pr.lambda;
  lp.sense = pr.direction == Direction::max ? lp::Sense::maximize : lp::Sense::minimize;
  lp.lo = Eigen::VectorXd::Constant(K, pr.range.lo);
  lp.hi = Eigen::VectorXd::Constant(K, pr.range.hi);

  std::vector<Eigen::RowVectorXd> eq_rows, le_rows;
  std::vector<double> eq_rhs, le_rhs;
  auto add = [&](const Eigen::RowVectorXd& row, Interval rhs) {
    if (rhs.lower == rhs.upper) {
      eq_rows.push_back(row);
      eq_rhs.push_back(rhs.lower);
    } else {
      le_rows.push_back(row);
      le_rhs.push_back(rhs.upper);
      le_rows.push_back(-row);
      le_rhs.push_back(-rhs.lower);
    }
  };

  // a band is intersected with the achievable means (exact, since c lives in
  // the range box); a point target outside the range is honestly infeasible
  const Interval mean_rhs =
      pr.y_band ? Interval{std::max(pr.y_band->lower, pr.range.lo),
                           std::min(pr.y_band->upper, pr.range.hi)}
                : Interval{pr.y_mean, pr.y_mean};
  if (mean_rhs.lower > mean_rhs.upper) return {};
  add(pc.transpose(), mean_rhs);

  for (const auto& row : pr.finer) {
    if (row.mask.size() != K) throw std::invalid_argument("inner: finer mask has wrong length");
    add(row.mask.cwiseProduct(pc).transpose(), finer_rhs(row));
  }

  lp.A_eq.resize(static_cast<long>(eq_rows.size()), K);
  lp.b_eq.resize(static_cast<long>(eq_rows.size()));
  for (size_t i = 0; i < eq_rows.size(); ++i) {
    lp.A_eq.row(static_cast<long>(i)) = eq_rows[i];
    lp.b_eq(static_cast<long>(i)) = eq_rhs[i];
  }
  const long n_le = static_cast<long>(le_rows.size()) + pr.S.rows();
  lp.A_le.resize(n_le, K);
  lp.b_le.resize(n_le);
  for (size_t i = 0; i < le_rows.size(); ++i) {
    lp.A_le.row(static_cast<long>(i)) = le_rows[i];
    lp.b_le(static_cast<long>(i)) = le_rhs[i];
  }
  if (pr.S.rows() > 0) {
    if (pr.S.cols() != K) throw std::invalid_argument("inner: shape rows have wrong width");
    lp.A_le.bottomRows(pr.S.rows()) = pr.S;
    lp.b_le.tail(pr.a.size()) = pr.a;
  }

  auto sol = lp::solve(lp);
  if (sol.status == lp::Status::infeasible) return {};
  if (!sol.ok())
    throw NumericalError("inner LP did not converge (status " +
                         std::to_string(static_cast<int>(sol.status)) + ")");
  InnerResult out;
  out.feasible = true;
  out.value = sol.value;
  out.c = sol.x;
  return out;
}

InnerResult inner_bound(const InnerProblem& pr) {
  if (!pr.constrained()) {
    if (pr.y_band && pr.y_band->lower != pr.y_band->upper)
      return scan_mean_band(pr.lambda, pr.p, *pr.y_band, pr.range, pr.direction);
    const double y = pr.y_band ? pr.y_band->lower : pr.y_mean;
    return inner_closed_form(pr.lambda, pr.p, y, pr.range, pr.direction);
  }
  return inner_lp(pr);
}

namespace {

using ObjectiveFn = std::function<double(const Eigen::VectorXd&)>;

std::pair<Eigen::VectorXd, double> nelder_mead(const ObjectiveFn& f, const Eigen::VectorXd& w0,
                                               const Eigen::VectorXd& h,
                                               const SearchOptions& opts) {
  const int d = static_cast<int>(w0.size());
  const int n = d + 1;
  std::vector<Eigen::VectorXd> x(n);
  std::vector<double> fx(n);
  x[0] = w0;
  for (int i = 1; i < n; ++i) {
    x[i] = w0;
    x[i](i - 1) += h(i - 1);
  }
  for (int i = 0; i < n; ++i) fx[i] = f(x[i]);

  std::vector<int> ord(n);
  for (int iter = 0; iter < opts.max_iters_per_start; ++iter) {
    std::iota(ord.begin(), ord.end(), 0);
    std::sort(ord.begin(), ord.end(), [&](int a, int b) {
      if (fx[a] != fx[b]) return fx[a] < fx[b];
      return a < b;
    });
    const int b = ord[0], sw = ord[n - 2], wo = ord[n - 1];
    if (fx[wo] - fx[b] <= opts.convergence_tol) break;
    double diam = 0.0;
    for (int i = 0; i < n; ++i)
      diam = std::max(diam, (x[i] - x[b]).cwiseAbs().maxCoeff());
    if (diam <= opts.shrink_tol) break;

    Eigen::VectorXd cen = Eigen::VectorXd::Zero(d);
    for (int i = 0; i < n; ++i)
      if (i != wo) cen += x[i];
    cen /= static_cast<double>(n - 1);

    const Eigen::VectorXd xr = cen + (cen - x[wo]);
    const double fr = f(xr);
    if (fr < fx[b]) {
      const Eigen::VectorXd xe = cen + 2.0 * (cen - x[wo]);
      const double fe = f(xe);
      if (fe < fr) {
        x[wo] = xe;
        fx[wo] = fe;
      } else {
        x[wo] = xr;
        fx[wo] = fr;
      }
    } else if (fr < fx[sw]) {
      x[wo] = xr;
      fx[wo] = fr;
    } else {
      const Eigen::VectorXd xc =
          fr < fx[wo] ? cen + 0.5 * (xr - cen) : cen + 0.5 * (x[wo] - cen);
      const double fc = f(xc);
      if (fc < std::min(fr, fx[wo])) {
        x[wo] = xc;
        fx[wo] = fc;
      } else {
        for (int i = 0; i < n; ++i) {
          if (i == b) continue;
          x[i] = x[b] + 0.5 * (x[i] - x[b]);
          fx[i] = f(x[i]);
        }
      }
    }
  }
  int best = 0;
  for (int i = 1; i < n; ++i)
    if (fx[i] < fx[best]) best = i;
  return {x[best], fx[best]};
}

void coordinate_polish(const ObjectiveFn& f, Eigen::VectorXd* w, double* fw, double step0,
                       int max_evals) {
  const int d = static_cast<int>(w->size());
  double s = step0;
  int evals = 0;
  while (s > 1e-7 && evals < max_evals) {
    bool improved = false;
    for (int i = 0; i < d && evals < max_evals; ++i) {
      for (const double sign : {1.0, -1.0}) {
        Eigen::VectorXd wt = *w;
        wt(i) += sign * s;
        const double ft = f(wt);
        ++evals;
        if (ft < *fw) {
          *w = std::move(wt);
          *fw = ft;
          improved = true;
          break;
        }
      }
    }
    if (!improved) s *= 0.5;
  }
}

}  // namespace

ChartSearchResult minimize_over_chart(const ChartSearchProblem& problem,
                                      const SearchOptions& opts) {
  const auto& chart = *problem.chart;
  const int d = chart.dim();

  auto report_at = [&](const Eigen::VectorXd& w) -> ChartSearchResult {
    Eigen::VectorXd p = chart.point(w);
    for (int k = 0; k < p.size(); ++k)
      if (p(k) < 0.0) p(k) = 0.0;
    const double s = p.sum();
    if (s <= 0.0) return {};
    InnerResult r = problem.inner(p / s);
    if (!r.feasible) return {};
    ChartSearchResult out;
    out.found = true;
    out.value = r.value;
    out.p = std::move(p);
    out.c = std::move(r.c);
    return out;
  };

  if (d == 0) return report_at(Eigen::VectorXd::Zero(0));

  const ObjectiveFn f = [&](const Eigen::VectorXd& w) -> double {
    const Eigen::VectorXd p = chart.point(w);
    double neg = 0.0;
    Eigen::VectorXd pt = p;
    for (int k = 0; k < pt.size(); ++k)
      if (pt(k) < 0.0) {
        neg -= pt(k);
        pt(k) = 0.0;
      }
    const double s = pt.sum();
    if (s <= kZeroClamp) return 1e9 + kPenalty * neg;
    pt /= s;
    double viol = neg;
    if (problem.band_violation) viol += problem.band_violation(pt);
    const InnerResult r = problem.inner(pt);
    if (!r.feasible) return kInfeasibleScore + kPenalty * viol;
    return r.value + kPenalty * viol;
  };

  // start coordinates and a per-axis simplex edge from their spread
  std::vector<Eigen::VectorXd> ws;
  ws.reserve(problem.starts.size());
  Eigen::VectorXd wlo = Eigen::VectorXd::Constant(d, lp::kInf);
  Eigen::VectorXd whi = Eigen::VectorXd::Constant(d, -lp::kInf);
  for (const auto& p : problem.starts) {
    Eigen::VectorXd w = chart.coords(p);
    wlo = wlo.cwiseMin(w);
    whi = whi.cwiseMax(w);
    ws.push_back(std::move(w));
  }
  if (ws.empty()) ws.push_back(Eigen::VectorXd::Zero(d));
  Eigen::VectorXd h(d);
  for (int i = 0; i < d; ++i) {
    const double spread = std::isfinite(whi(i) - wlo(i)) ? whi(i) - wlo(i) : 0.0;
    h(i) = std::max(opts.initial_step * spread, 1e-4);
  }

  Eigen::VectorXd best_w = ws[0];
  double best_f = std::numeric_limits<double>::infinity();
  for (const auto& w0 : ws) {
    auto [w, fw] = nelder_mead(f, w0, h, opts);
    if (fw < best_f) {
      best_f = fw;
      best_w = std::move(w);
    }
  }
  coordinate_polish(f, &best_w, &best_f, h.maxCoeff() * 0.5, 200 * d + 400);

  if (best_f >= kInfeasibleScore * 0.5) return {};  // nothing feasible anywhere
  return report_at(best_w);
}

namespace {

InnerProblem make_inner(const GroupRecord& g, const CovariateSupport& support,
                        const Eigen::VectorXd& lambda, OutcomeRange range,
                        const ShapeConstraintSet* shape, bool use_finer) {
  InnerProblem pr;
  pr.lambda = lambda;
  pr.range = range;
  pr.y_mean = g.y_mean;
  if (shape && !shape->empty()) {
    auto [S, a] = shape->rows_for(g.id);
    if (S.rows() > 0 && S.cols() != support.num_points())
      throw std::invalid_argument("shape rows sized for a different support");
    pr.S = std::move(S);
    pr.a = std::move(a);
  } else {
    pr.S.resize(0, support.num_points());
    pr.a.resize(0);
  }
  if (use_finer) {
    for (const auto& fm : g.finer) {
      InnerProblem::FinerRow row;
      row.covariate = fm.covariate;
      row.value = fm.value;
      row.y_cond = fm.y_mean;
      row.prob = g.marginal(support, fm.covariate, fm.value);
      row.mask = Eigen::VectorXd::Zero(support.num_points());
      for (int k = 0; k < support.num_points(); ++k)
        if (support.points()(k, fm.covariate) == fm.value) row.mask(k) = 1.0;
      pr.finer.push_back(std::move(row));
    }
  }
  return pr;
}

}  // namespace

GroupBounds group_bounds(const GroupRecord& group, const CovariateSupport& support,
                         const Eigen::VectorXd& lambda, OutcomeRange range,
                         const ShapeConstraintSet* shape, bool use_finer,
                         const SearchOptions& opts) {
  check_weights(lambda, support);
  auto slack = feasible::min_slack_joint(support, group);
  if (opts.strict && slack.total_slack > feasible::kSlackTol)
    throw ValidationError({{"group " + group.id,
                            "marginals are mutually inconsistent on this support (total slack " +
                                std::to_string(slack.total_slack) + "); feasible set is empty"}});
  const auto chart = feasible::chart(support, slack.base);
  const auto starts = feasible::sample_starts(chart, opts.n_random_starts, opts.seed);

  ChartSearchProblem sp;
  sp.chart = &chart;
  for (const auto& st : starts) sp.starts.push_back(st.p);

  InnerProblem pr = make_inner(group, support, lambda, range, shape, use_finer);
  GroupBounds out;
  out.group = group.id;

  pr.direction = Direction::min;
  sp.inner = [&pr](const Eigen::VectorXd& p) {
    pr.p = p;
    return inner_bound(pr);
  };
  auto rl = minimize_over_chart(sp, opts);
  if (!rl.found)
    throw NumericalError("group " + group.id +
                         ": no joint admits the restrictions; identified set is empty");
  out.lower = rl.value;
  out.lower_witness = {std::move(rl.p), std::move(rl.c)};

  pr.direction = Direction::max;
  sp.inner = [&pr](const Eigen::VectorXd& p) {
    pr.p = p;
    InnerResult r = inner_bound(pr);
    r.value = -r.value;  // search minimizes
    return r;
  };
  auto ru = minimize_over_chart(sp, opts);
  if (!ru.found)
    throw NumericalError("group " + group.id +
                         ": no joint admits the restrictions; identified set is empty");
  out.upper = -ru.value;
  out.upper_witness = {std::move(ru.p), std::move(ru.c)};
  return out;
}

BoundResult identified_set(const AggregateDataset& dataset, const Eigen::VectorXd& lambda,
                           const ShapeConstraintSet* shape, bool use_finer,
                           const SearchOptions& opts) {
  if (dataset.groups.empty()) throw std::invalid_argument("identified_set: no groups");
  BoundResult out;
  double lo = 0.0, hi = 0.0;
  for (size_t i = 0; i < dataset.groups.size(); ++i) {
    const auto& g = dataset.groups[i];
    SearchOptions o = opts;
    o.seed = mix_seed(opts.seed, static_cast<std::uint64_t>(i));
    GroupBounds gb = group_bounds(g, dataset.support, lambda, dataset.range, shape, use_finer, o);
    if (gb.lower > gb.upper + 1e-8)
      throw NumericalError("group " + g.id + ": lower bound exceeds upper bound; search failed");
    lo += g.share * gb.lower;
    hi += g.share * gb.upper;
    out.groups.push_back(std::move(gb));
  }
  out.aggregate = {lo, hi};
  return out;
}

JointKnownRange joint_known_range(const GroupRecord& group, const CovariateSupport& support,
                                  const Eigen::VectorXd& lambda, OutcomeRange range,
                                  const SearchOptions& opts) {
  check_weights(lambda, support);
  auto slack = feasible::min_slack_joint(support, group);
  const auto chart = feasible::chart(support, slack.base);
  const auto starts = feasible::sample_starts(chart, opts.n_random_starts, opts.seed);

  ChartSearchProblem sp;
  sp.chart = &chart;
  for (const auto& st : starts) sp.starts.push_back(st.p);

  InnerProblem pr = make_inner(group, support, lambda, range, nullptr, false);

  auto run = [&](Direction dir, bool negate) -> double {
    pr.direction = dir;
    sp.inner = [&pr, negate](const Eigen::VectorXd& p) {
      pr.p = p;
      InnerResult r = inner_bound(pr);
      if (negate) r.value = -r.value;
      return r;
    };
    auto res = minimize_over_chart(sp, opts);
    if (!res.found)
      throw NumericalError("group " + group.id + ": joint-known range search failed");
    return negate ? -res.value : res.value;
  };

  JointKnownRange out;
  out.L_range = {run(Direction::min, false), run(Direction::min, true)};
  out.U_range = {run(Direction::max, false), run(Direction::max, true)};
  return out;
}

std::uint64_t mix_seed(std::uint64_t seed, std::uint64_t stream) {
  std::uint64_t z = seed + 0x9E3779B97F4A7C15ull * (stream + 1);
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ull;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBull;
  return z ^ (z >> 31);
}

}  // namespace aggbounds
