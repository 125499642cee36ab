#include "aggbounds/feasible.hpp"

#include "aggbounds/linprog.hpp"

#include <Eigen/SVD>

#include <cmath>
#include <random>

namespace aggbounds::feasible {

namespace {

// 53-bit uniform in [0,1); we avoid std::uniform_real_distribution so streams
// are identical across standard library implementations
double unit_uniform(std::mt19937_64& rng) {
  return static_cast<double>(rng() >> 11) * 0x1.0p-53;
}

Eigen::VectorXd clamp_joint(Eigen::VectorXd p) {
  for (int k = 0; k < p.size(); ++k)
    if (p(k) < 0.0) p(k) = 0.0;
  return p;
}

}  // namespace

SlackResult min_slack_joint(const CovariateSupport& s, const GroupRecord& g) {
  const int K = s.num_points();
  const int L = s.num_covariates();
  if (g.marginals.size() != s.marginal_dim())
    throw std::invalid_argument("group " + g.id + ": marginal vector has wrong length");

  // variables: p (K, in [0,1]), then signed slacks v+ / v- (L*K each, >= 0).
  // one slack pair per (covariate, support point): the marginal of x_{k,l}
  // must be reproduced by sum_j 1{x_{j,l} = x_{k,l}} p_j up to v+ - v-.
  const int n = K + 2 * L * K;
  lp::Problem prob;
  prob.c = Eigen::VectorXd::Zero(n);
  prob.c.tail(2 * L * K).setOnes();
  prob.lo = Eigen::VectorXd::Zero(n);
  prob.hi = Eigen::VectorXd::Constant(n, lp::kInf);
  prob.hi.head(K).setOnes();

  prob.A_eq = Eigen::MatrixXd::Zero(1 + L * K, n);
  prob.b_eq = Eigen::VectorXd::Zero(1 + L * K);
  prob.A_eq.row(0).head(K).setOnes();
  prob.b_eq(0) = 1.0;
  for (int l = 0; l < L; ++l)
    for (int k = 0; k < K; ++k) {
      const int r = 1 + l * K + k;
      const double v = s.points()(k, l);
      for (int j = 0; j < K; ++j)
        if (s.points()(j, l) == v) prob.A_eq(r, j) = 1.0;
      prob.A_eq(r, K + l * K + k) = 1.0;            // v+
      prob.A_eq(r, K + L * K + l * K + k) = -1.0;   // v-
      prob.b_eq(r) = g.marginal(s, l, v);
    }

  auto sol = lp::solve(prob);
  if (!sol.ok())
    throw NumericalError("group " + g.id + ": slack LP failed (status " +
                         std::to_string(static_cast<int>(sol.status)) + ")");

  SlackResult out;
  out.base.p = clamp_joint(sol.x.head(K));
  out.total_slack = std::max(sol.value, 0.0);
  return out;
}

FeasibleSetChart chart(const CovariateSupport& s, const FeasibleJoint& base) {
  const int K = s.num_points();
  Eigen::MatrixXd A_aug(s.marginal_dim() + 1, K);
  A_aug.topRows(s.marginal_dim()) = indicator_matrix(s);
  A_aug.bottomRows(1).setOnes();

  Eigen::JacobiSVD<Eigen::MatrixXd> svd(A_aug, Eigen::ComputeFullV);
  const auto& sv = svd.singularValues();
  const double cutoff = 1e-10 * (sv.size() > 0 ? sv(0) : 0.0);
  int rank = 0;
  for (int i = 0; i < sv.size(); ++i)
    if (sv(i) > cutoff) ++rank;

  FeasibleSetChart c;
  c.base = base.p;
  c.basis = svd.matrixV().rightCols(K - rank);
  return c;
}

AxisBox axis_box(const FeasibleSetChart& chart) {
  const int d = chart.dim();
  AxisBox box;
  box.w_range.assign(d, {0.0, 0.0});

  // p(w) >= 0  <=>  -basis * w <= base; w itself is free
  lp::Problem prob;
  prob.A_le = -chart.basis;
  prob.b_le = chart.base;
  prob.lo = Eigen::VectorXd::Constant(d, -lp::kInf);
  prob.hi = Eigen::VectorXd::Constant(d, lp::kInf);
  prob.c = Eigen::VectorXd::Zero(d);

  prob.sense = lp::Sense::maximize;
  for (int i = 0; i < d; ++i) {
    for (const double sign : {-1.0, 1.0}) {
      prob.c.setZero();
      prob.c(i) = sign;
      auto sol = lp::solve(prob);
      if (!sol.ok())
        throw NumericalError("axis extreme LP failed on chart axis " + std::to_string(i));
      if (sign < 0)
        box.w_range[i].lower = -sol.value;  // sol.value = max(-w_i)
      else
        box.w_range[i].upper = sol.value;
      box.vertices.push_back(clamp_joint(chart.point(sol.x)));
    }
  }
  return box;
}

std::vector<FeasibleJoint> sample_starts(const FeasibleSetChart& chart, int n_random,
                                         std::uint64_t seed) {
  std::vector<FeasibleJoint> out;
  auto push_unique = [&out](Eigen::VectorXd p) {
    for (const auto& q : out)
      if ((q.p - p).cwiseAbs().maxCoeff() <= 1e-9) return;
    out.push_back({std::move(p)});
  };

  push_unique(clamp_joint(chart.base));
  if (chart.dim() == 0) return out;

  AxisBox box = axis_box(chart);
  for (auto& v : box.vertices) push_unique(v);

  const int d = chart.dim();
  std::mt19937_64 rng(seed);
  int accepted = 0;
  const long long max_draws = 50LL * std::max(n_random, 1);
  for (long long draws = 0; accepted < n_random && draws < max_draws; ++draws) {
    Eigen::VectorXd w(d);
    for (int i = 0; i < d; ++i) {
      const auto& r = box.w_range[i];
      w(i) = r.lower + (r.upper - r.lower) * unit_uniform(rng);
    }
    Eigen::VectorXd p = chart.point(w);
    if (p.minCoeff() < -1e-12) continue;
    push_unique(clamp_joint(std::move(p)));
    ++accepted;
  }
  // poor acceptance (thin sets): pad with midpoints toward the vertices
  for (size_t v = 0; accepted < n_random && !box.vertices.empty(); ++v, ++accepted)
    push_unique(clamp_joint(0.5 * (chart.base + box.vertices[v % box.vertices.size()])));

  return out;
}

}  // namespace aggbounds::feasible
