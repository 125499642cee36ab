#pragma once

#include "aggbounds/core.hpp"

#include <cstdint>
#include <vector>

// The set P_g of joint distributions over the support compatible with a
// group's covariate marginals: base point via a slack-minimization LP, affine
// parametrization via the null space of the stacked marginal system, and start
// points for the outer search.

namespace aggbounds::feasible {

inline constexpr double kSlackTol = 1e-8;

struct FeasibleJoint {
  Eigen::VectorXd p;
};

// Joint p minimizing the total absolute deviation from the group's marginals
// over the simplex, and that minimal deviation. Zero slack (within kSlackTol)
// means the marginals are mutually consistent on this support.
struct SlackResult {
  FeasibleJoint base;
  double total_slack = 0.0;
};

SlackResult min_slack_joint(const CovariateSupport& support, const GroupRecord& group);

// Affine chart p(w) = base + basis * w for the solution set of
// { A p = A base, sum(p) = 1 }: `basis` spans the null space of the indicator
// matrix stacked with the all-ones row (orthonormal columns, SVD cutoff
// 1e-10 * sigma_max). dim() == 0 means the marginals pin the joint down.
struct FeasibleSetChart {
  Eigen::VectorXd base;
  Eigen::MatrixXd basis;       // K x d, orthonormal
  int dim() const { return static_cast<int>(basis.cols()); }
  Eigen::VectorXd point(const Eigen::VectorXd& w) const { return base + basis * w; }
  Eigen::VectorXd coords(const Eigen::VectorXd& p) const {
    return basis.transpose() * (p - base);
  }
};

FeasibleSetChart chart(const CovariateSupport& support, const FeasibleJoint& base);

// Per-axis extremes of P_g in chart coordinates (max +-w_i subject to p >= 0)
// and the vertex joints attaining them. Used both for start sampling and for
// the oracle's grid box.
struct AxisBox {
  std::vector<Interval> w_range;          // length d
  std::vector<Eigen::VectorXd> vertices;  // up to 2d joints
};

AxisBox axis_box(const FeasibleSetChart& chart);

// Deterministic start list for the outer search: the base point, the axis
// vertices, and n_random rejection-sampled interior points (uniform over the
// axis box, accepted when p >= 0; midpoints toward vertices fill in if
// acceptance is poor). Near-duplicates are dropped.
std::vector<FeasibleJoint> sample_starts(const FeasibleSetChart& chart, int n_random,
                                         std::uint64_t seed);

}  // namespace aggbounds::feasible
