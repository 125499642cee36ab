#pragma once

#include "aggbounds/core.hpp"

// Closed-form cell bounds for binary outcomes from the Frechet inequalities:
// the joint mass P[Y=y, X=x_k | g] is bracketed by functions of the outcome
// probability and the covariate marginals alone. Fast, assumption-light, and
// generally wider than the optimization bounds (never narrower), which makes
// it a useful cross-check.

namespace aggbounds::frechet {

struct FrechetCell {
  double lower = 0.0;  // bound on P[Y=y, X=x_k | g]
  double upper = 0.0;
};

// Bracket for P[Y=y, X=x_k | g]; requires a declared binary outcome.
FrechetCell cell_bounds(const GroupRecord& group, const CovariateSupport& support, int y, int k);

// Interval for the conditional mean E[Y | X=x_k, g] implied by the cell
// brackets; a cell with no guaranteed mass yields the vacuous [0,1].
Interval cell_ratio_bounds(const GroupRecord& group, const CovariateSupport& support, int k);

// One group's interval for sum_k lambda_k E[Y|X=x_k,g]: per-cell ratio
// intervals combined by interval arithmetic (negative weights swap endpoints).
Interval group_frechet_interval(const GroupRecord& group, const CovariateSupport& support,
                                const Eigen::VectorXd& lambda);

// Aggregate interval D^F: the group intervals share-weighted across groups.
// Contains the optimization-based interval.
Interval frechet_identified_set(const AggregateDataset& dataset, const Eigen::VectorXd& lambda);

}  // namespace aggbounds::frechet
