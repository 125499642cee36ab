#include "aggbounds/frechet.hpp"

#include <algorithm>
#include <stdexcept>

namespace aggbounds::frechet {

namespace {

void require_binary(const GroupRecord& g) {
  if (g.y_mean < -1e-12 || g.y_mean > 1.0 + 1e-12)
    throw std::invalid_argument("group " + g.id + ": y_mean is not a probability");
}

}  // namespace

FrechetCell cell_bounds(const GroupRecord& g, const CovariateSupport& s, int y, int k) {
  if (y != 0 && y != 1) throw std::invalid_argument("frechet: y must be 0 or 1");
  if (k < 0 || k >= s.num_points()) throw std::invalid_argument("frechet: cell index out of range");
  require_binary(g);

  const double py = y == 1 ? g.y_mean : 1.0 - g.y_mean;
  const int L = s.num_covariates();
  double sum = py;
  double min_m = py;
  for (int l = 0; l < L; ++l) {
    const double m = g.marginal(s, l, s.points()(k, l));
    sum += m;
    min_m = std::min(min_m, m);
  }
  FrechetCell out;
  out.lower = std::max(sum - static_cast<double>(L), 0.0);
  out.upper = std::max(std::min(min_m, 1.0), 0.0);
  out.lower = std::min(out.lower, out.upper);  // float guard; holds analytically
  return out;
}

Interval cell_ratio_bounds(const GroupRecord& g, const CovariateSupport& s, int k) {
  const FrechetCell c1 = cell_bounds(g, s, 1, k);
  const FrechetCell c0 = cell_bounds(g, s, 0, k);
  Interval out;
  // E[Y|X=x_k] = P[Y=1,X=x_k] / P[X=x_k]; extremes pair the numerator bound
  // with the opposite-outcome bound in the denominator. Zero denominators mean
  // the cell can be empty, leaving the conditional mean unrestricted.
  const double dl = c1.lower + c0.upper;
  const double du = c1.upper + c0.lower;
  out.lower = dl > 0.0 ? c1.lower / dl : 0.0;
  out.upper = du > 0.0 ? c1.upper / du : 1.0;
  return out;
}

Interval group_frechet_interval(const GroupRecord& g, const CovariateSupport& s,
                                const Eigen::VectorXd& lambda) {
  Interval gi{0.0, 0.0};
  for (int k = 0; k < s.num_points(); ++k) {
    if (lambda(k) == 0.0) continue;
    const Interval cell = cell_ratio_bounds(g, s, k);
    if (lambda(k) > 0.0) {
      gi.lower += lambda(k) * cell.lower;
      gi.upper += lambda(k) * cell.upper;
    } else {
      gi.lower += lambda(k) * cell.upper;
      gi.upper += lambda(k) * cell.lower;
    }
  }
  return gi;
}

Interval frechet_identified_set(const AggregateDataset& ds, const Eigen::VectorXd& lambda) {
  if (!ds.binary_outcome)
    throw std::invalid_argument("frechet bounds require a binary outcome (range [0,1])");
  check_weights(lambda, ds.support);

  Interval agg{0.0, 0.0};
  for (const auto& g : ds.groups) {
    const Interval gi = group_frechet_interval(g, ds.support, lambda);
    agg.lower += g.share * gi.lower;
    agg.upper += g.share * gi.upper;
  }
  return agg;
}

}  // namespace aggbounds::frechet
