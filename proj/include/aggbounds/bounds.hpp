#pragma once

#include "aggbounds/core.hpp"
#include "aggbounds/feasible.hpp"

#include <cstdint>
#include <functional>
#include <optional>
#include <vector>

// Sharp per-group bounds L_g, U_g on sum_k lambda_k E[Y|X=x_k, G=g] and their
// share-weighted aggregate. The inner problem (fixed joint p) is a small LP
// with a closed form in the unconstrained case; the outer problem searches the
// feasible polytope P_g through its null-space chart with a multi-start
// derivative-free simplex search.

namespace aggbounds {

enum class Direction { min, max };

// Everything the inner optimization over cell means c needs, for one group at
// one candidate joint p. The mean constraint is the equality sum_k c_k p_k =
// y_mean unless y_band is set (confidence-set relaxation), in which case it is
// two-sided. Finer rows tie a cell-subset average to an observed conditional
// mean; their band fields widen the product constraint the same way.
struct InnerProblem {
  Eigen::VectorXd lambda;
  Eigen::VectorXd p;
  OutcomeRange range;
  double y_mean = 0.0;
  std::optional<Interval> y_band;
  Eigen::MatrixXd S;              // shape rows S c <= a; 0 x K when absent
  Eigen::VectorXd a;
  struct FinerRow {
    int covariate = 0;
    double value = 0.0;
    Eigen::VectorXd mask;         // 1{x_{k,cov} = value} over cells
    double y_cond = 0.0;          // observed E[Y | X_cov = value, g]
    double prob = 0.0;            // observed P[X_cov = value | g]
    std::optional<Interval> y_cond_band;  // CI relaxation endpoints
    std::optional<Interval> prob_band;
  };
  std::vector<FinerRow> finer;
  Direction direction = Direction::min;

  bool constrained() const { return S.rows() > 0 || !finer.empty(); }
};

struct InnerResult {
  bool feasible = false;
  double value = 0.0;
  Eigen::VectorXd c;
};

// Unconstrained inner problem in closed form: order cells by lambda_k/p_k
// descending (ties by index) and fill from the box endpoints with one pivot
// cell making the mean constraint bind. Cells with p_k <= 1e-12 are decoupled
// from the mean and take the endpoint favored by the sign of lambda_k.
InnerResult inner_closed_form(const Eigen::VectorXd& lambda, const Eigen::VectorXd& p,
                              double y_mean, OutcomeRange range, Direction direction);

// Inner problem as an explicit LP; handles shape rows, finer rows, and the
// banded variants. Infeasible combinations report feasible = false so the
// outer search can walk away from this p.
InnerResult inner_lp(const InnerProblem& problem);

// Dispatch: closed form when unconstrained with an equality mean, an exact
// breakpoint scan when unconstrained with a banded mean (the LP value is
// piecewise linear in the mean target), LP otherwise.
InnerResult inner_bound(const InnerProblem& problem);

struct SearchOptions {
  int n_random_starts = 32;
  int max_iters_per_start = 400;
  double convergence_tol = 1e-7;
  double initial_step = 0.15;    // simplex edge, relative to the start spread
  double shrink_tol = 1e-9;      // stop when the simplex collapses below this
  std::uint64_t seed = 20240817u;
  bool strict = false;           // error out on inconsistent marginals
};

// Shared outer-search core: minimize inner(p) + 1e3 * feasibility violation
// over the chart, multi-start Nelder-Mead plus a coordinate polish of the
// best point. Callers wanting a maximum negate inside `inner`.
struct ChartSearchProblem {
  const feasible::FeasibleSetChart* chart = nullptr;
  std::vector<Eigen::VectorXd> starts;                           // joints
  std::function<InnerResult(const Eigen::VectorXd&)> inner;      // at simplex-renormalized p
  std::function<double(const Eigen::VectorXd&)> band_violation;  // optional extra penalty
};

struct ChartSearchResult {
  bool found = false;   // false when no start yielded a feasible inner problem
  double value = 0.0;   // replayed inner value at the reported joint
  Eigen::VectorXd p;
  Eigen::VectorXd c;
};

ChartSearchResult minimize_over_chart(const ChartSearchProblem& problem,
                                      const SearchOptions& opts);

GroupBounds group_bounds(const GroupRecord& group, const CovariateSupport& support,
                         const Eigen::VectorXd& lambda, OutcomeRange range,
                         const ShapeConstraintSet* shape, bool use_finer,
                         const SearchOptions& opts);

// Per-group bounds plus the share-weighted aggregate interval. Group seeds are
// derived deterministically from opts.seed.
BoundResult identified_set(const AggregateDataset& dataset, const Eigen::VectorXd& lambda,
                           const ShapeConstraintSet* shape, bool use_finer,
                           const SearchOptions& opts);

// Range of the inner min (and of the inner max) as the joint varies over P_g:
// how much the bounds could tighten if the within-group covariate joint were
// known. Shares starts and seeds with group_bounds, so L_range.lower replays
// that function's lower bound exactly.
struct JointKnownRange {
  Interval L_range;
  Interval U_range;
};

JointKnownRange joint_known_range(const GroupRecord& group, const CovariateSupport& support,
                                  const Eigen::VectorXd& lambda, OutcomeRange range,
                                  const SearchOptions& opts);

// Deterministic per-group seed stream (splitmix64 step).
std::uint64_t mix_seed(std::uint64_t seed, std::uint64_t stream);

}  // namespace aggbounds
