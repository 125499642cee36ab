#pragma once

#include "aggbounds/bounds.hpp"
#include "aggbounds/core.hpp"

#include <cstdint>
#include <string>
#include <vector>

// Simulation workbench: draw individual-level samples from a known joint,
// aggregate them back to group-level summaries, brute-force oracles for the
// nonconvex outer problem at small sizes, and Monte Carlo coverage and
// consistency studies on preset designs.

namespace aggbounds::sim {

// Ground truth for a simulated population: per-group joints over the support
// cells, per-cell conditional outcome means, and group shares.
struct JointSpec {
  CovariateSupport support;
  OutcomeRange range;
  bool binary_outcome = true;
  std::vector<std::string> group_ids;
  Eigen::MatrixXd joints;       // G x K, rows on the simplex
  Eigen::MatrixXd cond_means;   // G x K, entries within range
  Eigen::VectorXd shares;       // length G, sums to 1

  int num_groups() const { return static_cast<int>(joints.rows()); }
  void check() const;           // throws std::invalid_argument on bad fields
};

struct MicroRecord {
  std::int32_t group = 0;
  std::int32_t cell = 0;
  double y = 0.0;
};

struct MicroSample {
  std::vector<MicroRecord> records;
  std::uint64_t seed = 0;
};

// n_per_group i.i.d. draws per group: cell from the group's joint, outcome
// Bernoulli at the cell mean when binary (else degenerate at the cell mean).
// Deterministic in (spec, n_per_group, seed) across platforms.
MicroSample generate(const JointSpec& spec, long long n_per_group, std::uint64_t seed);

// Conditional means to publish at the finer level: one (covariate, value)
// selection applies to every group; cells a group never realizes are skipped.
struct FinerSelection {
  std::vector<std::pair<int, double>> cells;
};

// Sample analogues: group means, per-covariate marginal frequencies, shares
// from group counts, optional conditional means with their cell counts.
AggregateDataset aggregate_micro(const MicroSample& sample, const JointSpec& spec,
                                 const FinerSelection* finer = nullptr);

// Infinite-data analogue: aggregates computed from the spec probabilities
// themselves (no counts attached).
AggregateDataset aggregate_population(const JointSpec& spec, const FinerSelection* finer = nullptr);

// Exhaustive grid over the chart box (step grid_step) with exact inner solves:
// ground truth for the outer search within O(grid_step). Tracks the extremes
// of both the inner min and the inner max, so it doubles as the oracle for the
// joint-known ranges. Enforced small: K <= 8, d <= 4.
struct OracleRanges {
  Interval bounds;     // [min over grid of L(p), max over grid of U(p)]
  Interval L_range;    // [min, max] of L(p) over the grid
  Interval U_range;
};

OracleRanges brute_force_ranges(const GroupRecord& group, const CovariateSupport& support,
                                const Eigen::VectorXd& lambda, OutcomeRange range,
                                double grid_step, const ShapeConstraintSet* shape = nullptr,
                                bool use_finer = false);

Interval brute_force_bounds(const GroupRecord& group, const CovariateSupport& support,
                            const Eigen::VectorXd& lambda, OutcomeRange range, double grid_step,
                            const ShapeConstraintSet* shape = nullptr, bool use_finer = false);

struct CoverageOptions {
  int reps = 100;
  long long n_per_group = 1300;
  double alpha = 0.05;
  std::uint64_t seed = 7u;
  bool use_finer = false;
  const ShapeConstraintSet* shape = nullptr;
  SearchOptions search;
};

struct CoverageResult {
  Interval population;             // D on the exact population aggregates
  int reps = 0;
  double coverage_rate = 0.0;      // fraction of reps with population inside d_ci
  double max_err_lower = 0.0;      // worst |L_hat - L| across reps
  double max_err_upper = 0.0;
  std::vector<bool> covered;       // per rep
  std::vector<double> rep_max_err; // per rep, max of the two endpoint errors
  std::vector<Interval> rep_point; // per rep point-estimate aggregate
  std::vector<Interval> rep_ci;    // per rep d_ci
};

// reps independent generate -> aggregate -> estimate -> infer pipelines
// against the spec's population bounds.
CoverageResult coverage_study(const JointSpec& spec, const Eigen::VectorXd& lambda,
                              const CoverageOptions& opts);

// The three stock designs: 50 groups, three binary covariates (K = 8), binary
// outcome, shared conditional means; they differ in how the per-group marginal
// profiles are spread. 1: moderate spreads; 2: marginals pushed toward 0/1;
// 3: the first covariate's marginal split across groups between near-0 and
// near-1. Equal shares. Versioned copies live in data/presets/.
JointSpec exercise_preset(int id);

}  // namespace aggbounds::sim
