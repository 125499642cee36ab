#pragma once

#include "aggbounds/bounds.hpp"
#include "aggbounds/core.hpp"

#include <string>
#include <vector>

// Jointly valid confidence set for the identified interval: a level-(1-a/M)
// two-sided interval on every aggregate observation (Bonferroni over all M of
// them), then the bound programs re-solved with every equality relaxed to its
// interval band. Coverage is inherited from the marginal intervals, so the
// result is conservative by construction.

namespace aggbounds::inference {

struct MarginalInterval {
  // kind: group_share | marginal | y_mean | finer_y_mean
  std::string kind;
  std::string group;
  int covariate = -1;       // marginal / finer_y_mean only
  double value = 0.0;       // covariate value for those kinds
  double estimate = 0.0;
  Interval ci;
  std::string method;       // clopper_pearson | normal
};

struct GroupCI {
  std::string group;
  double lower = 0.0;
  double upper = 0.0;
};

struct ConfidenceReport {
  double alpha = 0.0;
  long long M = 0;              // total observation count behind the Bonferroni split
  double level_each = 0.0;      // 1 - alpha/M
  std::vector<MarginalInterval> intervals;
  std::vector<GroupCI> per_group;
  Interval d_ci;
  BoundResult point;            // point-estimate bounds run with the same seeds
};

// Exact binomial interval (beta-quantile inversion); the boundary counts use
// the closed forms [0, 1-(a/2)^(1/n)] and [(a/2)^(1/n), 1].
Interval clopper_pearson(long long successes, long long n, double level);

// mean +- z * se at the given two-sided level; caller clips to the outcome
// range where appropriate.
Interval normal_mean_ci(double mean, double se, double level);

double bonferroni_level(double alpha, long long M);

// Number of observation intervals the dataset will produce: per group one
// share, one outcome mean, every covariate-value marginal, and (when enabled)
// every finer moment.
long long observation_count(const AggregateDataset& dataset, bool use_finer);

ConfidenceReport ci_identified_set(const AggregateDataset& dataset, const Eigen::VectorXd& lambda,
                                   double alpha, const ShapeConstraintSet* shape, bool use_finer,
                                   const SearchOptions& opts);

}  // namespace aggbounds::inference
