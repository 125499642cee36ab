#pragma once

#include <Eigen/Dense>

#include <map>
#include <optional>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

// Core domain types for group-level aggregate data: a shared covariate support,
// per-group outcome means and covariate marginals, and the small value types the
// bounding machinery passes around.

namespace aggbounds {

struct Interval {
  double lower = 0.0;
  double upper = 0.0;

  double width() const { return upper - lower; }
  bool contains(double v, double tol = 0.0) const {
    return v >= lower - tol && v <= upper + tol;
  }
  bool contains(const Interval& other, double tol = 0.0) const {
    return other.lower >= lower - tol && other.upper <= upper + tol;
  }
};

struct OutcomeRange {
  double lo = 0.0;
  double hi = 1.0;

  double width() const { return hi - lo; }
  bool contains(double v, double tol = 0.0) const { return v >= lo - tol && v <= hi + tol; }
};

// One record of a structured validation failure; `where` names the offending
// group/covariate/value so CLI messages can point at the input row.
struct Violation {
  std::string where;
  std::string message;
};

class ValidationError : public std::runtime_error {
 public:
  explicit ValidationError(std::vector<Violation> items);
  const std::vector<Violation>& items() const { return items_; }

 private:
  std::vector<Violation> items_;
};

// Numerical failure (LP stall, nonconvergent search, empty identified set under
// restrictions). Distinct from ValidationError so the CLI can map exit codes.
class NumericalError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Finite list of covariate vectors x_1..x_K (K support points, L covariates).
// Points are rows of `points`; per-covariate value lists are sorted and distinct.
class CovariateSupport {
 public:
  CovariateSupport() = default;

  // Build from an explicit K x L matrix of points. Derives per-covariate value
  // lists; rejects duplicate points.
  static CovariateSupport from_points(const Eigen::MatrixXd& points,
                                      std::vector<std::string> point_ids = {});

  // Full product support over the given per-covariate value lists, enumerated
  // row-major (the last covariate varies fastest).
  static CovariateSupport product(const std::vector<std::vector<double>>& values);

  int num_points() const { return static_cast<int>(points_.rows()); }     // K
  int num_covariates() const { return static_cast<int>(points_.cols()); } // L

  const Eigen::MatrixXd& points() const { return points_; }
  Eigen::RowVectorXd point(int k) const { return points_.row(k); }
  const std::vector<std::vector<double>>& values() const { return values_; }
  const std::vector<double>& values(int cov) const { return values_.at(cov); }
  const std::vector<std::string>& point_ids() const { return point_ids_; }

  // Index of a support point; throws std::invalid_argument for unknown points.
  int flat_index(const Eigen::RowVectorXd& x) const;
  bool has_point(const Eigen::RowVectorXd& x) const;

  // Position of `v` in values(cov), or -1 when absent.
  int value_index(int cov, double v) const;

  // Stacked marginal layout: covariates in order, values ascending within each.
  int marginal_dim() const { return marginal_dim_; }
  int marginal_row(int cov, int value_idx) const { return offsets_.at(cov) + value_idx; }

 private:
  Eigen::MatrixXd points_;                    // K x L
  std::vector<std::vector<double>> values_;   // per covariate, sorted distinct
  std::vector<std::string> point_ids_;        // parallel to rows of points_
  std::vector<int> offsets_;                  // marginal row offset per covariate
  int marginal_dim_ = 0;

  void finish_init();
};

// 0/1 matrix with one row per (covariate, value) in the stacked marginal layout
// and one column per support point: A(row(l,v), k) = 1{x_{k,l} = v}. For any
// joint p over the support, A p stacks the implied covariate marginals.
Eigen::MatrixXd indicator_matrix(const CovariateSupport& support);

// Conditional outcome mean for a finer aggregation cell {X_cov = value} within a
// group. `count`/`y_se` are optional: the point-estimate path needs neither, the
// CI path needs count (binary outcome) or y_se (otherwise).
struct FinerMoment {
  int covariate = 0;
  double value = 0.0;
  double y_mean = 0.0;
  std::optional<double> y_se;
  std::optional<long long> count;
};

struct GroupRecord {
  std::string id;
  double share = 0.0;                 // population share, sums to 1 across groups
  std::optional<long long> count;     // observation count behind the aggregates
  double y_mean = 0.0;
  std::optional<double> y_se;
  Eigen::VectorXd marginals;          // stacked per support.marginal_dim()
  std::vector<FinerMoment> finer;

  double marginal(const CovariateSupport& s, int cov, double value) const;
};

struct AggregateDataset {
  CovariateSupport support;
  OutcomeRange range;
  bool binary_outcome = false;        // requires range [0,1]
  std::vector<GroupRecord> groups;

  const GroupRecord& group(const std::string& id) const;
  int group_index(const std::string& id) const;  // -1 when absent
};

struct ValidateOptions {
  double sum_tol = 1e-9;        // marginal / share sums to one
  bool renormalize = false;     // rescale near-one sums instead of flagging them
};

// Structural checks: distinct support points, shares/marginals in [0,1] and
// summing to one, outcome means inside the range, finer cells naming support
// values. Returns every violation found; empty means the dataset is usable.
std::vector<Violation> validate(const AggregateDataset& ds, const ValidateOptions& opts = {});

// Same checks, throwing ValidationError on the first nonempty result. With
// opts.renormalize set this also rescales marginal blocks and shares whose sums
// are within 1e-6 of one (larger deviations are still violations).
void validate_or_throw(AggregateDataset& ds, const ValidateOptions& opts = {});

// Linear functional weights over support cells; at least one nonzero entry.
void check_weights(const Eigen::VectorXd& lambda, const CovariateSupport& support);

// Linear restrictions S c <= a on the cell mean vector c, shared across groups
// with optional extra per-group rows.
class ShapeConstraintSet {
 public:
  ShapeConstraintSet() = default;
  ShapeConstraintSet(Eigen::MatrixXd S, Eigen::VectorXd a);

  void append(const Eigen::MatrixXd& S, const Eigen::VectorXd& a);
  void append_for_group(const std::string& id, const Eigen::MatrixXd& S,
                        const Eigen::VectorXd& a);

  bool empty() const { return shared_S_.rows() == 0 && group_rows_.empty(); }
  int num_cells() const { return static_cast<int>(shared_S_.cols()); }

  // Stacked (shared + group-specific) rows for one group.
  std::pair<Eigen::MatrixXd, Eigen::VectorXd> rows_for(const std::string& id) const;

 private:
  Eigen::MatrixXd shared_S_;  // 0 x K when unset
  Eigen::VectorXd shared_a_;
  std::map<std::string, std::pair<Eigen::MatrixXd, Eigen::VectorXd>> group_rows_;
};

enum class Monotone { increasing, decreasing };

// Rows encoding monotonicity of the cell means in one covariate: for every pair
// of support points that differ only in covariate `cov` at adjacent values, the
// mean at the higher value is >= (increasing) or <= (decreasing) the lower one.
ShapeConstraintSet monotone_constraint(const CovariateSupport& support, int cov, Monotone dir);

// A joint distribution compatible with the search chart; entries may carry
// clamped -1e-10 noise from the optimizer, never worse.
struct Witness {
  Eigen::VectorXd p;  // joint over support cells
  Eigen::VectorXd c;  // cell means achieving the bound at p
};

struct GroupBounds {
  std::string group;
  double lower = 0.0;
  double upper = 0.0;
  Witness lower_witness;
  Witness upper_witness;
};

struct BoundResult {
  std::vector<GroupBounds> groups;
  Interval aggregate;
};

}  // namespace aggbounds
