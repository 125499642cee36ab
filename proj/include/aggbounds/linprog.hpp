#pragma once

#include <Eigen/Dense>

#include <limits>

// Dense bounded-variable simplex. Small problems only (tens of rows/columns):
// the tableau is kept explicitly and re-reduced on every pivot. Deterministic
// by construction; re-solving the same instance reproduces the result bit for
// bit.

namespace aggbounds::lp {

inline constexpr double kInf = std::numeric_limits<double>::infinity();

enum class Sense { minimize, maximize };
enum class Status { optimal, infeasible, unbounded, iteration_limit };

struct Problem {
  Eigen::VectorXd c;                  // objective over structural variables
  Sense sense = Sense::minimize;
  Eigen::MatrixXd A_eq;               // A_eq x = b_eq (either may be empty)
  Eigen::VectorXd b_eq;
  Eigen::MatrixXd A_le;               // A_le x <= b_le
  Eigen::VectorXd b_le;
  Eigen::VectorXd lo, hi;             // variable bounds; +-kInf allowed

  int num_vars() const { return static_cast<int>(c.size()); }
};

struct Solution {
  Status status = Status::iteration_limit;
  Eigen::VectorXd x;
  double value = 0.0;
  double infeasibility = 0.0;   // phase-1 optimum; > tolerance iff infeasible
  double max_residual = 0.0;    // constraint residual at the reported x
  int iterations = 0;

  bool ok() const { return status == Status::optimal; }
};

class Simplex {
 public:
  explicit Simplex(double feas_tol = 1e-8, double pivot_tol = 1e-10)
      : feas_tol_(feas_tol), pivot_tol_(pivot_tol) {}

  Solution solve(const Problem& p) const;

 private:
  double feas_tol_;
  double pivot_tol_;
};

// One-shot convenience wrapper with the default tolerances.
Solution solve(const Problem& p);

}  // namespace aggbounds::lp
