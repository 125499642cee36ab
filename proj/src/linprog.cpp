#include "aggbounds/linprog.hpp"

#include <cmath>
#include <stdexcept>
#include <vector>

namespace aggbounds::lp {

namespace {

enum class VarState : unsigned char { basic, at_lower, at_upper, free_zero };

// Two-phase bounded-variable simplex on a dense tableau. Columns are laid out
// as [structural | slack (one per <= row) | artificial (one per row)]. The
// tableau T always equals B^-1 * A over all columns, so basic columns stay
// identity; variable values are tracked explicitly and refreshed from a dense
// LU of the final basis before reporting.
class Tableau {
 public:
  Tableau(const Problem& p, double feas_tol, double pivot_tol)
      : feas_tol_(feas_tol), pivot_tol_(pivot_tol) {
    n_ = p.num_vars();
    const int m_eq = static_cast<int>(p.A_eq.rows());
    const int m_le = static_cast<int>(p.A_le.rows());
    m_ = m_eq + m_le;
    art0_ = n_ + m_le;  // columns: [structural | slack | artificial]
    N_ = art0_ + m_;

    A0_ = Eigen::MatrixXd::Zero(m_, N_);
    b0_ = Eigen::VectorXd::Zero(m_);
    if (m_eq > 0) {
      A0_.topLeftCorner(m_eq, n_) = p.A_eq;
      b0_.head(m_eq) = p.b_eq;
    }
    if (m_le > 0) {
      A0_.block(m_eq, 0, m_le, n_) = p.A_le;
      b0_.tail(m_le) = p.b_le;
      for (int i = 0; i < m_le; ++i) A0_(m_eq + i, n_ + i) = 1.0;
    }

    lo_ = Eigen::VectorXd::Constant(N_, 0.0);
    hi_ = Eigen::VectorXd::Constant(N_, kInf);
    lo_.head(n_) = p.lo;
    hi_.head(n_) = p.hi;

    // nonbasic starting point: finite bound if there is one, else zero (free)
    xv_ = Eigen::VectorXd::Zero(N_);
    state_.assign(N_, VarState::at_lower);
    for (int j = 0; j < n_; ++j) {
      if (std::isfinite(lo_(j))) {
        xv_(j) = lo_(j);
      } else if (std::isfinite(hi_(j))) {
        xv_(j) = hi_(j);
        state_[j] = VarState::at_upper;
      } else {
        state_[j] = VarState::free_zero;
      }
    }

    // artificials absorb the residual of each row; flip the column sign so the
    // starting basis is the identity
    basic_.resize(m_);
    Eigen::VectorXd resid = b0_ - A0_.leftCols(art0_) * xv_.head(art0_);
    T_ = A0_;
    for (int i = 0; i < m_; ++i) {
      const double s = resid(i) >= 0.0 ? 1.0 : -1.0;
      A0_(i, art0_ + i) = s;
      if (s < 0.0) T_.row(i) = -A0_.row(i);  // else T already matches A0 sans artificial
      T_(i, art0_ + i) = 1.0;
      xv_(art0_ + i) = std::abs(resid(i));
      basic_[i] = art0_ + i;
      state_[art0_ + i] = VarState::basic;
    }

    // phase-1 cost row (sum of artificials) with the artificial basis priced out
    z1_ = Eigen::RowVectorXd::Zero(N_);
    for (int j = 0; j < N_; ++j) {
      double colsum = T_.col(j).sum();
      z1_(j) = (j >= art0_ ? 1.0 : 0.0) - colsum;
    }
    for (int i = 0; i < m_; ++i) z1_(art0_ + i) = 0.0;  // exact for basis columns

    z2_ = Eigen::RowVectorXd::Zero(N_);
    z2_.head(n_) = p.c.transpose();
    if (p.sense == Sense::maximize) z2_.head(n_) *= -1.0;
  }

  Status run(Solution* out) {
    // phase 1: minimize total artificial value
    Status st = iterate(/*phase1=*/true);
    if (st == Status::iteration_limit) return st;
    double inf1 = 0.0;
    for (int i = 0; i < m_; ++i)
      if (basic_[i] >= art0_) inf1 += xv_(basic_[i]);
    out->infeasibility = std::max(inf1, 0.0);
    if (out->infeasibility > feas_tol_) return Status::infeasible;

    // lock artificials at zero and pivot basic ones out where possible
    for (int j = art0_; j < N_; ++j) hi_(j) = 0.0;
    for (int i = 0; i < m_; ++i) {
      if (basic_[i] < art0_) continue;
      int q = -1;
      for (int j = 0; j < art0_; ++j)
        if (state_[j] != VarState::basic && std::abs(T_(i, j)) > pivot_tol_) {
          q = j;
          break;
        }
      if (q < 0) continue;  // redundant row; the artificial stays basic at zero
      const int leaving = basic_[i];
      pivot(i, q);  // degenerate: values stay put, only the basis changes
      xv_(leaving) = 0.0;
      state_[leaving] = VarState::at_lower;
      state_[q] = VarState::basic;
    }

    return iterate(/*phase1=*/false);
  }

  void extract(const Problem& p, Solution* out) {
    // refresh basic values from a dense solve of the final basis for accuracy
    Eigen::MatrixXd B(m_, m_);
    for (int i = 0; i < m_; ++i) B.col(i) = A0_.col(basic_[i]);
    Eigen::VectorXd rhs = b0_;
    for (int j = 0; j < N_; ++j) {
      if (state_[j] == VarState::basic || xv_(j) == 0.0) continue;
      rhs -= A0_.col(j) * xv_(j);
    }
    if (m_ > 0) {
      Eigen::VectorXd xb = B.partialPivLu().solve(rhs);
      for (int i = 0; i < m_; ++i) xv_(basic_[i]) = xb(i);
    }

    out->x = xv_.head(n_);
    const double raw = p.c.dot(out->x);
    out->value = raw;

    double resid = 0.0;
    if (p.A_eq.rows() > 0)
      resid = (p.A_eq * out->x - p.b_eq).cwiseAbs().maxCoeff();
    if (p.A_le.rows() > 0)
      resid = std::max(resid, (p.A_le * out->x - p.b_le).maxCoeff());
    for (int j = 0; j < n_; ++j) {
      if (std::isfinite(lo_(j))) resid = std::max(resid, lo_(j) - out->x(j));
      if (std::isfinite(hi_(j))) resid = std::max(resid, out->x(j) - hi_(j));
    }
    out->max_residual = std::max(resid, 0.0);
    out->iterations = iters_;
  }

 private:
  void pivot(int row, int col) {
    const double piv = T_(row, col);
    T_.row(row) /= piv;
    for (int i = 0; i < m_; ++i) {
      if (i == row) continue;
      const double f = T_(i, col);
      if (f != 0.0) T_.row(i) -= f * T_.row(row);
    }
    const double f1 = z1_(col);
    if (f1 != 0.0) z1_ -= f1 * T_.row(row);
    const double f2 = z2_(col);
    if (f2 != 0.0) z2_ -= f2 * T_.row(row);
    basic_[row] = col;
  }

  // candidate direction for a nonbasic column under the active cost row;
  // returns 0 when the column cannot improve
  int entering_dir(int j, const Eigen::RowVectorXd& z, bool phase1) const {
    if (state_[j] == VarState::basic) return 0;
    if (!phase1 && j >= art0_) return 0;  // artificials are locked after phase 1
    const double zj = z(j);
    switch (state_[j]) {
      case VarState::at_lower:
        return zj < -pivot_tol_ ? +1 : 0;
      case VarState::at_upper:
        return zj > pivot_tol_ ? -1 : 0;
      case VarState::free_zero:
        if (zj < -pivot_tol_) return +1;
        if (zj > pivot_tol_) return -1;
        return 0;
      default:
        return 0;
    }
  }

  Status iterate(bool phase1) {
    Eigen::RowVectorXd& z = phase1 ? z1_ : z2_;
    const int max_iters = 10000 + 200 * (m_ + N_);
    int degenerate_run = 0;
    bool bland = false;

    while (true) {
      if (++iters_ > max_iters) return Status::iteration_limit;

      // entering column: steepest reduced cost, or lowest index in Bland mode
      int q = -1, dir = 0;
      double best = 0.0;
      for (int j = 0; j < N_; ++j) {
        const int d = entering_dir(j, z, phase1);
        if (d == 0) continue;
        if (bland) {
          q = j;
          dir = d;
          break;
        }
        const double score = std::abs(z(j));
        if (score > best + 1e-15) {
          best = score;
          q = j;
          dir = d;
        }
      }
      if (q < 0) return Status::optimal;

      // ratio test: step until some basic variable (or q itself) hits a bound
      double t_limit = kInf;
      if (std::isfinite(lo_(q)) && std::isfinite(hi_(q))) t_limit = hi_(q) - lo_(q);
      double t_min = t_limit;
      int leave_row = -1;
      for (int i = 0; i < m_; ++i) {
        const double a = T_(i, q);
        if (std::abs(a) <= pivot_tol_) continue;
        const double rate = -dir * a;  // change in basic value per unit step
        const int bi = basic_[i];
        double t;
        if (rate > 0.0) {
          if (!std::isfinite(hi_(bi))) continue;
          t = (hi_(bi) - xv_(bi)) / rate;
        } else {
          if (!std::isfinite(lo_(bi))) continue;
          t = (lo_(bi) - xv_(bi)) / rate;
        }
        if (t < 0.0) t = 0.0;  // drift guard
        if (t < t_min - 1e-12 || (t < t_min + 1e-12 && leave_row >= 0 && bi < basic_[leave_row])) {
          t_min = t;
          leave_row = i;
        } else if (leave_row < 0 && t <= t_min) {
          t_min = t;
          leave_row = i;
        }
      }

      if (!std::isfinite(t_min)) return phase1 ? Status::iteration_limit : Status::unbounded;

      if (t_min <= 1e-12) {
        if (++degenerate_run > 2 * (m_ + n_)) bland = true;
      } else {
        degenerate_run = 0;
        bland = false;
      }

      if (leave_row < 0) {
        // q travels bound to bound
        xv_(q) = dir > 0 ? hi_(q) : lo_(q);
        for (int i = 0; i < m_; ++i) {
          const double a = T_(i, q);
          if (a != 0.0) xv_(basic_[i]) += (-dir * a) * t_min;
        }
        state_[q] = dir > 0 ? VarState::at_upper : VarState::at_lower;
        continue;
      }

      xv_(q) += dir * t_min;
      for (int i = 0; i < m_; ++i) {
        const double a = T_(i, q);
        if (a != 0.0) xv_(basic_[i]) += (-dir * a) * t_min;
      }
      const int lv = basic_[leave_row];
      const double rate_out = -dir * T_(leave_row, q);
      if (rate_out > 0.0) {
        xv_(lv) = hi_(lv);
        state_[lv] = VarState::at_upper;
      } else {
        xv_(lv) = lo_(lv);
        state_[lv] = VarState::at_lower;
      }
      pivot(leave_row, q);
      state_[q] = VarState::basic;
    }
  }

  double feas_tol_, pivot_tol_;
  int n_ = 0, m_ = 0, N_ = 0, art0_ = 0;
  Eigen::MatrixXd A0_, T_;
  Eigen::VectorXd b0_, lo_, hi_, xv_;
  Eigen::RowVectorXd z1_, z2_;
  std::vector<int> basic_;
  std::vector<VarState> state_;
  int iters_ = 0;
};

void check_problem(const Problem& p) {
  const int n = p.num_vars();
  if (n == 0) throw std::invalid_argument("lp: no variables");
  if (!p.c.allFinite()) throw std::invalid_argument("lp: non-finite objective");
  if (p.lo.size() != n || p.hi.size() != n)
    throw std::invalid_argument("lp: bound vectors must match variable count");
  for (int j = 0; j < n; ++j) {
    if (std::isnan(p.lo(j)) || std::isnan(p.hi(j)))
      throw std::invalid_argument("lp: NaN bound");
    if (p.lo(j) > p.hi(j)) throw std::invalid_argument("lp: lower bound above upper bound");
  }
  if (p.A_eq.rows() != p.b_eq.size() || p.A_le.rows() != p.b_le.size())
    throw std::invalid_argument("lp: constraint matrix/rhs row mismatch");
  if ((p.A_eq.rows() > 0 && p.A_eq.cols() != n) || (p.A_le.rows() > 0 && p.A_le.cols() != n))
    throw std::invalid_argument("lp: constraint matrix has wrong column count");
  if ((p.A_eq.rows() > 0 && !p.A_eq.allFinite()) || (p.A_le.rows() > 0 && !p.A_le.allFinite()) ||
      (p.b_eq.size() > 0 && !p.b_eq.allFinite()) || (p.b_le.size() > 0 && !p.b_le.allFinite()))
    throw std::invalid_argument("lp: non-finite constraint data");
}

}  // namespace

Solution Simplex::solve(const Problem& p) const {
  check_problem(p);
  Solution out;
  Tableau t(p, feas_tol_, pivot_tol_);
  out.status = t.run(&out);
  if (out.status == Status::optimal || out.status == Status::infeasible) t.extract(p, &out);
  if (out.status == Status::infeasible) out.value = 0.0;
  return out;
}

Solution solve(const Problem& p) { return Simplex().solve(p); }

}  // namespace aggbounds::lp
