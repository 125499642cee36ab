#include "aggbounds/core.hpp"

#include <algorithm>
#include <cmath>
#include <set>
#include <sstream>

namespace aggbounds {

namespace {

std::string join_messages(const std::vector<Violation>& items) {
  std::ostringstream os;
  os << "invalid dataset (" << items.size() << " problem" << (items.size() == 1 ? "" : "s")
     << "):";
  for (const auto& v : items) os << "\n  " << v.where << ": " << v.message;
  return os.str();
}

}  // namespace

ValidationError::ValidationError(std::vector<Violation> items)
    : std::runtime_error(join_messages(items)), items_(std::move(items)) {}

void CovariateSupport::finish_init() {
  const int K = num_points();
  const int L = num_covariates();
  values_.assign(L, {});
  for (int l = 0; l < L; ++l) {
    std::set<double> vs;
    for (int k = 0; k < K; ++k) vs.insert(points_(k, l));
    values_[l].assign(vs.begin(), vs.end());
  }
  offsets_.assign(L, 0);
  marginal_dim_ = 0;
  for (int l = 0; l < L; ++l) {
    offsets_[l] = marginal_dim_;
    marginal_dim_ += static_cast<int>(values_[l].size());
  }
  if (point_ids_.empty()) {
    point_ids_.resize(K);
    for (int k = 0; k < K; ++k) point_ids_[k] = std::to_string(k + 1);
  }
  if (static_cast<int>(point_ids_.size()) != K)
    throw std::invalid_argument("support: point id count does not match point count");
  // reject duplicate rows; the joint lives on distinct cells
  for (int i = 0; i < K; ++i)
    for (int j = i + 1; j < K; ++j)
      if ((points_.row(i) - points_.row(j)).cwiseAbs().maxCoeff() == 0.0)
        throw std::invalid_argument("support: duplicate point at rows " + std::to_string(i + 1) +
                                    " and " + std::to_string(j + 1));
  for (int k = 0; k < K; ++k)
    if (!points_.row(k).allFinite())
      throw std::invalid_argument("support: non-finite covariate value in row " +
                                  std::to_string(k + 1));
}

CovariateSupport CovariateSupport::from_points(const Eigen::MatrixXd& points,
                                               std::vector<std::string> point_ids) {
  if (points.rows() == 0 || points.cols() == 0)
    throw std::invalid_argument("support: needs at least one point and one covariate");
  CovariateSupport s;
  s.points_ = points;
  s.point_ids_ = std::move(point_ids);
  s.finish_init();
  return s;
}

CovariateSupport CovariateSupport::product(const std::vector<std::vector<double>>& values) {
  if (values.empty()) throw std::invalid_argument("support: needs at least one covariate");
  long long K = 1;
  for (const auto& vs : values) {
    if (vs.empty()) throw std::invalid_argument("support: empty value list");
    K *= static_cast<long long>(vs.size());
    if (K > 1'000'000) throw std::invalid_argument("support: product support too large");
  }
  const int L = static_cast<int>(values.size());
  Eigen::MatrixXd pts(K, L);
  for (long long k = 0; k < K; ++k) {
    long long rest = k;  // row-major: last covariate varies fastest
    for (int l = L - 1; l >= 0; --l) {
      const auto& vs = values[l];
      pts(k, l) = vs[rest % vs.size()];
      rest /= vs.size();
    }
  }
  return from_points(pts);
}

int CovariateSupport::value_index(int cov, double v) const {
  const auto& vs = values_.at(cov);
  auto it = std::lower_bound(vs.begin(), vs.end(), v);
  if (it == vs.end() || *it != v) return -1;
  return static_cast<int>(it - vs.begin());
}

bool CovariateSupport::has_point(const Eigen::RowVectorXd& x) const {
  if (x.size() != points_.cols()) return false;
  for (int k = 0; k < num_points(); ++k)
    if ((points_.row(k) - x).cwiseAbs().maxCoeff() == 0.0) return true;
  return false;
}

int CovariateSupport::flat_index(const Eigen::RowVectorXd& x) const {
  if (x.size() != points_.cols())
    throw std::invalid_argument("support: point has wrong covariate count");
  for (int k = 0; k < num_points(); ++k)
    if ((points_.row(k) - x).cwiseAbs().maxCoeff() == 0.0) return k;
  std::ostringstream os;
  os << "support: unknown point (";
  for (int l = 0; l < x.size(); ++l) os << (l ? "," : "") << x(l);
  os << ")";
  throw std::invalid_argument(os.str());
}

Eigen::MatrixXd indicator_matrix(const CovariateSupport& s) {
  Eigen::MatrixXd A = Eigen::MatrixXd::Zero(s.marginal_dim(), s.num_points());
  for (int l = 0; l < s.num_covariates(); ++l)
    for (int k = 0; k < s.num_points(); ++k)
      A(s.marginal_row(l, s.value_index(l, s.points()(k, l))), k) = 1.0;
  return A;
}

double GroupRecord::marginal(const CovariateSupport& s, int cov, double value) const {
  const int vi = s.value_index(cov, value);
  if (vi < 0) throw std::invalid_argument("group " + id + ": value not in support");
  return marginals(s.marginal_row(cov, vi));
}

const GroupRecord& AggregateDataset::group(const std::string& id) const {
  const int i = group_index(id);
  if (i < 0) throw std::invalid_argument("unknown group " + id);
  return groups[i];
}

int AggregateDataset::group_index(const std::string& id) const {
  for (size_t i = 0; i < groups.size(); ++i)
    if (groups[i].id == id) return static_cast<int>(i);
  return -1;
}

namespace {

void validate_group(const AggregateDataset& ds, const GroupRecord& g, const ValidateOptions& opts,
                    std::vector<Violation>* out) {
  const auto& s = ds.support;
  const std::string where = "group " + g.id;
  if (!std::isfinite(g.share) || g.share < -1e-12)
    out->push_back({where, "share must be a nonnegative number"});
  if (g.count && *g.count < 0) out->push_back({where, "count must be nonnegative"});
  if (!std::isfinite(g.y_mean) || !ds.range.contains(g.y_mean, 1e-12))
    out->push_back({where, "y_mean outside the outcome range"});
  if (g.y_se && (!std::isfinite(*g.y_se) || *g.y_se < 0.0))
    out->push_back({where, "y_se must be a nonnegative number"});
  if (g.marginals.size() != s.marginal_dim()) {
    out->push_back({where, "marginal vector has wrong length"});
    return;
  }
  for (int l = 0; l < s.num_covariates(); ++l) {
    const int nv = static_cast<int>(s.values(l).size());
    double sum = 0.0;
    bool entries_ok = true;
    for (int vi = 0; vi < nv; ++vi) {
      const double m = g.marginals(s.marginal_row(l, vi));
      if (!std::isfinite(m) || m < -1e-12 || m > 1.0 + 1e-12) {
        std::ostringstream os;
        os << "marginal for covariate " << (l + 1) << " value " << s.values(l)[vi]
           << " outside [0,1]";
        out->push_back({where, os.str()});
        entries_ok = false;
      }
      sum += m;
    }
    if (entries_ok && std::abs(sum - 1.0) > opts.sum_tol) {
      std::ostringstream os;
      os << "marginals for covariate " << (l + 1) << " sum to " << sum << ", not 1";
      out->push_back({where, os.str()});
    }
  }
  for (const auto& f : g.finer) {
    std::ostringstream fw;
    fw << where << ", finer covariate " << (f.covariate + 1) << " value " << f.value;
    if (f.covariate < 0 || f.covariate >= s.num_covariates())
      out->push_back({fw.str(), "covariate index out of range"});
    else if (s.value_index(f.covariate, f.value) < 0)
      out->push_back({fw.str(), "value not in the support"});
    if (!std::isfinite(f.y_mean) || !ds.range.contains(f.y_mean, 1e-12))
      out->push_back({fw.str(), "conditional y_mean outside the outcome range"});
    if (f.y_se && (!std::isfinite(*f.y_se) || *f.y_se < 0.0))
      out->push_back({fw.str(), "y_se must be a nonnegative number"});
    if (f.count && *f.count < 0) out->push_back({fw.str(), "count must be nonnegative"});
  }
}

}  // namespace

std::vector<Violation> validate(const AggregateDataset& ds, const ValidateOptions& opts) {
  std::vector<Violation> out;
  if (ds.support.num_points() == 0) {
    out.push_back({"support", "empty"});
    return out;
  }
  if (!(ds.range.lo <= ds.range.hi) || !std::isfinite(ds.range.lo) || !std::isfinite(ds.range.hi))
    out.push_back({"range", "outcome range must be a finite interval"});
  if (ds.binary_outcome && (ds.range.lo != 0.0 || ds.range.hi != 1.0))
    out.push_back({"range", "binary outcome requires range [0,1]"});
  if (ds.groups.empty()) out.push_back({"groups", "no groups"});

  std::set<std::string> seen;
  double share_sum = 0.0;
  for (const auto& g : ds.groups) {
    if (!seen.insert(g.id).second) out.push_back({"group " + g.id, "duplicate group id"});
    share_sum += g.share;
    validate_group(ds, g, opts, &out);
  }
  if (!ds.groups.empty() && std::abs(share_sum - 1.0) > opts.sum_tol) {
    std::ostringstream os;
    os << "shares sum to " << share_sum << ", not 1";
    out.push_back({"groups", os.str()});
  }
  return out;
}

void validate_or_throw(AggregateDataset& ds, const ValidateOptions& opts) {
  if (opts.renormalize) {
    // fix near-one sums in place; anything worse than 1e-6 stays a violation
    for (auto& g : ds.groups) {
      for (int l = 0; l < ds.support.num_covariates(); ++l) {
        const int nv = static_cast<int>(ds.support.values(l).size());
        double sum = 0.0;
        for (int vi = 0; vi < nv; ++vi) sum += g.marginals(ds.support.marginal_row(l, vi));
        if (sum > 0.0 && std::abs(sum - 1.0) > opts.sum_tol && std::abs(sum - 1.0) <= 1e-6)
          for (int vi = 0; vi < nv; ++vi) g.marginals(ds.support.marginal_row(l, vi)) /= sum;
      }
    }
    double share_sum = 0.0;
    for (const auto& g : ds.groups) share_sum += g.share;
    if (share_sum > 0.0 && std::abs(share_sum - 1.0) > opts.sum_tol &&
        std::abs(share_sum - 1.0) <= 1e-6)
      for (auto& g : ds.groups) g.share /= share_sum;
  }
  auto items = validate(ds, opts);
  if (!items.empty()) throw ValidationError(std::move(items));
}

void check_weights(const Eigen::VectorXd& lambda, const CovariateSupport& support) {
  if (lambda.size() != support.num_points())
    throw std::invalid_argument("weights: expected one entry per support point");
  if (!lambda.allFinite()) throw std::invalid_argument("weights: non-finite entry");
  if (lambda.cwiseAbs().maxCoeff() == 0.0)
    throw std::invalid_argument("weights: all entries zero");
}

ShapeConstraintSet::ShapeConstraintSet(Eigen::MatrixXd S, Eigen::VectorXd a) {
  append(S, a);
}

void ShapeConstraintSet::append(const Eigen::MatrixXd& S, const Eigen::VectorXd& a) {
  if (S.rows() != a.size()) throw std::invalid_argument("shape: row/rhs count mismatch");
  if (shared_S_.rows() == 0) {
    shared_S_ = S;
    shared_a_ = a;
    return;
  }
  if (S.cols() != shared_S_.cols()) throw std::invalid_argument("shape: column count mismatch");
  const long r0 = shared_S_.rows();
  shared_S_.conservativeResize(r0 + S.rows(), Eigen::NoChange);
  shared_a_.conservativeResize(r0 + a.size());
  shared_S_.bottomRows(S.rows()) = S;
  shared_a_.tail(a.size()) = a;
}

void ShapeConstraintSet::append_for_group(const std::string& id, const Eigen::MatrixXd& S,
                                          const Eigen::VectorXd& a) {
  if (S.rows() != a.size()) throw std::invalid_argument("shape: row/rhs count mismatch");
  auto& slot = group_rows_[id];
  if (slot.first.rows() == 0) {
    slot = {S, a};
    return;
  }
  const long r0 = slot.first.rows();
  slot.first.conservativeResize(r0 + S.rows(), Eigen::NoChange);
  slot.second.conservativeResize(r0 + a.size());
  slot.first.bottomRows(S.rows()) = S;
  slot.second.tail(a.size()) = a;
}

std::pair<Eigen::MatrixXd, Eigen::VectorXd> ShapeConstraintSet::rows_for(
    const std::string& id) const {
  auto it = group_rows_.find(id);
  const long extra = it == group_rows_.end() ? 0 : it->second.first.rows();
  const long cols = shared_S_.cols() > 0 ? shared_S_.cols()
                    : (extra > 0 ? it->second.first.cols() : 0);
  Eigen::MatrixXd S(shared_S_.rows() + extra, cols);
  Eigen::VectorXd a(shared_S_.rows() + extra);
  if (shared_S_.rows() > 0) {
    S.topRows(shared_S_.rows()) = shared_S_;
    a.head(shared_S_.rows()) = shared_a_;
  }
  if (extra > 0) {
    S.bottomRows(extra) = it->second.first;
    a.tail(extra) = it->second.second;
  }
  return {S, a};
}

ShapeConstraintSet monotone_constraint(const CovariateSupport& s, int cov, Monotone dir) {
  if (cov < 0 || cov >= s.num_covariates())
    throw std::invalid_argument("monotone: covariate index out of range");
  const int K = s.num_points();
  std::vector<std::pair<int, int>> pairs;  // (lower-value cell, adjacent higher-value cell)
  for (int k = 0; k < K; ++k) {
    const int vi = s.value_index(cov, s.points()(k, cov));
    if (vi + 1 >= static_cast<int>(s.values(cov).size())) continue;
    Eigen::RowVectorXd up = s.point(k);
    up(cov) = s.values(cov)[vi + 1];
    for (int j = 0; j < K; ++j)
      if ((s.points().row(j) - up).cwiseAbs().maxCoeff() == 0.0) {
        pairs.emplace_back(k, j);
        break;
      }
  }
  Eigen::MatrixXd S = Eigen::MatrixXd::Zero(static_cast<long>(pairs.size()), K);
  Eigen::VectorXd a = Eigen::VectorXd::Zero(static_cast<long>(pairs.size()));
  for (size_t r = 0; r < pairs.size(); ++r) {
    // increasing: c(low) - c(high) <= 0; decreasing: c(high) - c(low) <= 0
    const double sign = dir == Monotone::increasing ? 1.0 : -1.0;
    S(static_cast<long>(r), pairs[r].first) = sign;
    S(static_cast<long>(r), pairs[r].second) = -sign;
  }
  return ShapeConstraintSet(S, a);
}

}  // namespace aggbounds
