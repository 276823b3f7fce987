#pragma once

// Domain types for the area-level model and the closed-form pieces shared by
// every fitter: prior propriety check, shrinkage coefficient, mixture
// responsibility, conditional mean and marginal likelihood.
//
// Component convention used throughout the library: delta_i = 1 marks the
// outlier component (variance a2) and P(delta_i = 1) = p.

#include <rsae/errors.hpp>

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <limits>
#include <numbers>
#include <span>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

namespace rsae {

using Vector = Eigen::VectorXd;
using Matrix = Eigen::MatrixXd;

struct AreaObservation {
  std::string area_id;
  double y = 0.0;
  double d_var = 1.0;  // known sampling variance D_i
  std::vector<double> x;
};

/// Validated collection of areas with a cached design matrix.
///
/// Enforces d_var > 0, finite values, a common covariate length r, m > r and a
/// full-column-rank design. Violations raise DataError naming the offending
/// area.
class Dataset {
 public:
  Dataset() = default;

  explicit Dataset(std::vector<AreaObservation> areas, bool intercept_injected = false)
      : areas_(std::move(areas)), intercept_injected_(intercept_injected) {
    if (areas_.empty()) throw DataError("dataset has no areas");
    const std::size_t r = areas_.front().x.size();
    if (r == 0) throw DataError("dataset has no covariates");
    const auto m = areas_.size();
    if (m <= r) {
      throw DataError("need more areas than covariates (m=" + std::to_string(m) +
                      ", r=" + std::to_string(r) + ")");
    }
    x_.resize(static_cast<Eigen::Index>(m), static_cast<Eigen::Index>(r));
    y_.resize(static_cast<Eigen::Index>(m));
    d_.resize(static_cast<Eigen::Index>(m));
    for (std::size_t i = 0; i < m; ++i) {
      const auto& a = areas_[i];
      const auto label = "area " + std::to_string(i + 1) + " ('" + a.area_id + "')";
      if (a.x.size() != r) throw DataError(label + ": covariate length differs from " + std::to_string(r));
      if (!std::isfinite(a.y)) throw DataError(label + ": non-finite y");
      if (!(a.d_var > 0.0) || !std::isfinite(a.d_var)) {
        throw DataError(label + ": sampling variance must be positive and finite");
      }
      const auto row = static_cast<Eigen::Index>(i);
      for (std::size_t j = 0; j < r; ++j) {
        if (!std::isfinite(a.x[j])) throw DataError(label + ": non-finite covariate");
        x_(row, static_cast<Eigen::Index>(j)) = a.x[j];
      }
      y_(row) = a.y;
      d_(row) = a.d_var;
    }
    Eigen::ColPivHouseholderQR<Matrix> qr(x_);
    if (qr.rank() < static_cast<Eigen::Index>(r)) throw DataError("design matrix is rank deficient");
  }

  std::size_t m() const noexcept { return areas_.size(); }
  std::size_t r() const noexcept { return static_cast<std::size_t>(x_.cols()); }
  const std::vector<AreaObservation>& areas() const noexcept { return areas_; }
  const Matrix& x() const noexcept { return x_; }
  const Vector& y() const noexcept { return y_; }
  const Vector& d() const noexcept { return d_; }
  bool intercept_injected() const noexcept { return intercept_injected_; }

  // Copy with the direct estimates replaced; covariates and variances kept.
  Dataset with_y(const Vector& y) const {
    if (static_cast<std::size_t>(y.size()) != m()) throw std::invalid_argument("with_y: length mismatch");
    auto areas = areas_;
    for (std::size_t i = 0; i < areas.size(); ++i) areas[i].y = y(static_cast<Eigen::Index>(i));
    return Dataset(std::move(areas), intercept_injected_);
  }

  friend bool operator==(const Dataset& a, const Dataset& b) {
    if (a.m() != b.m() || a.r() != b.r()) return false;
    for (std::size_t i = 0; i < a.m(); ++i) {
      const auto& u = a.areas_[i];
      const auto& v = b.areas_[i];
      if (u.area_id != v.area_id || u.y != v.y || u.d_var != v.d_var || u.x != v.x) return false;
    }
    return true;
  }

 private:
  std::vector<AreaObservation> areas_;
  Matrix x_;
  Vector y_;
  Vector d_;
  bool intercept_injected_ = false;
};

// Builds a dataset straight from matrices; area ids are 1..m.
inline Dataset make_dataset(const Matrix& x, const Vector& y, const Vector& d) {
  if (x.rows() != y.size() || y.size() != d.size()) throw std::invalid_argument("make_dataset: size mismatch");
  std::vector<AreaObservation> areas(static_cast<std::size_t>(y.size()));
  for (Eigen::Index i = 0; i < y.size(); ++i) {
    auto& a = areas[static_cast<std::size_t>(i)];
    a.area_id = std::to_string(i + 1);
    a.y = y(i);
    a.d_var = d(i);
    a.x.resize(static_cast<std::size_t>(x.cols()));
    for (Eigen::Index j = 0; j < x.cols(); ++j) a.x[static_cast<std::size_t>(j)] = x(i, j);
  }
  return Dataset(std::move(areas));
}

/// Prior pi(beta, A1, A2, p) ∝ A1^-alpha1 A2^-alpha2 I(0 < A1 < A2) with a
/// Beta(p_beta_a, p_beta_b) prior on the outlier proportion p (default uniform).
struct PriorConfig {
  double alpha1 = 0.3;
  double alpha2 = 1.3;
  double p_beta_a = 1.0;
  double p_beta_b = 1.0;

  void check_beta_hyperparameters() const {
    if (!(p_beta_a > 0.0) || !(p_beta_b > 0.0)) {
      throw PriorError("Beta hyperparameters for p must be positive");
    }
  }
};

struct FHParams {
  Vector beta;
  double a_var = 0.0;
};

struct MixtureParams {
  Vector beta;
  double a1 = 0.0;
  double a2 = 0.0;
  double p = 0.0;
};

struct PriorVerdict {
  std::vector<std::string> violations;
  bool ok() const noexcept { return violations.empty(); }
};

/// Sufficient conditions for a proper posterior under the mixture prior.
///
/// Every failed inequality is reported by name; an empty list means the prior
/// is admissible for a dataset of m areas and r covariates.
inline PriorVerdict validate_prior(const PriorConfig& cfg, std::size_t m, std::size_t r) {
  PriorVerdict v;
  const double slack = 2.0 - cfg.alpha1 - cfg.alpha2;
  if (!(cfg.alpha1 < 1.0)) v.violations.emplace_back("alpha1 < 1");
  if (!(cfg.alpha2 > 1.0)) v.violations.emplace_back("alpha2 > 1");
  if (!(slack > 0.0)) v.violations.emplace_back("alpha1 + alpha2 < 2");
  if (!(static_cast<double>(m) > static_cast<double>(r) + 2.0 * slack)) {
    v.violations.emplace_back("m > r + 2(2 - alpha1 - alpha2)");
  }
  return v;
}

/// Weight D/(D+A) placed on the synthetic regression estimate.
inline double fh_shrinkage(double d, double a) {
  if (!(d > 0.0)) throw std::invalid_argument("fh_shrinkage: sampling variance must be positive");
  if (!(a >= 0.0)) throw std::invalid_argument("fh_shrinkage: model variance must be nonnegative");
  return d / (d + a);
}

namespace detail {

inline constexpr double kLogTwoPi = 1.8378770664093454835606594728112;

inline double log_sum_exp(double a, double b) {
  if (a == -std::numeric_limits<double>::infinity()) return b;
  if (b == -std::numeric_limits<double>::infinity()) return a;
  const double hi = std::max(a, b);
  return hi + std::log1p(std::exp(std::min(a, b) - hi));
}

// log(p) with log(0) = -inf instead of a pole error.
inline double safe_log(double p) {
  return p > 0.0 ? std::log(p) : -std::numeric_limits<double>::infinity();
}

inline double log_normal_density(double x, double mean, double var) {
  const double z = x - mean;
  return -0.5 * (kLogTwoPi + std::log(var) + z * z / var);
}

inline void check_mixture_eval(double d, const MixtureParams& params) {
  if (!(d > 0.0)) throw std::invalid_argument("sampling variance must be positive");
  if (!(params.a1 >= 0.0)) throw std::invalid_argument("a1 must be nonnegative");
  if (params.a1 > params.a2) throw std::invalid_argument("mixture requires a1 <= a2");
  if (!(params.p >= 0.0 && params.p <= 1.0)) throw std::invalid_argument("p must lie in [0,1]");
}

}  // namespace detail

/// Posterior probability that an area belongs to the regular (a1) component
/// given (beta, a1, a2, p) and its direct estimate. Evaluated in log space.
inline double mixture_weight(double y, double xb, double d, const MixtureParams& params) {
  detail::check_mixture_eval(d, params);
  const double resid2 = (y - xb) * (y - xb);
  const double v1 = d + params.a1;
  const double v2 = d + params.a2;
  const double l1 = detail::safe_log(1.0 - params.p) - 0.5 * std::log(v1) - 0.5 * resid2 / v1;
  const double l2 = detail::safe_log(params.p) - 0.5 * std::log(v2) - 0.5 * resid2 / v2;
  return std::exp(l1 - detail::log_sum_exp(l1, l2));
}

/// E(theta | beta, a1, a2, p, y): the direct estimate pulled toward x'beta by a
/// responsibility-weighted average of the two component shrinkage factors.
inline double mixture_conditional_mean(double y, double xb, double d, const MixtureParams& params) {
  const double w = mixture_weight(y, xb, d, params);
  const double shrink = w * d / (d + params.a1) + (1.0 - w) * d / (d + params.a2);
  return y - shrink * (y - xb);
}

/// Log-likelihood of (beta, a1, a2, p) from the marginal law of y.
inline double marginal_loglik(const MixtureParams& params, const Dataset& data) {
  if (static_cast<std::size_t>(params.beta.size()) != data.r()) {
    throw std::invalid_argument("marginal_loglik: beta length differs from r");
  }
  const Vector xb = data.x() * params.beta;
  const double lp0 = detail::safe_log(1.0 - params.p);
  const double lp1 = detail::safe_log(params.p);
  double total = 0.0;
  for (Eigen::Index i = 0; i < xb.size(); ++i) {
    const double d = data.d()(i);
    detail::check_mixture_eval(d, params);
    const double l1 = lp0 + detail::log_normal_density(data.y()(i), xb(i), params.a1 + d);
    const double l2 = lp1 + detail::log_normal_density(data.y()(i), xb(i), params.a2 + d);
    total += detail::log_sum_exp(l1, l2);
  }
  return total;
}

/// Marginal log-likelihood of the single-component model y_i ~ N(x_i'beta, A + D_i).
inline double fh_marginal_loglik(const FHParams& params, const Dataset& data) {
  if (!(params.a_var >= 0.0)) throw std::invalid_argument("fh_marginal_loglik: negative variance");
  const Vector xb = data.x() * params.beta;
  double total = 0.0;
  for (Eigen::Index i = 0; i < xb.size(); ++i) {
    total += detail::log_normal_density(data.y()(i), xb(i), params.a_var + data.d()(i));
  }
  return total;
}

}  // namespace rsae
