#pragma once

// Frequentist / empirical Bayes fitting of the single-component area model:
// least squares, Prasad-Rao moment and REML estimators of the model variance,
// and the EB shrinkage predictor.

#include <rsae/errors.hpp>
#include <rsae/model.hpp>

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <limits>
#include <string>
#include <vector>

namespace rsae {

struct OlsFit {
  Vector beta;
  Vector residuals;
  Vector leverage;  // diagonal of the hat matrix
};

inline OlsFit ols_fit(const Dataset& data) {
  const Matrix& x = data.x();
  Eigen::ColPivHouseholderQR<Matrix> piv(x);
  if (piv.rank() < x.cols()) throw DataError("ols_fit: rank-deficient design");
  OlsFit fit;
  fit.beta = piv.solve(data.y());
  fit.residuals = data.y() - x * fit.beta;
  Eigen::HouseholderQR<Matrix> qr(x);
  const Matrix q = qr.householderQ() * Matrix::Identity(x.rows(), x.cols());
  fit.leverage = q.rowwise().squaredNorm();
  return fit;
}

inline double sample_variance(const Vector& v) {
  if (v.size() < 2) return 0.0;
  const double mean = v.mean();
  return (v.array() - mean).square().sum() / static_cast<double>(v.size() - 1);
}

/// Moment estimator max(0, [sum e_i^2 - sum D_i (1 - h_ii)] / (m - r)) from
/// OLS residuals e and leverages h.
inline double prasad_rao_a(const Dataset& data) {
  if (data.m() <= data.r()) throw DataError("prasad_rao_a: need m > r");
  const OlsFit fit = ols_fit(data);
  const double rss = fit.residuals.squaredNorm();
  const double adj = (data.d().array() * (1.0 - fit.leverage.array())).sum();
  const double a = (rss - adj) / static_cast<double>(data.m() - data.r());
  return std::max(0.0, a);
}

struct GlsFit {
  Vector beta;
  Matrix information;  // X' V^-1 X
};

// Weighted least squares with weights 1/(A + D_i).
inline GlsFit gls_fit(const Dataset& data, double a) {
  const Vector w = (data.d().array() + a).inverse().matrix();
  const Matrix& x = data.x();
  GlsFit fit;
  fit.information = x.transpose() * w.asDiagonal() * x;
  Eigen::LDLT<Matrix> ldlt(fit.information);
  if (ldlt.info() != Eigen::Success) throw DataError("gls_fit: singular information matrix");
  fit.beta = ldlt.solve(x.transpose() * (w.array() * data.y().array()).matrix());
  return fit;
}

/// Restricted log-likelihood of the model variance A, up to a constant.
inline double reml_loglik(const Dataset& data, double a) {
  const GlsFit gls = gls_fit(data, a);
  const Vector v = data.d().array() + a;
  const Vector resid = data.y() - data.x() * gls.beta;
  const double quad = (resid.array().square() / v.array()).sum();
  Eigen::LLT<Matrix> llt(gls.information);
  const double logdet = 2.0 * llt.matrixL().toDenseMatrix().diagonal().array().log().sum();
  return -0.5 * (v.array().log().sum() + logdet + quad);
}

struct RemlOptions {
  std::size_t grid_points = 81;
  std::size_t max_iterations = 300;
};

struct RemlFit {
  double a = 0.0;
  Vector beta;
  std::size_t iterations = 0;
};

/// REML estimate of A on [0, 1e4 var(y)] by a log-spaced bracketing grid and
/// golden-section refinement to absolute tolerance 1e-10 var(y). beta is the
/// GLS estimate at the maximizer.
inline RemlFit reml_a(const Dataset& data, const RemlOptions& opts = {}) {
  if (data.m() <= data.r()) throw DataError("reml_a: need m > r");
  const double var_y = sample_variance(data.y());
  RemlFit out;
  if (!(var_y > 0.0)) {
    out.beta = gls_fit(data, 0.0).beta;
    return out;
  }
  const double a_max = 1e4 * var_y;
  const double tol = 1e-10 * var_y;

  // Grid: 0 followed by log-spaced points from a_max*1e-12 to a_max.
  std::vector<double> grid(opts.grid_points);
  grid[0] = 0.0;
  const double lo = std::log(a_max * 1e-12);
  const double hi = std::log(a_max);
  for (std::size_t k = 1; k < grid.size(); ++k) {
    grid[k] = std::exp(lo + (hi - lo) * static_cast<double>(k - 1) / static_cast<double>(grid.size() - 2));
  }
  std::size_t best = 0;
  double best_val = -std::numeric_limits<double>::infinity();
  for (std::size_t k = 0; k < grid.size(); ++k) {
    const double val = reml_loglik(data, grid[k]);
    if (val > best_val) {
      best_val = val;
      best = k;
    }
  }
  double left = grid[best == 0 ? 0 : best - 1];
  double right = grid[std::min(best + 1, grid.size() - 1)];

  const double inv_phi = (std::sqrt(5.0) - 1.0) / 2.0;
  double c = right - inv_phi * (right - left);
  double d = left + inv_phi * (right - left);
  double fc = reml_loglik(data, c);
  double fd = reml_loglik(data, d);
  std::size_t it = 0;
  while (right - left > tol) {
    if (++it > opts.max_iterations) {
      throw ConvergenceError("reml_a: golden-section search did not converge in " +
                             std::to_string(opts.max_iterations) + " iterations");
    }
    if (fc >= fd) {
      right = d;
      d = c;
      fd = fc;
      c = right - inv_phi * (right - left);
      fc = reml_loglik(data, c);
    } else {
      left = c;
      c = d;
      fc = fd;
      d = left + inv_phi * (right - left);
      fd = reml_loglik(data, d);
    }
  }
  double a_hat = 0.5 * (left + right);
  if (reml_loglik(data, 0.0) >= reml_loglik(data, a_hat)) a_hat = 0.0;
  out.a = a_hat;
  out.beta = gls_fit(data, a_hat).beta;
  out.iterations = it;
  return out;
}

struct EbPrediction {
  Vector theta;
  Vector shrinkage;  // B_i = D_i / (D_i + A)
};

inline EbPrediction eb_predict(const Dataset& data, const FHParams& params) {
  if (!(params.a_var >= 0.0)) throw std::invalid_argument("eb_predict: negative model variance");
  const Vector xb = data.x() * params.beta;
  EbPrediction out;
  out.theta.resize(xb.size());
  out.shrinkage.resize(xb.size());
  for (Eigen::Index i = 0; i < xb.size(); ++i) {
    const double b = fh_shrinkage(data.d()(i), params.a_var);
    out.shrinkage(i) = b;
    out.theta(i) = data.y()(i) - b * (data.y()(i) - xb(i));
  }
  return out;
}

enum class FHMethod { PrasadRao, REML };

struct FHFit {
  FHParams params;
  FHMethod method = FHMethod::REML;
  EbPrediction predictions;
};

// Prasad-Rao fits use GLS beta at the moment estimate of A.
inline FHFit fit_fh(const Dataset& data, FHMethod method) {
  FHFit fit;
  fit.method = method;
  if (method == FHMethod::REML) {
    const RemlFit reml = reml_a(data);
    fit.params = {reml.beta, reml.a};
  } else {
    const double a = prasad_rao_a(data);
    fit.params = {gls_fit(data, a).beta, a};
  }
  fit.predictions = eb_predict(data, fit.params);
  return fit;
}

}  // namespace rsae
