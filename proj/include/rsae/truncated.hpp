#pragma once

// Draws from an inverse-gamma law truncated to an interval:
//
//   f(A) ∝ A^-(shape + 1) exp(-rate / A),   lower < A < upper.
//
// The variance conditionals of the mixture sampler have exactly this form,
// with shape = alpha + n/2 - 1 and rate = S/2. shape may be zero or negative
// (few areas in a component) and rate may be zero (empty component), so the
// sampler works on the precision B = 1/A, whose density B^(shape-1) exp(-rate B)
// is a truncated gamma, a power law, or a heavier-than-gamma tail.
//
// Strategy, in order:
//   rate == 0            closed-form inverse CDF of the power law;
//   shape > 0            rejection from the untruncated gamma when the interval
//                        holds more than 10% of its mass, otherwise inverse CDF
//                        through the regularized incomplete gamma (lower or
//                        upper tail form, whichever avoids cancellation);
//   shape <= 0, or the   exact rejection from a piecewise envelope (power law
//   tail underflows      near the boundary, exponential beyond).

#include <rsae/errors.hpp>
#include <rsae/random.hpp>

#include <boost/math/special_functions/gamma.hpp>

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>

namespace rsae {

namespace detail {

inline constexpr double kInf = std::numeric_limits<double>::infinity();
inline constexpr long kMaxRejections = 10'000'000;

// Density B^(k-1) on (lo, hi) by inverse CDF. Requires integrability:
// k > 0 when lo == 0, k < 0 when hi == inf.
template <class URBG>
double power_law_draw(double k, double lo, double hi, URBG& rng) {
  const double u = uniform_open(rng);
  if (k > 0.0) {
    const double rho = lo > 0.0 ? std::exp(k * std::log(lo / hi)) : 0.0;
    return hi * std::pow(rho + u * (1.0 - rho), 1.0 / k);
  }
  if (k < 0.0) {
    const double rho = std::isinf(hi) ? 0.0 : std::exp(k * std::log(hi / lo));
    return lo * std::pow(1.0 - u * (1.0 - rho), 1.0 / k);
  }
  return lo * std::exp(u * std::log(hi / lo));
}

// log of the integral of B^(k-1) over (lo, c).
inline double log_power_integral(double k, double lo, double c) {
  if (lo == 0.0) return k * std::log(c) - std::log(k);
  const double t = std::log(lo / c);
  if (k == 0.0) return std::log(-t);
  return k * std::log(c) + std::log(-std::expm1(k * t) / k);
}

// Exponential with rate lambda truncated to (0, width).
template <class URBG>
double truncated_exponential(double lambda, double width, URBG& rng) {
  const double u = uniform_open(rng);
  return -std::log1p(u * std::expm1(-lambda * width)) / lambda;
}

// Exact rejection sampler for B^(k-1) exp(-r B) on (lo, hi), r > 0.
template <class URBG>
double envelope_draw(double k, double r, double lo, double hi, URBG& rng) {
  const auto log_g = [&](double b) { return (k - 1.0) * std::log(b) - r * b; };
  if (k <= 1.0) {
    // Power-law piece on (lo, c] bounded by B^(k-1) e^(-r lo); exponential piece
    // on (c, hi) bounded by c^(k-1) e^(-r B).
    const double c = std::clamp(std::max(lo, 1.0 / r), lo, hi);
    const double log_m1 = c > lo ? -r * lo + log_power_integral(k, lo, c) : -kInf;
    const double log_m2 = c < hi ? (k - 1.0) * std::log(c) - r * c +
                                       std::log(-std::expm1(-r * (hi - c))) - std::log(r)
                                 : -kInf;
    const double first_prob =
        log_m2 == -kInf ? 1.0 : (log_m1 == -kInf ? 0.0 : 1.0 / (1.0 + std::exp(log_m2 - log_m1)));
    for (long it = 0; it < kMaxRejections; ++it) {
      if (uniform_open(rng) < first_prob) {
        const double b = power_law_draw(k, lo, c, rng);
        if (std::log(uniform_open(rng)) < -r * (b - lo)) return b;
      } else {
        const double b = c + truncated_exponential(r, hi - c, rng);
        if (std::log(uniform_open(rng)) < (k - 1.0) * std::log(b / c)) return b;
      }
    }
    throw SamplerError("truncated inverse-gamma: envelope rejection did not accept");
  }

  // k > 1: log-concave target with mode (k-1)/r.
  const double mode = (k - 1.0) / r;
  if (lo >= mode) {
    const double lambda = r - (k - 1.0) / lo;
    if (lambda > 1e-8 * r) {
      for (long it = 0; it < kMaxRejections; ++it) {
        const double b = lo + truncated_exponential(lambda, hi - lo, rng);
        const double log_ratio = (k - 1.0) * std::log(b / lo) - (r - lambda) * (b - lo);
        if (std::log(uniform_open(rng)) < log_ratio) return b;
      }
      throw SamplerError("truncated inverse-gamma: tail rejection did not accept");
    }
  } else if (hi <= mode) {
    const double slope = (k - 1.0) / hi - r;
    if (slope > 1e-8 * r) {
      for (long it = 0; it < kMaxRejections; ++it) {
        const double b = hi - truncated_exponential(slope, hi - lo, rng);
        const double log_ratio = log_g(b) - log_g(hi) - slope * (b - hi);
        if (std::log(uniform_open(rng)) < log_ratio) return b;
      }
      throw SamplerError("truncated inverse-gamma: tail rejection did not accept");
    }
  }
  if (std::isinf(hi)) {
    for (long it = 0; it < kMaxRejections; ++it) {
      const double b = gamma_draw(k, r, rng);
      if (b > lo && b < hi) return b;
    }
    throw SamplerError("truncated inverse-gamma: gamma rejection did not accept");
  }
  // Bounded interval around (or touching) the mode: uniform proposal.
  const double peak = log_g(std::clamp(mode, lo, hi));
  for (long it = 0; it < kMaxRejections; ++it) {
    const double b = lo + (hi - lo) * uniform_open(rng);
    if (std::log(uniform_open(rng)) < log_g(b) - peak) return b;
  }
  throw SamplerError("truncated inverse-gamma: uniform rejection did not accept");
}

template <class URBG>
double truncated_gamma_draw(double k, double r, double lo, double hi, URBG& rng) {
  namespace bm = boost::math;
  const double xlo = r * lo;
  const double xhi = r * hi;
  double p_lo = 0.0, q_lo = 1.0, p_hi = 1.0, q_hi = 0.0;
  try {
    if (xlo > 0.0) {
      p_lo = bm::gamma_p(k, xlo);
      q_lo = bm::gamma_q(k, xlo);
    }
    if (!std::isinf(xhi)) {
      p_hi = bm::gamma_p(k, xhi);
      q_hi = bm::gamma_q(k, xhi);
    }
  } catch (const std::exception&) {
    return envelope_draw(k, r, lo, hi, rng);
  }
  const bool lower_form = p_lo < 0.5;
  const double mass = lower_form ? p_hi - p_lo : q_lo - q_hi;

  if (mass > 0.1) {
    for (int it = 0; it < 1000; ++it) {
      const double b = gamma_draw(k, r, rng);
      if (b > lo && b < hi) return b;
    }
  }
  try {
    if (lower_form) {
      if (p_hi > p_lo && p_hi > 1e-300 && (p_hi - p_lo) > 1e-10 * p_hi) {
        const double v = p_lo + uniform_open(rng) * (p_hi - p_lo);
        return bm::gamma_p_inv(k, v) / r;
      }
    } else if (q_lo > q_hi && q_lo > 1e-300 && (q_lo - q_hi) > 1e-10 * q_lo) {
      const double v = q_hi + uniform_open(rng) * (q_lo - q_hi);
      return bm::gamma_q_inv(k, v) / r;
    }
  } catch (const std::exception&) {
  }
  return envelope_draw(k, r, lo, hi, rng);
}

}  // namespace detail

/// One draw from the inverse-gamma(shape, rate) law restricted to (lower, upper).
///
/// upper may be +inf and lower may be 0. rate == 0 gives the power law
/// A^-(shape+1). Throws std::invalid_argument for an empty interval, a negative
/// rate, or a configuration whose density is not integrable on the interval.
template <class URBG>
double sample_truncated_invgamma(double shape, double rate, double lower, double upper, URBG& rng) {
  if (!(lower >= 0.0) || !(upper > lower)) {
    throw std::invalid_argument("sample_truncated_invgamma: empty interval");
  }
  if (!(rate >= 0.0) || !std::isfinite(rate) || !std::isfinite(shape)) {
    throw std::invalid_argument("sample_truncated_invgamma: invalid shape or rate");
  }
  const bool upper_open = std::isinf(upper);
  const bool lower_open = lower == 0.0;
  if (upper_open && !(shape > 0.0)) {
    throw std::invalid_argument("sample_truncated_invgamma: density not integrable at infinity");
  }
  if (lower_open && rate == 0.0 && !(shape < 0.0)) {
    throw std::invalid_argument("sample_truncated_invgamma: density not integrable at zero");
  }
  const double lo = upper_open ? 0.0 : 1.0 / upper;
  const double hi = lower_open ? detail::kInf : 1.0 / lower;

  double b;
  if (rate == 0.0) {
    b = detail::power_law_draw(shape, lo, hi, rng);
  } else if (shape <= 0.0) {
    b = detail::envelope_draw(shape, rate, lo, hi, rng);
  } else {
    b = detail::truncated_gamma_draw(shape, rate, lo, hi, rng);
  }
  double a = 1.0 / b;
  if (!(a > lower)) a = std::nextafter(lower, detail::kInf);
  if (!(a < upper)) a = std::nextafter(upper, 0.0);
  return a;
}

}  // namespace rsae
