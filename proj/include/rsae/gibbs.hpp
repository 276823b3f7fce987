#pragma once

// Gibbs samplers for the two-component mixture model and for the
// single-component (Fay-Herriot) hierarchical Bayes model.
//
// Mixture sweep order is theta -> beta -> p -> A1 -> A2 -> delta (systematic
// scan). Component convention: delta_i = 1 selects variance A2 and has prior
// probability p, so p is the outlier proportion and the Beta conditional of p
// counts outliers.

#include <rsae/errors.hpp>
#include <rsae/fh_classic.hpp>
#include <rsae/model.hpp>
#include <rsae/random.hpp>
#include <rsae/truncated.hpp>

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <future>
#include <limits>
#include <numeric>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace rsae {

struct ChainConfig {
  std::size_t iterations = 6000;
  std::size_t burn_in = 1000;
  std::size_t thin = 1;
  std::uint64_t seed = 1;
  std::size_t chains = 2;

  std::size_t retained() const noexcept {
    return iterations > burn_in && thin > 0 ? (iterations - burn_in) / thin : 0;
  }

  void validate() const {
    if (thin < 1) throw std::invalid_argument("chain config: thin must be at least 1");
    if (chains < 1) throw std::invalid_argument("chain config: need at least one chain");
    if (burn_in >= iterations) throw std::invalid_argument("chain config: burn_in must be below iterations");
    if (retained() < 100) throw std::invalid_argument("chain config: fewer than 100 retained draws per chain");
  }

  // Shorter profile used by the simulation studies.
  static ChainConfig desk(std::uint64_t seed = 1) { return {2000, 500, 1, seed, 2}; }
};

enum class ModelKind { FayHerriot, Mixture };

using DeltaMatrix = Eigen::Matrix<std::uint8_t, Eigen::Dynamic, Eigen::Dynamic>;

// Retained draws of one chain; row k is the k-th retained sweep. For
// Fay-Herriot chains a1 holds A and a2, p, delta are empty.
struct ChainDraws {
  Matrix theta;
  Matrix beta;
  Vector a1;
  Vector a2;
  Vector p;
  DeltaMatrix delta;

  Eigen::Index size() const noexcept { return a1.size(); }
};

struct ChainOutput {
  ModelKind model = ModelKind::Mixture;
  ChainConfig config;
  PriorConfig prior;
  double fh_prior_exponent = 0.0;
  std::vector<ChainDraws> chains;

  std::size_t m() const { return chains.empty() ? 0 : static_cast<std::size_t>(chains.front().theta.cols()); }
  std::size_t r() const { return chains.empty() ? 0 : static_cast<std::size_t>(chains.front().beta.cols()); }
  std::size_t total_draws() const {
    std::size_t n = 0;
    for (const auto& c : chains) n += static_cast<std::size_t>(c.size());
    return n;
  }
};

struct MixtureState {
  Vector theta;
  Vector beta;
  double a1 = 0.0;
  double a2 = 0.0;
  double p = 0.0;
  std::vector<std::uint8_t> delta;
};

struct FHState {
  Vector theta;
  Vector beta;
  double a = 0.0;
};

// ---------------------------------------------------------------------------
// Full conditionals

struct NormalLaw {
  double mean = 0.0;
  double var = 0.0;
};

// theta_i | rest ~ N((D x'b + A_c y) / (D + A_c), D A_c / (D + A_c)).
inline NormalLaw theta_conditional(double y, double d, double xb, double a_c) {
  return {(d * xb + a_c * y) / (d + a_c), d * a_c / (d + a_c)};
}

inline Vector component_variances(const MixtureState& s) {
  Vector v(static_cast<Eigen::Index>(s.delta.size()));
  for (std::size_t i = 0; i < s.delta.size(); ++i) v(static_cast<Eigen::Index>(i)) = s.delta[i] ? s.a2 : s.a1;
  return v;
}

template <class URBG>
Vector draw_theta(const Dataset& data, const Vector& beta, const Vector& comp_var, URBG& rng) {
  const Vector xb = data.x() * beta;
  Vector theta(xb.size());
  for (Eigen::Index i = 0; i < xb.size(); ++i) {
    const NormalLaw law = theta_conditional(data.y()(i), data.d()(i), xb(i), comp_var(i));
    theta(i) = law.mean + std::sqrt(law.var) * standard_normal(rng);
  }
  return theta;
}

struct BetaConditional {
  Vector mean;
  Matrix precision;  // sum_i x_i x_i' / A_c(i)
};

inline BetaConditional beta_conditional(const Dataset& data, const Vector& theta, const Vector& comp_var) {
  const Vector w = comp_var.array().inverse().matrix();
  BetaConditional out;
  out.precision = data.x().transpose() * w.asDiagonal() * data.x();
  Eigen::LLT<Matrix> llt(out.precision);
  if (llt.info() != Eigen::Success) throw SamplerError("beta conditional: singular precision matrix");
  out.mean = llt.solve(data.x().transpose() * (w.array() * theta.array()).matrix());
  return out;
}

template <class URBG>
Vector draw_beta(const Dataset& data, const Vector& theta, const Vector& comp_var, URBG& rng) {
  const BetaConditional cond = beta_conditional(data, theta, comp_var);
  Eigen::LLT<Matrix> llt(cond.precision);
  Vector z(cond.mean.size());
  for (Eigen::Index j = 0; j < z.size(); ++j) z(j) = standard_normal(rng);
  // precision = L L', so L'^-1 z has covariance precision^-1.
  return cond.mean + llt.matrixU().solve(z);
}

template <class URBG>
double draw_p(std::span<const std::uint8_t> delta, const PriorConfig& prior, URBG& rng) {
  const double outliers = static_cast<double>(std::count(delta.begin(), delta.end(), std::uint8_t{1}));
  const double m = static_cast<double>(delta.size());
  return beta_draw(outliers + prior.p_beta_a, m - outliers + prior.p_beta_b, rng);
}

// Density A^-(shape+1) exp(-rate/A) on (lower, upper).
struct VarianceConditional {
  double shape = 0.0;
  double rate = 0.0;
  double lower = 0.0;
  double upper = std::numeric_limits<double>::infinity();
};

namespace detail {

struct ComponentStats {
  double count[2] = {0.0, 0.0};
  double ss[2] = {0.0, 0.0};
};

inline ComponentStats component_stats(const MixtureState& s, const Dataset& data) {
  ComponentStats st;
  const Vector xb = data.x() * s.beta;
  for (std::size_t i = 0; i < s.delta.size(); ++i) {
    const auto k = s.delta[i] ? 1 : 0;
    const double e = s.theta(static_cast<Eigen::Index>(i)) - xb(static_cast<Eigen::Index>(i));
    st.count[k] += 1.0;
    st.ss[k] += e * e;
  }
  return st;
}

}  // namespace detail

inline VarianceConditional a1_conditional(const MixtureState& s, const Dataset& data, const PriorConfig& prior) {
  const auto st = detail::component_stats(s, data);
  return {prior.alpha1 + 0.5 * st.count[0] - 1.0, 0.5 * st.ss[0], 0.0, s.a2};
}

inline VarianceConditional a2_conditional(const MixtureState& s, const Dataset& data, const PriorConfig& prior) {
  const auto st = detail::component_stats(s, data);
  return {prior.alpha2 + 0.5 * st.count[1] - 1.0, 0.5 * st.ss[1], s.a1, std::numeric_limits<double>::infinity()};
}

// A1 when A2 is tied to ratio * A1: both components inform the single scale.
inline VarianceConditional tied_a1_conditional(const MixtureState& s, const Dataset& data,
                                               const PriorConfig& prior, double ratio) {
  const auto st = detail::component_stats(s, data);
  const double n = st.count[0] + st.count[1];
  return {prior.alpha1 + prior.alpha2 + 0.5 * n - 1.0, 0.5 * (st.ss[0] + st.ss[1] / ratio), 0.0,
          std::numeric_limits<double>::infinity()};
}

template <class URBG>
double draw_variance(const VarianceConditional& c, URBG& rng) {
  return sample_truncated_invgamma(c.shape, c.rate, c.lower, c.upper, rng);
}

template <class URBG>
double draw_a1(const MixtureState& s, const Dataset& data, const PriorConfig& prior, URBG& rng) {
  return draw_variance(a1_conditional(s, data, prior), rng);
}

template <class URBG>
double draw_a2(const MixtureState& s, const Dataset& data, const PriorConfig& prior, URBG& rng) {
  return draw_variance(a2_conditional(s, data, prior), rng);
}

/// P(delta_i = 1 | theta, beta, A1, A2, p) for residual theta_i - x_i'beta.
inline double outlier_probability(double resid, double a1, double a2, double p) {
  const double r2 = resid * resid;
  const double l1 = detail::safe_log(p) - 0.5 * std::log(a2) - 0.5 * r2 / a2;
  const double l0 = detail::safe_log(1.0 - p) - 0.5 * std::log(a1) - 0.5 * r2 / a1;
  return std::exp(l1 - detail::log_sum_exp(l0, l1));
}

template <class URBG>
void draw_delta(MixtureState& s, const Dataset& data, URBG& rng) {
  const Vector xb = data.x() * s.beta;
  for (std::size_t i = 0; i < s.delta.size(); ++i) {
    const auto row = static_cast<Eigen::Index>(i);
    const double q = outlier_probability(s.theta(row) - xb(row), s.a1, s.a2, s.p);
    s.delta[i] = uniform_open(rng) < q ? 1 : 0;
  }
}

// Flat-or-power prior A^-exponent on the single variance: IG(m/2 + exponent - 1, S/2).
inline VarianceConditional fh_variance_conditional(const FHState& s, const Dataset& data, double exponent) {
  const Vector e = s.theta - data.x() * s.beta;
  return {0.5 * static_cast<double>(data.m()) + exponent - 1.0, 0.5 * e.squaredNorm(), 0.0,
          std::numeric_limits<double>::infinity()};
}

// ---------------------------------------------------------------------------
// Log posteriors (up to constants) used for the finiteness guard.

inline double mixture_log_posterior(const MixtureState& s, const Dataset& data, const PriorConfig& prior) {
  const Vector xb = data.x() * s.beta;
  double lp = -prior.alpha1 * std::log(s.a1) - prior.alpha2 * std::log(s.a2) +
              (prior.p_beta_a - 1.0) * detail::safe_log(s.p) + (prior.p_beta_b - 1.0) * detail::safe_log(1.0 - s.p);
  for (Eigen::Index i = 0; i < xb.size(); ++i) {
    const double ey = data.y()(i) - s.theta(i);
    const double ev = s.theta(i) - xb(i);
    const bool out = s.delta[static_cast<std::size_t>(i)] != 0;
    const double a = out ? s.a2 : s.a1;
    lp += -0.5 * ey * ey / data.d()(i) - 0.5 * std::log(a) - 0.5 * ev * ev / a +
          (out ? std::log(s.p) : std::log1p(-s.p));
  }
  return lp;
}

inline double fh_log_posterior(const FHState& s, const Dataset& data, double exponent) {
  const Vector xb = data.x() * s.beta;
  double lp = -exponent * std::log(s.a);
  for (Eigen::Index i = 0; i < xb.size(); ++i) {
    const double ey = data.y()(i) - s.theta(i);
    const double ev = s.theta(i) - xb(i);
    lp += -0.5 * ey * ey / data.d()(i) - 0.5 * std::log(s.a) - 0.5 * ev * ev / s.a;
  }
  return lp;
}

// ---------------------------------------------------------------------------
// Initialization

/// Start state: beta from OLS, A1 from Prasad-Rao (floored at 1e-8 var(y)),
/// A2 = 10 A1, p = 0.1, delta = 1 on the 10% largest |OLS residuals|, theta the
/// EB prediction at (beta_OLS, A1).
inline MixtureState initial_mixture_state(const Dataset& data) {
  const OlsFit ols = ols_fit(data);
  const double floor = std::max(1e-8 * sample_variance(data.y()), std::numeric_limits<double>::min());
  MixtureState s;
  s.beta = ols.beta;
  s.a1 = std::max(prasad_rao_a(data), floor);
  s.a2 = 10.0 * s.a1;
  s.p = 0.1;
  const std::size_t m = data.m();
  s.delta.assign(m, 0);
  std::vector<std::size_t> order(m);
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    return std::abs(ols.residuals(static_cast<Eigen::Index>(a))) > std::abs(ols.residuals(static_cast<Eigen::Index>(b)));
  });
  const auto flagged = static_cast<std::size_t>(std::ceil(0.1 * static_cast<double>(m)));
  for (std::size_t k = 0; k < flagged; ++k) s.delta[order[k]] = 1;
  s.theta = eb_predict(data, {s.beta, s.a1}).theta;
  return s;
}

inline FHState initial_fh_state(const Dataset& data) {
  const OlsFit ols = ols_fit(data);
  const double floor = std::max(1e-8 * sample_variance(data.y()), std::numeric_limits<double>::min());
  FHState s;
  s.beta = ols.beta;
  s.a = std::max(prasad_rao_a(data), floor);
  s.theta = eb_predict(data, {s.beta, s.a}).theta;
  return s;
}

// ---------------------------------------------------------------------------
// Chain drivers

/// Switches for restricted runs of the mixture sampler. The defaults give the
/// full sampler; the others hold blocks fixed for validation studies.
struct MixtureControls {
  std::optional<MixtureState> initial;
  bool hold_theta = false;
  bool hold_beta = false;
  bool hold_variances = false;
  bool hold_delta = false;
  std::optional<double> fixed_p;
  // When set, A2 is not sampled but kept at variance_ratio * A1.
  std::optional<double> variance_ratio;
};

namespace detail {

inline void check_prior(const PriorConfig& prior, std::size_t m, std::size_t r) {
  prior.check_beta_hyperparameters();
  const PriorVerdict verdict = validate_prior(prior, m, r);
  if (!verdict.ok()) {
    std::string msg = "prior fails propriety conditions:";
    for (const auto& v : verdict.violations) msg += " [" + v + "]";
    throw PriorError(msg);
  }
}

inline ChainDraws allocate_draws(std::size_t retained, std::size_t m, std::size_t r, bool mixture) {
  const auto n = static_cast<Eigen::Index>(retained);
  ChainDraws d;
  d.theta.resize(n, static_cast<Eigen::Index>(m));
  d.beta.resize(n, static_cast<Eigen::Index>(r));
  d.a1.resize(n);
  if (mixture) {
    d.a2.resize(n);
    d.p.resize(n);
    d.delta.resize(n, static_cast<Eigen::Index>(m));
  }
  return d;
}

inline bool finite(const Vector& v) { return v.allFinite(); }

template <class ChainFn>
std::vector<ChainDraws> run_chains(std::size_t chains, ChainFn fn) {
  std::vector<ChainDraws> out(chains);
  if (chains == 1) {
    out[0] = fn(0);
    return out;
  }
  std::vector<std::future<ChainDraws>> futures;
  futures.reserve(chains);
  for (std::size_t c = 0; c < chains; ++c) futures.push_back(std::async(std::launch::async, fn, c));
  for (std::size_t c = 0; c < chains; ++c) out[c] = futures[c].get();
  return out;
}

inline std::string chain_label(std::size_t chain, std::size_t iteration) {
  return " (chain " + std::to_string(chain) + ", iteration " + std::to_string(iteration) + ")";
}

}  // namespace detail

inline ChainDraws run_single_mixture_chain(const Dataset& data, const PriorConfig& prior, const ChainConfig& cfg,
                                           const MixtureControls& ctl, std::size_t chain_index) {
  Rng rng = make_stream(cfg.seed, chain_index);
  MixtureState s = ctl.initial ? *ctl.initial : initial_mixture_state(data);
  if (ctl.fixed_p) s.p = *ctl.fixed_p;
  if (ctl.variance_ratio) s.a2 = *ctl.variance_ratio * s.a1;

  const std::size_t retained = cfg.retained();
  ChainDraws draws = detail::allocate_draws(retained, data.m(), data.r(), true);
  std::size_t stored = 0;
  for (std::size_t it = 0; it < cfg.iterations; ++it) {
    const Vector comp = component_variances(s);
    if (!ctl.hold_theta) s.theta = draw_theta(data, s.beta, comp, rng);
    if (!ctl.hold_beta) s.beta = draw_beta(data, s.theta, comp, rng);
    if (!ctl.fixed_p) s.p = draw_p(s.delta, prior, rng);
    if (!ctl.hold_variances) {
      if (ctl.variance_ratio) {
        s.a1 = draw_variance(tied_a1_conditional(s, data, prior, *ctl.variance_ratio), rng);
        s.a2 = *ctl.variance_ratio * s.a1;
      } else {
        s.a1 = draw_a1(s, data, prior, rng);
        s.a2 = draw_a2(s, data, prior, rng);
      }
    }
    if (!ctl.hold_delta) draw_delta(s, data, rng);

    const double lp = mixture_log_posterior(s, data, prior);
    if (!std::isfinite(lp) || !detail::finite(s.theta) || !detail::finite(s.beta) || !(s.a1 > 0.0) ||
        !(s.a2 > s.a1) || !(s.p > 0.0 && s.p < 1.0)) {
      throw SamplerError("mixture sampler reached an invalid or non-finite state" +
                             detail::chain_label(chain_index, it + 1),
                         it + 1);
    }
    if (it >= cfg.burn_in && (it - cfg.burn_in) % cfg.thin == 0 && stored < retained) {
      const auto row = static_cast<Eigen::Index>(stored++);
      draws.theta.row(row) = s.theta.transpose();
      draws.beta.row(row) = s.beta.transpose();
      draws.a1(row) = s.a1;
      draws.a2(row) = s.a2;
      draws.p(row) = s.p;
      for (std::size_t i = 0; i < s.delta.size(); ++i) draws.delta(row, static_cast<Eigen::Index>(i)) = s.delta[i];
    }
  }
  return draws;
}

/// Runs cfg.chains independent mixture chains; chain c uses stream (cfg.seed, c).
/// Throws PriorError before sampling when the prior fails the propriety check.
inline ChainOutput run_mixture_chain(const Dataset& data, const PriorConfig& prior, const ChainConfig& cfg,
                                     const MixtureControls& ctl = {}) {
  detail::check_prior(prior, data.m(), data.r());
  cfg.validate();
  if (ctl.fixed_p && !(*ctl.fixed_p > 0.0 && *ctl.fixed_p < 1.0)) {
    throw std::invalid_argument("fixed_p must lie strictly inside (0,1)");
  }
  if (ctl.variance_ratio && !(*ctl.variance_ratio > 1.0)) {
    throw std::invalid_argument("variance_ratio must exceed 1");
  }
  ChainOutput out;
  out.model = ModelKind::Mixture;
  out.config = cfg;
  out.prior = prior;
  out.chains = detail::run_chains(cfg.chains, [&](std::size_t c) {
    return run_single_mixture_chain(data, prior, cfg, ctl, c);
  });
  return out;
}

inline ChainDraws run_single_fh_chain(const Dataset& data, const ChainConfig& cfg, double exponent,
                                      std::size_t chain_index) {
  Rng rng = make_stream(cfg.seed, chain_index);
  FHState s = initial_fh_state(data);
  const std::size_t retained = cfg.retained();
  ChainDraws draws = detail::allocate_draws(retained, data.m(), data.r(), false);
  std::size_t stored = 0;
  for (std::size_t it = 0; it < cfg.iterations; ++it) {
    const Vector comp = Vector::Constant(static_cast<Eigen::Index>(data.m()), s.a);
    s.theta = draw_theta(data, s.beta, comp, rng);
    s.beta = draw_beta(data, s.theta, comp, rng);
    s.a = draw_variance(fh_variance_conditional(s, data, exponent), rng);

    const double lp = fh_log_posterior(s, data, exponent);
    if (!std::isfinite(lp) || !detail::finite(s.theta) || !detail::finite(s.beta) || !(s.a > 0.0)) {
      throw SamplerError("Fay-Herriot sampler reached a non-finite state" + detail::chain_label(chain_index, it + 1),
                         it + 1);
    }
    if (it >= cfg.burn_in && (it - cfg.burn_in) % cfg.thin == 0 && stored < retained) {
      const auto row = static_cast<Eigen::Index>(stored++);
      draws.theta.row(row) = s.theta.transpose();
      draws.beta.row(row) = s.beta.transpose();
      draws.a1(row) = s.a;
    }
  }
  return draws;
}

/// Hierarchical Bayes Fay-Herriot sampler with flat beta prior and prior
/// A^-exponent on the model variance (exponent 0 is the flat prior).
/// Requires m > r + 2 - 2 * exponent for a proper posterior.
inline ChainOutput run_fh_chain(const Dataset& data, const ChainConfig& cfg, double exponent = 0.0) {
  if (!(static_cast<double>(data.m()) > static_cast<double>(data.r()) + 2.0 - 2.0 * exponent)) {
    throw PriorError("Fay-Herriot posterior needs m > r + 2 - 2*exponent");
  }
  cfg.validate();
  ChainOutput out;
  out.model = ModelKind::FayHerriot;
  out.config = cfg;
  out.fh_prior_exponent = exponent;
  out.chains = detail::run_chains(cfg.chains, [&](std::size_t c) { return run_single_fh_chain(data, cfg, exponent, c); });
  return out;
}

}  // namespace rsae
