#pragma once

// Reduction of sampler output to reporting quantities: parameter summaries,
// per-area estimates, outlier probabilities, shrinkage weights and
// convergence diagnostics.

#include <rsae/errors.hpp>
#include <rsae/gibbs.hpp>
#include <rsae/model.hpp>

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace rsae {

struct ParamSummary {
  double mean = 0.0;
  double sd = 0.0;
  double q025 = 0.0;
  double median = 0.0;
  double q975 = 0.0;
};

struct NamedSummary {
  std::string name;
  ParamSummary summary;
};

struct AreaSummary {
  std::string area_id;
  double theta_mean = 0.0;
  double theta_sd = 0.0;
  std::optional<double> outlier_prob;
  double shrinkage = 0.0;
};

// Quantile of sorted data by linear interpolation between order statistics:
// position h = (n - 1) * prob.
inline double sorted_quantile(std::span<const double> sorted, double prob) {
  if (sorted.empty()) throw std::invalid_argument("quantile of empty sample");
  const double h = (static_cast<double>(sorted.size()) - 1.0) * prob;
  const auto lo = static_cast<std::size_t>(std::floor(h));
  const auto hi = std::min(lo + 1, sorted.size() - 1);
  return sorted[lo] + (h - static_cast<double>(lo)) * (sorted[hi] - sorted[lo]);
}

inline ParamSummary summarize(std::span<const double> draws) {
  if (draws.empty()) throw std::invalid_argument("summarize: no draws");
  ParamSummary s;
  double sum = 0.0;
  for (double v : draws) sum += v;
  s.mean = sum / static_cast<double>(draws.size());
  double ss = 0.0;
  for (double v : draws) ss += (v - s.mean) * (v - s.mean);
  s.sd = draws.size() > 1 ? std::sqrt(ss / static_cast<double>(draws.size() - 1)) : 0.0;
  std::vector<double> sorted(draws.begin(), draws.end());
  std::sort(sorted.begin(), sorted.end());
  s.q025 = sorted_quantile(sorted, 0.025);
  s.median = sorted_quantile(sorted, 0.5);
  s.q975 = sorted_quantile(sorted, 0.975);
  // Interpolation can leave the mean a rounding error outside [min, max] for
  // constant input; keep it inside.
  s.mean = std::clamp(s.mean, sorted.front(), sorted.back());
  return s;
}

// Parameter traces of one chain in reporting order: beta_1..beta_r, then A or
// (A1, A2), then p.
inline std::vector<std::pair<std::string, Vector>> parameter_traces(const ChainOutput& out, const ChainDraws& c) {
  std::vector<std::pair<std::string, Vector>> traces;
  for (Eigen::Index j = 0; j < c.beta.cols(); ++j) traces.emplace_back("beta" + std::to_string(j + 1), c.beta.col(j));
  if (out.model == ModelKind::FayHerriot) {
    traces.emplace_back("A", c.a1);
  } else {
    traces.emplace_back("A1", c.a1);
    traces.emplace_back("A2", c.a2);
    traces.emplace_back("p", c.p);
  }
  return traces;
}

namespace detail {

inline void require_draws(const ChainOutput& out, std::size_t minimum) {
  if (out.chains.empty() || out.total_draws() < minimum) {
    throw std::invalid_argument("need at least " + std::to_string(minimum) + " retained draws");
  }
}

}  // namespace detail

/// Pooled summaries over all chains, rows ordered as in parameter_traces.
inline std::vector<NamedSummary> summarize_params(const ChainOutput& out) {
  detail::require_draws(out, 100);
  std::vector<NamedSummary> rows;
  const auto first = parameter_traces(out, out.chains.front());
  for (std::size_t k = 0; k < first.size(); ++k) {
    std::vector<double> pooled;
    pooled.reserve(out.total_draws());
    for (const auto& c : out.chains) {
      const auto traces = parameter_traces(out, c);
      pooled.insert(pooled.end(), traces[k].second.data(), traces[k].second.data() + traces[k].second.size());
    }
    rows.push_back({first[k].first, summarize(pooled)});
  }
  return rows;
}

/// Posterior P(delta_i = 1 | y): the mean of retained indicator draws.
inline Vector outlier_probs(const ChainOutput& out) {
  if (out.model != ModelKind::Mixture) throw std::invalid_argument("outlier_probs: chain has no component indicators");
  detail::require_draws(out, 1);
  Vector sum = Vector::Zero(static_cast<Eigen::Index>(out.m()));
  for (const auto& c : out.chains) sum += c.delta.cast<double>().colwise().sum().transpose();
  return sum / static_cast<double>(out.total_draws());
}

/// Posterior mean of the weight on the synthetic estimate. Mixture chains
/// average w D/(D+A1) + (1-w) D/(D+A2) with w the a1-component responsibility
/// given (beta, A1, A2, p, y); single-component chains average D/(D+A).
inline Vector shrinkage_summary(const ChainOutput& out, const Dataset& data) {
  detail::require_draws(out, 1);
  if (out.m() != data.m()) throw std::invalid_argument("shrinkage_summary: dataset size differs from chain output");
  const auto m = static_cast<Eigen::Index>(data.m());
  Vector sum = Vector::Zero(m);
  for (const auto& c : out.chains) {
    for (Eigen::Index k = 0; k < c.size(); ++k) {
      if (out.model == ModelKind::FayHerriot) {
        for (Eigen::Index i = 0; i < m; ++i) sum(i) += data.d()(i) / (data.d()(i) + c.a1(k));
        continue;
      }
      const Vector xb = data.x() * c.beta.row(k).transpose();
      const MixtureParams params{Vector(), c.a1(k), c.a2(k), c.p(k)};
      for (Eigen::Index i = 0; i < m; ++i) {
        const double d = data.d()(i);
        const double w = mixture_weight(data.y()(i), xb(i), d, params);
        sum(i) += w * d / (d + params.a1) + (1.0 - w) * d / (d + params.a2);
      }
    }
  }
  return sum / static_cast<double>(out.total_draws());
}

inline std::vector<AreaSummary> area_summaries(const ChainOutput& out, const Dataset& data) {
  detail::require_draws(out, 1);
  const auto m = static_cast<Eigen::Index>(data.m());
  const double n = static_cast<double>(out.total_draws());
  Vector mean = Vector::Zero(m);
  for (const auto& c : out.chains) mean += c.theta.colwise().sum().transpose();
  mean /= n;
  Vector ss = Vector::Zero(m);
  for (const auto& c : out.chains) ss += (c.theta.rowwise() - mean.transpose()).array().square().colwise().sum().matrix().transpose();
  const Vector shrink = shrinkage_summary(out, data);
  std::optional<Vector> probs;
  if (out.model == ModelKind::Mixture) probs = outlier_probs(out);
  std::vector<AreaSummary> rows(data.m());
  for (Eigen::Index i = 0; i < m; ++i) {
    auto& row = rows[static_cast<std::size_t>(i)];
    row.area_id = data.areas()[static_cast<std::size_t>(i)].area_id;
    row.theta_mean = mean(i);
    row.theta_sd = n > 1 ? std::sqrt(ss(i) / (n - 1.0)) : 0.0;
    if (probs) row.outlier_prob = (*probs)(i);
    row.shrinkage = shrink(i);
  }
  return rows;
}

// Posterior mean of theta pooled over chains.
inline Vector theta_posterior_mean(const ChainOutput& out) {
  detail::require_draws(out, 1);
  Vector sum = Vector::Zero(static_cast<Eigen::Index>(out.m()));
  for (const auto& c : out.chains) sum += c.theta.colwise().sum().transpose();
  return sum / static_cast<double>(out.total_draws());
}

// ---------------------------------------------------------------------------
// Diagnostics

/// Effective sample size of one trace. Autocorrelations are summed in
/// consecutive pairs until the first pair with a negative sum.
inline double effective_sample_size(std::span<const double> x) {
  const std::size_t n = x.size();
  if (n < 4) throw std::invalid_argument("effective_sample_size: trace too short");
  double mean = 0.0;
  for (double v : x) mean += v;
  mean /= static_cast<double>(n);
  const auto autocov = [&](std::size_t lag) {
    double s = 0.0;
    for (std::size_t t = 0; t + lag < n; ++t) s += (x[t] - mean) * (x[t + lag] - mean);
    return s / static_cast<double>(n);
  };
  const double c0 = autocov(0);
  if (!(c0 > 0.0)) return static_cast<double>(n);
  double tau = -1.0;
  for (std::size_t k = 0; 2 * k + 1 < n; ++k) {
    const double pair = (autocov(2 * k) + autocov(2 * k + 1)) / c0;
    if (pair < 0.0) break;
    tau += 2.0 * pair;
  }
  tau = std::max(tau, 1.0 / std::log10(static_cast<double>(n)));
  return static_cast<double>(n) / tau;
}

/// Between/within-chain scale reduction sqrt(((n-1)/n W + B/n) / W).
inline double scale_reduction(const std::vector<std::span<const double>>& chains) {
  if (chains.size() < 2) throw std::invalid_argument("scale_reduction: need at least two chains");
  const std::size_t n = chains.front().size();
  for (const auto& c : chains) {
    if (c.size() != n || n < 2) throw std::invalid_argument("scale_reduction: chains must share a length >= 2");
  }
  std::vector<double> means;
  double within = 0.0;
  for (const auto& c : chains) {
    double mu = 0.0;
    for (double v : c) mu += v;
    mu /= static_cast<double>(n);
    double ss = 0.0;
    for (double v : c) ss += (v - mu) * (v - mu);
    within += ss / static_cast<double>(n - 1);
    means.push_back(mu);
  }
  within /= static_cast<double>(chains.size());
  double grand = 0.0;
  for (double mu : means) grand += mu;
  grand /= static_cast<double>(means.size());
  double between = 0.0;
  for (double mu : means) between += (mu - grand) * (mu - grand);
  between *= static_cast<double>(n) / static_cast<double>(means.size() - 1);
  if (!(within > 0.0)) return 1.0;
  const double nn = static_cast<double>(n);
  return std::sqrt(((nn - 1.0) / nn * within + between / nn) / within);
}

struct ParamDiagnostic {
  std::string name;
  double ess = 0.0;                    // summed over chains
  std::optional<double> scale_reduction;  // needs two or more chains
  bool flagged = false;                // scale reduction above 1.1
};

inline std::vector<ParamDiagnostic> diagnostics(const ChainOutput& out) {
  if (out.chains.empty()) throw std::invalid_argument("diagnostics: no chains");
  for (const auto& c : out.chains) {
    if (c.size() < 100) throw std::invalid_argument("diagnostics: need at least 100 draws per chain");
  }
  std::vector<std::vector<std::pair<std::string, Vector>>> per_chain;
  for (const auto& c : out.chains) per_chain.push_back(parameter_traces(out, c));
  std::vector<ParamDiagnostic> rows;
  for (std::size_t k = 0; k < per_chain.front().size(); ++k) {
    ParamDiagnostic d;
    d.name = per_chain.front()[k].first;
    std::vector<std::span<const double>> traces;
    for (const auto& chain : per_chain) {
      const Vector& v = chain[k].second;
      traces.emplace_back(v.data(), static_cast<std::size_t>(v.size()));
      d.ess += effective_sample_size(traces.back());
    }
    if (traces.size() >= 2) {
      d.scale_reduction = scale_reduction(traces);
      d.flagged = *d.scale_reduction > 1.1;
    }
    rows.push_back(d);
  }
  return rows;
}

}  // namespace rsae
