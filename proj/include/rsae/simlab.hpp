#pragma once

// Scenario generators and the replication driver for estimator comparisons.
//
// Two families of designs:
//  * equal-allocation designs (Normal, Mixture20, T3): x = (1, x1) with
//    x1 ~ N(10, 2) drawn once per study, beta = (20, 1), D_i from
//    {0.5, 1, ..., 5} in equal blocks, effects from N(0,1), the 80/20 mixture of
//    N(0,1) and N(0,25), or unscaled t3;
//  * contamination designs on an ACS-like county fixture (beta = (0.06, 0.6),
//    A = 0.0009): the first ceil(10%) areas are regenerated with IQR-matched
//    t_df effects or N(0, 25 a^2) effects, or all areas are regenerated from
//    N(0, a^2) (AcsNormal).
//
// Seeding: for a study seed s, covariates and the base fixture use stream
// (s, 1); replicate j draws its data from stream (s, 1000 + 10 j) and its
// chains use seeds derive_seed(s, 1000 + 10 j + 1) (FH-HB) and
// derive_seed(s, 1000 + 10 j + 2) (mixture).

#include <rsae/errors.hpp>
#include <rsae/gibbs.hpp>
#include <rsae/model.hpp>
#include <rsae/posterior.hpp>
#include <rsae/random.hpp>

#include <boost/math/distributions/normal.hpp>
#include <boost/math/distributions/students_t.hpp>

#include <algorithm>
#include <cstdio>
#include <atomic>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <map>
#include <mutex>
#include <optional>
#include <string>
#include <thread>
#include <vector>

namespace rsae {

enum class Scenario { Normal, Mixture20, T3, ContaminatedT, ContaminatedNormal5x, AcsNormal };

enum class DRule { EqualAllocation, AcsFixture };

struct ScenarioSpec {
  Scenario kind = Scenario::Normal;
  int df = 1;  // ContaminatedT only
  std::size_t m = 100;
  Vector beta = Vector::Zero(0);
  DRule d_rule = DRule::EqualAllocation;
  std::uint64_t seed = 1;
  std::size_t replications = 20;
  double fraction = 0.1;  // contamination designs
  double a = 0.03;        // contamination designs: base effect sd

  bool contamination() const noexcept { return d_rule == DRule::AcsFixture; }

  std::string name() const {
    switch (kind) {
      case Scenario::Normal: return "normal";
      case Scenario::Mixture20: return "mixture20";
      case Scenario::T3: return "t3";
      case Scenario::ContaminatedT: return "contam-t" + std::to_string(df);
      case Scenario::ContaminatedNormal5x: return "contam-normal5x";
      case Scenario::AcsNormal: return "acs-normal";
    }
    return "unknown";
  }

  // Equal-allocation design (Normal, Mixture20 or T3).
  static ScenarioSpec comparison(Scenario kind, std::size_t m, std::size_t reps, std::uint64_t seed) {
    ScenarioSpec s;
    s.kind = kind;
    s.m = m;
    s.beta = Vector(2);
    s.beta << 20.0, 1.0;
    s.d_rule = DRule::EqualAllocation;
    s.seed = seed;
    s.replications = reps;
    return s;
  }

  // ACS-like contamination design.
  static ScenarioSpec contaminated(Scenario kind, int df, std::size_t m, std::size_t reps, std::uint64_t seed) {
    ScenarioSpec s;
    s.kind = kind;
    s.df = df;
    s.m = m;
    s.beta = Vector(2);
    s.beta << 0.06, 0.6;
    s.d_rule = DRule::AcsFixture;
    s.seed = seed;
    s.replications = reps;
    return s;
  }

  void validate() const {
    if (replications < 1) throw std::invalid_argument("scenario: need at least one replication");
    if (beta.size() != 2) throw std::invalid_argument("scenario: beta must have two entries");
    if (d_rule == DRule::EqualAllocation) {
      if (m % 10 != 0) throw std::invalid_argument("scenario: m must be divisible by 10 for equal D allocation");
      if (kind != Scenario::Normal && kind != Scenario::Mixture20 && kind != Scenario::T3) {
        throw std::invalid_argument("scenario: equal-allocation designs are normal, mixture20 or t3");
      }
    } else {
      if (kind != Scenario::ContaminatedT && kind != Scenario::ContaminatedNormal5x && kind != Scenario::AcsNormal) {
        throw std::invalid_argument("scenario: ACS fixture designs are contaminated or acs-normal");
      }
      if (!(fraction > 0.0 && fraction <= 1.0)) throw std::invalid_argument("scenario: fraction must be in (0,1]");
      if (kind == Scenario::ContaminatedT && (df < 1 || df > 3)) throw std::invalid_argument("scenario: df must be 1, 2 or 3");
    }
  }
};

inline constexpr std::uint64_t kCovariateStream = 1;
inline constexpr std::uint64_t replicate_key(std::size_t rep) { return 1000 + 10 * static_cast<std::uint64_t>(rep); }

/// Design matrix (1, x1) with x1 ~ N(10, 2), deterministic in seed.
inline Matrix make_covariates(std::size_t m, std::uint64_t seed) {
  Rng rng = make_stream(seed, kCovariateStream);
  Matrix x(static_cast<Eigen::Index>(m), 2);
  const double sd = std::sqrt(2.0);
  for (Eigen::Index i = 0; i < x.rows(); ++i) {
    x(i, 0) = 1.0;
    x(i, 1) = 10.0 + sd * standard_normal(rng);
  }
  return x;
}

/// Sampling variances in equal consecutive blocks of 0.5, 1, ..., 5.
inline Vector assign_d(std::size_t m) {
  if (m == 0 || m % 10 != 0) throw std::invalid_argument("assign_d: m must be a positive multiple of 10");
  Vector d(static_cast<Eigen::Index>(m));
  const std::size_t block = m / 10;
  for (std::size_t i = 0; i < m; ++i) d(static_cast<Eigen::Index>(i)) = 0.5 * static_cast<double>(i / block + 1);
  return d;
}

struct Effects {
  Vector v;
  std::vector<std::uint8_t> outlier;  // true component labels; all zero unless Mixture20
};

/// Random effects for the equal-allocation designs. Mixture20 flags areas whose
/// 1-based index is a multiple of 5 and draws their effects from N(0, 25).
template <class URBG>
Effects gen_effects(Scenario kind, std::size_t m, URBG& rng) {
  Effects e;
  e.v.resize(static_cast<Eigen::Index>(m));
  e.outlier.assign(m, 0);
  for (std::size_t i = 0; i < m; ++i) {
    double v = 0.0;
    switch (kind) {
      case Scenario::Normal: v = standard_normal(rng); break;
      case Scenario::Mixture20:
        if ((i + 1) % 5 == 0) {
          e.outlier[i] = 1;
          v = 5.0 * standard_normal(rng);
        } else {
          v = standard_normal(rng);
        }
        break;
      case Scenario::T3: v = student_t_draw(3.0, rng); break;
      default: throw std::invalid_argument("gen_effects: not an equal-allocation scenario");
    }
    e.v(static_cast<Eigen::Index>(i)) = v;
  }
  return e;
}

/// (z_0.75 / t_df,0.75) * a: rescales t_df draws so their IQR matches N(0, a^2).
inline double t_scale_factor(int df, double a) {
  if (df < 1 || df > 3) throw std::invalid_argument("t_scale_factor: df must be 1, 2 or 3");
  if (!(a > 0.0)) throw std::invalid_argument("t_scale_factor: a must be positive");
  const double zq = boost::math::quantile(boost::math::normal_distribution<double>(), 0.75);
  const double tq = boost::math::quantile(boost::math::students_t_distribution<double>(df), 0.75);
  return zq / tq * a;
}

struct EffectLaw {
  enum class Kind { ScaledT, Normal } kind = Kind::Normal;
  double df = 1.0;
  double scale = 1.0;  // multiplier for t draws, sd for normal draws

  static EffectLaw scaled_t(int df, double a) { return {Kind::ScaledT, static_cast<double>(df), t_scale_factor(df, a)}; }
  static EffectLaw normal(double sd) { return {Kind::Normal, 0.0, sd}; }

  template <class URBG>
  double draw(URBG& rng) const {
    return kind == Kind::ScaledT ? scale * student_t_draw(df, rng) : scale * standard_normal(rng);
  }
};

struct Contamination {
  Dataset data;
  std::size_t count = 0;  // areas regenerated, always the leading block
  Vector theta;           // true means of the regenerated block
};

/// Regenerates the first ceil(fraction * m) direct estimates from the
/// single-component model with effects from `law` and sampling errors
/// N(0, D_i); the remaining areas are left untouched.
template <class URBG>
Contamination contaminate(const Dataset& data, double fraction, const EffectLaw& law, const Vector& beta, URBG& rng) {
  if (!(fraction > 0.0 && fraction <= 1.0)) throw std::invalid_argument("contaminate: fraction must be in (0,1]");
  if (static_cast<std::size_t>(beta.size()) != data.r()) throw std::invalid_argument("contaminate: beta length differs from r");
  Contamination out;
  out.count = std::min(data.m(), static_cast<std::size_t>(std::ceil(fraction * static_cast<double>(data.m()) - 1e-9)));
  out.theta.resize(static_cast<Eigen::Index>(out.count));
  Vector y = data.y();
  const Vector xb = data.x() * beta;
  for (std::size_t i = 0; i < out.count; ++i) {
    const auto row = static_cast<Eigen::Index>(i);
    const double theta = xb(row) + law.draw(rng);
    out.theta(row) = theta;
    y(row) = theta + std::sqrt(data.d()(row)) * standard_normal(rng);
  }
  out.data = data.with_y(y);
  return out;
}

struct SyntheticData {
  Dataset data;
  Vector theta;
};

/// County-shaped fixture: one covariate (a participation rate in (0,1)),
/// log-normal standard errors around 0.025, theta = x'beta + N(0, a_var).
inline SyntheticData make_acs_like(std::size_t m, std::uint64_t seed, const Vector& beta, double a_var) {
  Rng rng = make_stream(seed, kCovariateStream);
  std::vector<AreaObservation> areas(m);
  Vector theta(static_cast<Eigen::Index>(m));
  const double sd_v = std::sqrt(a_var);
  for (std::size_t i = 0; i < m; ++i) {
    auto& a = areas[i];
    const double rate = beta_draw(2.5, 15.0, rng);
    const double se = std::clamp(0.025 * std::exp(0.5 * standard_normal(rng)), 0.004, 0.12);
    char id[32];
    std::snprintf(id, sizeof id, "county_%04zu", i + 1);
    a.area_id = id;
    a.x = {1.0, rate};
    a.d_var = se * se;
    const double t = beta(0) + beta(1) * rate + sd_v * standard_normal(rng);
    theta(static_cast<Eigen::Index>(i)) = t;
    a.y = t + se * standard_normal(rng);
  }
  return {Dataset(std::move(areas), true), theta};
}

inline SyntheticData make_acs_like(std::size_t m, std::uint64_t seed) {
  Vector beta(2);
  beta << 0.06, 0.6;
  return make_acs_like(m, seed, beta, 0.0009);
}

struct Deviation {
  double mse = 0.0;
  double mae = 0.0;
  double mrse = 0.0;
  double mrae = 0.0;
};

/// Empirical MSE, MAE, MRSE and MRAE of predictions against true means.
/// Relative measures divide by theta_i (or theta_i^2), so every true value
/// must be nonzero.
inline Deviation deviation_metrics(const Vector& truth, const Vector& estimate) {
  if (truth.size() != estimate.size() || truth.size() == 0) {
    throw std::invalid_argument("deviation_metrics: vectors must be nonempty and of equal length");
  }
  Deviation d;
  for (Eigen::Index i = 0; i < truth.size(); ++i) {
    if (truth(i) == 0.0) throw std::invalid_argument("deviation_metrics: zero true value in relative metric");
    const double e = truth(i) - estimate(i);
    d.mse += e * e;
    d.mae += std::abs(e);
    d.mrse += e * e / (truth(i) * truth(i));
    d.mrae += std::abs(e / truth(i));
  }
  const double n = static_cast<double>(truth.size());
  d.mse /= n;
  d.mae /= n;
  d.mrse /= n;
  d.mrae /= n;
  return d;
}

// ---------------------------------------------------------------------------
// Study driver

enum class Method { FhHb, MixtureHb };

inline std::string method_name(Method m) { return m == Method::FhHb ? "fh_hb" : "mixture_hb"; }

struct ReportRow {
  std::string scenario;
  std::size_t m = 0;
  std::string method;
  std::string group;
  std::string metric;
  double value = 0.0;
};

struct ReplicateFailure {
  std::string scenario;
  std::size_t m = 0;
  std::size_t replicate = 0;
  std::string method;
  std::string message;
};

struct DeviationReport {
  std::vector<ReportRow> rows;
  std::vector<ReplicateFailure> failures;

  std::optional<double> value(const std::string& scenario, std::size_t m, const std::string& method,
                              const std::string& group, const std::string& metric) const {
    for (const auto& r : rows) {
      if (r.scenario == scenario && r.m == m && r.method == method && r.group == group && r.metric == metric) {
        return r.value;
      }
    }
    return std::nullopt;
  }
};

struct StudyOptions {
  ChainConfig chain = ChainConfig::desk();  // seed is replaced per replicate
  PriorConfig prior;
  std::vector<Method> methods = {Method::FhHb, Method::MixtureHb};
  std::size_t threads = 0;  // 0 = hardware concurrency
};

// One generated replicate: data, truth, and group labels per area.
struct ReplicateData {
  Dataset data;
  Vector theta;
  std::vector<std::string> group;  // per-area group label (empty when ungrouped)
};

struct StudyContext {
  ScenarioSpec spec;
  Matrix covariates;                 // equal-allocation designs
  Vector d;                          // equal-allocation designs
  std::optional<SyntheticData> base;  // ACS fixture designs
};

inline StudyContext prepare_study(const ScenarioSpec& spec) {
  spec.validate();
  StudyContext ctx;
  ctx.spec = spec;
  if (spec.d_rule == DRule::EqualAllocation) {
    ctx.covariates = make_covariates(spec.m, spec.seed);
    ctx.d = assign_d(spec.m);
  } else {
    ctx.base = make_acs_like(spec.m, spec.seed, spec.beta, spec.a * spec.a);
  }
  return ctx;
}

inline ReplicateData generate_replicate(const StudyContext& ctx, std::size_t rep) {
  const ScenarioSpec& spec = ctx.spec;
  Rng rng = make_stream(spec.seed, replicate_key(rep));
  ReplicateData out;
  if (spec.d_rule == DRule::EqualAllocation) {
    const Effects eff = gen_effects(spec.kind, spec.m, rng);
    out.theta = ctx.covariates * spec.beta + eff.v;
    Vector y(out.theta.size());
    for (Eigen::Index i = 0; i < y.size(); ++i) y(i) = out.theta(i) + std::sqrt(ctx.d(i)) * standard_normal(rng);
    std::vector<AreaObservation> areas(spec.m);
    for (std::size_t i = 0; i < spec.m; ++i) {
      const auto row = static_cast<Eigen::Index>(i);
      areas[i] = {std::to_string(i + 1), y(row), ctx.d(row), {1.0, ctx.covariates(row, 1)}};
    }
    out.data = Dataset(std::move(areas), true);
    if (spec.kind == Scenario::Mixture20) {
      for (auto flag : eff.outlier) out.group.push_back(flag ? "A2" : "A1");
    }
    return out;
  }

  const SyntheticData& base = *ctx.base;
  if (spec.kind == Scenario::AcsNormal) {
    const Contamination c = contaminate(base.data, 1.0, EffectLaw::normal(spec.a), spec.beta, rng);
    out.data = c.data;
    out.theta = c.theta;
    return out;
  }
  const EffectLaw law =
      spec.kind == Scenario::ContaminatedT ? EffectLaw::scaled_t(spec.df, spec.a) : EffectLaw::normal(5.0 * spec.a);
  const Contamination c = contaminate(base.data, spec.fraction, law, spec.beta, rng);
  out.data = c.data;
  out.theta = base.theta;
  out.theta.head(static_cast<Eigen::Index>(c.count)) = c.theta;
  out.group.assign(spec.m, "clean");
  for (std::size_t i = 0; i < c.count; ++i) out.group[i] = "contaminated";
  return out;
}

struct MethodResult {
  Vector theta_hat;
  Vector shrinkage;
};

inline MethodResult fit_method(Method method, const Dataset& data, const StudyOptions& opts, std::uint64_t seed) {
  ChainConfig cfg = opts.chain;
  cfg.seed = seed;
  const ChainOutput out = method == Method::FhHb ? run_fh_chain(data, cfg) : run_mixture_chain(data, opts.prior, cfg);
  return {theta_posterior_mean(out), shrinkage_summary(out, data)};
}

namespace detail {

inline double median_of(std::vector<double> v) {
  std::sort(v.begin(), v.end());
  return sorted_quantile(v, 0.5);
}

struct GroupAccumulator {
  Deviation sum;
  double shrink_median_sum = 0.0;
  std::size_t count = 0;
};

template <class Fn>
void parallel_for(std::size_t n, std::size_t threads, Fn fn) {
  if (threads == 0) threads = std::max(1u, std::thread::hardware_concurrency());
  threads = std::min(threads, n);
  if (threads <= 1) {
    for (std::size_t i = 0; i < n; ++i) fn(i);
    return;
  }
  std::atomic<std::size_t> next{0};
  std::vector<std::thread> pool;
  for (std::size_t t = 0; t < threads; ++t) {
    pool.emplace_back([&] {
      for (std::size_t i = next++; i < n; i = next++) fn(i);
    });
  }
  for (auto& th : pool) th.join();
}

}  // namespace detail

/// Runs every replicate of every spec, fits each method, and averages the
/// deviation measures and the median posterior-mean shrinkage over
/// replicates, overall and per group. A replicate where any method fails is
/// recorded in `failures` and left out of every average.
inline DeviationReport run_study(const std::vector<ScenarioSpec>& specs, const StudyOptions& opts) {
  DeviationReport report;
  for (const auto& spec : specs) {
    const StudyContext ctx = prepare_study(spec);
    struct RepResult {
      std::vector<MethodResult> fits;
      ReplicateData rep;
      std::optional<ReplicateFailure> failure;
    };
    std::vector<RepResult> results(spec.replications);
    detail::parallel_for(spec.replications, opts.threads, [&](std::size_t j) {
      RepResult& res = results[j];
      res.rep = generate_replicate(ctx, j);
      for (std::size_t k = 0; k < opts.methods.size(); ++k) {
        const Method method = opts.methods[k];
        const std::uint64_t seed = derive_seed(spec.seed, replicate_key(j) + (method == Method::FhHb ? 1 : 2));
        try {
          res.fits.push_back(fit_method(method, res.rep.data, opts, seed));
        } catch (const std::exception& e) {
          res.failure = ReplicateFailure{spec.name(), spec.m, j, method_name(method), e.what()};
          return;
        }
      }
    });

    std::vector<std::string> groups = {"all"};
    if (spec.kind == Scenario::Mixture20) groups = {"all", "A1", "A2"};
    if (spec.d_rule == DRule::AcsFixture && spec.kind != Scenario::AcsNormal) groups = {"all", "clean", "contaminated"};

    for (std::size_t k = 0; k < opts.methods.size(); ++k) {
      std::map<std::string, detail::GroupAccumulator> acc;
      for (const auto& res : results) {
        if (res.failure) continue;
        const auto& fit = res.fits[k];
        for (const auto& g : groups) {
          std::vector<Eigen::Index> idx;
          for (std::size_t i = 0; i < spec.m; ++i) {
            if (g == "all" || res.rep.group[i] == g) idx.push_back(static_cast<Eigen::Index>(i));
          }
          if (idx.empty()) continue;
          const Vector truth = res.rep.theta(idx);
          const Vector est = fit.theta_hat(idx);
          const Deviation dev = deviation_metrics(truth, est);
          std::vector<double> shrink(idx.size());
          for (std::size_t t = 0; t < idx.size(); ++t) shrink[t] = fit.shrinkage(idx[t]);
          auto& a = acc[g];
          a.sum.mse += dev.mse;
          a.sum.mae += dev.mae;
          a.sum.mrse += dev.mrse;
          a.sum.mrae += dev.mrae;
          a.shrink_median_sum += detail::median_of(std::move(shrink));
          ++a.count;
        }
      }
      const std::string mname = method_name(opts.methods[k]);
      for (const auto& g : groups) {
        const auto it = acc.find(g);
        if (it == acc.end() || it->second.count == 0) continue;
        const double n = static_cast<double>(it->second.count);
        const auto& s = it->second.sum;
        const auto push = [&](const std::string& metric, double v) {
          report.rows.push_back({spec.name(), spec.m, mname, g, metric, v});
        };
        push("MSE", s.mse / n);
        push("MAE", s.mae / n);
        push("MRSE", s.mrse / n);
        push("MRAE", s.mrae / n);
        push("shrinkage_median", it->second.shrink_median_sum / n);
        push("replicates", n);
      }
    }
    for (const auto& res : results) {
      if (res.failure) report.failures.push_back(*res.failure);
    }
  }
  return report;
}

}  // namespace rsae
