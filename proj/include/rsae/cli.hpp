#pragma once

// The `sae` command line: fit-fh, fit-mix, simulate and summarize.
//
// Every setting has a configuration key; a run is resolved from (in order of
// precedence) command-line flags, the `--config` file, and defaults. The seed
// additionally falls back to the SAE_SEED environment variable. The resolved
// settings are hashed into the draws file header so drift is detectable.
//
// Exit codes: 0 ok, 1 usage error, 2 data error, 3 prior fails the propriety
// conditions, 4 sampler failure.

#include <rsae/errors.hpp>
#include <rsae/fh_classic.hpp>
#include <rsae/gibbs.hpp>
#include <rsae/io.hpp>
#include <rsae/model.hpp>
#include <rsae/posterior.hpp>
#include <rsae/simlab.hpp>

#include <CLI11.hpp>

#include <charconv>
#include <cstdint>
#include <cstdlib>
#include <filesystem>
#include <map>
#include <ostream>
#include <set>
#include <string>
#include <utility>
#include <vector>

namespace rsae {

// Bad flags, unknown configuration keys or unparsable setting values.
class UsageError : public Error {
 public:
  using Error::Error;
};

enum ExitCode : int { kExitOk = 0, kExitUsage = 1, kExitData = 2, kExitPrior = 3, kExitSampler = 4 };

namespace cli_detail {

// Configuration keys accepted in files and settable by flags.
inline const std::set<std::string>& known_keys() {
  static const std::set<std::string> keys = {
      "input",  "output",     "intercept", "alpha1", "alpha2",   "p_beta_a", "p_beta_b",
      "iterations", "burn_in", "thin",     "seed",   "chains",   "method",   "scenario",
      "m",      "replicates", "threads",   "draws"};
  return keys;
}

using Settings = std::map<std::string, std::string>;

inline double get_double(const Settings& s, const std::string& key, double fallback) {
  const auto it = s.find(key);
  if (it == s.end()) return fallback;
  const auto v = io_detail::parse_double(it->second);
  if (!v) throw UsageError("setting '" + key + "': expected a number, got '" + it->second + "'");
  return *v;
}

inline std::uint64_t get_uint(const Settings& s, const std::string& key, std::uint64_t fallback) {
  const auto it = s.find(key);
  if (it == s.end()) return fallback;
  std::uint64_t v = 0;
  const std::string& text = it->second;
  const auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), v);
  if (ec != std::errc() || ptr != text.data() + text.size() || text.empty()) {
    throw UsageError("setting '" + key + "': expected a non-negative integer, got '" + text + "'");
  }
  return v;
}

inline std::string get_string(const Settings& s, const std::string& key, const std::string& fallback = {}) {
  const auto it = s.find(key);
  return it == s.end() ? fallback : it->second;
}

inline bool get_bool(const Settings& s, const std::string& key, bool fallback) {
  const auto it = s.find(key);
  if (it == s.end()) return fallback;
  if (it->second == "true" || it->second == "1") return true;
  if (it->second == "false" || it->second == "0") return false;
  throw UsageError("setting '" + key + "': expected true or false, got '" + it->second + "'");
}

inline std::string require(const Settings& s, const std::string& key) {
  const auto it = s.find(key);
  if (it == s.end() || it->second.empty()) throw UsageError("missing required setting '" + key + "'");
  return it->second;
}

// Flags of one subcommand bound to configuration keys.
struct FlagSet {
  std::map<std::string, std::string> values;
  std::vector<std::pair<std::string, CLI::Option*>> options;
  std::string config_path;
  bool no_intercept = false;
  CLI::Option* no_intercept_flag = nullptr;

  void add(CLI::App* app, const std::string& flag, const std::string& key, const std::string& help) {
    options.emplace_back(key, app->add_option(flag, values[key], help));
  }

  // File values first, then flags that were given on the command line.
  Settings resolve(const std::string& subcommand) const {
    Settings s;
    if (!config_path.empty()) {
      std::map<std::string, std::string> file;
      try {
        file = read_config_file(config_path);
      } catch (const std::invalid_argument& e) {
        throw UsageError(e.what());
      }
      for (const auto& [k, v] : file) {
        if (!known_keys().count(k)) throw UsageError("config file: unknown key '" + k + "'");
        s[k] = v;
      }
    }
    for (const auto& [key, opt] : options) {
      if (opt->count() > 0) s[key] = values.at(key);
    }
    if (no_intercept_flag && no_intercept_flag->count() > 0) s["intercept"] = "false";
    if (!s.count("seed")) {
      if (const char* env = std::getenv("SAE_SEED"); env && *env) s["seed"] = env;
    }
    s["command"] = subcommand;
    return s;
  }
};

inline void add_input_flags(CLI::App* app, FlagSet& f) {
  f.add(app, "--input", "input", "Area-level CSV: area_id,y,se,x1,...");
  f.no_intercept_flag = app->add_flag("--no-intercept", f.no_intercept, "Do not prepend an intercept column");
}

inline void add_common_flags(CLI::App* app, FlagSet& f) {
  app->add_option("--config", f.config_path, "key = value settings file (flags override it)");
  f.add(app, "--output", "output", "Output directory (default: current directory)");
  f.add(app, "--seed", "seed", "Master seed (fallback: SAE_SEED, then 1)");
}

inline void add_chain_flags(CLI::App* app, FlagSet& f) {
  f.add(app, "--iterations", "iterations", "Gibbs iterations per chain");
  f.add(app, "--burn-in", "burn_in", "Discarded initial iterations");
  f.add(app, "--thin", "thin", "Keep every thin-th draw after burn-in");
  f.add(app, "--chains", "chains", "Number of independent chains");
}

inline void add_prior_flags(CLI::App* app, FlagSet& f) {
  f.add(app, "--alpha1", "alpha1", "Prior exponent on A1");
  f.add(app, "--alpha2", "alpha2", "Prior exponent on A2");
  f.add(app, "--p-beta-a", "p_beta_a", "Beta prior on p: first shape");
  f.add(app, "--p-beta-b", "p_beta_b", "Beta prior on p: second shape");
}

// Hash of the settings that determine results. Where outputs go and how many
// threads run them do not change any number, so those keys are left out.
inline std::string config_hash(const Settings& s) {
  std::string canonical;
  for (const auto& [k, v] : s) {
    if (k == "output" || k == "threads") continue;
    canonical += k + "=" + v + "\n";
  }
  return hex64(fnv1a64(canonical));
}

inline ChainConfig chain_config(const Settings& s, const ChainConfig& defaults) {
  ChainConfig c;
  c.iterations = get_uint(s, "iterations", defaults.iterations);
  c.burn_in = get_uint(s, "burn_in", defaults.burn_in);
  c.thin = get_uint(s, "thin", defaults.thin);
  c.chains = get_uint(s, "chains", defaults.chains);
  c.seed = get_uint(s, "seed", defaults.seed);
  try {
    c.validate();
  } catch (const std::invalid_argument& e) {
    throw UsageError(e.what());
  }
  return c;
}

inline PriorConfig prior_config(const Settings& s) {
  const PriorConfig d;
  return {get_double(s, "alpha1", d.alpha1), get_double(s, "alpha2", d.alpha2), get_double(s, "p_beta_a", d.p_beta_a),
          get_double(s, "p_beta_b", d.p_beta_b)};
}

inline Dataset load_input(const Settings& s) {
  return read_dataset(require(s, "input"), ReadOptions{get_bool(s, "intercept", true)});
}

inline std::filesystem::path output_dir(const Settings& s) {
  const std::filesystem::path dir = get_string(s, "output", ".");
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (ec) throw IoError("cannot create output directory '" + dir.string() + "': " + ec.message());
  return dir;
}

inline void write_chain_outputs(const ChainOutput& out, const Dataset* data, const std::filesystem::path& dir,
                                const std::string& hash, bool write_draws_file, std::ostream& log) {
  write_params_csv(dir / "params.csv", param_rows(summarize_params(out)));
  log << "wrote " << (dir / "params.csv").string() << '\n';
  if (data) {
    write_areas_csv(dir / "areas.csv", area_rows(area_summaries(out, *data)));
    log << "wrote " << (dir / "areas.csv").string() << '\n';
  }
  const auto diag = diagnostics(out);
  write_diagnostics_csv(dir / "diagnostics.csv", diag);
  log << "wrote " << (dir / "diagnostics.csv").string() << '\n';
  for (const auto& d : diag) {
    if (d.flagged) log << "warning: " << d.name << " scale reduction " << *d.scale_reduction << " exceeds 1.1\n";
  }
  if (write_draws_file) {
    write_draws(dir / "draws.bin", out, hash);
    log << "wrote " << (dir / "draws.bin").string() << " (config_hash=" << hash << ")\n";
  }
}

// ---------------------------------------------------------------------------
// Subcommands

inline int cmd_fit_fh(const Settings& s, std::ostream& log) {
  const std::string method = get_string(s, "method", "reml");
  if (method != "reml" && method != "pr" && method != "hb") {
    throw UsageError("fit-fh: --method must be reml, pr or hb");
  }
  const Dataset data = load_input(s);
  const auto dir = output_dir(s);
  if (method == "hb") {
    const ChainConfig cfg = chain_config(s, ChainConfig{});
    const ChainOutput out = run_fh_chain(data, cfg);
    write_chain_outputs(out, &data, dir, config_hash(s), true, log);
    return kExitOk;
  }
  const FHFit fit = fit_fh(data, method == "pr" ? FHMethod::PrasadRao : FHMethod::REML);
  const GlsFit gls = gls_fit(data, fit.params.a_var);
  const Matrix cov = gls.information.inverse();
  std::vector<ParamRow> params;
  for (Eigen::Index j = 0; j < fit.params.beta.size(); ++j) {
    params.push_back({"beta" + std::to_string(j + 1), fit.params.beta(j), std::sqrt(cov(j, j)), {}, {}, {}});
  }
  params.push_back({"A", fit.params.a_var, {}, {}, {}, {}});
  write_params_csv(dir / "params.csv", params);
  std::vector<AreaRow> areas;
  for (std::size_t i = 0; i < data.m(); ++i) {
    const auto k = static_cast<Eigen::Index>(i);
    areas.push_back({data.areas()[i].area_id, fit.predictions.theta(k), {}, {}, fit.predictions.shrinkage(k)});
  }
  write_areas_csv(dir / "areas.csv", areas);
  log << (method == "pr" ? "Prasad-Rao" : "REML") << " A = " << format_double(fit.params.a_var) << '\n';
  log << "wrote " << (dir / "params.csv").string() << '\n' << "wrote " << (dir / "areas.csv").string() << '\n';
  return kExitOk;
}

inline int cmd_fit_mix(const Settings& s, std::ostream& log) {
  const PriorConfig prior = prior_config(s);
  const Dataset data = load_input(s);
  const PriorVerdict verdict = validate_prior(prior, data.m(), data.r());
  if (!verdict.ok()) {
    std::string msg = "prior fails the propriety conditions:";
    for (const auto& v : verdict.violations) msg += " [" + v + "]";
    throw PriorError(msg);
  }
  prior.check_beta_hyperparameters();
  const ChainConfig cfg = chain_config(s, ChainConfig{});
  const auto dir = output_dir(s);
  const ChainOutput out = run_mixture_chain(data, prior, cfg);
  write_chain_outputs(out, &data, dir, config_hash(s), true, log);
  return kExitOk;
}

inline ScenarioSpec parse_scenario(const std::string& name, std::size_t m, std::size_t reps, std::uint64_t seed) {
  if (name == "normal") return ScenarioSpec::comparison(Scenario::Normal, m, reps, seed);
  if (name == "mixture20") return ScenarioSpec::comparison(Scenario::Mixture20, m, reps, seed);
  if (name == "t3") return ScenarioSpec::comparison(Scenario::T3, m, reps, seed);
  if (name == "contam-t1") return ScenarioSpec::contaminated(Scenario::ContaminatedT, 1, m, reps, seed);
  if (name == "contam-t2") return ScenarioSpec::contaminated(Scenario::ContaminatedT, 2, m, reps, seed);
  if (name == "contam-t3") return ScenarioSpec::contaminated(Scenario::ContaminatedT, 3, m, reps, seed);
  if (name == "contam-normal5x") return ScenarioSpec::contaminated(Scenario::ContaminatedNormal5x, 1, m, reps, seed);
  if (name == "acs-normal") return ScenarioSpec::contaminated(Scenario::AcsNormal, 1, m, reps, seed);
  throw UsageError("unknown scenario '" + name +
                   "' (normal, mixture20, t3, contam-t1, contam-t2, contam-t3, contam-normal5x, acs-normal)");
}

inline int cmd_simulate(const Settings& s, std::ostream& log) {
  const std::string name = require(s, "scenario");
  const auto m = get_uint(s, "m", 100);
  const auto reps = get_uint(s, "replicates", 20);
  const auto seed = get_uint(s, "seed", 1);
  const ScenarioSpec spec = parse_scenario(name, m, reps, seed);
  try {
    spec.validate();
  } catch (const std::invalid_argument& e) {
    throw UsageError(e.what());
  }
  StudyOptions opts;
  opts.chain = chain_config(s, ChainConfig::desk(seed));
  opts.prior = prior_config(s);
  opts.threads = get_uint(s, "threads", 0);
  const PriorVerdict verdict = validate_prior(opts.prior, m, 2);
  if (!verdict.ok()) {
    std::string msg = "prior fails the propriety conditions:";
    for (const auto& v : verdict.violations) msg += " [" + v + "]";
    throw PriorError(msg);
  }
  const auto dir = output_dir(s);
  const DeviationReport report = run_study({spec}, opts);
  write_study_csv(dir / "study.csv", report);
  log << "wrote " << (dir / "study.csv").string() << '\n';
  if (!report.failures.empty()) {
    write_failures_csv(dir / "failures.csv", report);
    log << report.failures.size() << " replicate(s) failed; see " << (dir / "failures.csv").string() << '\n';
  }
  return kExitOk;
}

inline int cmd_summarize(const Settings& s, std::ostream& log) {
  const DrawsFile file = read_draws(require(s, "draws"));
  std::optional<Dataset> data;
  if (s.count("input")) {
    data = load_input(s);
    if (data->m() != file.output.m() || data->r() != file.output.r()) {
      throw DataError("summarize: dataset shape does not match the stored draws");
    }
  }
  const auto dir = output_dir(s);
  log << "draws config_hash=" << file.config_hash << '\n';
  write_chain_outputs(file.output, data ? &*data : nullptr, dir, file.config_hash, false, log);
  return kExitOk;
}

}  // namespace cli_detail

/// Runs the `sae` command line and returns the process exit code. Normal
/// progress goes to `out`; errors go to `err`.
inline int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  using namespace cli_detail;
  CLI::App app{"Robust small-area estimation: Fay-Herriot and normal-mixture random effects"};
  app.name("sae");
  app.require_subcommand(1);

  FlagSet fh, mix, sim, sum;
  CLI::App* fit_fh = app.add_subcommand("fit-fh", "Classical or hierarchical Bayes Fay-Herriot fit");
  add_common_flags(fit_fh, fh);
  add_input_flags(fit_fh, fh);
  fh.add(fit_fh, "--method", "method", "reml (default), pr (Prasad-Rao) or hb (hierarchical Bayes)");
  add_chain_flags(fit_fh, fh);

  CLI::App* fit_mix = app.add_subcommand("fit-mix", "Normal-mixture random-effects fit by Gibbs sampling");
  add_common_flags(fit_mix, mix);
  add_input_flags(fit_mix, mix);
  add_prior_flags(fit_mix, mix);
  add_chain_flags(fit_mix, mix);

  CLI::App* simulate = app.add_subcommand("simulate", "Run a named simulation study");
  add_common_flags(simulate, sim);
  sim.add(simulate, "--scenario", "scenario", "Scenario name, e.g. mixture20 or contam-t1");
  sim.add(simulate, "--m", "m", "Number of areas (default 100)");
  sim.add(simulate, "--reps", "replicates", "Number of replicates (default 20)");
  sim.add(simulate, "--threads", "threads", "Worker threads (default: all cores)");
  add_prior_flags(simulate, sim);
  add_chain_flags(simulate, sim);

  CLI::App* summarize = app.add_subcommand("summarize", "Recompute summaries and diagnostics from stored draws");
  add_common_flags(summarize, sum);
  sum.add(summarize, "--draws", "draws", "draws.bin written by fit-fh --method hb or fit-mix");
  add_input_flags(summarize, sum);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? kExitOk : kExitUsage;
  }

  try {
    if (fit_fh->parsed()) return cmd_fit_fh(fh.resolve("fit-fh"), out);
    if (fit_mix->parsed()) return cmd_fit_mix(mix.resolve("fit-mix"), out);
    if (simulate->parsed()) return cmd_simulate(sim.resolve("simulate"), out);
    return cmd_summarize(sum.resolve("summarize"), out);
  } catch (const UsageError& e) {
    err << "usage error: " << e.what() << '\n';
    return kExitUsage;
  } catch (const PriorError& e) {
    err << "prior error: " << e.what() << '\n';
    return kExitPrior;
  } catch (const DataError& e) {
    err << "data error: " << e.what() << '\n';
    return kExitData;
  } catch (const IoError& e) {
    err << "i/o error: " << e.what() << '\n';
    return kExitData;
  } catch (const SamplerError& e) {
    err << "sampler failure: " << e.what() << '\n';
    return kExitSampler;
  } catch (const ConvergenceError& e) {
    err << "estimation failure: " << e.what() << '\n';
    return kExitSampler;
  } catch (const std::invalid_argument& e) {
    err << "usage error: " << e.what() << '\n';
    return kExitUsage;
  } catch (const std::exception& e) {
    err << "failure: " << e.what() << '\n';
    return kExitSampler;
  }
}

}  // namespace rsae
