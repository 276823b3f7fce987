#pragma once

// File formats: area CSV input, result CSVs, the retained-draws file and the
// flat key = value run configuration.
//
// All numbers are written with 17 significant digits so every double
// round-trips exactly.

#include <rsae/errors.hpp>
#include <rsae/gibbs.hpp>
#include <rsae/model.hpp>
#include <rsae/posterior.hpp>
#include <rsae/simlab.hpp>

#include <algorithm>
#include <charconv>
#include <bit>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

namespace rsae {

// Input/output failure; the message names the path.
class IoError : public Error {
 public:
  using Error::Error;
};

namespace io_detail {

inline std::string trim(std::string_view s) {
  const auto ws = " \t\r\n";
  const auto b = s.find_first_not_of(ws);
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(ws);
  return std::string(s.substr(b, e - b + 1));
}

inline std::vector<std::string> split_csv(const std::string& line) {
  std::vector<std::string> out;
  std::string cur;
  bool quoted = false;
  for (std::size_t i = 0; i < line.size(); ++i) {
    const char ch = line[i];
    if (quoted) {
      if (ch == '"' && i + 1 < line.size() && line[i + 1] == '"') {
        cur.push_back('"');
        ++i;
      } else if (ch == '"') {
        quoted = false;
      } else {
        cur.push_back(ch);
      }
    } else if (ch == '"') {
      quoted = true;
    } else if (ch == ',') {
      out.push_back(trim(cur));
      cur.clear();
    } else {
      cur.push_back(ch);
    }
  }
  out.push_back(trim(cur));
  return out;
}

inline std::optional<double> parse_double(const std::string& s) {
  if (s.empty()) return std::nullopt;
  double v = 0.0;
  const char* first = s.data();
  if (*first == '+') ++first;
  const auto [ptr, ec] = std::from_chars(first, s.data() + s.size(), v);
  if (ec != std::errc() || ptr != s.data() + s.size()) return std::nullopt;
  return v;
}

}  // namespace io_detail

inline std::string format_double(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

inline std::string csv_field(const std::string& s) {
  if (s.find_first_of(",\"\n") == std::string::npos) return s;
  std::string out = "\"";
  for (char ch : s) {
    if (ch == '"') out += '"';
    out += ch;
  }
  return out + "\"";
}

struct ReadOptions {
  bool intercept = true;
};

/// Reads `area_id,y,se,x1,...,xk` (columns located by name; every column other
/// than area_id, y and se is a covariate, in file order). D_i = se_i^2 and an
/// intercept column is prepended unless disabled.
inline Dataset read_dataset(const std::filesystem::path& path, const ReadOptions& opts = {}) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open dataset '" + path.string() + "'");
  std::string line;
  std::size_t line_no = 0;
  std::vector<std::string> header;
  while (std::getline(in, line)) {
    ++line_no;
    if (!io_detail::trim(line).empty()) {
      header = io_detail::split_csv(line);
      break;
    }
  }
  if (header.empty()) throw DataError(path.string() + ": empty file");
  const auto find = [&](const std::string& name) -> std::size_t {
    const auto it = std::find(header.begin(), header.end(), name);
    if (it == header.end()) throw DataError(path.string() + ": missing column '" + name + "'");
    return static_cast<std::size_t>(it - header.begin());
  };
  const std::size_t id_col = find("area_id");
  const std::size_t y_col = find("y");
  const std::size_t se_col = find("se");
  std::vector<std::size_t> x_cols;
  for (std::size_t j = 0; j < header.size(); ++j) {
    if (j != id_col && j != y_col && j != se_col) x_cols.push_back(j);
  }
  if (x_cols.empty() && !opts.intercept) throw DataError(path.string() + ": no covariate columns");

  std::vector<AreaObservation> areas;
  while (std::getline(in, line)) {
    ++line_no;
    if (io_detail::trim(line).empty()) continue;
    const auto fields = io_detail::split_csv(line);
    const std::string where = path.string() + " line " + std::to_string(line_no);
    if (fields.size() != header.size()) {
      throw DataError(where + ": expected " + std::to_string(header.size()) + " fields, found " +
                      std::to_string(fields.size()));
    }
    const auto number = [&](std::size_t col) {
      const auto v = io_detail::parse_double(fields[col]);
      if (!v || !std::isfinite(*v)) {
        throw DataError(where + ", column '" + header[col] + "': non-numeric value '" + fields[col] + "'");
      }
      return *v;
    };
    AreaObservation a;
    a.area_id = fields[id_col];
    a.y = number(y_col);
    const double se = number(se_col);
    if (!(se > 0.0)) throw DataError(where + ": se must be positive (area '" + a.area_id + "')");
    a.d_var = se * se;
    if (opts.intercept) a.x.push_back(1.0);
    for (std::size_t j : x_cols) a.x.push_back(number(j));
    areas.push_back(std::move(a));
  }
  if (areas.empty()) throw DataError(path.string() + ": no data rows");
  return Dataset(std::move(areas), opts.intercept);
}

namespace io_detail {

inline std::ofstream open_out(const std::filesystem::path& path, std::ios::openmode mode = std::ios::out) {
  std::ofstream out(path, mode);
  if (!out) throw IoError("cannot write '" + path.string() + "'");
  return out;
}

inline void finish(std::ofstream& out, const std::filesystem::path& path) {
  out.flush();
  if (!out) throw IoError("write failed for '" + path.string() + "'");
}

}  // namespace io_detail

// Writes the dataset in read_dataset's layout; an injected intercept is dropped.
inline void write_dataset(const std::filesystem::path& path, const Dataset& data) {
  auto out = io_detail::open_out(path);
  const std::size_t skip = data.intercept_injected() ? 1 : 0;
  out << "area_id,y,se";
  for (std::size_t j = skip; j < data.r(); ++j) out << ",x" << (j - skip + 1);
  out << '\n';
  for (const auto& a : data.areas()) {
    out << csv_field(a.area_id) << ',' << format_double(a.y) << ',' << format_double(std::sqrt(a.d_var));
    for (std::size_t j = skip; j < a.x.size(); ++j) out << ',' << format_double(a.x[j]);
    out << '\n';
  }
  io_detail::finish(out, path);
}

// Parameter summary rows; sd and quantiles may be absent for point estimators.
struct ParamRow {
  std::string parameter;
  double mean = 0.0;
  std::optional<double> sd, q025, median, q975;
};

inline std::vector<ParamRow> param_rows(const std::vector<NamedSummary>& summaries) {
  std::vector<ParamRow> rows;
  for (const auto& s : summaries) {
    rows.push_back({s.name, s.summary.mean, s.summary.sd, s.summary.q025, s.summary.median, s.summary.q975});
  }
  return rows;
}

namespace io_detail {
inline std::string opt(const std::optional<double>& v) { return v ? format_double(*v) : "NA"; }
}  // namespace io_detail

inline void write_params_csv(const std::filesystem::path& path, const std::vector<ParamRow>& rows) {
  auto out = io_detail::open_out(path);
  out << "parameter,mean,sd,q2.5,median,q97.5\n";
  for (const auto& r : rows) {
    out << r.parameter << ',' << format_double(r.mean) << ',' << io_detail::opt(r.sd) << ',' << io_detail::opt(r.q025)
        << ',' << io_detail::opt(r.median) << ',' << io_detail::opt(r.q975) << '\n';
  }
  io_detail::finish(out, path);
}

struct AreaRow {
  std::string area_id;
  double theta_mean = 0.0;
  std::optional<double> theta_sd;
  std::optional<double> outlier_prob;
  double shrinkage = 0.0;
};

inline std::vector<AreaRow> area_rows(const std::vector<AreaSummary>& summaries) {
  std::vector<AreaRow> rows;
  for (const auto& s : summaries) rows.push_back({s.area_id, s.theta_mean, s.theta_sd, s.outlier_prob, s.shrinkage});
  return rows;
}

inline void write_areas_csv(const std::filesystem::path& path, const std::vector<AreaRow>& rows) {
  auto out = io_detail::open_out(path);
  out << "area_id,theta_mean,theta_sd,outlier_prob,shrinkage\n";
  for (const auto& r : rows) {
    out << csv_field(r.area_id) << ',' << format_double(r.theta_mean) << ',' << io_detail::opt(r.theta_sd) << ','
        << io_detail::opt(r.outlier_prob) << ',' << format_double(r.shrinkage) << '\n';
  }
  io_detail::finish(out, path);
}

inline void write_diagnostics_csv(const std::filesystem::path& path, const std::vector<ParamDiagnostic>& rows) {
  auto out = io_detail::open_out(path);
  out << "parameter,ess,rhat,flagged\n";
  for (const auto& r : rows) {
    out << r.name << ',' << format_double(r.ess) << ',' << io_detail::opt(r.scale_reduction) << ','
        << (r.flagged ? 1 : 0) << '\n';
  }
  io_detail::finish(out, path);
}

inline void write_study_csv(const std::filesystem::path& path, const DeviationReport& report) {
  auto out = io_detail::open_out(path);
  out << "scenario,m,method,group,metric,value\n";
  for (const auto& r : report.rows) {
    out << r.scenario << ',' << r.m << ',' << r.method << ',' << r.group << ',' << r.metric << ','
        << format_double(r.value) << '\n';
  }
  io_detail::finish(out, path);
}

inline void write_failures_csv(const std::filesystem::path& path, const DeviationReport& report) {
  auto out = io_detail::open_out(path);
  out << "scenario,m,replicate,method,message\n";
  for (const auto& f : report.failures) {
    out << f.scenario << ',' << f.m << ',' << f.replicate << ',' << f.method << ',' << csv_field(f.message) << '\n';
  }
  io_detail::finish(out, path);
}

// ---------------------------------------------------------------------------
// Retained draws
//
// Line 1 is text:
//   RSAE-DRAWS 1 model=<mixture|fh> m=<m> r=<r> chains=<c> retained=<n>
//   seed=<seed> iterations=<i> burn_in=<b> thin=<t> alpha1=<..> alpha2=<..>
//   p_beta_a=<..> p_beta_b=<..> fh_exponent=<..> config_hash=<16 hex digits>
// followed by raw little-endian records, chain-major then draw-major:
//   beta[r] f64, a1 f64, [a2 f64, p f64], theta[m] f64, [delta[m] u8]
// where bracketed fields exist for mixture chains only.

inline std::uint64_t fnv1a64(std::string_view s) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char ch : s) {
    h ^= ch;
    h *= 0x100000001b3ULL;
  }
  return h;
}

inline std::string hex64(std::uint64_t v) {
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(v));
  return buf;
}

static_assert(std::endian::native == std::endian::little,
              "draws files store raw little-endian doubles; add byte swapping for this target");

inline void write_draws(const std::filesystem::path& path, const ChainOutput& out, const std::string& config_hash) {
  auto f = io_detail::open_out(path, std::ios::out | std::ios::binary);
  const bool mix = out.model == ModelKind::Mixture;
  const std::size_t per_chain = out.chains.empty() ? 0 : static_cast<std::size_t>(out.chains.front().size());
  f << "RSAE-DRAWS 1 model=" << (mix ? "mixture" : "fh") << " m=" << out.m() << " r=" << out.r()
    << " chains=" << out.chains.size() << " retained=" << per_chain << " seed=" << out.config.seed
    << " iterations=" << out.config.iterations << " burn_in=" << out.config.burn_in << " thin=" << out.config.thin
    << " alpha1=" << format_double(out.prior.alpha1) << " alpha2=" << format_double(out.prior.alpha2)
    << " p_beta_a=" << format_double(out.prior.p_beta_a) << " p_beta_b=" << format_double(out.prior.p_beta_b)
    << " fh_exponent=" << format_double(out.fh_prior_exponent) << " config_hash=" << config_hash << '\n';
  const auto put = [&](double v) { f.write(reinterpret_cast<const char*>(&v), sizeof v); };
  for (const auto& c : out.chains) {
    for (Eigen::Index k = 0; k < c.size(); ++k) {
      for (Eigen::Index j = 0; j < c.beta.cols(); ++j) put(c.beta(k, j));
      put(c.a1(k));
      if (mix) {
        put(c.a2(k));
        put(c.p(k));
      }
      for (Eigen::Index i = 0; i < c.theta.cols(); ++i) put(c.theta(k, i));
      if (mix) {
        for (Eigen::Index i = 0; i < c.delta.cols(); ++i) f.put(static_cast<char>(c.delta(k, i)));
      }
    }
  }
  io_detail::finish(f, path);
}

struct DrawsFile {
  ChainOutput output;
  std::string config_hash;
};

inline DrawsFile read_draws(const std::filesystem::path& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw DataError("cannot open draws file '" + path.string() + "'");
  std::string header;
  std::getline(f, header);
  std::istringstream hs(header);
  std::string magic, version;
  hs >> magic >> version;
  if (magic != "RSAE-DRAWS" || version != "1") throw DataError(path.string() + ": not a draws file");
  std::map<std::string, std::string> kv;
  for (std::string tok; hs >> tok;) {
    const auto eq = tok.find('=');
    if (eq != std::string::npos) kv[tok.substr(0, eq)] = tok.substr(eq + 1);
  }
  const auto get = [&](const std::string& k) {
    const auto it = kv.find(k);
    if (it == kv.end()) throw DataError(path.string() + ": header lacks '" + k + "'");
    return it->second;
  };
  const auto num = [&](const std::string& k) {
    const auto v = io_detail::parse_double(get(k));
    if (!v) throw DataError(path.string() + ": bad header value for '" + k + "'");
    return *v;
  };
  const auto count = [&](const std::string& k) { return static_cast<std::size_t>(std::stoull(get(k))); };

  DrawsFile out;
  ChainOutput& co = out.output;
  const std::string model = get("model");
  if (model != "mixture" && model != "fh") throw DataError(path.string() + ": unknown model '" + model + "'");
  co.model = model == "mixture" ? ModelKind::Mixture : ModelKind::FayHerriot;
  const std::size_t m = count("m"), r = count("r"), chains = count("chains"), retained = count("retained");
  co.config.seed = std::stoull(get("seed"));
  co.config.iterations = count("iterations");
  co.config.burn_in = count("burn_in");
  co.config.thin = count("thin");
  co.config.chains = chains;
  co.prior = {num("alpha1"), num("alpha2"), num("p_beta_a"), num("p_beta_b")};
  co.fh_prior_exponent = num("fh_exponent");
  out.config_hash = get("config_hash");

  const bool mix = co.model == ModelKind::Mixture;
  const auto take = [&]() {
    double v = 0.0;
    if (!f.read(reinterpret_cast<char*>(&v), sizeof v)) throw DataError(path.string() + ": truncated draws file");
    return v;
  };
  for (std::size_t c = 0; c < chains; ++c) {
    ChainDraws d = detail::allocate_draws(retained, m, r, mix);
    for (Eigen::Index k = 0; k < static_cast<Eigen::Index>(retained); ++k) {
      for (Eigen::Index j = 0; j < static_cast<Eigen::Index>(r); ++j) d.beta(k, j) = take();
      d.a1(k) = take();
      if (mix) {
        d.a2(k) = take();
        d.p(k) = take();
      }
      for (Eigen::Index i = 0; i < static_cast<Eigen::Index>(m); ++i) d.theta(k, i) = take();
      if (mix) {
        for (Eigen::Index i = 0; i < static_cast<Eigen::Index>(m); ++i) {
          const int ch = f.get();
          if (ch == std::char_traits<char>::eof() || (ch != 0 && ch != 1)) {
            throw DataError(path.string() + ": bad indicator byte");
          }
          d.delta(k, i) = static_cast<std::uint8_t>(ch);
        }
      }
    }
    co.chains.push_back(std::move(d));
  }
  if (f.peek() != std::char_traits<char>::eof()) throw DataError(path.string() + ": trailing bytes after draws");
  return out;
}

// ---------------------------------------------------------------------------
// Run configuration file: `key = value` lines, `#` comments.

inline std::map<std::string, std::string> read_config_file(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open config file '" + path.string() + "'");
  std::map<std::string, std::string> kv;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.erase(hash);
    const std::string t = io_detail::trim(line);
    if (t.empty()) continue;
    const auto eq = t.find('=');
    if (eq == std::string::npos) {
      throw std::invalid_argument(path.string() + " line " + std::to_string(line_no) + ": expected key = value");
    }
    kv[io_detail::trim(t.substr(0, eq))] = io_detail::trim(t.substr(eq + 1));
  }
  return kv;
}

}  // namespace rsae
