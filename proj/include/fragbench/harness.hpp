#pragma once

// Experiment runner and file outputs. Needs OpenSSL libcrypto for digests.

#include <openssl/evp.h>

#include <chrono>
#include <cstdio>
#include <fstream>
#include <iomanip>
#include <json.hpp>
#include <sstream>
#include <string>
#include <variant>
#include <vector>

#include "fragbench/benford.hpp"
#include "fragbench/config.hpp"
#include "fragbench/continuous.hpp"
#include "fragbench/discrete.hpp"
#include "fragbench/parallel.hpp"

namespace fragbench {

inline constexpr const char* kToolVersion = "1.0.0";

/// Incremental digest over OpenSSL's EVP interface ("sha1", "sha256").
class Digest {
 public:
  explicit Digest(const char* algorithm = "sha256") : ctx_(EVP_MD_CTX_new()) {
    const EVP_MD* md = EVP_get_digestbyname(algorithm);
    if (!ctx_ || !md || EVP_DigestInit_ex(ctx_, md, nullptr) != 1) throw std::runtime_error("digest init failed");
  }
  ~Digest() { EVP_MD_CTX_free(ctx_); }
  Digest(const Digest&) = delete;
  Digest& operator=(const Digest&) = delete;

  void update(std::string_view data) { EVP_DigestUpdate(ctx_, data.data(), data.size()); }

  std::string hex() {
    unsigned char out[EVP_MAX_MD_SIZE];
    unsigned int len = 0;
    EVP_DigestFinal_ex(ctx_, out, &len);
    std::ostringstream text;
    for (unsigned i = 0; i < len; ++i) text << std::hex << std::setw(2) << std::setfill('0') << int(out[i]);
    return text.str();
  }

 private:
  EVP_MD_CTX* ctx_;
};

/// Git blob hash of a text ("blob <size>\0" + text, SHA-1).
inline std::string git_blob_hash(const std::string& text) {
  Digest d("sha1");
  const std::string header = "blob " + std::to_string(text.size());
  d.update(header);
  d.update(std::string_view("\0", 1));
  d.update(text);
  return d.hex();
}

inline std::string file_sha256(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot read " + path);
  Digest d("sha256");
  std::vector<char> buffer(1 << 16);
  while (in) {
    in.read(buffer.data(), static_cast<std::streamsize>(buffer.size()));
    d.update(std::string_view(buffer.data(), static_cast<std::size_t>(in.gcount())));
  }
  return d.hex();
}

using RunOutcome = std::variant<FragmentationOutcome, DiscreteOutcome>;

struct ExperimentResult {
  ExperimentConfig config;
  std::string config_text;
  std::string config_hash;
  unsigned threads = 1;
  std::vector<RunOutcome> runs;
  BenfordReport report;
  std::optional<BenfordReport> normalized_report;
  std::optional<RegimeDiagnostics> regime;
  std::uint64_t total_dead = 0;
  std::uint64_t terminated_runs = 0;
  std::uint64_t cap_hit_runs = 0;
  bool records_complete = true;
  std::uint64_t coupling_checks = 0;
  std::uint64_t coupling_violations = 0;
  double wall_seconds = 0.0;
};

namespace detail {

inline DiscreteOptions discrete_options(const ExperimentConfig& c, unsigned threads) {
  DiscreteOptions o;
  o.base = Base(c.base);
  o.level_cap = c.level_cap;
  o.stick_cap = c.stick_cap;
  o.start_policy = parse_start_policy(c.start_policy);
  o.keep_lengths = true;
  o.threads = threads;
  return o;
}

inline RunOutcome run_one(const ExperimentConfig& c, const RngStream& rng, unsigned threads) {
  if (!is_discrete_model(c.model)) {
    EngineOptions o;
    o.base = Base(c.base);
    o.exact_limit = static_cast<std::size_t>(c.exact_limit);
    o.stick_cap = c.stick_cap;
    o.thinning = c.thinning;
    o.threads = threads;
    return simulate(build_continuous_model(c), rng, o);
  }
  const auto length = parse_big_length(c.length);
  const auto options = discrete_options(c, threads);
  if (c.model == "odd_even") return simulate_odd_even(length, rng, c.shadow, options);
  const auto stop = StoppingSet::parse(c.stopping);
  if (c.model == "congruence") return simulate_congruence(length, stop, c.trees, rng, options);
  if (c.model == "congruence_coupled") return simulate_congruence_coupled(length, stop, rng, options);
  return simulate_general_k(length, c.parts, stop, c.trees, rng, options);
}

inline std::vector<double> s_grid_of(const ExperimentConfig& c) {
  return c.s_grid.empty() ? default_s_grid(Base(c.base)) : c.s_grid;
}

}  // namespace detail

/// Runs every repetition of a validated config (run j on stream j of the
/// seed) and aggregates the reports. Output is independent of `threads`.
inline ExperimentResult run_experiment(const ExperimentConfig& config) {
  validate(config);
  const auto start = std::chrono::steady_clock::now();
  ExperimentResult result;
  result.config = config;
  result.config_text = emit_config(config);
  result.config_hash = git_blob_hash(result.config_text);
  result.threads = resolve_threads(config.threads);
  const auto reps = static_cast<std::size_t>(config.repetitions);
  std::vector<std::optional<RunOutcome>> outcomes(reps);
  const unsigned inner = reps > 1 ? 1u : result.threads;
  try {
    parallel_for(reps, reps > 1 ? result.threads : 1u, [&](std::size_t j) {
      outcomes[j] = detail::run_one(config, RngStream(*config.seed, j), inner);
    });
  } catch (const DomainError& e) {
    throw UsageError("experiment", e.what());
  }
  const Base base(config.base);
  MantissaAccumulator mantissas(base, static_cast<std::size_t>(config.exact_limit));
  std::vector<double> normalized;
  const bool discrete = is_discrete_model(config.model);
  for (auto& slot : outcomes) {
    result.runs.push_back(std::move(*slot));
    std::visit(
        [&](const auto& run) {
          using T = std::decay_t<decltype(run)>;
          if constexpr (std::is_same_v<T, FragmentationOutcome>) {
            mantissas.merge(run.mantissas);
            result.total_dead += run.total_dead;
            result.records_complete = result.records_complete && run.records_complete;
            if (run.terminated) ++result.terminated_runs;
            if (run.cap_hit != CapHit::none) ++result.cap_hit_runs;
          } else {
            for (double m : run.mantissas) mantissas.add(m);
            normalized.insert(normalized.end(), run.normalized.begin(), run.normalized.end());
            result.total_dead += run.size();
            if (run.terminated) ++result.terminated_runs;
            if (run.cap_hit != CapHit::none) ++result.cap_hit_runs;
            result.coupling_checks += run.coupling_checks;
            result.coupling_violations += run.coupling_violations;
          }
        },
        result.runs.back());
  }
  const auto grid = detail::s_grid_of(config);
  if (mantissas.count() > 0) result.report = mantissas.report(grid);
  if (discrete && !normalized.empty()) result.normalized_report = benford_report(normalized, base, grid);
  if (config.model == "congruence" || config.model == "general_k") {
    const auto stop = StoppingSet::parse(config.stopping);
    const auto length = parse_big_length(config.length);
    const auto starts = config.trees * config.repetitions;
    if (result.runs.size() == 1) {
      result.regime = regime_diagnostics(std::get<DiscreteOutcome>(result.runs[0]), stop, length, starts);
    } else {
      DiscreteOutcome merged;
      for (const auto& run : result.runs) {
        const auto& d = std::get<DiscreteOutcome>(run);
        merged.dead_lengths.insert(merged.dead_lengths.end(), d.dead_lengths.begin(), d.dead_lengths.end());
        merged.mantissas.insert(merged.mantissas.end(), d.mantissas.begin(), d.mantissas.end());
      }
      result.regime = regime_diagnostics(merged, stop, length, starts);
    }
  }
  result.wall_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  return result;
}

inline constexpr const char* kCsvHeader =
    "run_id,tree_id,level,death_reason,mantissa,normalized_mantissa,log_length,digit_count,leading_digits\n";

/// Writes one row per dead stick and returns the file's SHA-256. Continuous
/// runs whose records were dropped (past the exact limit) contribute no rows.
inline std::string write_csv(const ExperimentResult& result, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw UsageError("output.csv", "cannot write " + path);
  Digest digest("sha256");
  std::string buffer;
  buffer.reserve(1 << 20);
  auto flush = [&](bool force) {
    if (!force && buffer.size() < (1 << 20)) return;
    digest.update(buffer);
    out.write(buffer.data(), static_cast<std::streamsize>(buffer.size()));
    buffer.clear();
  };
  buffer += kCsvHeader;
  const double log_base = Base(result.config.base).log_value();
  for (std::size_t run_id = 0; run_id < result.runs.size(); ++run_id) {
    const std::string run_text = std::to_string(run_id);
    std::visit(
        [&](const auto& run) {
          using T = std::decay_t<decltype(run)>;
          if constexpr (std::is_same_v<T, FragmentationOutcome>) {
            const auto& d = run.dead;
            for (std::size_t i = 0; i < d.size(); ++i) {
              buffer += run_text;
              buffer += ',' + std::to_string(d.tree[i]) + ',' + std::to_string(d.level[i]) + ',';
              buffer += to_string(d.reason[i]);
              buffer += ',' + format_double(detail::wrap_unit(d.log_length[i] / log_base)) + ",,";
              buffer += format_double(d.log_length[i]) + ",,\n";
              flush(false);
            }
          } else {
            for (std::size_t i = 0; i < run.size(); ++i) {
              const auto shape = decimal_shape(run.dead_lengths[i]);
              buffer += run_text;
              buffer += ',' + std::to_string(run.trees[i]) + ',' + std::to_string(run.levels[i]) + ',';
              buffer += to_string(run.reasons[i]);
              buffer += ',' + format_double(run.mantissas[i]) + ',' + format_double(run.normalized[i]) + ",,";
              buffer += std::to_string(shape.digit_count) + ',' + shape.leading + '\n';
              flush(false);
            }
          }
        },
        result.runs[run_id]);
  }
  flush(true);
  out.close();
  if (!out) throw std::runtime_error("failed writing " + path);
  return digest.hex();
}

inline nlohmann::json to_json(const BenfordReport& r) {
  nlohmann::json j;
  j["sample_count"] = r.sample_count;
  j["ks"] = r.ks;
  j["ks_is_upper_bound"] = r.ks_is_upper_bound;
  j["digit_freq"] = r.digit_freq;
  j["chi_square"] = r.chi_square;
  auto curve = nlohmann::json::array();
  for (const auto& [s, p] : r.p_curve) curve.push_back({s, p});
  j["p_curve"] = curve;
  return j;
}

inline nlohmann::json to_json(const RegimeDiagnostics& d) {
  return {
      {"regime", to_string(d.regime)},
      {"modulus", d.modulus},
      {"set_size", d.set_size},
      {"dead_count", d.dead_count},
      {"start_sticks", d.start_sticks},
      {"small_threshold", d.small_threshold},
      {"small_fraction", d.small_fraction},
      {"small_reference", d.small_reference},
      {"large_fraction", d.large_fraction},
      {"large_reference", d.large_reference},
      {"log10_base_threshold", d.log10_base_threshold},
      {"top_atom", d.top_atom},
      {"top_atom_frequency", d.top_atom_frequency},
      {"dead_bound", d.dead_bound},
      {"mean_dead_per_start", d.mean_dead_per_start},
  };
}

/// Report plus manifest. `outputs` maps output kind to {path, sha256}.
inline nlohmann::json report_json(const ExperimentResult& result, const nlohmann::json& outputs) {
  nlohmann::json manifest;
  manifest["tool"] = "fragbench";
  manifest["version"] = kToolVersion;
  manifest["config"] = result.config_text;
  manifest["config_hash"] = result.config_hash;
  manifest["seed"] = *result.config.seed;
  manifest["repetitions"] = result.config.repetitions;
  manifest["stream_rule"] = "repetition j draws from stream j of the seed";
  if (result.config.repetitions <= 10000) {
    auto runs = nlohmann::json::array();
    for (std::uint64_t j = 0; j < result.config.repetitions; ++j)
      runs.push_back({{"run_id", j}, {"seed", *result.config.seed}, {"stream", j}});
    manifest["runs"] = runs;
  }
  manifest["threads"] = result.threads;
  manifest["wall_time_s"] = result.wall_seconds;
  manifest["outputs"] = outputs;
  manifest["cap_hit_runs"] = result.cap_hit_runs;
  manifest["records_complete"] = result.records_complete;

  nlohmann::json j;
  j["manifest"] = manifest;
  if (result.report.sample_count > 0) j["report"] = to_json(result.report);
  if (result.normalized_report) j["normalized_report"] = to_json(*result.normalized_report);
  if (result.regime) j["regime"] = to_json(*result.regime);
  j["summary"] = {{"total_dead", result.total_dead},
                  {"terminated_runs", result.terminated_runs},
                  {"cap_hit_runs", result.cap_hit_runs},
                  {"terminated_fraction",
                   static_cast<double>(result.terminated_runs) / static_cast<double>(result.runs.size())}};
  if (result.coupling_checks > 0)
    j["coupling"] = {{"checks", result.coupling_checks}, {"violations", result.coupling_violations}};
  if (result.runs.size() <= 10000) {
    auto runs = nlohmann::json::array();
    for (std::size_t i = 0; i < result.runs.size(); ++i) {
      std::visit(
          [&](const auto& run) {
            using T = std::decay_t<decltype(run)>;
            nlohmann::json r = {{"run_id", i},
                                {"terminated", run.terminated},
                                {"cap_hit", to_string(run.cap_hit)},
                                {"levels_run", run.levels_run}};
            if constexpr (std::is_same_v<T, FragmentationOutcome>) {
              r["total_dead"] = run.total_dead;
              r["inclusion_probability"] = run.inclusion_probability;
              r["nominal_dead_count"] = run.nominal_dead_count;
              if (!run.parts_per_level.empty()) r["parts_per_level"] = run.parts_per_level;
            } else {
              r["total_dead"] = run.size();
            }
            runs.push_back(std::move(r));
          },
          result.runs[i]);
    }
    j["runs"] = runs;
  }
  return j;
}

inline void write_text(const std::string& path, const std::string& text, const std::string& field) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw UsageError(field, "cannot write " + path);
  out << text;
}

/// Runs an experiment and writes the configured CSV and JSON outputs.
inline ExperimentResult run_and_write(const ExperimentConfig& config, nlohmann::json* report_out = nullptr) {
  auto result = run_experiment(config);
  nlohmann::json outputs = nlohmann::json::object();
  if (!config.csv.empty()) outputs["csv"] = {{"path", config.csv}, {"sha256", write_csv(result, config.csv)}};
  const auto report = report_json(result, outputs);
  if (!config.json.empty()) write_text(config.json, report.dump(2) + "\n", "output.json");
  if (report_out) *report_out = report;
  return result;
}

/// Figure presets at desk scale.
inline ExperimentConfig figure_preset(const std::string& name) {
  ExperimentConfig c;
  c.name = name;
  c.base = 10.0;
  if (name == "skew12") {
    // Eight stopping residues mod 12; the start length is 4 mod 12, which
    // lies in the set, so the start stick is forced alive.
    c.model = "congruence";
    c.seed = 12;
    c.stopping = "n:12;S:1,2,3,4,5,6,9,10";
    c.length = "82e200";
    c.trees = 1000;
    c.start_policy = "force_alive";
  } else if (name == "general3") {
    c.model = "general_k";
    c.seed = 3;
    c.parts = 3;
    c.stopping = "n:6;S:0,1,2,3";
    c.length = "1e20+1";
    c.trees = 2000;
  } else {
    throw UsageError("preset", "unknown figure preset '" + name + "' (skew12, general3)");
  }
  return c;
}

struct SweepAxis {
  std::string key;
  std::vector<std::string> values;
};

/// Parses "section.key=v1,v2,...".
inline SweepAxis parse_sweep_axis(const std::string& text) {
  const auto eq = text.find('=');
  if (eq == std::string::npos) throw UsageError("grid", "expected key=v1,v2,...: " + text);
  SweepAxis axis{detail::trim(text.substr(0, eq)), {}};
  std::stringstream in(text.substr(eq + 1));
  std::string item;
  while (std::getline(in, item, ',')) {
    item = detail::trim(item);
    if (!item.empty()) axis.values.push_back(item);
  }
  if (axis.values.empty()) throw UsageError(axis.key, "sweep axis has no values");
  return axis;
}

struct SweepRow {
  std::vector<std::string> values;  // one per axis
  std::uint64_t sample_count = 0;
  double ks = 0.0;
  std::optional<double> normalized_ks;
  double digit1 = 0.0;
  double terminated_fraction = 0.0;
  std::uint64_t cap_hit_runs = 0;
};

/// Cartesian product over the axes, last axis fastest.
inline std::vector<SweepRow> run_sweep(const ExperimentConfig& base, const std::vector<SweepAxis>& axes) {
  std::vector<SweepRow> rows;
  std::vector<std::size_t> index(axes.size(), 0);
  for (;;) {
    ExperimentConfig c = base;
    SweepRow row;
    for (std::size_t a = 0; a < axes.size(); ++a) {
      set_config_value(c, axes[a].key, axes[a].values[index[a]]);
      row.values.push_back(axes[a].values[index[a]]);
    }
    const auto result = run_experiment(c);
    row.sample_count = result.report.sample_count;
    row.ks = result.report.ks;
    if (result.normalized_report) row.normalized_ks = result.normalized_report->ks;
    row.digit1 = result.report.digit_freq.empty() ? 0.0 : result.report.digit_freq[0];
    row.terminated_fraction = static_cast<double>(result.terminated_runs) / static_cast<double>(result.runs.size());
    row.cap_hit_runs = result.cap_hit_runs;
    rows.push_back(std::move(row));
    std::size_t a = axes.size();
    while (a > 0) {
      --a;
      if (++index[a] < axes[a].values.size()) break;
      index[a] = 0;
      if (a == 0) return rows;
    }
    if (axes.empty()) return rows;
  }
}

inline std::string sweep_csv(const std::vector<SweepAxis>& axes, const std::vector<SweepRow>& rows) {
  std::string out;
  for (const auto& axis : axes) out += axis.key + ",";
  out += "sample_count,ks,normalized_ks,digit1,terminated_fraction,cap_hit_runs\n";
  for (const auto& row : rows) {
    for (const auto& v : row.values) out += v + ",";
    out += std::to_string(row.sample_count) + "," + format_double(row.ks) + "," +
           (row.normalized_ks ? format_double(*row.normalized_ks) : std::string()) + "," + format_double(row.digit1) +
           "," + format_double(row.terminated_fraction) + "," + std::to_string(row.cap_hit_runs) + "\n";
  }
  return out;
}

/// Reads one numeric column of a per-stick CSV (empty cells skipped).
inline std::vector<double> read_csv_column(const std::string& path, const std::string& column) {
  std::ifstream in(path);
  if (!in) throw UsageError("input", "cannot open " + path);
  std::string line;
  if (!std::getline(in, line)) throw UsageError("input", "empty CSV: " + path);
  std::vector<std::string> header;
  {
    std::stringstream fields(line);
    std::string name;
    while (std::getline(fields, name, ',')) header.push_back(detail::trim(name));
  }
  const auto it = std::find(header.begin(), header.end(), column);
  if (it == header.end()) throw UsageError("column", "CSV has no column '" + column + "'");
  const auto col = static_cast<std::size_t>(it - header.begin());
  std::vector<double> values;
  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    std::size_t start = 0;
    for (std::size_t c = 0; c < col; ++c) {
      start = line.find(',', start);
      if (start == std::string::npos) throw UsageError("input", "line " + std::to_string(line_no) + " is short");
      ++start;
    }
    const auto end = std::min(line.find(',', start), line.size());
    const auto cell = detail::trim(std::string_view(line).substr(start, end - start));
    if (cell.empty()) continue;
    values.push_back(detail::parse_double(column + " (line " + std::to_string(line_no) + ")", cell));
  }
  return values;
}

}  // namespace fragbench
