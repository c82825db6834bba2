#pragma once

#include <charconv>
#include <cstdint>
#include <fstream>
#include <functional>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <system_error>
#include <vector>

#include "fragbench/continuous.hpp"
#include "fragbench/discrete.hpp"
#include "fragbench/error.hpp"
#include "fragbench/sampling.hpp"

namespace fragbench {

/// Shortest decimal text that reads back to the same double.
inline std::string format_double(double value) {
  char buffer[64];
  const auto result = std::to_chars(buffer, buffer + sizeof buffer, value);
  return std::string(buffer, result.ptr);
}

namespace detail {

inline std::string trim(std::string_view text) {
  const auto first = text.find_first_not_of(" \t\r\n");
  if (first == std::string_view::npos) return {};
  const auto last = text.find_last_not_of(" \t\r\n");
  return std::string(text.substr(first, last - first + 1));
}

inline double parse_double(const std::string& field, const std::string& text) {
  double value = 0.0;
  const auto* end = text.data() + text.size();
  const auto result = std::from_chars(text.data(), end, value);
  if (result.ec != std::errc{} || result.ptr != end) throw UsageError(field, "expected a number, got '" + text + "'");
  return value;
}

inline std::uint64_t parse_u64(const std::string& field, const std::string& text) {
  std::uint64_t value = 0;
  const auto* end = text.data() + text.size();
  auto result = std::from_chars(text.data(), end, value);
  if (result.ec == std::errc{} && result.ptr == end) return value;
  // Accept exact scientific forms such as 1e6.
  const double as_double = parse_double(field, text);
  if (as_double < 0 || as_double > 1.8e19 || as_double != std::floor(as_double))
    throw UsageError(field, "expected a non-negative integer, got '" + text + "'");
  return static_cast<std::uint64_t>(as_double);
}

inline int parse_int(const std::string& field, const std::string& text) {
  const auto value = parse_u64(field, text);
  if (value > 2'000'000'000ull) throw UsageError(field, "value too large: " + text);
  return static_cast<int>(value);
}

inline bool parse_bool(const std::string& field, const std::string& text) {
  if (text == "true" || text == "1" || text == "yes" || text == "on") return true;
  if (text == "false" || text == "0" || text == "no" || text == "off") return false;
  throw UsageError(field, "expected true or false, got '" + text + "'");
}

inline std::vector<double> parse_double_list(const std::string& field, const std::string& text) {
  std::vector<double> out;
  std::stringstream in(text);
  std::string item;
  while (std::getline(in, item, ',')) {
    item = trim(item);
    if (!item.empty()) out.push_back(parse_double(field, item));
  }
  return out;
}

inline std::string join_doubles(const std::vector<double>& values) {
  std::string out;
  for (std::size_t i = 0; i < values.size(); ++i) out += (i ? "," : "") + format_double(values[i]);
  return out;
}

}  // namespace detail

/// Parses a cut-law spec: "uniform", "beta:a,b" or "tabulated:path".
inline Density parse_density(const std::string& text) {
  if (text == "uniform") return UniformLaw{};
  if (text.rfind("beta:", 0) == 0) {
    const auto params = detail::parse_double_list("law", text.substr(5));
    if (params.size() != 2) throw DomainError("beta law needs two parameters: beta:a,b");
    Density law = BetaLaw{params[0], params[1]};
    validate(law);
    return law;
  }
  if (text.rfind("tabulated:", 0) == 0) return TabulatedDensity::from_file(text.substr(10));
  throw DomainError("unknown cut law '" + text + "' (uniform, beta:a,b, tabulated:path)");
}

/// Parses per-k cut families: "2:uniform|beta:2,2;3:uniform".
inline CutFamilies parse_families(const std::string& text) {
  CutFamilies out;
  std::stringstream in(text);
  std::string entry;
  while (std::getline(in, entry, ';')) {
    entry = detail::trim(entry);
    if (entry.empty()) continue;
    const auto colon = entry.find(':');
    if (colon == std::string::npos) throw DomainError("family entry needs 'k:law|law': " + entry);
    const int k = static_cast<int>(detail::parse_u64("families", detail::trim(entry.substr(0, colon))));
    std::stringstream laws(entry.substr(colon + 1));
    std::string law;
    while (std::getline(laws, law, '|')) out[k].push_back(parse_density(detail::trim(law)));
  }
  return out;
}

inline Dependence parse_dependence(const std::string& text) {
  if (text == "independent") return Dependence::independent;
  if (text == "one_per_parent") return Dependence::one_per_parent;
  if (text == "common_coin") return Dependence::common_coin;
  throw DomainError("unknown dependence '" + text + "' (independent, one_per_parent, common_coin)");
}

inline StartPolicy parse_start_policy(const std::string& text) {
  if (text == "reject") return StartPolicy::reject;
  if (text == "force_alive") return StartPolicy::force_alive;
  throw DomainError("unknown start policy '" + text + "' (reject, force_alive)");
}

inline const std::vector<std::string>& model_names() {
  static const std::vector<std::string> names = {
      "basic",      "parts_per_level", "parts_per_stick",    "single_survivor", "prob_stop",
      "odd_even",   "congruence",      "congruence_coupled", "general_k"};
  return names;
}

inline bool is_discrete_model(const std::string& model) {
  return model == "odd_even" || model == "congruence" || model == "congruence_coupled" || model == "general_k";
}

/// One experiment, as read from a config file plus command-line overrides.
struct ExperimentConfig {
  // [experiment]
  std::string name = "experiment";
  std::string model;
  std::optional<std::uint64_t> seed;
  std::uint64_t repetitions = 1;
  double base = 10.0;
  unsigned threads = 0;
  std::vector<double> s_grid;  // empty: default grid
  // [continuous]
  int levels = 1;
  int parts = 2;
  std::string law = "uniform";
  std::vector<double> part_counts;  // pmf over 1..m; empty: point mass at `parts`
  std::string families;
  std::uint64_t start_sticks = 1;
  double survival = 0.5;
  std::string dependence = "independent";
  bool thinning = false;
  std::uint64_t exact_limit = MantissaAccumulator::kDefaultExactLimit;
  // [discrete]
  std::string length = "1001";
  std::string stopping = "n:2;S:0";
  std::uint64_t trees = 1;
  std::string start_policy = "reject";
  bool shadow = false;
  // [caps]
  int level_cap = 10'000;
  std::uint64_t stick_cap = 1u << 23;
  // [output]
  std::string csv;
  std::string json;

  friend bool operator==(const ExperimentConfig&, const ExperimentConfig&) = default;
};

namespace detail {

struct ConfigField {
  std::string key;  // dotted "section.name"
  std::function<std::string(const ExperimentConfig&)> get;
  std::function<void(ExperimentConfig&, const std::string&)> set;
};

// Field table driving parse, emit and command-line overrides.
inline const std::vector<ConfigField>& config_fields() {
  using C = ExperimentConfig;
  static const std::vector<ConfigField> fields = {
      {"experiment.name", [](const C& c) { return c.name; }, [](C& c, const std::string& v) { c.name = v; }},
      {"experiment.model", [](const C& c) { return c.model; }, [](C& c, const std::string& v) { c.model = v; }},
      {"experiment.seed", [](const C& c) { return c.seed ? std::to_string(*c.seed) : std::string(); },
       [](C& c, const std::string& v) {
         if (v.empty()) c.seed.reset();
         else c.seed = parse_u64("experiment.seed", v);
       }},
      {"experiment.repetitions", [](const C& c) { return std::to_string(c.repetitions); },
       [](C& c, const std::string& v) { c.repetitions = parse_u64("experiment.repetitions", v); }},
      {"experiment.base", [](const C& c) { return format_double(c.base); },
       [](C& c, const std::string& v) { c.base = parse_double("experiment.base", v); }},
      {"experiment.threads", [](const C& c) { return std::to_string(c.threads); },
       [](C& c, const std::string& v) { c.threads = static_cast<unsigned>(parse_int("experiment.threads", v)); }},
      {"experiment.s_grid", [](const C& c) { return join_doubles(c.s_grid); },
       [](C& c, const std::string& v) { c.s_grid = parse_double_list("experiment.s_grid", v); }},
      {"continuous.levels", [](const C& c) { return std::to_string(c.levels); },
       [](C& c, const std::string& v) { c.levels = parse_int("continuous.levels", v); }},
      {"continuous.parts", [](const C& c) { return std::to_string(c.parts); },
       [](C& c, const std::string& v) { c.parts = parse_int("continuous.parts", v); }},
      {"continuous.law", [](const C& c) { return c.law; }, [](C& c, const std::string& v) { c.law = v; }},
      {"continuous.part_counts", [](const C& c) { return join_doubles(c.part_counts); },
       [](C& c, const std::string& v) { c.part_counts = parse_double_list("continuous.part_counts", v); }},
      {"continuous.families", [](const C& c) { return c.families; },
       [](C& c, const std::string& v) { c.families = v; }},
      {"continuous.start_sticks", [](const C& c) { return std::to_string(c.start_sticks); },
       [](C& c, const std::string& v) { c.start_sticks = parse_u64("continuous.start_sticks", v); }},
      {"continuous.survival", [](const C& c) { return format_double(c.survival); },
       [](C& c, const std::string& v) { c.survival = parse_double("continuous.survival", v); }},
      {"continuous.dependence", [](const C& c) { return c.dependence; },
       [](C& c, const std::string& v) { c.dependence = v; }},
      {"continuous.thinning", [](const C& c) { return std::string(c.thinning ? "true" : "false"); },
       [](C& c, const std::string& v) { c.thinning = parse_bool("continuous.thinning", v); }},
      {"continuous.exact_limit", [](const C& c) { return std::to_string(c.exact_limit); },
       [](C& c, const std::string& v) { c.exact_limit = parse_u64("continuous.exact_limit", v); }},
      {"discrete.length", [](const C& c) { return c.length; }, [](C& c, const std::string& v) { c.length = v; }},
      {"discrete.stopping", [](const C& c) { return c.stopping; },
       [](C& c, const std::string& v) { c.stopping = v; }},
      {"discrete.trees", [](const C& c) { return std::to_string(c.trees); },
       [](C& c, const std::string& v) { c.trees = parse_u64("discrete.trees", v); }},
      {"discrete.start_policy", [](const C& c) { return c.start_policy; },
       [](C& c, const std::string& v) { c.start_policy = v; }},
      {"discrete.shadow", [](const C& c) { return std::string(c.shadow ? "true" : "false"); },
       [](C& c, const std::string& v) { c.shadow = parse_bool("discrete.shadow", v); }},
      {"caps.level_cap", [](const C& c) { return std::to_string(c.level_cap); },
       [](C& c, const std::string& v) { c.level_cap = parse_int("caps.level_cap", v); }},
      {"caps.stick_cap", [](const C& c) { return std::to_string(c.stick_cap); },
       [](C& c, const std::string& v) { c.stick_cap = parse_u64("caps.stick_cap", v); }},
      {"output.csv", [](const C& c) { return c.csv; }, [](C& c, const std::string& v) { c.csv = v; }},
      {"output.json", [](const C& c) { return c.json; }, [](C& c, const std::string& v) { c.json = v; }},
  };
  return fields;
}

}  // namespace detail

inline std::vector<std::string> config_keys() {
  std::vector<std::string> keys;
  for (const auto& f : detail::config_fields()) keys.push_back(f.key);
  return keys;
}

/// Sets one dotted key ("continuous.levels") from text.
inline void set_config_value(ExperimentConfig& config, const std::string& key, const std::string& value) {
  for (const auto& f : detail::config_fields()) {
    if (f.key == key) {
      f.set(config, value);
      return;
    }
  }
  throw UsageError(key, "unknown configuration key");
}

inline std::string get_config_value(const ExperimentConfig& config, const std::string& key) {
  for (const auto& f : detail::config_fields())
    if (f.key == key) return f.get(config);
  throw UsageError(key, "unknown configuration key");
}

/// Reads "key = value" lines under "[section]" headers; '#' and ';' start
/// comments. Later keys override earlier ones.
inline void apply_config_text(ExperimentConfig& config, const std::string& text) {
  std::istringstream in(text);
  std::string line;
  std::string section;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    auto content = detail::trim(line);
    if (content.empty() || content[0] == '#' || content[0] == ';') continue;
    if (content.front() == '[') {
      if (content.back() != ']') throw UsageError("line " + std::to_string(line_no), "unterminated section header");
      section = detail::trim(std::string_view(content).substr(1, content.size() - 2));
      continue;
    }
    const auto eq = content.find('=');
    if (eq == std::string::npos) throw UsageError("line " + std::to_string(line_no), "expected 'key = value'");
    const auto key = detail::trim(std::string_view(content).substr(0, eq));
    auto value = detail::trim(std::string_view(content).substr(eq + 1));
    if (const auto hash = value.find(" #"); hash != std::string::npos) value = detail::trim(value.substr(0, hash));
    set_config_value(config, section.empty() ? key : section + "." + key, value);
  }
}

inline ExperimentConfig parse_config(const std::string& text) {
  ExperimentConfig config;
  apply_config_text(config, text);
  return config;
}

inline ExperimentConfig load_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw UsageError("config", "cannot open " + path);
  std::stringstream buffer;
  buffer << in.rdbuf();
  return parse_config(buffer.str());
}

/// Canonical text form; parse_config(emit_config(c)) == c.
inline std::string emit_config(const ExperimentConfig& config) {
  std::string out;
  std::string section;
  for (const auto& f : detail::config_fields()) {
    const auto dot = f.key.find('.');
    const auto sec = f.key.substr(0, dot);
    if (sec != section) {
      if (!section.empty()) out += "\n";
      out += "[" + sec + "]\n";
      section = sec;
    }
    out += f.key.substr(dot + 1) + " = " + f.get(config) + "\n";
  }
  return out;
}

/// Checks every field the chosen model uses; throws UsageError naming it.
inline void validate(const ExperimentConfig& c) {
  auto wrap = [](const std::string& field, auto&& fn) {
    try {
      fn();
    } catch (const DomainError& e) {
      throw UsageError(field, e.what());
    }
  };
  if (!c.seed) throw UsageError("experiment.seed", "a seed is required");
  if (c.model.empty()) throw UsageError("experiment.model", "a model is required");
  if (std::find(model_names().begin(), model_names().end(), c.model) == model_names().end())
    throw UsageError("experiment.model", "unknown model '" + c.model + "'");
  if (c.repetitions < 1) throw UsageError("experiment.repetitions", "must be >= 1");
  wrap("experiment.base", [&] { Base b(c.base); });
  for (double s : c.s_grid)
    if (!(s >= 1.0 && s < c.base)) throw UsageError("experiment.s_grid", "every s must lie in [1, base)");
  if (c.level_cap < 1) throw UsageError("caps.level_cap", "must be >= 1");
  if (c.stick_cap < 1) throw UsageError("caps.stick_cap", "must be >= 1");
  if (is_discrete_model(c.model)) {
    wrap("discrete.length", [&] { parse_big_length(c.length); });
    wrap("discrete.stopping", [&] { StoppingSet::parse(c.stopping); });
    wrap("discrete.start_policy", [&] { parse_start_policy(c.start_policy); });
    if (c.trees < 1) throw UsageError("discrete.trees", "must be >= 1");
    if (c.model == "general_k" && c.parts < 2) throw UsageError("continuous.parts", "k must be >= 2");
    const auto length = parse_big_length(c.length);
    if (c.model == "odd_even") {
      if (length.value() < 3 || (length.value() & 1) == 0)
        throw UsageError("discrete.length", "the odd/even process needs an odd length >= 3");
      return;
    }
    const auto stop = StoppingSet::parse(c.stopping);
    if (c.model == "general_k" && stop.modulus() % static_cast<std::uint32_t>(c.parts) != 0)
      throw UsageError("discrete.stopping", "modulus n must be a multiple of continuous.parts");
    if (length.value() < 2) throw UsageError("discrete.length", "must be >= 2");
    if (parse_start_policy(c.start_policy) == StartPolicy::reject && stop.contains(length))
      throw UsageError("discrete.length", "starting length lies in the stopping set (set discrete.start_policy = "
                                          "force_alive to keep it)");
    return;
  }
  if (c.levels < 1) throw UsageError("continuous.levels", "must be >= 1");
  if (c.parts < 2) throw UsageError("continuous.parts", "k must be >= 2");
  wrap("continuous.law", [&] { parse_density(c.law); });
  wrap("continuous.families", [&] { parse_families(c.families); });
  if (!c.part_counts.empty()) wrap("continuous.part_counts", [&] { PartCountDistribution g(c.part_counts); });
  if (c.model == "prob_stop") {
    if (c.start_sticks < 1) throw UsageError("continuous.start_sticks", "must be >= 1");
    if (!(c.survival > 0.0 && c.survival < 1.0)) throw UsageError("continuous.survival", "must lie in (0, 1)");
    wrap("continuous.dependence", [&] {
      const auto dep = parse_dependence(c.dependence);
      if (dep == Dependence::one_per_parent && std::abs(c.survival * c.parts - 1.0) > 1e-12)
        throw DomainError("one_per_parent needs survival = 1/parts");
    });
  }
}

/// Builds the continuous model described by a validated config.
inline ContinuousModel build_continuous_model(const ExperimentConfig& c) {
  const BreakDistribution dist(parse_density(c.law), c.parts);
  const auto parts = c.part_counts.empty() ? PartCountDistribution::point_mass(c.parts)
                                           : PartCountDistribution(c.part_counts);
  if (c.model == "basic") return BasicModel{c.levels, dist};
  if (c.model == "parts_per_level") return PartsPerLevelModel{c.levels, parts, parse_families(c.families)};
  if (c.model == "parts_per_stick") return PartsPerStickModel{c.levels, parts, parse_families(c.families)};
  if (c.model == "single_survivor") return SingleSurvivorModel{c.levels, dist};
  if (c.model == "prob_stop")
    return ProbStopModel{c.start_sticks, dist, c.survival, parse_dependence(c.dependence), c.level_cap, c.stick_cap};
  throw UsageError("experiment.model", "'" + c.model + "' is not a continuous model");
}

}  // namespace fragbench
