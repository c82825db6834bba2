#pragma once

#include <cmath>
#include <cstdint>
#include <map>
#include <string>
#include <variant>
#include <vector>

#include "fragbench/benford.hpp"
#include "fragbench/error.hpp"
#include "fragbench/parallel.hpp"
#include "fragbench/rng.hpp"
#include "fragbench/sampling.hpp"

namespace fragbench {

enum class DeathReason : std::uint8_t { final_level, stopped, stopping_set, unit_length };

inline const char* to_string(DeathReason reason) {
  switch (reason) {
    case DeathReason::final_level: return "final_level";
    case DeathReason::stopped: return "stopped";
    case DeathReason::stopping_set: return "stopping_set";
    case DeathReason::unit_length: return "unit_length";
  }
  return "unknown";
}

enum class CapHit : std::uint8_t { none, level_cap, stick_cap };

inline const char* to_string(CapHit cap) {
  switch (cap) {
    case CapHit::none: return "none";
    case CapHit::level_cap: return "level_cap";
    case CapHit::stick_cap: return "stick_cap";
  }
  return "unknown";
}

/// Cut laws available for each part count k. A missing k means {uniform}.
using CutFamilies = std::map<int, std::vector<Density>>;

/// N levels, every stick splits into k parts.
struct BasicModel {
  int levels = 1;
  BreakDistribution dist;
};

/// One part count (and one cut law) drawn per level and shared by its sticks.
struct PartsPerLevelModel {
  int levels = 1;
  PartCountDistribution parts;
  CutFamilies families;
};

/// Every stick draws its own part count and cut law.
struct PartsPerStickModel {
  int levels = 1;
  PartCountDistribution parts;
  CutFamilies families;
};

/// One stick stays alive per level; its siblings die.
struct SingleSurvivorModel {
  int levels = 1;
  BreakDistribution dist;
};

enum class Dependence : std::uint8_t { independent, one_per_parent, common_coin };

inline const char* to_string(Dependence d) {
  switch (d) {
    case Dependence::independent: return "independent";
    case Dependence::one_per_parent: return "one_per_parent";
    case Dependence::common_coin: return "common_coin";
  }
  return "unknown";
}

/// Each child of a breaking stick survives with marginal probability r.
/// Runs from R unit-length start sticks until extinction or a cap.
struct ProbStopModel {
  std::uint64_t start_sticks = 1;
  BreakDistribution dist;
  double survival = 0.5;
  Dependence dependence = Dependence::independent;
  int level_cap = 1000;
  std::uint64_t stick_cap = 1'000'000;
};

using ContinuousModel =
    std::variant<BasicModel, PartsPerLevelModel, PartsPerStickModel, SingleSurvivorModel, ProbStopModel>;

struct EngineOptions {
  Base base = Base(10.0);
  std::size_t exact_limit = MantissaAccumulator::kDefaultExactLimit;
  /// Bound on sticks per level for the fixed-depth models.
  std::uint64_t stick_cap = 1u << 23;
  /// Past stick_cap, keep each child with equal probability instead of failing.
  bool thinning = false;
  bool keep_records = true;
  bool collect_mantissas = true;
  unsigned threads = 1;
};

/// Dead sticks, one entry per stick, in deterministic order.
struct DeadRecords {
  std::vector<double> log_length;
  std::vector<std::int32_t> level;
  std::vector<std::uint32_t> tree;
  std::vector<DeathReason> reason;

  std::size_t size() const noexcept { return log_length.size(); }
  void push(double log_len, std::int32_t lvl, std::uint32_t t, DeathReason why) {
    log_length.push_back(log_len);
    level.push_back(lvl);
    tree.push_back(t);
    reason.push_back(why);
  }
  void append(const DeadRecords& other) {
    log_length.insert(log_length.end(), other.log_length.begin(), other.log_length.end());
    level.insert(level.end(), other.level.begin(), other.level.end());
    tree.insert(tree.end(), other.tree.begin(), other.tree.end());
    reason.insert(reason.end(), other.reason.begin(), other.reason.end());
  }
  void clear() {
    log_length.clear();
    level.clear();
    tree.clear();
    reason.clear();
  }
};

struct FragmentationOutcome {
  DeadRecords dead;
  bool records_complete = true;
  MantissaAccumulator mantissas;
  int levels_run = 0;
  /// n_i: sticks alive at the start of level i (n_0 = number of start sticks).
  std::vector<std::uint64_t> alive_counts;
  bool terminated = false;
  CapHit cap_hit = CapHit::none;
  std::uint64_t total_dead = 0;
  /// Probability that any particular stick survived thinning (1 without thinning).
  double inclusion_probability = 1.0;
  /// Dead sticks the unthinned process would have produced (estimate).
  double nominal_dead_count = 0.0;
  /// Part count drawn at each level (parts-per-level model only).
  std::vector<int> parts_per_level;
};

/// Neumaier-compensated sum of exp(log_length) over the records.
inline double total_mass(const DeadRecords& records) {
  double sum = 0.0;
  double compensation = 0.0;
  for (double x : records.log_length) {
    const double v = std::exp(x);
    const double t = sum + v;
    if (std::abs(sum) >= std::abs(v))
      compensation += (sum - t) + v;
    else
      compensation += (v - t) + sum;
    sum = t;
  }
  return sum + compensation;
}

namespace detail {

struct Stick {
  double log_length;
  std::uint64_t lineage;
  std::uint32_t tree;
};

inline constexpr std::uint64_t kLevelStreamTag = 0x4C4556454C000000ull;
inline constexpr std::size_t kChunkSticks = 8192;

inline std::uint64_t root_lineage(const RngStream& rng, std::uint64_t tree) {
  return derive_stream(rng.stream(), tree, 0);
}

/// Output sink for one chunk of a level. Child lineage is derived from the
/// parent lineage, child index and the child's level.
class LevelSink {
 public:
  LevelSink(int child_level, double keep_probability, bool children_final)
      : child_level_(child_level), keep_(keep_probability), final_(children_final) {}

  void child(const Stick& parent, std::uint64_t index, double log_len, bool alive, DeathReason why,
             RngStream& rng) {
    ++generated_;
    if (keep_ < 1.0 && !(rng.uniform01() < keep_)) return;
    if (final_) {
      alive = false;
      why = DeathReason::final_level;
    }
    if (alive) {
      alive_.push_back({log_len, derive_stream(parent.lineage, index, static_cast<std::uint64_t>(child_level_)),
                        parent.tree});
    } else {
      dead_.push(log_len, child_level_, parent.tree, why);
    }
  }

  std::vector<Stick> alive_;
  DeadRecords dead_;
  std::uint64_t generated_ = 0;

 private:
  int child_level_;
  double keep_;
  bool final_;
};

/// Expands every stick of `current` with `expand(stick, rng, sink)` in fixed
/// chunks, concatenating chunk outputs in order.
template <typename Expand>
void run_level(const std::vector<Stick>& current, std::uint64_t seed, int child_level, double keep,
               bool children_final, unsigned threads, Expand&& expand, std::vector<Stick>& next,
               DeadRecords& dead, std::uint64_t& generated) {
  const std::size_t chunks = (current.size() + kChunkSticks - 1) / kChunkSticks;
  std::vector<LevelSink> sinks(chunks, LevelSink(child_level, keep, children_final));
  parallel_for(chunks, threads, [&](std::size_t c) {
    const std::size_t begin = c * kChunkSticks;
    const std::size_t end = std::min(current.size(), begin + kChunkSticks);
    for (std::size_t i = begin; i < end; ++i) {
      RngStream rng(seed, current[i].lineage);
      expand(current[i], rng, sinks[c]);
    }
  });
  next.clear();
  dead.clear();
  generated = 0;
  for (auto& sink : sinks) {
    next.insert(next.end(), sink.alive_.begin(), sink.alive_.end());
    dead.append(sink.dead_);
    generated += sink.generated_;
  }
}

inline void record_dead(FragmentationOutcome& out, const DeadRecords& dead, const EngineOptions& options) {
  out.total_dead += dead.size();
  if (options.collect_mantissas)
    for (double x : dead.log_length) out.mantissas.add(wrap_unit(x / options.base.log_value()));
  if (!out.records_complete) return;
  if (!options.keep_records || out.dead.size() + dead.size() > options.exact_limit) {
    out.records_complete = false;
    out.dead = DeadRecords{};
    return;
  }
  out.dead.append(dead);
}

inline const std::vector<Density>& laws_for(const CutFamilies& families, int k) {
  static const std::vector<Density> uniform{UniformLaw{}};
  const auto it = families.find(k);
  if (it == families.end() || it->second.empty()) return uniform;
  return it->second;
}

inline void validate_families(const CutFamilies& families) {
  for (const auto& [k, laws] : families) {
    if (k < 1) throw DomainError("cut family keyed by k < 1");
    for (const auto& law : laws) validate(law);
  }
}

/// Splits `stick` at sorted cut points drawn from (law, k) and emits all k
/// pieces through `emit(index, log_len)`.
template <typename Emit>
void split_stick(const Stick& stick, const Density& law, int k, RngStream& rng, std::vector<double>& points,
                 std::vector<double>& logs, Emit&& emit) {
  if (k == 1) {
    emit(0, stick.log_length);
    return;
  }
  points.resize(static_cast<std::size_t>(k - 1));
  for (;;) {
    for (auto& p : points) p = sample_density(law, rng);
    std::sort(points.begin(), points.end());
    if (std::adjacent_find(points.begin(), points.end()) == points.end()) break;
  }
  log_gaps(points, logs);
  for (int i = 0; i < k; ++i) emit(static_cast<std::uint64_t>(i), stick.log_length + logs[static_cast<std::size_t>(i)]);
}

/// Shared driver for the fixed-depth models. `choose(level, rng)` returns
/// the (law, k) used at a level; `expand` does the per-stick work.
template <typename Expand>
FragmentationOutcome run_fixed_depth(int levels, int max_parts, const RngStream& rng, const EngineOptions& options,
                                     Expand&& expand, const std::vector<int>* per_level_k = nullptr) {
  if (levels < 1) throw DomainError("number of levels N must be >= 1");
  FragmentationOutcome out;
  out.mantissas = MantissaAccumulator(options.base, options.exact_limit);
  std::vector<Stick> current{{0.0, root_lineage(rng, 0), 0}};
  std::vector<Stick> next;
  DeadRecords dead;
  double nominal = 1.0;
  for (int level = 0; level < levels; ++level) {
    out.alive_counts.push_back(current.size());
    const int k_bound = per_level_k ? (*per_level_k)[static_cast<std::size_t>(level)] : max_parts;
    const double bound = static_cast<double>(current.size()) * k_bound;
    double keep = 1.0;
    if (bound > static_cast<double>(options.stick_cap)) {
      if (!options.thinning)
        throw CapExceeded("level " + std::to_string(level + 1) + " would hold more than " +
                          std::to_string(options.stick_cap) + " sticks");
      keep = static_cast<double>(options.stick_cap) / bound;
    }
    std::uint64_t generated = 0;
    run_level(current, rng.seed(), level + 1, keep, level + 1 == levels, options.threads,
              [&](const Stick& s, RngStream& r, LevelSink& sink) { expand(level, s, r, sink); }, next, dead,
              generated);
    nominal *= current.empty() ? 0.0 : static_cast<double>(generated) / static_cast<double>(current.size());
    out.inclusion_probability *= keep;
    record_dead(out, dead, options);
    std::swap(current, next);
    out.levels_run = level + 1;
  }
  out.alive_counts.push_back(0);
  out.terminated = true;
  out.nominal_dead_count = nominal;
  return out;
}

}  // namespace detail

/// Basic model: N levels of k-part breaks with one cut law.
inline FragmentationOutcome simulate_basic(const BasicModel& spec, const RngStream& rng,
                                           const EngineOptions& options = {}) {
  const int k = spec.dist.parts();
  return detail::run_fixed_depth(spec.levels, k, rng, options,
                                 [&](int, const detail::Stick& s, RngStream& r, detail::LevelSink& sink) {
                                   thread_local std::vector<double> points, logs;
                                   detail::split_stick(s, spec.dist.law(), k, r, points, logs,
                                                       [&](std::uint64_t i, double x) {
                                                         sink.child(s, i, x, true, DeathReason::final_level, r);
                                                       });
                                 });
}

/// Random part count per level, shared by all sticks of the level.
inline FragmentationOutcome simulate_parts_per_level(const PartsPerLevelModel& spec, const RngStream& rng,
                                                     const EngineOptions& options = {}) {
  if (spec.levels < 1) throw DomainError("number of levels N must be >= 1");
  detail::validate_families(spec.families);
  std::vector<int> ks;
  std::vector<std::size_t> law_index;
  for (int level = 0; level < spec.levels; ++level) {
    RngStream level_rng = rng.child(static_cast<std::uint64_t>(level), detail::kLevelStreamTag);
    const int k = spec.parts.sample(level_rng);
    const auto& laws = detail::laws_for(spec.families, k);
    ks.push_back(k);
    law_index.push_back(laws.size() == 1 ? 0 : level_rng.uniform_below(laws.size()));
  }
  auto out = detail::run_fixed_depth(
      spec.levels, spec.parts.max_parts(), rng, options,
      [&](int level, const detail::Stick& s, RngStream& r, detail::LevelSink& sink) {
        thread_local std::vector<double> points, logs;
        const int k = ks[static_cast<std::size_t>(level)];
        const auto& law = detail::laws_for(spec.families, k)[law_index[static_cast<std::size_t>(level)]];
        detail::split_stick(s, law, k, r, points, logs, [&](std::uint64_t i, double x) {
          sink.child(s, i, x, true, DeathReason::final_level, r);
        });
      },
      &ks);
  out.parts_per_level = ks;
  return out;
}

/// Random part count drawn independently by every stick.
inline FragmentationOutcome simulate_parts_per_stick(const PartsPerStickModel& spec, const RngStream& rng,
                                                     const EngineOptions& options = {}) {
  detail::validate_families(spec.families);
  return detail::run_fixed_depth(spec.levels, spec.parts.max_parts(), rng, options,
                                 [&](int, const detail::Stick& s, RngStream& r, detail::LevelSink& sink) {
                                   thread_local std::vector<double> points, logs;
                                   const int k = spec.parts.sample(r);
                                   const auto& laws = detail::laws_for(spec.families, k);
                                   const auto& law = laws.size() == 1 ? laws[0] : laws[r.uniform_below(laws.size())];
                                   detail::split_stick(s, law, k, r, points, logs, [&](std::uint64_t i, double x) {
                                     sink.child(s, i, x, true, DeathReason::final_level, r);
                                   });
                                 });
}

/// One uniformly chosen child stays alive at each level; after N levels the
/// survivor dies too, for (k - 1) N + 1 dead sticks.
inline FragmentationOutcome simulate_single_survivor(const SingleSurvivorModel& spec, const RngStream& rng,
                                                     const EngineOptions& options = {}) {
  if (spec.levels < 1) throw DomainError("number of levels N must be >= 1");
  const int k = spec.dist.parts();
  FragmentationOutcome out;
  out.mantissas = MantissaAccumulator(options.base, options.exact_limit);
  detail::Stick alive{0.0, detail::root_lineage(rng, 0), 0};
  std::vector<double> points, logs;
  DeadRecords dead;
  for (int level = 0; level < spec.levels; ++level) {
    out.alive_counts.push_back(1);
    RngStream r(rng.seed(), alive.lineage);
    const auto keep = r.uniform_below(static_cast<std::uint64_t>(k));
    detail::Stick next = alive;
    dead.clear();
    detail::split_stick(alive, spec.dist.law(), k, r, points, logs, [&](std::uint64_t i, double x) {
      if (i == keep)
        next = {x, derive_stream(alive.lineage, i, static_cast<std::uint64_t>(level + 1)), 0};
      else
        dead.push(x, level + 1, 0, DeathReason::stopped);
    });
    if (level + 1 == spec.levels) dead.push(next.log_length, level + 1, 0, DeathReason::final_level);
    detail::record_dead(out, dead, options);
    alive = next;
    out.levels_run = level + 1;
  }
  out.alive_counts.push_back(0);
  out.terminated = true;
  out.nominal_dead_count = static_cast<double>(out.total_dead);
  return out;
}

inline void validate(const ProbStopModel& spec) {
  if (spec.start_sticks < 1) throw DomainError("R must be >= 1");
  if (!(spec.survival > 0.0 && spec.survival < 1.0)) throw DomainError("survival probability r must lie in (0, 1)");
  if (spec.level_cap < 1 || spec.stick_cap < 1) throw DomainError("caps must be >= 1");
  if (spec.dependence == Dependence::one_per_parent &&
      std::abs(spec.survival * spec.dist.parts() - 1.0) > 1e-12)
    throw DomainError("one_per_parent survival is exactly 1/k; set r = 1/k");
}

/// Probabilistic stopping. Hitting a cap ends the run with terminated = false.
inline FragmentationOutcome simulate_prob_stop(const ProbStopModel& spec, const RngStream& rng,
                                               const EngineOptions& options = {}) {
  validate(spec);
  const int k = spec.dist.parts();
  FragmentationOutcome out;
  out.mantissas = MantissaAccumulator(options.base, options.exact_limit);
  std::vector<detail::Stick> current;
  current.reserve(static_cast<std::size_t>(spec.start_sticks));
  for (std::uint64_t t = 0; t < spec.start_sticks; ++t)
    current.push_back({0.0, detail::root_lineage(rng, t), static_cast<std::uint32_t>(t)});
  std::vector<detail::Stick> next;
  DeadRecords dead;
  int level = 0;
  while (!current.empty()) {
    out.alive_counts.push_back(current.size());
    if (level >= spec.level_cap) {
      out.cap_hit = CapHit::level_cap;
      break;
    }
    if (current.size() > spec.stick_cap) {
      out.cap_hit = CapHit::stick_cap;
      break;
    }
    std::uint64_t generated = 0;
    detail::run_level(
        current, rng.seed(), level + 1, 1.0, false, options.threads,
        [&](const detail::Stick& s, RngStream& r, detail::LevelSink& sink) {
          thread_local std::vector<double> points, logs;
          std::uint64_t chosen = 0;
          bool coin = false;
          if (spec.dependence == Dependence::one_per_parent) chosen = r.uniform_below(static_cast<std::uint64_t>(k));
          if (spec.dependence == Dependence::common_coin) coin = r.bernoulli(spec.survival);
          detail::split_stick(s, spec.dist.law(), k, r, points, logs, [&](std::uint64_t i, double x) {
            bool alive = false;
            switch (spec.dependence) {
              case Dependence::independent: alive = r.bernoulli(spec.survival); break;
              case Dependence::one_per_parent: alive = i == chosen; break;
              case Dependence::common_coin: alive = coin; break;
            }
            sink.child(s, i, x, alive, DeathReason::stopped, r);
          });
        },
        next, dead, generated);
    detail::record_dead(out, dead, options);
    std::swap(current, next);
    ++level;
    out.levels_run = level;
  }
  if (current.empty()) {
    out.alive_counts.push_back(0);
    out.terminated = true;
  }
  out.nominal_dead_count = static_cast<double>(out.total_dead);
  return out;
}

inline FragmentationOutcome simulate(const ContinuousModel& model, const RngStream& rng,
                                     const EngineOptions& options = {}) {
  return std::visit(
      [&](const auto& spec) -> FragmentationOutcome {
        using T = std::decay_t<decltype(spec)>;
        if constexpr (std::is_same_v<T, BasicModel>) return simulate_basic(spec, rng, options);
        else if constexpr (std::is_same_v<T, PartsPerLevelModel>) return simulate_parts_per_level(spec, rng, options);
        else if constexpr (std::is_same_v<T, PartsPerStickModel>) return simulate_parts_per_stick(spec, rng, options);
        else if constexpr (std::is_same_v<T, SingleSurvivorModel>) return simulate_single_survivor(spec, rng, options);
        else return simulate_prob_stop(spec, rng, options);
      },
      model);
}

/// Per-run summary used by repeated-run experiments.
struct RunSummary {
  bool terminated = false;
  CapHit cap_hit = CapHit::none;
  std::uint64_t total_dead = 0;
  int levels_run = 0;
  std::vector<std::uint64_t> alive_counts;
};

/// `runs` independent repetitions; run j uses stream `rng.child(j)`.
/// Repetitions are spread over threads; each repetition runs serially.
inline std::vector<RunSummary> simulate_prob_stop_runs(const ProbStopModel& spec, const RngStream& rng,
                                                       std::size_t runs, unsigned threads = 1) {
  validate(spec);
  EngineOptions options;
  options.keep_records = false;
  options.collect_mantissas = false;
  std::vector<RunSummary> out(runs);
  parallel_for(runs, threads, [&](std::size_t j) {
    auto outcome = simulate_prob_stop(spec, rng.child(j), options);
    out[j] = {outcome.terminated, outcome.cap_hit, outcome.total_dead, outcome.levels_run,
              std::move(outcome.alive_counts)};
  });
  return out;
}

struct TailCheck {
  double bound = 1.0;      // lower bound on P(|n_i - R| <= t)
  double frequency = 0.0;  // measured over the runs
  double standard_error = 0.0;
  bool holds = true;  // frequency >= bound - 3 standard errors
};

/// Checks P(|n_i - R| <= t) >= 1 - 2 i^3 R (k - 1) / (t^2 k) (independent
/// survival) or 1 - 2 i^3 R k^2 / t^2 (dependent) over repeated runs.
inline TailCheck alive_count_tail_check(const std::vector<RunSummary>& runs, const ProbStopModel& spec, int i,
                                        double t) {
  const double k = spec.dist.parts();
  const double R = static_cast<double>(spec.start_sticks);
  if (std::abs(spec.survival * k - 1.0) > 1e-12) throw DomainError("tail bound holds only for r = 1/k");
  if (!(t > 0.0 && t < R)) throw DomainError("tail bound needs 0 < t < R");
  if (i < 0) throw DomainError("level index must be >= 0");
  if (runs.empty()) throw DomainError("tail check needs at least one run");
  TailCheck out;
  const double i3 = std::pow(static_cast<double>(i), 3);
  out.bound = spec.dependence == Dependence::independent ? 1.0 - 2.0 * i3 * R * (k - 1.0) / (t * t * k)
                                                         : 1.0 - 2.0 * i3 * R * k * k / (t * t);
  std::size_t hits = 0;
  for (const auto& run : runs) {
    const auto idx = static_cast<std::size_t>(i);
    const double n_i = idx < run.alive_counts.size() ? static_cast<double>(run.alive_counts[idx]) : 0.0;
    if (std::abs(n_i - R) <= t) ++hits;
  }
  const double n = static_cast<double>(runs.size());
  out.frequency = static_cast<double>(hits) / n;
  const double p = std::clamp(out.bound, 0.0, 1.0);
  out.standard_error = std::sqrt(std::max(p * (1.0 - p), 1.0 / n) / n);
  out.holds = out.frequency >= out.bound - 3.0 * out.standard_error;
  return out;
}

}  // namespace fragbench
