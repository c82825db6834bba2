#pragma once

#include <chrono>
#include <cmath>
#include <filesystem>
#include <functional>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "fragbench/benford.hpp"
#include "fragbench/continuous.hpp"
#include "fragbench/discrete.hpp"
#include "fragbench/harness.hpp"
#include "fragbench/mellin.hpp"

namespace fragbench {

struct CriterionResult {
  int id = 0;
  std::string title;
  bool passed = false;
  std::string detail;
  double seconds = 0.0;
};

struct AcceptanceOptions {
  std::uint64_t seed = 20240611;
  unsigned threads = 0;
  std::vector<int> only;  // empty: all criteria
  std::string work_dir;   // scratch space for determinism CSVs; empty: temp dir
};

namespace acceptance {

inline std::uint64_t seed_for(const AcceptanceOptions& o, int id) { return o.seed + static_cast<std::uint64_t>(id); }

inline std::string fmt(double v, int precision = 6) {
  std::ostringstream out;
  out << std::setprecision(precision) << v;
  return out.str();
}

/// Mean and standard error of a sample.
inline std::pair<double, double> mean_se(const std::vector<double>& xs) {
  double mean = 0.0;
  for (double x : xs) mean += x;
  mean /= static_cast<double>(xs.size());
  double ss = 0.0;
  for (double x : xs) ss += (x - mean) * (x - mean);
  const double var = ss / static_cast<double>(xs.size() - 1);
  return {mean, std::sqrt(var / static_cast<double>(xs.size()))};
}

/// Exact E[F_l] of the odd/even process from its recursion over the process
/// tree: F_1 = 1 and F_l = 1 + F_{l - X} with X uniform on the even numbers
/// below l.
inline BigRational enumerate_fragment_expectation(std::uint64_t length) {
  std::map<std::uint64_t, BigRational> memo;
  memo[1] = 1;
  for (std::uint64_t l = 3; l <= length; l += 2) {
    BigRational sum = 0;
    for (std::uint64_t x = 2; x < l; x += 2) sum += memo.at(l - x);
    memo[l] = 1 + sum / BigRational((l - 1) / 2);
  }
  return memo.at(length);
}

inline ExperimentConfig criterion3_config(std::uint64_t seed) {
  ExperimentConfig c;
  c.name = "basic18";
  c.model = "basic";
  c.seed = seed;
  c.levels = 18;
  c.parts = 2;
  return c;
}

inline ExperimentConfig criterion8_config(std::uint64_t seed) {
  ExperimentConfig c;
  c.name = "supercritical";
  c.model = "prob_stop";
  c.seed = seed;
  c.parts = 2;
  c.survival = 0.75;
  c.repetitions = 1000;
  c.level_cap = 100;
  c.stick_cap = 1000;
  return c;
}

inline ExperimentConfig criterion12_config(std::uint64_t seed) {
  auto c = figure_preset("skew12");
  c.seed = seed;
  return c;
}

inline CriterionResult c1_mellin_closed_form(const AcceptanceOptions&) {
  CriterionResult r{1, "uniform Mellin quadrature matches closed form (l=1..10, B=2,10)", false, {}, 0.0};
  double worst = 0.0;
  for (double b : {2.0, 10.0}) {
    const Base base(b);
    for (long ell = 1; ell <= 10; ++ell) {
      const Complex closed = mellin_coeff(UniformLaw{}, ell, base);
      const Complex quad = mellin_coeff_quadrature(UniformLaw{}, ell, base);
      worst = std::max(worst, std::abs(closed - quad));
    }
  }
  r.passed = worst < 1e-8;
  r.detail = "max |error| = " + fmt(worst, 3) + " (limit 1e-8)";
  return r;
}

inline CriterionResult c2_error_bound(const AcceptanceOptions& o) {
  CriterionResult r{2, "mantissa deviation of uniform products within the Mellin bound (n=2,4,8)", false, {}, 0.0};
  const Base base(10.0);
  constexpr std::size_t kSamples = 1'000'000;
  const double slack = 3.0 * 1.36 / std::sqrt(static_cast<double>(kSamples));
  r.passed = true;
  for (int n : {2, 4, 8}) {
    RngStream rng(seed_for(o, 2), static_cast<std::uint64_t>(n));
    std::vector<double> m(kSamples);
    for (auto& v : m) {
      double log_product = 0.0;
      for (int i = 0; i < n; ++i) log_product += std::log(rng.uniform_open());
      v = detail::wrap_unit(log_product / base.log_value());
    }
    const double ks = ks_uniform(m);
    const std::vector<Density> fs(static_cast<std::size_t>(n), UniformLaw{});
    const double bound = benford_error_bound(fs, 1000, base, 1.0, o.threads);
    const bool ok = ks <= bound + slack;
    r.passed = r.passed && ok;
    r.detail += "n=" + std::to_string(n) + ": dev " + fmt(ks, 4) + " <= " + fmt(bound, 4) + "+" + fmt(slack, 3) +
                (ok ? "; " : " FAIL; ");
  }
  return r;
}

inline CriterionResult c3_basic(const AcceptanceOptions& o) {
  CriterionResult r{3, "basic model N=18, k=2: KS < 0.01, digit-1 within 0.005 of log10 2", false, {}, 0.0};
  auto c = criterion3_config(seed_for(o, 3));
  c.threads = o.threads;
  const auto result = run_experiment(c);
  const double d1 = result.report.digit_freq.at(0);
  r.passed = result.report.ks < 0.01 && std::abs(d1 - std::log10(2.0)) < 0.005 && result.total_dead == (1u << 18);
  r.detail = "leaves " + std::to_string(result.total_dead) + ", ks " + fmt(result.report.ks, 4) + ", digit1 " +
             fmt(d1, 5);
  return r;
}

inline CriterionResult c4_random_parts(const AcceptanceOptions& o) {
  CriterionResult r{4, "random part counts: per-level N=25 and per-stick N=30 (streaming), KS < 0.02", false, {}, 0.0};
  EngineOptions options;
  options.thinning = true;
  options.stick_cap = 1u << 21;
  options.keep_records = false;
  options.threads = o.threads;
  const auto g = PartCountDistribution::uniform(2, 3);
  const auto grid = default_s_grid(options.base);
  const auto level = simulate_parts_per_level({25, g, {}}, RngStream(seed_for(o, 4), 0), options);
  const auto level_report = level.mantissas.report(grid);
  options.exact_limit = 1'000'000;  // forces the histogram path
  const auto stick = simulate_parts_per_stick({30, g, {}}, RngStream(seed_for(o, 4), 1), options);
  const auto stick_report = stick.mantissas.report(grid);
  r.passed = level_report.ks < 0.02 && stick_report.ks < 0.02 && stick_report.ks_is_upper_bound;
  r.detail = "per-level ks " + fmt(level_report.ks, 4) + " (" + std::to_string(level.total_dead) + " of ~" +
             fmt(level.nominal_dead_count, 3) + " leaves), per-stick ks<= " + fmt(stick_report.ks, 4) + " (" +
             std::to_string(stick.total_dead) + " of ~" + fmt(stick.nominal_dead_count, 3) + ")";
  return r;
}

inline CriterionResult c5_single_survivor(const AcceptanceOptions& o) {
  CriterionResult r{5, "single survivor k=2, N=2000: 2001 dead sticks, KS < 0.05", false, {}, 0.0};
  const auto out = simulate_single_survivor({2000, BreakDistribution::uniform(2)}, RngStream(seed_for(o, 5), 0));
  const double ks = out.mantissas.report({}).ks;
  r.passed = out.total_dead == 2001 && ks < 0.05;
  r.detail = "dead " + std::to_string(out.total_dead) + ", ks " + fmt(ks, 4);
  return r;
}

inline CriterionResult c6_fragment_count(const AcceptanceOptions& o) {
  CriterionResult r{6, "odd/even fragment count: E[F_5] = 2.5 exactly, L=1001 Monte Carlo within 3 SE", false, {}, 0.0};
  const BigRational enumerated = enumerate_fragment_expectation(5);
  const double formula5 = fragment_count_expectation(BigLength(5));
  constexpr std::size_t kRuns = 100'000;
  std::vector<double> counts(kRuns);
  DiscreteOptions options;
  options.keep_lengths = false;
  const RngStream rng(seed_for(o, 6), 0);
  parallel_for(kRuns, o.threads, [&](std::size_t j) {
    counts[j] = static_cast<double>(simulate_odd_even(BigLength(1001), rng.child(j), false, options).size());
  });
  const auto [mean, se] = mean_se(counts);
  const double expected = fragment_count_expectation(BigLength(1001));
  r.passed = enumerated == BigRational(5, 2) && formula5 == 2.5 && std::abs(mean - expected) <= 3.0 * se;
  r.detail = "E[F_5] enumerated " + enumerated.str() + ", formula " + fmt(formula5) + "; L=1001 mean " +
             fmt(mean, 6) + " vs " + fmt(expected, 6) + " (se " + fmt(se, 3) + ")";
  return r;
}

inline CriterionResult c7_critical(const AcceptanceOptions& o) {
  CriterionResult r{7, "critical stopping k=2, r=1/2: termination >= 0.99; R=2000 aggregated KS < 0.02", false, {}, 0.0};
  ProbStopModel single{1, BreakDistribution::uniform(2), 0.5, Dependence::independent, 10'000, 1'000'000};
  const auto runs = simulate_prob_stop_runs(single, RngStream(seed_for(o, 7), 0), 10'000, o.threads);
  std::size_t terminated = 0;
  for (const auto& run : runs) terminated += run.terminated ? 1 : 0;
  const double freq = static_cast<double>(terminated) / static_cast<double>(runs.size());
  EngineOptions options;
  options.keep_records = false;
  options.threads = o.threads;
  ProbStopModel aggregated{2000, BreakDistribution::uniform(2), 0.5, Dependence::independent, 1000, 10'000'000};
  const auto independent = simulate_prob_stop(aggregated, RngStream(seed_for(o, 7), 1), options);
  aggregated.dependence = Dependence::one_per_parent;
  const auto one_per_parent = simulate_prob_stop(aggregated, RngStream(seed_for(o, 7), 2), options);
  const double ks_ind = independent.mantissas.report({}).ks;
  const double ks_opp = one_per_parent.mantissas.report({}).ks;
  r.passed = freq >= 0.99 && ks_ind < 0.02 && ks_opp < 0.02;
  r.detail = "terminated " + fmt(freq, 5) + "; ks independent " + fmt(ks_ind, 4) + " (" +
             std::to_string(independent.total_dead) + " dead), one-per-parent " + fmt(ks_opp, 4) + " (" +
             std::to_string(one_per_parent.total_dead) + " dead)";
  return r;
}

inline CriterionResult c8_supercritical(const AcceptanceOptions& o) {
  CriterionResult r{8, "supercritical k=2, r=0.75: cap-hit fraction within 0.05 of 8/9", false, {}, 0.0};
  auto c = criterion8_config(seed_for(o, 8));
  c.threads = o.threads;
  const auto result = run_experiment(c);
  const double frac = static_cast<double>(result.cap_hit_runs) / static_cast<double>(result.runs.size());
  r.passed = std::abs(frac - 8.0 / 9.0) <= 0.05;
  r.detail = "cap-hit fraction " + fmt(frac, 4) + " vs " + fmt(8.0 / 9.0, 4);
  return r;
}

inline CriterionResult c9_subcritical(const AcceptanceOptions& o) {
  CriterionResult r{9, "subcritical k=3, r=0.2: mean dead per start stick within 3 SE of 6", false, {}, 0.0};
  ProbStopModel spec{1, BreakDistribution::uniform(3), 0.2, Dependence::independent, 10'000, 1'000'000};
  const auto runs = simulate_prob_stop_runs(spec, RngStream(seed_for(o, 9), 0), 100'000, o.threads);
  std::vector<double> dead;
  dead.reserve(runs.size());
  for (const auto& run : runs) dead.push_back(static_cast<double>(run.total_dead));
  const auto [mean, se] = mean_se(dead);
  const double expected = (3.0 - 3.0 * 0.2) / (1.0 - 3.0 * 0.2);
  r.passed = std::abs(mean - expected) <= 3.0 * se;
  r.detail = "mean " + fmt(mean, 5) + " vs " + fmt(expected, 5) + " (se " + fmt(se, 3) + ")";
  return r;
}

inline CriterionResult c10_coupling(const AcceptanceOptions& o) {
  CriterionResult r{10, "coupling bounds hold on every break (odd/even and congruence, 1000 runs each)", false, {}, 0.0};
  constexpr std::size_t kRuns = 1000;
  DiscreteOptions options;
  options.keep_lengths = false;
  std::vector<std::uint64_t> checks(2 * kRuns), violations(2 * kRuns);
  const RngStream odd_rng(seed_for(o, 10), 0);
  const RngStream cong_rng(seed_for(o, 10), 1);
  const auto stop = StoppingSet::parse("n:12;S:0,1,2,3,4,5");
  parallel_for(2 * kRuns, o.threads, [&](std::size_t j) {
    const auto out = j < kRuns ? simulate_odd_even(BigLength(1'000'001), odd_rng.child(j), true, options)
                               : simulate_congruence_coupled(BigLength(1'000'003), stop, cong_rng.child(j - kRuns), options);
    checks[j] = out.coupling_checks;
    violations[j] = out.coupling_violations;
  });
  std::uint64_t odd_checks = 0, odd_viol = 0, cong_checks = 0, cong_viol = 0;
  for (std::size_t j = 0; j < kRuns; ++j) {
    odd_checks += checks[j];
    odd_viol += violations[j];
    cong_checks += checks[j + kRuns];
    cong_viol += violations[j + kRuns];
  }
  r.passed = odd_viol == 0 && cong_viol == 0 && odd_checks > 0 && cong_checks > 0;
  r.detail = "odd/even " + std::to_string(odd_viol) + "/" + std::to_string(odd_checks) + " violations, congruence " +
             std::to_string(cong_viol) + "/" + std::to_string(cong_checks);
  return r;
}

inline CriterionResult c11_half_residues(const AcceptanceOptions& o) {
  CriterionResult r{11, "|S| = n/2 trend: KS < 0.03 at L=1e40+3, non-increasing over the L grid", false, {}, 0.0};
  const auto stop = StoppingSet::parse("n:12;S:0,1,2,3,4,5");
  DiscreteOptions options;
  options.keep_lengths = false;
  options.threads = o.threads;
  std::vector<double> ks;
  for (const char* length : {"1e10+3", "1e20+3", "1e40+3"}) {
    const auto out = simulate_congruence(parse_big_length(length), stop, 5000, RngStream(seed_for(o, 11), ks.size()),
                                         options);
    ks.push_back(ks_uniform(out.mantissas));
    r.detail += std::string(length) + ": ks " + fmt(ks.back(), 4) + " (" + std::to_string(out.size()) + " dead); ";
  }
  r.passed = ks.back() < 0.03 && ks[1] <= ks[0] + 0.005 && ks[2] <= ks[1] + 0.005;
  return r;
}

inline CriterionResult c12_skew(const AcceptanceOptions& o) {
  CriterionResult r{12, "|S| > n/2 skew at L=82e200: top-decile normalized mass > 0.1, KS > 0.05", false, {}, 0.0};
  auto c = criterion12_config(seed_for(o, 12));
  c.threads = o.threads;
  const auto result = run_experiment(c);
  const auto& run = std::get<DiscreteOutcome>(result.runs.at(0));
  std::size_t top = 0;
  for (double m : run.normalized) top += m >= 0.9 ? 1 : 0;
  const double mass = static_cast<double>(top) / static_cast<double>(run.size());
  const double ks = result.normalized_report->ks;
  r.passed = mass > 0.1 && ks > 0.05;
  r.detail = "top-decile mass " + fmt(mass, 4) + ", normalized ks " + fmt(ks, 4) + " (" + std::to_string(run.size()) +
             " dead)";
  return r;
}

inline CriterionResult c13_small_set(const AcceptanceOptions& o) {
  CriterionResult r{13, "|S| < n/2 atoms: share below 2n^2 > 1/75, top exact-length share > 0.05", false, {}, 0.0};
  const auto stop = StoppingSet::parse("n:12;S:0,1,2");
  DiscreteOptions options;
  options.threads = o.threads;
  const BigLength start(1'000'001);
  const auto out = simulate_congruence(start, stop, 2000, RngStream(seed_for(o, 13), 0), options);
  const auto d = regime_diagnostics(out, stop, start, 2000);
  r.passed = d.small_fraction > 1.0 / 75.0 && d.top_atom_frequency > 0.05;
  r.detail = "below " + std::to_string(d.small_threshold) + ": " + fmt(d.small_fraction, 4) + " (ref " +
             fmt(d.small_reference, 4) + "), top atom " + d.top_atom + " at " + fmt(d.top_atom_frequency, 4);
  return r;
}

inline CriterionResult c14_determinism(const AcceptanceOptions& o) {
  CriterionResult r{14, "byte-identical CSVs for criteria 3, 8, 12 at 1 and 4 threads and on rerun", false, {}, 0.0};
  namespace fs = std::filesystem;
  const fs::path dir = o.work_dir.empty() ? fs::temp_directory_path() / ("fragbench-accept-" + std::to_string(o.seed))
                                          : fs::path(o.work_dir);
  fs::create_directories(dir);
  r.passed = true;
  const std::vector<std::pair<int, ExperimentConfig>> configs = {{3, criterion3_config(seed_for(o, 3))},
                                                                 {8, criterion8_config(seed_for(o, 8))},
                                                                 {12, criterion12_config(seed_for(o, 12))}};
  for (const auto& [id, base] : configs) {
    std::vector<std::string> digests;
    for (auto [threads, tag] : {std::pair{1u, "t1"}, std::pair{4u, "t4"}, std::pair{1u, "rerun"}}) {
      auto c = base;
      c.threads = threads;
      c.csv = (dir / ("criterion" + std::to_string(id) + "_" + tag + ".csv")).string();
      run_and_write(c);
      digests.push_back(file_sha256(c.csv));
      fs::remove(c.csv);
    }
    const bool same = digests[0] == digests[1] && digests[1] == digests[2];
    r.passed = r.passed && same;
    r.detail += "criterion " + std::to_string(id) + (same ? " identical (" + digests[0].substr(0, 12) + "); " : " DIFFER; ");
  }
  std::error_code ignored;
  if (o.work_dir.empty()) fs::remove(dir, ignored);
  return r;
}

using CriterionFn = CriterionResult (*)(const AcceptanceOptions&);

inline const std::vector<CriterionFn>& criteria() {
  static const std::vector<CriterionFn> all = {
      c1_mellin_closed_form, c2_error_bound, c3_basic,    c4_random_parts,   c5_single_survivor,
      c6_fragment_count,     c7_critical,    c8_supercritical, c9_subcritical, c10_coupling,
      c11_half_residues,     c12_skew,       c13_small_set, c14_determinism};
  return all;
}

}  // namespace acceptance

/// Runs the selected criteria in order; exceptions count as failures.
inline std::vector<CriterionResult> run_acceptance(const AcceptanceOptions& options,
                                                   const std::function<void(const CriterionResult&)>& on_result = {}) {
  std::vector<CriterionResult> results;
  const auto& all = acceptance::criteria();
  for (std::size_t i = 0; i < all.size(); ++i) {
    const int id = static_cast<int>(i) + 1;
    if (!options.only.empty() && std::find(options.only.begin(), options.only.end(), id) == options.only.end())
      continue;
    const auto start = std::chrono::steady_clock::now();
    CriterionResult result;
    try {
      result = all[i](options);
    } catch (const std::exception& e) {
      result.id = id;
      result.title = "criterion " + std::to_string(id);
      result.passed = false;
      result.detail = std::string("error: ") + e.what();
    }
    result.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    if (on_result) on_result(result);
    results.push_back(std::move(result));
  }
  return results;
}

inline std::string format_result_line(const CriterionResult& r) {
  std::ostringstream out;
  out << (r.passed ? "PASS" : "FAIL") << "  " << std::setw(2) << r.id << "  " << r.title << "  [" << r.detail << "]  "
      << std::fixed << std::setprecision(2) << r.seconds << "s";
  return out.str();
}

}  // namespace fragbench
