#include <CLI11.hpp>

#include <cstdlib>
#include <iostream>
#include <map>

#include "fragbench/acceptance.hpp"
#include "fragbench/harness.hpp"
#include "fragbench/mellin.hpp"

namespace fb = fragbench;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitUsage = 1;
constexpr int kExitAcceptance = 2;
constexpr int kExitCapFatal = 3;

// Config file plus one --section.key flag per config key.
struct ConfigArgs {
  std::string path;
  std::map<std::string, std::string> overrides;

  void attach(CLI::App* cmd) {
    cmd->add_option("--config,-c", path, "experiment config file")->check(CLI::ExistingFile);
    for (const auto& key : fb::config_keys()) {
      cmd->add_option_function<std::string>(
          "--" + key, [this, key](const std::string& v) { overrides[key] = v; }, "override " + key);
    }
  }

  fb::ExperimentConfig build(fb::ExperimentConfig config) const {
    if (!path.empty()) config = fb::load_config(path);
    for (const auto& [key, value] : overrides) fb::set_config_value(config, key, value);
    if (const char* env = std::getenv("FRAGBENCH_THREADS"); env && *env)
      fb::set_config_value(config, "experiment.threads", env);
    return config;
  }
};

unsigned env_threads(unsigned fallback) {
  const char* env = std::getenv("FRAGBENCH_THREADS");
  if (!env || !*env) return fallback;
  return static_cast<unsigned>(fb::detail::parse_int("FRAGBENCH_THREADS", env));
}

void print_summary(const fb::ExperimentResult& r) {
  std::cout << "runs " << r.runs.size() << ", dead " << r.total_dead << ", ks " << fb::format_double(r.report.ks);
  if (r.normalized_report) std::cout << ", normalized ks " << fb::format_double(r.normalized_report->ks);
  std::cout << ", cap-hit runs " << r.cap_hit_runs << ", " << fb::format_double(r.wall_seconds) << "s\n";
  if (!r.config.csv.empty()) std::cout << "wrote " << r.config.csv << "\n";
  if (!r.config.json.empty()) std::cout << "wrote " << r.config.json << "\n";
}

int finish_run(const fb::ExperimentResult& r, bool strict_caps) {
  print_summary(r);
  if (r.cap_hit_runs > 0) {
    std::cerr << "warning: " << r.cap_hit_runs << " run(s) stopped at a cap\n";
    if (strict_caps) return kExitCapFatal;
  }
  return kExitOk;
}

nlohmann::json mellin_table(const std::string& density, double base_value, long ell_max, const std::vector<int>& ns,
                            unsigned threads) {
  if (ell_max < 1) throw fb::UsageError("ell_max", "must be at least 1");
  if (ns.empty()) throw fb::UsageError("n", "needs at least one factor count");
  const fb::Base base(base_value);
  const auto law = fb::parse_density(density);
  nlohmann::json out;
  out["density"] = density;
  out["base"] = base_value;
  out["ell_max"] = ell_max;
  auto coeffs = nlohmann::json::array();
  for (long ell = 1; ell <= ell_max; ++ell) {
    const auto m = fb::mellin_coeff(law, ell, base);
    coeffs.push_back({{"ell", ell}, {"re", m.real()}, {"im", m.imag()}, {"abs", std::abs(m)}});
  }
  out["coefficients"] = coeffs;
  auto sums = nlohmann::json::array();
  for (int n : ns) {
    if (n < 1) throw fb::UsageError("n", "factor counts must be positive");
    const std::vector<fb::Density> fs(static_cast<std::size_t>(n), law);
    const auto s = fb::condition_partial_sum(fs, ell_max, base, threads);
    nlohmann::json row = {{"n", n},
                          {"complex_sum", s.complex_sum.real()},
                          {"abs_sum", s.abs_sum},
                          {"benford_error_bound", s.abs_sum}};
    row["tail_estimate"] = s.tail_estimate ? nlohmann::json(*s.tail_estimate) : nlohmann::json(nullptr);
    sums.push_back(row);
  }
  out["condition_sums"] = sums;
  return out;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Fragmentation and Benford conformity experiments"};
  app.require_subcommand(1);
  app.set_version_flag("--version", fb::kToolVersion);

  bool strict_caps = false;
  app.add_flag("--strict-caps", strict_caps, "exit 3 when any run stops at a level or stick cap");

  auto* simulate = app.add_subcommand("simulate", "run an experiment and write CSV/JSON outputs");
  ConfigArgs sim_args;
  sim_args.attach(simulate);

  auto* mellin = app.add_subcommand("mellin", "Mellin coefficients and condition sums");
  std::string m_density = "uniform";
  double m_base = 10.0;
  long m_ell_max = 10;
  std::vector<int> m_ns{1, 5, 10, 20};
  std::string m_out;
  mellin->add_option("--density", m_density, "uniform | beta:a,b | tabulated:path")->capture_default_str();
  mellin->add_option("--base", m_base)->capture_default_str();
  mellin->add_option("--ell-max", m_ell_max)->capture_default_str();
  mellin->add_option("--n", m_ns, "factor counts")->delimiter(',')->capture_default_str();
  mellin->add_option("--out", m_out, "JSON output path (default stdout)");

  auto* analyze = app.add_subcommand("analyze", "Benford report of an existing per-stick CSV");
  std::string a_input, a_column = "mantissa", a_out;
  double a_base = 10.0;
  analyze->add_option("input", a_input)->required()->check(CLI::ExistingFile);
  analyze->add_option("--column", a_column)->capture_default_str();
  analyze->add_option("--base", a_base)->capture_default_str();
  analyze->add_option("--out", a_out, "JSON output path (default stdout)");

  auto* figure = app.add_subcommand("figure", "figure preset (skew12, general3) with optional overrides");
  std::string f_preset;
  figure->add_option("preset", f_preset)->required()->check(CLI::IsMember({"skew12", "general3"}));
  ConfigArgs fig_args;
  fig_args.attach(figure);

  auto* accept = app.add_subcommand("accept", "run the acceptance suite");
  fb::AcceptanceOptions acc;
  accept->add_option("--seed", acc.seed)->capture_default_str();
  accept->add_option("--threads", acc.threads, "0: all cores");
  accept->add_option("--only", acc.only, "criterion ids")->delimiter(',');
  accept->add_option("--work-dir", acc.work_dir, "scratch directory for determinism CSVs");

  auto* sweep = app.add_subcommand("sweep", "grid of experiments over config keys");
  ConfigArgs sweep_args;
  sweep_args.attach(sweep);
  std::vector<std::string> grid;
  std::string sweep_out;
  sweep->add_option("--grid", grid, "section.key=v1,v2,... (repeatable)")->required();
  sweep->add_option("--out", sweep_out, "CSV output path (default stdout)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kExitOk : kExitUsage;
  }

  try {
    if (*simulate) return finish_run(fb::run_and_write(sim_args.build({})), strict_caps);

    if (*figure) {
      auto config = fig_args.build(fb::figure_preset(f_preset));
      if (!fig_args.overrides.count("output.csv") && config.csv.empty()) config.csv = f_preset + ".csv";
      if (!fig_args.overrides.count("output.json") && config.json.empty()) config.json = f_preset + ".json";
      return finish_run(fb::run_and_write(config), strict_caps);
    }

    if (*mellin) {
      const auto table = mellin_table(m_density, m_base, m_ell_max, m_ns, env_threads(0));
      if (m_out.empty()) std::cout << table.dump(2) << "\n";
      else fb::write_text(m_out, table.dump(2) + "\n", "out");
      return kExitOk;
    }

    if (*analyze) {
      const auto values = fb::read_csv_column(a_input, a_column);
      if (values.empty()) throw fb::UsageError("column", "no values in column '" + a_column + "'");
      const fb::Base base(a_base);
      const auto report = fb::benford_report(values, base, fb::default_s_grid(base));
      nlohmann::json j = {{"input", a_input}, {"column", a_column}, {"sha256", fb::file_sha256(a_input)}};
      j["report"] = fb::to_json(report);
      if (a_out.empty()) std::cout << j.dump(2) << "\n";
      else fb::write_text(a_out, j.dump(2) + "\n", "out");
      return kExitOk;
    }

    if (*accept) {
      acc.threads = env_threads(acc.threads);
      bool all = true;
      double total = 0.0;
      fb::run_acceptance(acc, [&](const fb::CriterionResult& r) {
        std::cout << fb::format_result_line(r) << std::endl;
        all = all && r.passed;
        total += r.seconds;
      });
      std::cout << (all ? "all criteria passed" : "acceptance FAILED") << " (" << std::fixed << std::setprecision(1)
                << total << "s)\n";
      return all ? kExitOk : kExitAcceptance;
    }

    if (*sweep) {
      const auto base = sweep_args.build({});
      std::vector<fb::SweepAxis> axes;
      for (const auto& g : grid) axes.push_back(fb::parse_sweep_axis(g));
      const auto rows = fb::run_sweep(base, axes);
      const auto text = fb::sweep_csv(axes, rows);
      if (sweep_out.empty()) std::cout << text;
      else fb::write_text(sweep_out, text, "out");
      return kExitOk;
    }
  } catch (const fb::UsageError& e) {
    std::cerr << "usage error: " << e.what() << "\n";
    return kExitUsage;
  } catch (const fb::CapExceeded& e) {
    std::cerr << "cap exceeded: " << e.what() << " (enable continuous.thinning or raise caps.stick_cap)\n";
    return strict_caps ? kExitCapFatal : kExitUsage;
  } catch (const fb::QuadratureError& e) {
    std::cerr << "quadrature error: " << e.what() << "\n";
    return kExitUsage;
  } catch (const fb::DomainError& e) {
    std::cerr << "invalid input: " << e.what() << "\n";
    return kExitUsage;
  }
  return kExitUsage;
}
