#include <gtest/gtest.h>
#include <sys/wait.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>

#include "fragbench/acceptance.hpp"
#include "fragbench/harness.hpp"

using namespace fragbench;
namespace fs = std::filesystem;

namespace {

fs::path scratch(const std::string& name) {
  const auto dir = fs::temp_directory_path() / "fragbench_harness_tests";
  fs::create_directories(dir);
  return dir / name;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream s;
  s << in.rdbuf();
  return s.str();
}

int run_cli(const std::string& args, const fs::path& out = {}) {
  std::string cmd = std::string(FRAGBENCH_CLI) + " " + args;
  cmd += out.empty() ? " > /dev/null 2>&1" : " > " + out.string() + " 2>&1";
  const int status = std::system(cmd.c_str());
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

ExperimentConfig basic18() {
  ExperimentConfig c;
  c.model = "basic";
  c.seed = 2024;
  c.levels = 18;
  return c;
}

}  // namespace

TEST(Digest, KnownValues) {
  EXPECT_EQ(git_blob_hash("hello\n"), "ce013625030ba8dba906f756967f9e9ca394464a");
  const auto p = scratch("abc.txt");
  std::ofstream(p) << "abc";
  EXPECT_EQ(file_sha256(p.string()), "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad");
}

TEST(RunExperiment, BasicEighteenLevels) {
  const auto r = run_experiment(basic18());
  EXPECT_EQ(r.total_dead, 262144u);
  EXPECT_LT(r.report.ks, 0.01);
  const auto j = report_json(r, nlohmann::json::object());
  EXPECT_LT(j["report"]["ks"].get<double>(), 0.01);
  EXPECT_EQ(j["manifest"]["config_hash"], git_blob_hash(emit_config(basic18())));
  EXPECT_EQ(j["manifest"]["seed"], 2024u);
  EXPECT_EQ(j["manifest"]["runs"].size(), 1u);
  EXPECT_EQ(j["summary"]["total_dead"], 262144u);
}

TEST(RunExperiment, MissingSeedRejected) {
  auto c = basic18();
  c.seed.reset();
  try {
    run_experiment(c);
    FAIL();
  } catch (const UsageError& e) {
    EXPECT_EQ(e.field(), "experiment.seed");
  }
}

TEST(Csv, SchemaAndDeterminism) {
  auto c = basic18();
  c.levels = 10;
  c.repetitions = 3;
  c.threads = 1;
  c.csv = scratch("a.csv").string();
  const auto first = run_and_write(c);
  const auto a = slurp(c.csv);
  c.threads = 3;
  c.csv = scratch("b.csv").string();
  run_and_write(c);
  EXPECT_EQ(a, slurp(c.csv));
  std::istringstream lines(a);
  std::string header;
  std::getline(lines, header);
  EXPECT_EQ(header + "\n", kCsvHeader);
  std::size_t rows = 0;
  std::string row;
  while (std::getline(lines, row)) {
    ++rows;
    ASSERT_EQ(std::count(row.begin(), row.end(), ','), 8);
  }
  EXPECT_EQ(rows, 3u * 1024u);
  EXPECT_EQ(first.total_dead, rows);
}

TEST(Csv, DiscreteRowsCarryShape) {
  auto c = figure_preset("skew12");
  c.trees = 20;
  c.csv = scratch("skew.csv").string();
  c.json = scratch("skew.json").string();
  run_and_write(c);
  const auto normalized = read_csv_column(c.csv, "normalized_mantissa");
  const auto digits = read_csv_column(c.csv, "digit_count");
  ASSERT_EQ(normalized.size(), digits.size());
  EXPECT_TRUE(read_csv_column(c.csv, "log_length").empty());
  const auto j = nlohmann::json::parse(slurp(c.json));
  EXPECT_EQ(j["manifest"]["outputs"]["csv"]["sha256"], file_sha256(c.csv));
  EXPECT_EQ(j["regime"]["regime"], "large");
  EXPECT_TRUE(j.contains("normalized_report"));
}

TEST(Csv, ColumnErrorsNameTheColumn) {
  const auto p = scratch("bad.csv");
  std::ofstream(p) << "a,b\n1,2\n";
  try {
    read_csv_column(p.string(), "mantissa");
    FAIL();
  } catch (const UsageError& e) {
    EXPECT_EQ(e.field(), "column");
  }
  std::ofstream(p) << "mantissa\nabc\n";
  EXPECT_THROW(read_csv_column(p.string(), "mantissa"), UsageError);
}

TEST(Analyze, ReproducesRunReport) {
  auto c = basic18();
  c.levels = 12;
  c.csv = scratch("analyze.csv").string();
  const auto r = run_and_write(c);
  const auto values = read_csv_column(c.csv, "mantissa");
  const auto again = benford_report(values, Base(10.0), default_s_grid(Base(10.0)));
  EXPECT_NEAR(again.ks, r.report.ks, 1e-15);
  EXPECT_EQ(again.digit_freq, r.report.digit_freq);
}

TEST(Figure, PresetParameters) {
  const auto g = figure_preset("general3");
  EXPECT_EQ(g.parts, 3);
  const auto stop = StoppingSet::parse(g.stopping);
  EXPECT_EQ(stop.modulus(), 6u);
  EXPECT_EQ(stop.size(), 4u);
  const auto s = figure_preset("skew12");
  EXPECT_EQ(s.stopping, "n:12;S:1,2,3,4,5,6,9,10");
  EXPECT_EQ(s.length, "82e200");
  EXPECT_EQ(s.trees, 1000u);
  EXPECT_THROW(figure_preset("nope"), UsageError);
}

TEST(Figure, SkewPresetLeansTowardOne) {
  const auto r = run_experiment(figure_preset("skew12"));
  const auto& run = std::get<DiscreteOutcome>(r.runs.at(0));
  std::size_t top = 0;
  for (double m : run.normalized) top += m >= 0.9;
  EXPECT_GT(static_cast<double>(top) / static_cast<double>(run.size()), 0.1);
}

TEST(Figure, HugeLengthOverrideAccepted) {
  auto c = figure_preset("skew12");
  set_config_value(c, "discrete.length", "82e12000");
  c.trees = 10;
  const auto r = run_experiment(c);
  EXPECT_GT(r.total_dead, 10u);
  EXPECT_NEAR(std::get<DiscreteOutcome>(r.runs[0]).start_mantissa, std::log10(8.2), 1e-12);
}

TEST(Figure, GeneralThreeRuns) {
  auto c = figure_preset("general3");
  c.trees = 50;
  const auto r = run_experiment(c);
  EXPECT_GT(r.report.sample_count, 50u);
  EXPECT_TRUE(r.regime.has_value());
}

TEST(Sweep, CartesianGrid) {
  auto c = basic18();
  c.levels = 4;
  const std::vector<SweepAxis> axes{parse_sweep_axis("continuous.levels=3,5"),
                                    parse_sweep_axis("continuous.parts=2,3,4")};
  const auto rows = run_sweep(c, axes);
  ASSERT_EQ(rows.size(), 6u);
  EXPECT_EQ(rows[0].values, (std::vector<std::string>{"3", "2"}));
  EXPECT_EQ(rows[0].sample_count, 8u);
  EXPECT_EQ(rows[5].sample_count, 1024u);
  const auto text = sweep_csv(axes, rows);
  EXPECT_EQ(text.substr(0, text.find('\n')),
            "continuous.levels,continuous.parts,sample_count,ks,normalized_ks,digit1,terminated_fraction,cap_hit_runs");
  EXPECT_THROW(parse_sweep_axis("continuous.levels"), UsageError);
}

TEST(Acceptance, NegativeControlBreaksMellinCriteria) {
  AcceptanceOptions o;
  o.only = {1, 2};
  uniform_closed_form_override = [](double) { return Complex(0.0, 0.0); };
  const auto broken = run_acceptance(o);
  uniform_closed_form_override = nullptr;
  ASSERT_EQ(broken.size(), 2u);
  EXPECT_FALSE(broken[0].passed);
  EXPECT_FALSE(broken[1].passed);
  const auto healthy = run_acceptance(o);
  EXPECT_TRUE(healthy[0].passed);
  EXPECT_TRUE(healthy[1].passed);
}

TEST(Acceptance, FragmentEnumeration) {
  EXPECT_EQ(acceptance::enumerate_fragment_expectation(5), BigRational(5, 2));
  EXPECT_EQ(acceptance::enumerate_fragment_expectation(3), BigRational(2));
}

TEST(Cli, ExitCodes) {
  EXPECT_EQ(run_cli("--help"), 0);
  EXPECT_EQ(run_cli("mellin --ell-max 0"), 1);
  EXPECT_EQ(run_cli("bogus"), 1);
  EXPECT_EQ(run_cli("simulate --experiment.model=basic"), 1);  // no seed
  EXPECT_EQ(run_cli("accept --only 1"), 0);
  const auto csv = scratch("cli_cap.csv");
  const std::string supercritical =
      "simulate --experiment.model=prob_stop --experiment.seed=5 --experiment.repetitions=20 "
      "--continuous.survival=0.75 "
      "--caps.level_cap=30 --caps.stick_cap=500 --output.csv=" + csv.string();
  EXPECT_EQ(run_cli(supercritical), 0);
  EXPECT_EQ(run_cli("--strict-caps " + supercritical), 3);
}

TEST(Cli, MellinJson) {
  const auto out = scratch("mellin.json");
  ASSERT_EQ(run_cli("mellin --ell-max 5 --n 1,5,10,20 --out " + out.string()), 0);
  const auto j = nlohmann::json::parse(slurp(out));
  EXPECT_NEAR(j["coefficients"][0]["abs"].get<double>(), 0.344090, 1e-6);
  double previous = 1e300;
  for (const auto& row : j["condition_sums"]) {
    EXPECT_LT(row["abs_sum"].get<double>(), previous);
    previous = row["abs_sum"].get<double>();
  }
}

TEST(Cli, ConfigFileOverridesAndAnalyze) {
  const auto cfg = scratch("basic.ini");
  std::ofstream(cfg) << "[experiment]\nmodel = basic\nseed = 9\n[continuous]\nlevels = 4\n";
  const auto csv = scratch("cli_basic.csv");
  const auto json = scratch("cli_basic.json");
  ASSERT_EQ(run_cli("simulate --config " + cfg.string() + " --continuous.levels=12 --output.csv=" + csv.string() +
                    " --output.json=" + json.string()),
            0);
  const auto report = nlohmann::json::parse(slurp(json));
  EXPECT_EQ(report["summary"]["total_dead"], 4096u);
  const auto analysis = scratch("cli_analyze.json");
  ASSERT_EQ(run_cli("analyze " + csv.string() + " --out " + analysis.string()), 0);
  const auto a = nlohmann::json::parse(slurp(analysis));
  EXPECT_NEAR(a["report"]["ks"].get<double>(), report["report"]["ks"].get<double>(), 1e-15);
  EXPECT_EQ(run_cli("analyze " + csv.string() + " --column nope"), 1);
}

TEST(Cli, ThreadsEnvironmentDoesNotChangeCsv) {
  const auto a = scratch("env1.csv");
  const auto b = scratch("env4.csv");
  const std::string args =
      " simulate --experiment.model=congruence --experiment.seed=3 --discrete.length=1e20+3"
      " '--discrete.stopping=n:12;S:0,1,2,3,4,5' --discrete.trees=40 --output.csv=";
  const auto cli = std::string(FRAGBENCH_CLI);
  ASSERT_EQ(std::system(("FRAGBENCH_THREADS=1 " + cli + args + a.string() + " > /dev/null").c_str()), 0);
  ASSERT_EQ(std::system(("FRAGBENCH_THREADS=4 " + cli + args + b.string() + " > /dev/null").c_str()), 0);
  EXPECT_EQ(slurp(a), slurp(b));
}

TEST(Configs, SampleFilesValidate) {
  for (const auto& entry : fs::directory_iterator(FRAGBENCH_CONFIG_DIR)) {
    if (entry.path().extension() != ".ini") continue;
    const auto c = load_config(entry.path().string());
    EXPECT_NO_THROW(validate(c)) << entry.path();
    EXPECT_EQ(parse_config(emit_config(c)), c);
  }
}
