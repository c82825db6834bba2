#include <gtest/gtest.h>

#include "fragbench/continuous.hpp"

using namespace fragbench;

namespace {

std::vector<double> lengths(const FragmentationOutcome& out) {
  std::vector<double> xs;
  for (double l : out.dead.log_length) xs.push_back(std::exp(l));
  return xs;
}

}  // namespace

TEST(Basic, OneLevelConservesLength) {
  const auto out = simulate_basic({1, BreakDistribution::uniform(2)}, RngStream(1, 0));
  ASSERT_EQ(out.total_dead, 2u);
  const auto xs = lengths(out);
  EXPECT_NEAR(xs[0] + xs[1], 1.0, 1e-15);
  EXPECT_NEAR(total_mass(out.dead), 1.0, 1e-15);
}

TEST(Basic, EighteenLevelsGiveBenfordLeaves) {
  EngineOptions o;
  o.threads = 2;
  const auto out = simulate_basic({18, BreakDistribution::uniform(2)}, RngStream(2, 0), o);
  EXPECT_EQ(out.total_dead, 262144u);
  EXPECT_NEAR(total_mass(out.dead), 1.0, 1e-12);
  EXPECT_LT(out.mantissas.report({}).ks, 0.01);
  for (auto r : out.dead.reason) ASSERT_EQ(r, DeathReason::final_level);
}

TEST(Basic, PointMassHalvesExactly) {
  const auto spike = TabulatedDensity::normalized({0.0, 0.5 - 1e-9, 0.5, 0.5 + 1e-9, 1.0}, {0, 0, 1, 0, 0});
  const auto out = simulate_basic({2, BreakDistribution(spike, 2)}, RngStream(3, 0));
  ASSERT_EQ(out.total_dead, 4u);
  for (double l : out.dead.log_length) EXPECT_NEAR(l, std::log(0.25), 1e-7);
}

TEST(Basic, ThreadCountDoesNotChangeOutput) {
  EngineOptions one, four;
  one.threads = 1;
  four.threads = 4;
  const BasicModel spec{11, BreakDistribution::beta(2, 3, 3)};
  const auto a = simulate_basic(spec, RngStream(4, 0), one);
  const auto b = simulate_basic(spec, RngStream(4, 0), four);
  EXPECT_EQ(a.dead.log_length, b.dead.log_length);
  EXPECT_EQ(a.dead.tree, b.dead.tree);
}

TEST(Basic, CapWithoutThinningThrows) {
  EngineOptions o;
  o.stick_cap = 1000;
  EXPECT_THROW(simulate_basic({12, BreakDistribution::uniform(2)}, RngStream(5, 0), o), CapExceeded);
  o.thinning = true;
  const auto out = simulate_basic({12, BreakDistribution::uniform(2)}, RngStream(5, 0), o);
  // Bernoulli thinning keeps stick_cap sticks in expectation.
  EXPECT_NEAR(static_cast<double>(out.total_dead), 1000.0, 5.0 * std::sqrt(1000.0));
  EXPECT_EQ(out.nominal_dead_count, 4096.0);
  EXPECT_LT(out.inclusion_probability, 1.0);
}

TEST(PartsPerLevel, PointMassMatchesBasic) {
  const auto a = simulate_parts_per_level({10, PartCountDistribution::point_mass(2), {}}, RngStream(6, 0));
  EXPECT_EQ(a.total_dead, 1024u);
  EXPECT_NEAR(total_mass(a.dead), 1.0, 1e-13);
  EXPECT_EQ(a.parts_per_level, std::vector<int>(10, 2));
}

TEST(PartsPerLevel, LeafCountIsTwoToEffectiveLevels) {
  const PartsPerLevelModel spec{30, PartCountDistribution({0.5, 0.5}), {}};
  double effective_mean = 0.0;
  const int runs = 200;
  for (int j = 0; j < runs; ++j) {
    EngineOptions o;
    o.thinning = true;
    o.stick_cap = 1 << 12;
    o.keep_records = false;
    const auto out = simulate_parts_per_level(spec, RngStream(7, j), o);
    int effective = 0;
    for (int k : out.parts_per_level) effective += k == 2 ? 1 : 0;
    ASSERT_EQ(out.nominal_dead_count, std::ldexp(1.0, effective));
    effective_mean += effective;
  }
  EXPECT_NEAR(effective_mean / runs, 15.0, 4.0 * std::sqrt(7.5 / runs));
}

TEST(PartsPerLevel, RandomCountsGiveBenfordLeaves) {
  EngineOptions o;
  o.thinning = true;
  o.stick_cap = 1 << 19;
  const auto out = simulate_parts_per_level({25, PartCountDistribution::uniform(2, 3), {}}, RngStream(8, 0), o);
  EXPECT_LT(out.mantissas.report({}).ks, 0.02);
}

TEST(PartsPerLevel, MixedFamilies) {
  CutFamilies fam{{2, {UniformLaw{}, BetaLaw{2.0, 2.0}}}, {3, {BetaLaw{0.5, 0.5}}}};
  const auto out = simulate_parts_per_level({8, PartCountDistribution::uniform(2, 3), fam}, RngStream(9, 0));
  EXPECT_NEAR(total_mass(out.dead), 1.0, 1e-12);
}

TEST(PartsPerStick, PointMassMatchesBasicLeafCount) {
  const auto out = simulate_parts_per_stick({12, PartCountDistribution::point_mass(2), {}}, RngStream(10, 0));
  EXPECT_EQ(out.total_dead, 4096u);
  EXPECT_NEAR(total_mass(out.dead), 1.0, 1e-13);
}

TEST(PartsPerStick, MostlyUnsplitStillGrows) {
  const PartsPerStickModel spec{200, PartCountDistribution({0.9, 0.1}), {}};
  EngineOptions o;
  o.thinning = true;
  o.stick_cap = 256;
  o.keep_records = false;
  int grown = 0;
  const int runs = 1000;
  for (int j = 0; j < runs; ++j) grown += simulate_parts_per_stick(spec, RngStream(11, j), o).nominal_dead_count > 1.0;
  EXPECT_GT(grown / double(runs), 0.99);
}

TEST(PartsPerStick, StreamingRunGivesBenford) {
  EngineOptions o;
  o.thinning = true;
  o.stick_cap = 1 << 19;
  o.exact_limit = 100000;
  o.threads = 2;
  const auto out = simulate_parts_per_stick({30, PartCountDistribution::uniform(2, 3), {}}, RngStream(12, 0), o);
  const auto r = out.mantissas.report({});
  EXPECT_TRUE(r.ks_is_upper_bound);
  EXPECT_LT(r.ks, 0.02);
}

TEST(SingleSurvivor, DeadCounts) {
  EXPECT_EQ(simulate_single_survivor({3, BreakDistribution::uniform(2)}, RngStream(13, 0)).total_dead, 4u);
  EXPECT_EQ(simulate_single_survivor({10, BreakDistribution::uniform(3)}, RngStream(13, 1)).total_dead, 21u);
  const auto big = simulate_single_survivor({2000, BreakDistribution::uniform(2)}, RngStream(13, 2));
  EXPECT_EQ(big.total_dead, 2001u);
  EXPECT_NEAR(total_mass(big.dead), 1.0, 1e-12);
  EXPECT_LT(big.mantissas.report({}).ks, 0.05);
}

TEST(ProbStop, ValidatesParameters) {
  ProbStopModel bad{1, BreakDistribution::uniform(2), 1.0};
  EXPECT_THROW(simulate_prob_stop(bad, RngStream(1, 0)), DomainError);
  ProbStopModel opp{1, BreakDistribution::uniform(3), 0.5, Dependence::one_per_parent};
  EXPECT_THROW(simulate_prob_stop(opp, RngStream(1, 0)), DomainError);
}

TEST(ProbStop, OnePerParentKeepsCountFixed) {
  ProbStopModel spec{50, BreakDistribution::uniform(2), 0.5, Dependence::one_per_parent, 40};
  const auto out = simulate_prob_stop(spec, RngStream(14, 0));
  EXPECT_EQ(out.cap_hit, CapHit::level_cap);
  EXPECT_FALSE(out.terminated);
  for (std::size_t i = 0; i < out.alive_counts.size(); ++i) EXPECT_EQ(out.alive_counts[i], 50u);
  EXPECT_EQ(out.total_dead, 50u * 40u);
}

TEST(ProbStop, CommonCoinMovesSiblingsTogether) {
  ProbStopModel spec{1, BreakDistribution::uniform(2), 0.4, Dependence::common_coin, 1000};
  const auto runs = simulate_prob_stop_runs(spec, RngStream(15, 0), 2000);
  for (const auto& r : runs)
    for (std::size_t i = 1; i < r.alive_counts.size(); ++i) ASSERT_EQ(r.alive_counts[i] % 2, 0u);
}

TEST(ProbStop, SubcriticalMeanDead) {
  ProbStopModel spec{1, BreakDistribution::uniform(3), 0.2};
  const auto runs = simulate_prob_stop_runs(spec, RngStream(16, 0), 20000, 2);
  double s = 0.0, s2 = 0.0;
  for (const auto& r : runs) {
    s += static_cast<double>(r.total_dead);
    s2 += static_cast<double>(r.total_dead) * static_cast<double>(r.total_dead);
  }
  const double n = static_cast<double>(runs.size());
  const double mean = s / n;
  const double se = std::sqrt((s2 / n - mean * mean) / n);
  EXPECT_NEAR(mean, (3.0 - 3.0 * 0.2) / (1.0 - 3.0 * 0.2), 3.0 * se);
}

TEST(ProbStop, SupercriticalCapFraction) {
  ProbStopModel spec{1, BreakDistribution::uniform(2), 0.75, Dependence::independent, 100, 1000};
  const auto runs = simulate_prob_stop_runs(spec, RngStream(17, 0), 1000);
  double capped = 0.0;
  for (const auto& r : runs) capped += r.cap_hit != CapHit::none;
  EXPECT_NEAR(capped / 1000.0, 8.0 / 9.0, 0.05);
}

TEST(ProbStop, RunsAreThreadInvariant) {
  ProbStopModel spec{3, BreakDistribution::uniform(2), 0.5, Dependence::independent, 200};
  const auto a = simulate_prob_stop_runs(spec, RngStream(18, 0), 300, 1);
  const auto b = simulate_prob_stop_runs(spec, RngStream(18, 0), 300, 3);
  for (std::size_t j = 0; j < a.size(); ++j) {
    ASSERT_EQ(a[j].total_dead, b[j].total_dead);
    ASSERT_EQ(a[j].alive_counts, b[j].alive_counts);
  }
}

TEST(TailCheck, LevelZeroAlwaysHolds) {
  ProbStopModel spec{100, BreakDistribution::uniform(2), 0.5, Dependence::independent, 3};
  const auto runs = simulate_prob_stop_runs(spec, RngStream(19, 0), 50);
  const auto c = alive_count_tail_check(runs, spec, 0, 10.0);
  EXPECT_EQ(c.frequency, 1.0);
  EXPECT_TRUE(c.holds);
}

TEST(TailCheck, FormulaAndEmpiricalFrequency) {
  ProbStopModel spec{10000, BreakDistribution::uniform(2), 0.5, Dependence::independent, 6};
  const auto runs = simulate_prob_stop_runs(spec, RngStream(20, 0), 1000);
  const auto c = alive_count_tail_check(runs, spec, 5, 1000.0);
  // 1 - 2 * 125 * 1e4 * 1 / (1e6 * 2): vacuous at these parameters.
  EXPECT_DOUBLE_EQ(c.bound, -0.25);
  EXPECT_GE(c.frequency, 0.995);
  EXPECT_TRUE(c.holds);
  const auto tight = alive_count_tail_check(runs, spec, 1, 1000.0);
  EXPECT_DOUBLE_EQ(tight.bound, 1.0 - 2.0 * 1e4 / (1e6 * 2.0));
  EXPECT_TRUE(tight.holds);
}

TEST(TailCheck, RejectsBadArguments) {
  ProbStopModel spec{100, BreakDistribution::uniform(2), 0.5, Dependence::independent, 3};
  const auto runs = simulate_prob_stop_runs(spec, RngStream(21, 0), 5);
  EXPECT_THROW(alive_count_tail_check(runs, spec, 1, 100.0), DomainError);
  EXPECT_THROW(alive_count_tail_check(runs, spec, 1, 150.0), DomainError);
  ProbStopModel off{100, BreakDistribution::uniform(2), 0.4};
  EXPECT_THROW(alive_count_tail_check(runs, off, 1, 10.0), DomainError);
}

TEST(Dispatch, VariantRoutesToModel) {
  const ContinuousModel m = SingleSurvivorModel{5, BreakDistribution::uniform(2)};
  EXPECT_EQ(simulate(m, RngStream(22, 0)).total_dead, 6u);
}
