#include <gtest/gtest.h>

#include "fragbench/mellin.hpp"

using namespace fragbench;

namespace {

const Base kTen(10.0);

// log Gamma(z) for Re z > 0.5, Lanczos g = 7, n = 9.
Complex lgamma_complex(Complex z) {
  static const double c[] = {0.99999999999980993,  676.5203681218851,     -1259.1392167224028,
                             771.32342877765313,   -176.61502916214059,   12.507343278686905,
                             -0.13857109526572012, 9.9843695780195716e-6, 1.5056327351493116e-7};
  z -= 1.0;
  Complex x = c[0];
  for (int i = 1; i < 9; ++i) x += c[i] / (z + static_cast<double>(i));
  const Complex t = z + 7.5;
  return 0.5 * std::log(2.0 * M_PI) + (z + 0.5) * std::log(t) - t + std::log(x);
}

// E[X^{-i w}] for X ~ Beta(a, b): B(a - i w, b) / B(a, b).
Complex beta_mellin_oracle(double a, double b, double omega) {
  const Complex s(a, -omega);
  return std::exp(lgamma_complex(s) - lgamma_complex(s + b) + std::lgamma(a + b) - std::lgamma(a));
}

double uniform_modulus(long ell, const Base& base) {
  const double w = mellin_frequency(ell, base);
  return 1.0 / std::sqrt(1.0 + w * w);
}

}  // namespace

TEST(MellinCoeff, UniformValues) {
  EXPECT_EQ(mellin_coeff(UniformLaw{}, 0, kTen), Complex(1.0));
  EXPECT_EQ(mellin_coeff(UniformLaw{}, 0, Base(2.0)), Complex(1.0));
  EXPECT_NEAR(std::abs(mellin_coeff(UniformLaw{}, 1, kTen)), 0.344090, 1e-6);
  EXPECT_NEAR(std::abs(mellin_coeff(UniformLaw{}, 1, kTen)), uniform_modulus(1, kTen), 1e-15);
  const auto plus = mellin_coeff(UniformLaw{}, 1, kTen);
  const auto minus = mellin_coeff(UniformLaw{}, -1, kTen);
  EXPECT_NEAR(std::abs(minus - std::conj(plus)), 0.0, 1e-15);
}

TEST(MellinCoeff, QuadratureMatchesUniformClosedForm) {
  for (double b : {2.0, 10.0}) {
    for (long ell = 1; ell <= 10; ++ell) {
      const auto q = mellin_coeff_quadrature(UniformLaw{}, ell, Base(b));
      EXPECT_LT(std::abs(q - mellin_coeff(UniformLaw{}, ell, Base(b))), 1e-8) << b << " " << ell;
    }
  }
}

TEST(MellinCoeff, BetaClosedFormsAgreeWithOracle) {
  for (double m : {1.0, 2.0, 3.0, 7.0}) {
    for (long ell : {1L, 3L, 20L}) {
      const double w = mellin_frequency(ell, kTen);
      const auto got = mellin_coeff(BetaLaw{1.0, m}, ell, kTen);
      EXPECT_LT(std::abs(got - beta_mellin_oracle(1.0, m, w)), 1e-12) << m << " " << ell;
      EXPECT_LT(std::abs(got - mellin_coeff_quadrature(BetaLaw{1.0, m}, ell, kTen)), 1e-8);
    }
  }
}

TEST(MellinCoeff, BetaQuadratureAgreesWithOracle) {
  for (auto [a, b] : {std::pair{2.0, 2.0}, std::pair{0.5, 0.5}, std::pair{2.0, 0.7}, std::pair{0.3, 2.0},
                      std::pair{5.0, 1.5}}) {
    for (long ell : {1L, 2L, 5L, 15L}) {
      const double w = mellin_frequency(ell, kTen);
      const auto got = mellin_coeff(BetaLaw{a, b}, ell, kTen);
      EXPECT_LT(std::abs(got - beta_mellin_oracle(a, b, w)), 1e-8) << a << "," << b << " l=" << ell;
    }
  }
}

TEST(MellinCoeff, TabulatedMatchesItsSource) {
  const auto tab = TabulatedDensity::from_function([](double x) { return 6.0 * x * (1.0 - x); });
  for (long ell : {1L, 4L, 10L}) {
    const double w = mellin_frequency(ell, kTen);
    EXPECT_LT(std::abs(mellin_coeff(tab, ell, kTen) - beta_mellin_oracle(2.0, 2.0, w)), 1e-6);
    EXPECT_LT(std::abs(mellin_coeff(tab, ell, kTen) - mellin_coeff_quadrature(tab, ell, kTen)), 1e-8);
  }
}

TEST(MellinCoeff, UnreachableToleranceReportsAccuracy) {
  try {
    (void)mellin_coeff_quadrature(BetaLaw{0.05, 0.05}, 3, kTen, 1e-30);
    FAIL() << "expected QuadratureError";
  } catch (const QuadratureError& e) {
    EXPECT_GT(e.achieved_error(), 1e-30);
    EXPECT_TRUE(std::isfinite(e.estimate_re()));
  }
}

TEST(ConditionSum, SingleUniformTerm) {
  const auto s = condition_partial_sum({UniformLaw{}}, 1, kTen);
  EXPECT_NEAR(s.abs_sum, 0.688180, 1e-6);
  EXPECT_NEAR(s.abs_sum, 2.0 * uniform_modulus(1, kTen), 1e-15);
  EXPECT_NEAR(s.complex_sum.real(), 2.0 * mellin_coeff(UniformLaw{}, 1, kTen).real(), 1e-15);
  EXPECT_THROW(condition_partial_sum({UniformLaw{}}, 0, kTen), DomainError);
  EXPECT_THROW(condition_partial_sum({}, 5, kTen), DomainError);
}

TEST(ConditionSum, MonotoneInFactorCount) {
  double previous = 1e300;
  for (int n : {1, 5, 10, 20}) {
    const auto s = condition_partial_sum(std::vector<Density>(static_cast<std::size_t>(n), UniformLaw{}), 100, kTen);
    EXPECT_LT(s.abs_sum, previous);
    previous = s.abs_sum;
  }
}

TEST(ConditionSum, MatchesDirectSeriesForFourUniforms) {
  const std::vector<Density> four(4, UniformLaw{});
  const long ell_max = 2000;
  const auto s = condition_partial_sum(four, ell_max, kTen, 2);
  double direct = 0.0;
  for (long l = 1; l <= ell_max; ++l) direct += 2.0 * std::pow(uniform_modulus(l, kTen), 4);
  EXPECT_NEAR(s.abs_sum, direct, 1e-12);
  // Tail summed smallest-first on its own so rounding stays far below its size.
  double tail = 0.0;
  for (long l = 2'000'000; l > ell_max; --l) tail += 2.0 * std::pow(uniform_modulus(l, kTen), 4);
  ASSERT_TRUE(s.tail_estimate.has_value());
  EXPECT_NEAR(*s.tail_estimate, tail, 1e-3 * tail);
}

TEST(ConditionSum, MixedLawsMultiply) {
  const std::vector<Density> fs{UniformLaw{}, BetaLaw{2.0, 2.0}};
  const auto s = condition_partial_sum(fs, 3, kTen);
  double expect = 0.0;
  for (long l = 1; l <= 3; ++l)
    expect += 2.0 * std::abs(mellin_coeff(UniformLaw{}, l, kTen) * mellin_coeff(BetaLaw{2.0, 2.0}, l, kTen));
  EXPECT_NEAR(s.abs_sum, expect, 1e-14);
}

TEST(ErrorBound, EdgesAndValues) {
  EXPECT_EQ(benford_error_bound({UniformLaw{}}, 10, kTen, 0.0), 0.0);
  EXPECT_THROW(benford_error_bound({UniformLaw{}}, 10, kTen, 1.5), DomainError);
  const std::vector<Density> ten(10, UniformLaw{});
  const double b = benford_error_bound(ten, 1000, kTen, 1.0);
  double series = 0.0;
  for (long l = 1; l <= 1000; ++l) series += 2.0 * std::pow(uniform_modulus(l, kTen), 10);
  EXPECT_NEAR(b, series, 1e-15);
  EXPECT_GT(b, 2.0 * std::pow(0.344090, 10));
  EXPECT_NEAR(b, 4.6e-5, 0.1e-5);
  EXPECT_NEAR(benford_error_bound(ten, 1000, kTen, 0.25), 0.25 * b, 1e-18);
  double previous = 1e300;
  for (int n = 1; n <= 12; ++n) {
    const double v = benford_error_bound(std::vector<Density>(static_cast<std::size_t>(n), BetaLaw{2.0, 2.0}), 50,
                                         kTen, 1.0);
    EXPECT_LE(v, previous);
    previous = v;
  }
}

TEST(HolderProfile, UniformStrictlyDecreasing) {
  std::vector<long> ells;
  for (long l = 1; l <= 10; ++l) ells.push_back(l);
  const auto p = holder_decay_profile(UniformLaw{}, ells, kTen);
  for (std::size_t i = 1; i < p.moduli.size(); ++i) EXPECT_LT(p.moduli[i], p.moduli[i - 1]);
  for (std::size_t i = 0; i < p.moduli.size(); ++i) EXPECT_NEAR(p.moduli[i], uniform_modulus(ells[i], kTen), 1e-15);
  EXPECT_TRUE(p.strictly_below_one);
}

TEST(HolderProfile, BetaTwoTwoBelowOne) {
  std::vector<long> ells{0};
  for (long l = 1; l <= 20; ++l) ells.push_back(l);
  const auto p = holder_decay_profile(BetaLaw{2.0, 2.0}, ells, kTen);
  EXPECT_EQ(p.moduli[0], 1.0);
  EXPECT_TRUE(p.strictly_below_one);
  EXPECT_LT(p.max_nonzero, 1.0);
}
