#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <complex>
#include <limits>
#include <optional>
#include <vector>

#include "fragbench/benford.hpp"
#include "fragbench/error.hpp"
#include "fragbench/parallel.hpp"
#include "fragbench/sampling.hpp"

namespace fragbench {

using Complex = std::complex<double>;

/// Frequency 2*pi*l / ln B at which the l-th coefficient is evaluated.
inline double mellin_frequency(long ell, const Base& base) {
  return 2.0 * M_PI * static_cast<double>(ell) / base.log_value();
}

/// Replaces the uniform closed form when set. Test fixtures use this to
/// corrupt the coefficient and check that the acceptance gate notices.
using UniformClosedForm = Complex (*)(double omega);
inline UniformClosedForm uniform_closed_form_override = nullptr;

inline Complex uniform_closed_form(double omega) {
  if (uniform_closed_form_override) return uniform_closed_form_override(omega);
  return 1.0 / Complex(1.0, -omega);
}

namespace detail {

// Gauss-Kronrod 7/15 nodes and weights on [-1, 1].
inline constexpr std::array<double, 8> kKronrodNodes = {
    0.991455371120812639206854697526329, 0.949107912342758524526189684047851,
    0.864864423359769072789712788640926, 0.741531185599394439863864773280788,
    0.586087235467691130294144845693013, 0.405845151377397166906606412076961,
    0.207784955007898467600689403773245, 0.000000000000000000000000000000000};
inline constexpr std::array<double, 8> kKronrodWeights = {
    0.022935322010529224963732008058970, 0.063092092629978553290700663189204,
    0.104790010322250183839876322541518, 0.140653259715525918745189590510238,
    0.169004726639267902826583426598550, 0.190350578064785409913256402421014,
    0.204432940075298892414161999234649, 0.209482141084727828012999174891714};
inline constexpr std::array<double, 4> kGaussWeights = {
    0.129484966168869693270611432679082, 0.279705391489276667901467771423780,
    0.381830050505118944950369775488975, 0.417959183673469387755102040816327};

struct Panel {
  Complex value;
  double error;
  double magnitude;  // integral of |f|, for the roundoff floor
};

template <typename F>
Panel gauss_kronrod_15(F&& f, double a, double b) {
  const double centre = 0.5 * (a + b);
  const double half = 0.5 * (b - a);
  const Complex fc = f(centre);
  Complex kronrod = fc * kKronrodWeights[7];
  Complex gauss = fc * kGaussWeights[3];
  double magnitude = std::abs(fc) * kKronrodWeights[7];
  for (int j = 0; j < 7; ++j) {
    const double dx = half * kKronrodNodes[static_cast<std::size_t>(j)];
    const Complex lo = f(centre - dx);
    const Complex hi = f(centre + dx);
    kronrod += (lo + hi) * kKronrodWeights[static_cast<std::size_t>(j)];
    magnitude += (std::abs(lo) + std::abs(hi)) * kKronrodWeights[static_cast<std::size_t>(j)];
    if (j % 2 == 1) gauss += (lo + hi) * kGaussWeights[static_cast<std::size_t>(j / 2)];
  }
  return {kronrod * half, std::abs((kronrod - gauss) * half), magnitude * std::abs(half)};
}

template <typename F>
Panel adaptive_gk(F& f, double a, double b, double tol, std::size_t& panels_left) {
  const Panel whole = gauss_kronrod_15(f, a, b);
  if (panels_left > 0) --panels_left;
  // Splitting further cannot beat rounding in the panel sum.
  const double floor = 50.0 * std::numeric_limits<double>::epsilon() * whole.magnitude;
  if (!(whole.error > tol) || panels_left == 0 || whole.error <= floor) return whole;
  const double mid = 0.5 * (a + b);
  const Panel left = adaptive_gk(f, a, mid, 0.5 * tol, panels_left);
  const Panel right = adaptive_gk(f, mid, b, 0.5 * tol, panels_left);
  return {left.value + right.value, left.error + right.error, left.magnitude + right.magnitude};
}

/// Integral of g(y) e^{-i omega y} over [y_min, 0] with panels no wider than
/// half an oscillation period.
template <typename G>
Panel oscillatory_log_integral(G&& g, double y_min, double y_end, double omega, double tol, std::size_t& panels_left) {
  auto integrand = [&](double y) { return g(y) * std::polar(1.0, -omega * y); };
  const double width = std::min(1.0, omega > 0.0 ? M_PI / std::abs(omega) : 1.0);
  const double span = y_end - y_min;
  const auto panels = static_cast<std::size_t>(std::ceil(span / width));
  const double step = span / static_cast<double>(std::max<std::size_t>(panels, 1));
  const double panel_tol = tol / static_cast<double>(std::max<std::size_t>(panels, 1));
  Panel total{0.0, 0.0, 0.0};
  for (std::size_t p = 0; p < std::max<std::size_t>(panels, 1); ++p) {
    const double a = y_min + step * static_cast<double>(p);
    const double b = p + 1 == panels ? y_end : a + step;
    const Panel part = adaptive_gk(integrand, a, b, panel_tol, panels_left);
    total.value += part.value;
    total.error += part.error;
    total.magnitude += part.magnitude;
  }
  return total;
}

/// y below which the law keeps less than `mass` of its probability.
inline double log_lower_cut(const Density& d, double mass) {
  double lo = -1.0;
  while (lo > -2000.0 && density_cdf(d, std::exp(lo)) > mass) lo *= 2.0;
  if (lo <= -2000.0) return -2000.0;
  double hi = lo / 2.0;
  if (density_cdf(d, std::exp(hi)) <= mass) return hi;
  for (int i = 0; i < 60; ++i) {
    const double mid = 0.5 * (lo + hi);
    (density_cdf(d, std::exp(mid)) > mass ? hi : lo) = mid;
  }
  return lo;
}

/// g(y) = f(e^y) e^y for a Beta law, evaluated in log form.
inline double beta_log_space_density(const BetaLaw& law, double log_norm, double y) {
  if (y >= 0.0) return law.b == 1.0 ? std::exp(law.a * y - log_norm) : 0.0;
  return std::exp(law.a * y + (law.b - 1.0) * std::log(-std::expm1(y)) - log_norm);
}

inline Complex tabulated_mellin(const TabulatedDensity& tab, double omega) {
  // Exact integral of the piecewise-linear interpolant f = alpha + beta x:
  // alpha x^{1-iw}/(1-iw) + beta x^{2-iw}/(2-iw) between cell ends.
  const Complex s1(1.0, -omega);
  const Complex s2(2.0, -omega);
  const auto& x = tab.nodes();
  const auto& f = tab.values();
  auto antiderivative = [&](double t, double alpha, double beta) -> Complex {
    if (t <= 0.0) return 0.0;
    const Complex osc = std::polar(1.0, -omega * std::log(t));
    return alpha * t * osc / s1 + beta * t * t * osc / s2;
  };
  Complex total = 0.0;
  for (std::size_t i = 0; i + 1 < x.size(); ++i) {
    const double beta = (f[i + 1] - f[i]) / (x[i + 1] - x[i]);
    const double alpha = f[i] - beta * x[i];
    total += antiderivative(x[i + 1], alpha, beta) - antiderivative(x[i], alpha, beta);
  }
  return total;
}

}  // namespace detail

inline constexpr double kMellinTolerance = 1e-8;
// Gauss-Kronrod panel evaluations allowed per coefficient.
inline constexpr std::size_t kMaxQuadraturePanels = std::size_t{1} << 20;

/// Coefficient by log-space panel quadrature, for any supported density.
/// Throws QuadratureError when the estimated error exceeds the tolerance.
inline Complex mellin_coeff_quadrature(const Density& d, long ell, const Base& base,
                                       double tolerance = kMellinTolerance) {
  validate(d);
  if (ell == 0) return 1.0;
  const double omega = mellin_frequency(ell, base);
  const double y_min = detail::log_lower_cut(d, 1e-13);
  detail::Panel result{0.0, 0.0, 0.0};
  const double budget = 0.1 * tolerance;
  std::size_t panels_left = kMaxQuadraturePanels;
  if (std::holds_alternative<UniformLaw>(d)) {
    result = detail::oscillatory_log_integral([](double y) { return std::exp(y); }, y_min, 0.0, omega, budget,
                                              panels_left);
  } else if (const auto* tab = std::get_if<TabulatedDensity>(&d)) {
    result = detail::oscillatory_log_integral(
        [tab](double y) { return tab->pdf(std::exp(y)) * std::exp(y); }, y_min, 0.0, omega, budget, panels_left);
  } else {
    const auto& law = std::get<BetaLaw>(d);
    const double log_norm = std::lgamma(law.a) + std::lgamma(law.b) - std::lgamma(law.a + law.b);
    auto g = [&](double y) { return detail::beta_log_space_density(law, log_norm, y); };
    if (law.b >= 1.0) {
      result = detail::oscillatory_log_integral(g, y_min, 0.0, omega, budget, panels_left);
    } else {
      // Near y = 0 the density blows up like (-y)^(b-1); y = -u^q with q = 1/b
      // makes the transformed integrand bounded.
      const double split = std::max(y_min, -std::min(1.0, M_PI / omega));
      result = detail::oscillatory_log_integral(g, y_min, split, omega, 0.5 * budget, panels_left);
      const double q = 1.0 / law.b;
      // Evaluated in log form: the (-y)^(b-1) and u^(q-1) factors cancel.
      auto transformed = [&](double u) -> Complex {
        if (u <= 0.0) return 0.0;
        const double log_t = q * std::log(u);
        const double t = std::exp(log_t);
        const double log_one_minus = t < 1e-8 ? log_t - 0.5 * t : std::log(-std::expm1(-t));
        const double log_value =
            -law.a * t + (law.b - 1.0) * log_one_minus - log_norm + std::log(q) + (q - 1.0) * std::log(u);
        return std::exp(log_value) * std::polar(1.0, omega * t);
      };
      const detail::Panel tail = detail::adaptive_gk(transformed, 0.0, std::pow(-split, 1.0 / q), 0.5 * budget, panels_left);
      result.value += tail.value;
      result.error += tail.error;
    }
  }
  if (!(result.error <= tolerance) || !std::isfinite(result.value.real()) || !std::isfinite(result.value.imag()))
    throw QuadratureError("Mellin quadrature did not reach the requested accuracy", result.value.real(),
                          result.value.imag(), result.error);
  return result.value;
}

/// Mellin coefficient Mf(1 - 2 pi i l / ln B) = integral of f(x) x^{-2 pi i l / ln B}
/// over [0, 1]. Closed forms for the uniform law and Beta(1, m) with integer
/// m; exact cell integrals for tabulated densities; quadrature otherwise.
inline Complex mellin_coeff(const Density& d, long ell, const Base& base) {
  validate(d);
  if (ell == 0) return 1.0;
  const double omega = mellin_frequency(ell, base);
  if (std::holds_alternative<UniformLaw>(d)) return uniform_closed_form(omega);
  if (const auto* tab = std::get_if<TabulatedDensity>(&d)) return detail::tabulated_mellin(*tab, omega);
  const auto& law = std::get<BetaLaw>(d);
  if (law.a == 1.0 && law.b == std::floor(law.b) && law.b <= 64.0) {
    // m B(s, m) = m! / (s (s+1) ... (s+m-1)) at s = 1 - i omega.
    const int m = static_cast<int>(law.b);
    if (m == 1) return uniform_closed_form(omega);
    Complex value = 1.0;
    for (int j = 0; j < m; ++j) value *= static_cast<double>(j + 1) / Complex(1.0 + j, -omega);
    return value;
  }
  return mellin_coeff_quadrature(d, ell, base);
}

struct ConditionSum {
  int n = 0;
  long ell_max = 0;
  Complex complex_sum = 0.0;
  double abs_sum = 0.0;
  /// Power-law estimate of the omitted terms l > ell_max (both signs);
  /// empty when the fitted decay is too slow for the tail to converge.
  std::optional<double> tail_estimate;
};

namespace detail {

/// Index of each density among the distinct ones, so repeated laws are
/// integrated once.
inline std::vector<std::size_t> distinct_index(const std::vector<Density>& fs, std::vector<Density>& unique) {
  std::vector<std::size_t> index;
  for (const auto& f : fs) {
    auto it = std::find(unique.begin(), unique.end(), f);
    if (it == unique.end()) {
      unique.push_back(f);
      it = std::prev(unique.end());
    }
    index.push_back(static_cast<std::size_t>(it - unique.begin()));
  }
  return index;
}

}  // namespace detail

/// Truncated Mellin-condition sum over 0 < |l| <= ell_max of the product of
/// the n coefficients. Negative l contribute complex conjugates.
inline ConditionSum condition_partial_sum(const std::vector<Density>& fs, long ell_max, const Base& base,
                                          unsigned threads = 1) {
  if (fs.empty()) throw DomainError("condition sum needs at least one density");
  if (ell_max < 1) throw DomainError("ell_max must be >= 1");
  std::vector<Density> unique;
  const auto index = detail::distinct_index(fs, unique);
  std::vector<Complex> products(static_cast<std::size_t>(ell_max));
  parallel_for(products.size(), threads, [&](std::size_t i) {
    const long ell = static_cast<long>(i) + 1;
    std::vector<Complex> coeff(unique.size());
    for (std::size_t u = 0; u < unique.size(); ++u) coeff[u] = mellin_coeff(unique[u], ell, base);
    Complex product = 1.0;
    for (auto j : index) product *= coeff[j];
    products[i] = product;
  });
  ConditionSum out;
  out.n = static_cast<int>(fs.size());
  out.ell_max = ell_max;
  double re = 0.0;
  double abs = 0.0;
  for (const auto& p : products) {
    re += p.real();
    abs += std::abs(p);
  }
  out.complex_sum = 2.0 * re;  // l and -l pair up into 2 Re
  out.abs_sum = 2.0 * abs;
  if (ell_max >= 2) {
    const double last = std::abs(products.back());
    const double prev = std::abs(products[products.size() - 2]);
    if (last == 0.0) {
      out.tail_estimate = 0.0;
    } else if (prev > 0.0) {
      const double L = static_cast<double>(ell_max);
      const double p = std::log(prev / last) / std::log(L / (L - 1.0));
      if (p > 1.0) out.tail_estimate = 2.0 * last * L / (p - 1.0);
    }
  }
  return out;
}

/// Bound on |P(mantissa in [a, b]) - (b - a)| for a product of ratios with
/// the given laws: (b - a) times the truncated absolute condition sum.
inline double benford_error_bound(const std::vector<Density>& fs, long ell_max, const Base& base,
                                  double interval_length, unsigned threads = 1) {
  if (interval_length < 0.0 || interval_length > 1.0) throw DomainError("interval length must lie in [0, 1]");
  if (interval_length == 0.0) return 0.0;
  return interval_length * condition_partial_sum(fs, ell_max, base, threads).abs_sum;
}

struct HolderProfile {
  std::vector<long> ells;
  std::vector<double> moduli;
  double max_nonzero = 0.0;  // max modulus over l != 0
  bool strictly_below_one = true;
};

/// |Mf(1 - 2 pi i l / ln B)| for each l in the range.
inline HolderProfile holder_decay_profile(const Density& d, const std::vector<long>& ells, const Base& base) {
  HolderProfile out;
  for (long ell : ells) {
    const double modulus = ell == 0 ? 1.0 : std::abs(mellin_coeff(d, ell, base));
    out.ells.push_back(ell);
    out.moduli.push_back(modulus);
    if (ell != 0) {
      out.max_nonzero = std::max(out.max_nonzero, modulus);
      if (!(modulus < 1.0)) out.strictly_below_one = false;
    }
  }
  return out;
}

}  // namespace fragbench
