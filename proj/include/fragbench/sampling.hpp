#pragma once

#include <algorithm>
#include <boost/math/distributions/beta.hpp>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <functional>
#include <sstream>
#include <string>
#include <variant>
#include <vector>

#include "fragbench/big_length.hpp"
#include "fragbench/error.hpp"
#include "fragbench/rng.hpp"

namespace fragbench {

/// Density on [0, 1] given by values at ascending nodes 0 = x_0 < ... < x_m = 1,
/// interpolated linearly between them.
class TabulatedDensity {
 public:
  static constexpr std::size_t kDefaultPoints = (1u << 14) + 1;

  TabulatedDensity(std::vector<double> x, std::vector<double> f) : x_(std::move(x)), f_(std::move(f)) {
    if (x_.size() < 2 || x_.size() != f_.size()) throw DomainError("tabulated density needs >= 2 matching nodes");
    if (x_.front() != 0.0 || x_.back() != 1.0) throw DomainError("tabulated density nodes must span [0, 1]");
    cdf_.assign(x_.size(), 0.0);
    for (std::size_t i = 0; i < x_.size(); ++i) {
      if (!(f_[i] >= 0.0) || !std::isfinite(f_[i])) throw DomainError("tabulated density must be finite and >= 0");
      if (i > 0) {
        if (!(x_[i] > x_[i - 1])) throw DomainError("tabulated density nodes must be strictly ascending");
        cdf_[i] = cdf_[i - 1] + 0.5 * (f_[i] + f_[i - 1]) * (x_[i] - x_[i - 1]);
      }
    }
    if (std::abs(cdf_.back() - 1.0) > 1e-9) throw DomainError("tabulated density must integrate to 1 within 1e-9");
  }

  /// Samples `pdf` on a uniform grid and rescales so the interpolant integrates to 1.
  static TabulatedDensity from_function(const std::function<double(double)>& pdf,
                                        std::size_t points = kDefaultPoints) {
    if (points < 2) throw DomainError("need at least two grid points");
    std::vector<double> x(points), f(points);
    for (std::size_t i = 0; i < points; ++i) {
      x[i] = static_cast<double>(i) / static_cast<double>(points - 1);
      f[i] = pdf(x[i]);
    }
    return normalized(std::move(x), std::move(f));
  }

  static TabulatedDensity normalized(std::vector<double> x, std::vector<double> f) {
    double mass = 0.0;
    for (std::size_t i = 1; i < x.size(); ++i) mass += 0.5 * (f[i] + f[i - 1]) * (x[i] - x[i - 1]);
    if (!(mass > 0.0) || !std::isfinite(mass)) throw DomainError("tabulated density has no mass");
    for (auto& v : f) v /= mass;
    return TabulatedDensity(std::move(x), std::move(f));
  }

  /// Two-column text file "x f(x)" (whitespace or comma separated, '#' comments).
  static TabulatedDensity from_file(const std::string& path, bool normalize = true) {
    std::ifstream in(path);
    if (!in) throw DomainError("cannot open density file: " + path);
    std::vector<double> x, f;
    std::string line;
    while (std::getline(in, line)) {
      if (auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
      std::replace(line.begin(), line.end(), ',', ' ');
      std::istringstream fields(line);
      double a = 0.0, b = 0.0;
      if (!(fields >> a)) continue;
      if (!(fields >> b)) throw DomainError("density file line needs two columns: " + line);
      x.push_back(a);
      f.push_back(b);
    }
    return normalize ? normalized(std::move(x), std::move(f)) : TabulatedDensity(std::move(x), std::move(f));
  }

  const std::vector<double>& nodes() const noexcept { return x_; }
  const std::vector<double>& values() const noexcept { return f_; }

  double pdf(double t) const {
    if (t < 0.0 || t > 1.0) return 0.0;
    const auto i = cell(t);
    const double w = (t - x_[i]) / (x_[i + 1] - x_[i]);
    return f_[i] + w * (f_[i + 1] - f_[i]);
  }

  double cdf(double t) const {
    if (t <= 0.0) return 0.0;
    if (t >= 1.0) return 1.0;
    const auto i = cell(t);
    const double h = x_[i + 1] - x_[i];
    const double s = t - x_[i];
    return std::min(1.0, cdf_[i] + f_[i] * s + 0.5 * (f_[i + 1] - f_[i]) / h * s * s);
  }

  /// Inverse of the interpolant's CDF (exact: the CDF is quadratic on each cell).
  double quantile(double u) const {
    u = std::clamp(u, 0.0, 1.0) * cdf_.back();
    auto it = std::upper_bound(cdf_.begin(), cdf_.end(), u);
    std::size_t i = it == cdf_.begin() ? 0 : static_cast<std::size_t>(it - cdf_.begin()) - 1;
    i = std::min(i, x_.size() - 2);
    const double h = x_[i + 1] - x_[i];
    const double a = 0.5 * (f_[i + 1] - f_[i]) / h;
    const double b = f_[i];
    const double need = u - cdf_[i];
    double s;
    if (need <= 0.0) {
      s = 0.0;
    } else {
      const double disc = std::max(0.0, b * b + 4.0 * a * need);
      const double denom = b + std::sqrt(disc);
      s = denom > 0.0 ? 2.0 * need / denom : h;
    }
    return std::clamp(x_[i] + s, x_[i], x_[i + 1]);
  }

  /// Density of 1 - X.
  TabulatedDensity reflected() const {
    std::vector<double> x(x_.size()), f(f_.size());
    for (std::size_t i = 0; i < x_.size(); ++i) {
      x[i] = 1.0 - x_[x_.size() - 1 - i];
      f[i] = f_[f_.size() - 1 - i];
    }
    x.front() = 0.0;
    x.back() = 1.0;
    return TabulatedDensity(std::move(x), std::move(f));
  }

  friend bool operator==(const TabulatedDensity& a, const TabulatedDensity& b) {
    return a.x_ == b.x_ && a.f_ == b.f_;
  }

 private:
  std::size_t cell(double t) const {
    auto it = std::upper_bound(x_.begin(), x_.end(), t);
    std::size_t i = it == x_.begin() ? 0 : static_cast<std::size_t>(it - x_.begin()) - 1;
    return std::min(i, x_.size() - 2);
  }

  std::vector<double> x_;
  std::vector<double> f_;
  std::vector<double> cdf_;
};

struct UniformLaw {
  friend bool operator==(const UniformLaw&, const UniformLaw&) = default;
};

struct BetaLaw {
  double a = 1.0;
  double b = 1.0;
  friend bool operator==(const BetaLaw&, const BetaLaw&) = default;
};

/// A density on [0, 1] from one of the supported families.
using Density = std::variant<UniformLaw, BetaLaw, TabulatedDensity>;

inline void validate(const Density& d) {
  std::visit(
      [](const auto& law) {
        if constexpr (std::is_same_v<std::decay_t<decltype(law)>, BetaLaw>) {
          if (!(law.a > 0.0 && law.b > 0.0) || !std::isfinite(law.a) || !std::isfinite(law.b))
            throw DomainError("Beta parameters must be positive and finite");
        }
      },
      d);
}

inline double density_pdf(const Density& d, double x) {
  if (x < 0.0 || x > 1.0) return 0.0;
  if (std::holds_alternative<UniformLaw>(d)) return 1.0;
  if (const auto* beta = std::get_if<BetaLaw>(&d)) {
    if ((x == 0.0 && beta->a < 1.0) || (x == 1.0 && beta->b < 1.0)) return INFINITY;
    return boost::math::pdf(boost::math::beta_distribution<double>(beta->a, beta->b), x);
  }
  return std::get<TabulatedDensity>(d).pdf(x);
}

inline double density_cdf(const Density& d, double x) {
  if (x <= 0.0) return 0.0;
  if (x >= 1.0) return 1.0;
  if (std::holds_alternative<UniformLaw>(d)) return x;
  if (const auto* beta = std::get_if<BetaLaw>(&d))
    return boost::math::cdf(boost::math::beta_distribution<double>(beta->a, beta->b), x);
  return std::get<TabulatedDensity>(d).cdf(x);
}

inline std::string describe(const Density& d) {
  if (std::holds_alternative<UniformLaw>(d)) return "uniform";
  if (const auto* beta = std::get_if<BetaLaw>(&d)) {
    std::ostringstream out;
    out << "beta(" << beta->a << "," << beta->b << ")";
    return out.str();
  }
  return "tabulated(" + std::to_string(std::get<TabulatedDensity>(d).nodes().size()) + " nodes)";
}

namespace detail {

/// Marsaglia-Tsang gamma variate with unit scale.
inline double sample_gamma(double shape, RngStream& rng) {
  if (shape < 1.0) {
    const double g = sample_gamma(shape + 1.0, rng);
    return g * std::pow(rng.uniform_open(), 1.0 / shape);
  }
  const double d = shape - 1.0 / 3.0;
  const double c = 1.0 / std::sqrt(9.0 * d);
  for (;;) {
    double z, v;
    do {
      z = rng.normal();
      v = 1.0 + c * z;
    } while (v <= 0.0);
    v = v * v * v;
    const double u = rng.uniform_open();
    if (u < 1.0 - 0.0331 * z * z * z * z) return d * v;
    if (std::log(u) < 0.5 * z * z + d * (1.0 - v + std::log(v))) return d * v;
  }
}

}  // namespace detail

/// One draw from `d`, strictly inside (0, 1).
inline double sample_density(const Density& d, RngStream& rng) {
  for (;;) {
    double x;
    if (std::holds_alternative<UniformLaw>(d)) {
      x = rng.uniform_open();
    } else if (const auto* beta = std::get_if<BetaLaw>(&d)) {
      const double ga = detail::sample_gamma(beta->a, rng);
      const double gb = detail::sample_gamma(beta->b, rng);
      x = ga / (ga + gb);
    } else {
      x = std::get<TabulatedDensity>(d).quantile(rng.uniform_open());
    }
    if (x > 0.0 && x < 1.0) return x;
  }
}

/// Cut-point law: k - 1 iid draws from a density on (0, 1), sorted.
class BreakDistribution {
 public:
  BreakDistribution() = default;
  BreakDistribution(Density law, int parts) : law_(std::move(law)), parts_(parts) {
    if (parts_ < 2) throw DomainError("a break needs k >= 2 parts");
    validate(law_);
  }

  static BreakDistribution uniform(int parts) { return {UniformLaw{}, parts}; }
  static BreakDistribution beta(double a, double b, int parts) { return {BetaLaw{a, b}, parts}; }

  const Density& law() const noexcept { return law_; }
  int parts() const noexcept { return parts_; }

  friend bool operator==(const BreakDistribution&, const BreakDistribution&) = default;

 private:
  Density law_ = UniformLaw{};
  int parts_ = 2;
};

/// Sorted, strictly increasing cut points in (0, 1). Ties and boundary values
/// are redrawn.
inline std::vector<double> sample_cut_points(const BreakDistribution& d, RngStream& rng) {
  std::vector<double> points(static_cast<std::size_t>(d.parts() - 1));
  for (;;) {
    for (auto& p : points) p = sample_density(d.law(), rng);
    std::sort(points.begin(), points.end());
    if (std::adjacent_find(points.begin(), points.end()) == points.end()) return points;
  }
}

/// Gap lengths (x_1 - 0, x_2 - x_1, ..., 1 - x_{k-1}).
inline std::vector<double> gaps(const std::vector<double>& points, int parts) {
  if (static_cast<int>(points.size()) != parts - 1) throw DomainError("expected k - 1 cut points");
  std::vector<double> out;
  out.reserve(points.size() + 1);
  double prev = 0.0;
  for (double p : points) {
    if (!(p > prev) || !(p < 1.0)) throw DomainError("cut points must be strictly increasing in (0, 1)");
    out.push_back(p - prev);
    prev = p;
  }
  out.push_back(1.0 - prev);
  return out;
}

/// Natural logs of the gaps, computed without cancellation for tiny gaps.
inline void log_gaps(const std::vector<double>& points, std::vector<double>& out) {
  out.clear();
  double prev = 0.0;
  for (double p : points) {
    out.push_back(std::log(p - prev));
    prev = p;
  }
  out.push_back(std::log1p(-prev));
}

/// Marginal density of gap `index` (0-based) of a break distribution.
inline Density gap_marginal(const BreakDistribution& d, int index) {
  const int k = d.parts();
  if (index < 0 || index >= k) throw DomainError("gap index out of range");
  if (std::holds_alternative<UniformLaw>(d.law())) {
    if (k == 2) return UniformLaw{};
    return BetaLaw{1.0, static_cast<double>(k - 1)};
  }
  if (k == 2) {
    if (const auto* beta = std::get_if<BetaLaw>(&d.law()))
      return index == 0 ? Density(*beta) : Density(BetaLaw{beta->b, beta->a});
    const auto& tab = std::get<TabulatedDensity>(d.law());
    return index == 0 ? Density(tab) : Density(tab.reflected());
  }
  // Order-statistic convolution on a grid for k > 2 non-uniform laws.
  const int n = k - 1;
  constexpr std::size_t kGrid = 2049;
  const double h = 1.0 / static_cast<double>(kGrid - 1);
  std::vector<double> pdf(kGrid), cdf(kGrid);
  for (std::size_t j = 0; j < kGrid; ++j) {
    const double x = std::clamp(static_cast<double>(j) * h, 1e-12, 1.0 - 1e-12);
    pdf[j] = density_pdf(d.law(), x);
    cdf[j] = density_cdf(d.law(), static_cast<double>(j) * h);
  }
  std::vector<double> x(kGrid), g(kGrid, 0.0);
  for (std::size_t j = 0; j < kGrid; ++j) x[j] = static_cast<double>(j) * h;
  x.back() = 1.0;
  const double lower = static_cast<double>(index);       // order stats below the gap
  const double upper = static_cast<double>(n - index);    // order stats above the gap
  for (std::size_t j = 0; j < kGrid; ++j) {
    if (index == 0) {
      g[j] = pdf[j] * std::pow(1.0 - cdf[j], upper - 1.0);
    } else if (index == n) {
      const std::size_t m = kGrid - 1 - j;
      g[j] = pdf[m] * std::pow(cdf[m], lower - 1.0);
    } else {
      double acc = 0.0;
      for (std::size_t u = 0; u + j < kGrid; ++u) {
        acc += std::pow(cdf[u], lower - 1.0) * pdf[u] * pdf[u + j] * std::pow(1.0 - cdf[u + j], upper - 1.0);
      }
      g[j] = acc * h;
    }
  }
  return TabulatedDensity::normalized(std::move(x), std::move(g));
}

/// Law of the number of parts: pmf over {1, ..., m}.
class PartCountDistribution {
 public:
  PartCountDistribution() : PartCountDistribution(std::vector<double>{0.0, 1.0}) {}
  explicit PartCountDistribution(std::vector<double> pmf) : pmf_(std::move(pmf)) {
    if (pmf_.empty()) throw DomainError("part-count pmf is empty");
    double total = 0.0;
    for (double p : pmf_) {
      if (!(p >= 0.0) || !std::isfinite(p)) throw DomainError("part-count pmf entries must be >= 0");
      total += p;
    }
    if (std::abs(total - 1.0) > 1e-12) throw DomainError("part-count pmf must sum to 1");
    if (pmf_[0] >= 1.0) throw DomainError("part-count law must have P(k = 1) < 1");
    cumulative_.resize(pmf_.size());
    double acc = 0.0;
    for (std::size_t i = 0; i < pmf_.size(); ++i) cumulative_[i] = acc += pmf_[i];
    cumulative_.back() = 1.0;
  }

  static PartCountDistribution point_mass(int k) {
    if (k < 2) throw DomainError("point mass must sit at k >= 2");
    std::vector<double> pmf(static_cast<std::size_t>(k), 0.0);
    pmf.back() = 1.0;
    return PartCountDistribution(std::move(pmf));
  }

  /// Uniform on {lo, ..., hi}.
  static PartCountDistribution uniform(int lo, int hi) {
    if (lo < 1 || hi < lo) throw DomainError("bad part-count range");
    std::vector<double> pmf(static_cast<std::size_t>(hi), 0.0);
    for (int k = lo; k <= hi; ++k) pmf[static_cast<std::size_t>(k - 1)] = 1.0 / (hi - lo + 1);
    return PartCountDistribution(std::move(pmf));
  }

  const std::vector<double>& pmf() const noexcept { return pmf_; }
  int max_parts() const noexcept { return static_cast<int>(pmf_.size()); }

  int sample(RngStream& rng) const {
    const double u = rng.uniform01();
    const auto it = std::upper_bound(cumulative_.begin(), cumulative_.end(), u);
    return static_cast<int>(std::min<std::size_t>(it - cumulative_.begin(), pmf_.size() - 1)) + 1;
  }

  friend bool operator==(const PartCountDistribution& a, const PartCountDistribution& b) {
    return a.pmf_ == b.pmf_;
  }

 private:
  std::vector<double> pmf_;
  std::vector<double> cumulative_;
};

inline int sample_part_count(const PartCountDistribution& g, RngStream& rng) { return g.sample(rng); }

/// Uniform integer with exactly `bits` random low bits.
inline BigInt random_bits(std::size_t bits, RngStream& rng) {
  if (bits == 0) return 0;
  const std::size_t words = (bits + 63) / 64;
  std::vector<std::uint64_t> buffer(words);
  for (auto& w : buffer) w = rng.next_u64();
  const std::size_t spare = words * 64 - bits;
  if (spare > 0) buffer.back() >>= spare;
  BigInt out;
  // Little-endian word order: buffer[0] is least significant.
  boost::multiprecision::import_bits(out, buffer.rbegin(), buffer.rend(), 64, true);
  return out;
}

/// Uniform on [0, bound) by rejection on bit-length blocks.
inline BigInt uniform_below(const BigInt& bound, RngStream& rng) {
  if (bound < 1) throw DomainError("uniform_below needs a positive bound");
  if (bound <= BigInt(std::numeric_limits<std::uint64_t>::max()))
    return BigInt(rng.uniform_below(bound.convert_to<std::uint64_t>()));
  const std::size_t bits = boost::multiprecision::msb(BigInt(bound - 1)) + 1;
  for (;;) {
    BigInt candidate = random_bits(bits, rng);
    if (candidate < bound) return candidate;
  }
}

/// Exactly uniform on {1, ..., L - 1}.
inline BigLength bigint_uniform(const BigLength& length, RngStream& rng) {
  if (length.value() < 2) throw DomainError("bigint_uniform needs L >= 2");
  return BigLength(uniform_below(length.value() - 1, rng) + 1);
}

/// |{x in [1, l - 1] : x = r mod n}| as an exact integer.
inline BigInt residue_count(const BigInt& length, std::uint64_t n, std::uint64_t r) {
  if (length < 2) throw DomainError("residue count needs l >= 2");
  if (n < 1 || r >= n) throw DomainError("residue must satisfy 0 <= r < n");
  const BigInt top = length - 1;
  if (r == 0) return top / n;
  if (BigInt(r) > top) return 0;
  return (top - r) / n + 1;
}

/// p_r(l): share of {1, ..., l - 1} congruent to r mod n.
inline BigRational residue_proportion(const BigLength& length, std::uint64_t n, std::uint64_t r) {
  if (length.value() < 2) throw DomainError("residue proportion needs l >= 2");
  return BigRational(residue_count(length.value(), n, r), length.value() - 1);
}

}  // namespace fragbench
