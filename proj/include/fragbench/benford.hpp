#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <span>
#include <vector>

#include "fragbench/big_length.hpp"
#include "fragbench/error.hpp"

namespace fragbench {

/// Numeration base B > 1.
class Base {
 public:
  Base() : Base(10.0) {}
  explicit Base(double value) : value_(value), log_value_(std::log(value)) {
    if (!(value > 1.0) || !std::isfinite(value)) throw DomainError("base must be finite and > 1");
  }

  double value() const noexcept { return value_; }
  double log_value() const noexcept { return log_value_; }
  bool is_integer() const noexcept { return value_ == std::floor(value_); }

  /// Number of leading-digit bins (B - 1); integer bases only.
  int digit_bins() const {
    if (!is_integer() || value_ > 1e6) throw DomainError("digit binning needs an integer base");
    return static_cast<int>(value_) - 1;
  }

  friend bool operator==(const Base& a, const Base& b) { return a.value_ == b.value_; }

 private:
  double value_;
  double log_value_;
};

/// Positive continuous stick length held as its natural log.
struct LogLength {
  double value = 0.0;

  LogLength() = default;
  explicit LogLength(double log_length) : value(log_length) {
    if (!std::isfinite(log_length)) throw DomainError("log-length must be finite");
  }
  static LogLength from_length(double length) {
    if (!(length > 0.0)) throw DomainError("length must be positive");
    return LogLength(std::log(length));
  }
};

namespace detail {

/// frac(t) with results within rounding of an integer mapped to 0.
inline double wrap_unit(double t) {
  const double nearest = std::nearbyint(t);
  const double tol = 8.0 * std::numeric_limits<double>::epsilon() * std::max(1.0, std::abs(t));
  if (std::abs(t - nearest) <= tol) return 0.0;
  const double frac = t - std::floor(t);
  return frac >= 1.0 ? 0.0 : frac;
}

inline void require_s(double s, const Base& base) {
  if (!(s >= 1.0 && s < base.value())) throw DomainError("s must lie in [1, B)");
}

}  // namespace detail

/// S with S * B^k == x, k = floor(log_B x), S in [1, B).
inline double significand(double x, const Base& base) {
  if (!(x > 0.0) || !std::isfinite(x)) throw DomainError("significand needs a positive finite value");
  double k = std::floor(std::log(x) / base.log_value());
  double s = x / std::pow(base.value(), k);
  if (s >= base.value()) {
    s /= base.value();
    k += 1;
  } else if (s < 1.0) {
    s *= base.value();
    k -= 1;
  }
  return std::clamp(s, 1.0, std::nextafter(base.value(), 0.0));
}

/// Mantissa frac(log_B x) of a length given in log-space; in [0, 1).
inline double mantissa(LogLength x, const Base& base) {
  return detail::wrap_unit(x.value / base.log_value());
}

/// Mantissa of a big-integer length, accurate to ~1e-25 for any digit count.
inline double mantissa(const BigLength& length, const Base& base) {
  const Quad t = log_quad(length) / logq(static_cast<Quad>(base.value()));
  const Quad nearest = rintq(t);
  const Quad tol = 1e-26Q * fmaxq(1.0Q, fabsq(t));
  if (fabsq(t - nearest) <= tol) return 0.0;
  const double frac = static_cast<double>(t - floorq(t));
  return frac >= 1.0 ? 0.0 : frac;
}

inline double mantissa_real(LogLength x, const Base& base) { return mantissa(x, base); }
inline double mantissa_bigint(const BigLength& length, const Base& base) { return mantissa(length, base); }

/// 1 iff the significand of x is at most s (compared in mantissa space).
inline bool phi_s_mantissa(double m, double s, const Base& base) {
  detail::require_s(s, base);
  return m <= std::log(s) / base.log_value();
}

inline bool phi_s(LogLength x, double s, const Base& base) {
  return phi_s_mantissa(mantissa(x, base), s, base);
}

inline bool phi_s(const BigLength& x, double s, const Base& base) {
  return phi_s_mantissa(mantissa(x, base), s, base);
}

/// P(s): share of a mantissa collection whose significand is at most s.
inline double empirical_p(std::span<const double> mantissas, double s, const Base& base) {
  if (mantissas.empty()) throw DomainError("empirical P(s) of an empty collection");
  detail::require_s(s, base);
  const double threshold = std::log(s) / base.log_value();
  const auto hits = std::count_if(mantissas.begin(), mantissas.end(),
                                  [threshold](double m) { return m <= threshold; });
  return static_cast<double>(hits) / static_cast<double>(mantissas.size());
}

inline std::vector<double> mantissas_of(std::span<const LogLength> xs, const Base& base) {
  std::vector<double> out;
  out.reserve(xs.size());
  for (const auto& x : xs) out.push_back(mantissa(x, base));
  return out;
}

inline std::vector<double> mantissas_of(std::span<const BigLength> xs, const Base& base) {
  std::vector<double> out;
  out.reserve(xs.size());
  for (const auto& x : xs) out.push_back(mantissa(x, base));
  return out;
}

inline double empirical_p(std::span<const LogLength> xs, double s, const Base& base) {
  return empirical_p(mantissas_of(xs, base), s, base);
}

inline double empirical_p(std::span<const BigLength> xs, double s, const Base& base) {
  return empirical_p(mantissas_of(xs, base), s, base);
}

/// One-sample Kolmogorov-Smirnov distance of values in [0,1] from the
/// uniform CDF. Sorts in place.
inline double ks_uniform_sorted(std::span<const double> sorted) {
  if (sorted.empty()) throw DomainError("KS distance of an empty collection");
  const double n = static_cast<double>(sorted.size());
  double sup = 0.0;
  for (std::size_t i = 0; i < sorted.size(); ++i) {
    const double u = sorted[i];
    const double before = static_cast<double>(i) / n;
    const double after = static_cast<double>(i + 1) / n;
    sup = std::max({sup, after - u, u - before});
  }
  return std::clamp(sup, 0.0, 1.0);
}

inline double ks_uniform(std::span<const double> values) {
  std::vector<double> sorted(values.begin(), values.end());
  std::sort(sorted.begin(), sorted.end());
  return ks_uniform_sorted(sorted);
}

/// Leading digit (1..B-1) of a value with mantissa m. Mantissas within
/// 1e-13 below a digit boundary count as on the boundary.
inline int leading_digit(double m, const Base& base) {
  const int bins = base.digit_bins();
  int digit = 1;
  for (int d = 2; d <= bins; ++d) {
    if (m + 1e-13 >= std::log(static_cast<double>(d)) / base.log_value())
      digit = d;
    else
      break;
  }
  return digit;
}

inline double benford_digit_probability(int digit, const Base& base) {
  return std::log1p(1.0 / digit) / base.log_value();
}

struct BenfordReport {
  std::uint64_t sample_count = 0;
  double ks = 0.0;
  bool ks_is_upper_bound = false;  // true when derived from a histogram
  std::vector<double> digit_freq;  // index d-1 holds leading digit d
  double chi_square = 0.0;
  std::vector<std::pair<double, double>> p_curve;  // (s, P(s))
};

/// Evenly spaced default grid s = 1, 1 + (B-1)/20, ... below B.
inline std::vector<double> default_s_grid(const Base& base, int points = 20) {
  std::vector<double> grid;
  for (int i = 0; i < points; ++i) grid.push_back(1.0 + (base.value() - 1.0) * i / points);
  return grid;
}

namespace detail {

inline void fill_digit_stats(BenfordReport& report, std::span<const std::uint64_t> digit_counts,
                             const Base& base) {
  const double n = static_cast<double>(report.sample_count);
  report.digit_freq.assign(digit_counts.size(), 0.0);
  report.chi_square = 0.0;
  double total = 0.0;
  for (std::size_t d = 0; d < digit_counts.size(); ++d) {
    report.digit_freq[d] = static_cast<double>(digit_counts[d]) / n;
    total += report.digit_freq[d];
    const double expected = n * benford_digit_probability(static_cast<int>(d) + 1, base);
    const double diff = static_cast<double>(digit_counts[d]) - expected;
    report.chi_square += diff * diff / expected;
  }
  // Renormalise so rounding never pushes the sum off 1.
  if (total > 0.0)
    for (auto& f : report.digit_freq) f /= total;
}

}  // namespace detail

/// Conformity statistics of a mantissa collection.
inline BenfordReport benford_report(std::span<const double> mantissas, const Base& base,
                                    std::span<const double> s_grid) {
  if (mantissas.empty()) throw DomainError("Benford report of an empty collection");
  BenfordReport report;
  report.sample_count = mantissas.size();
  std::vector<double> sorted(mantissas.begin(), mantissas.end());
  std::sort(sorted.begin(), sorted.end());
  report.ks = ks_uniform_sorted(sorted);
  if (base.is_integer() && base.value() <= 1e6) {
    std::vector<std::uint64_t> counts(static_cast<std::size_t>(base.digit_bins()), 0);
    for (double m : sorted) ++counts[static_cast<std::size_t>(leading_digit(m, base) - 1)];
    detail::fill_digit_stats(report, counts, base);
  }
  for (double s : s_grid) {
    detail::require_s(s, base);
    const double threshold = std::log(s) / base.log_value();
    const auto hits = std::upper_bound(sorted.begin(), sorted.end(), threshold) - sorted.begin();
    report.p_curve.emplace_back(s, static_cast<double>(hits) / static_cast<double>(sorted.size()));
  }
  return report;
}

/// Collects mantissas exactly up to `exact_limit` values, then switches to a
/// fixed histogram (plus leading-digit counts) to bound memory.
class MantissaAccumulator {
 public:
  static constexpr std::size_t kDefaultExactLimit = 10'000'000;
  static constexpr std::size_t kHistogramBins = 10'000;

  explicit MantissaAccumulator(Base base = Base(10.0), std::size_t exact_limit = kDefaultExactLimit)
      : base_(base), exact_limit_(exact_limit) {}

  void add(double m) {
    ++count_;
    if (streaming_) {
      bin(m);
      return;
    }
    exact_.push_back(m);
    if (exact_.size() > exact_limit_) start_streaming();
  }

  void merge(const MantissaAccumulator& other) {
    if (other.streaming_) {
      if (!streaming_) start_streaming();
      count_ += other.count_;
      for (std::size_t i = 0; i < kHistogramBins; ++i) histogram_[i] += other.histogram_[i];
      for (std::size_t i = 0; i < digit_counts_.size(); ++i) digit_counts_[i] += other.digit_counts_[i];
      return;
    }
    for (double m : other.exact_) add(m);
  }

  std::uint64_t count() const noexcept { return count_; }
  bool streaming() const noexcept { return streaming_; }
  const Base& base() const noexcept { return base_; }
  std::span<const double> exact() const noexcept { return exact_; }

  /// Exact report when the sample is retained; otherwise a histogram-based
  /// report whose KS value is an upper bound (looser by at most 1/bins).
  BenfordReport report(std::span<const double> s_grid) const {
    if (count_ == 0) throw DomainError("Benford report of an empty collection");
    if (!streaming_) return benford_report(exact_, base_, s_grid);
    BenfordReport report;
    report.sample_count = count_;
    report.ks_is_upper_bound = true;
    const double n = static_cast<double>(count_);
    const double width = 1.0 / kHistogramBins;
    std::uint64_t below = 0;
    double sup = 0.0;
    for (std::size_t j = 0; j < kHistogramBins; ++j) {
      const double lo = j * width;
      const double hi = (j + 1) * width;
      const double cdf_lo = static_cast<double>(below) / n;
      below += histogram_[j];
      const double cdf_hi = static_cast<double>(below) / n;
      sup = std::max({sup, cdf_hi - lo, hi - cdf_lo});
    }
    report.ks = std::clamp(sup, 0.0, 1.0);
    if (!digit_counts_.empty()) detail::fill_digit_stats(report, digit_counts_, base_);
    for (double s : s_grid) {
      detail::require_s(s, base_);
      const double threshold = std::log(s) / base_.log_value();
      // Linear interpolation inside the bin holding the threshold.
      const double pos = threshold * kHistogramBins;
      const auto full = std::min(kHistogramBins, static_cast<std::size_t>(pos));
      std::uint64_t acc = 0;
      for (std::size_t j = 0; j < full; ++j) acc += histogram_[j];
      double p = static_cast<double>(acc);
      if (full < kHistogramBins) p += (pos - static_cast<double>(full)) * static_cast<double>(histogram_[full]);
      report.p_curve.emplace_back(s, std::min(1.0, p / n));
    }
    return report;
  }

 private:
  void bin(double m) {
    ++histogram_[std::min(kHistogramBins - 1, static_cast<std::size_t>(m * kHistogramBins))];
    if (!digit_counts_.empty()) ++digit_counts_[static_cast<std::size_t>(leading_digit(m, base_) - 1)];
  }

  void start_streaming() {
    streaming_ = true;
    histogram_.assign(kHistogramBins, 0);
    if (base_.is_integer() && base_.value() <= 1e6)
      digit_counts_.assign(static_cast<std::size_t>(base_.digit_bins()), 0);
    for (double m : exact_) bin(m);
    exact_.clear();
    exact_.shrink_to_fit();
  }

  Base base_;
  std::size_t exact_limit_;
  std::uint64_t count_ = 0;
  bool streaming_ = false;
  std::vector<double> exact_;
  std::vector<std::uint64_t> histogram_;
  std::vector<std::uint64_t> digit_counts_;
};

}  // namespace fragbench
