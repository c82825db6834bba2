#pragma once

#include <quadmath.h>

#include <algorithm>
#include <boost/multiprecision/cpp_int.hpp>
#include <charconv>
#include <compare>
#include <map>
#include <cstdint>
#include <string>
#include <string_view>

#include "fragbench/error.hpp"

namespace fragbench {

using BigInt = boost::multiprecision::cpp_int;
using BigRational = boost::multiprecision::cpp_rational;
using Quad = __float128;

/// Arbitrary-precision positive integer stick length (value >= 1).
class BigLength {
 public:
  BigLength() : value_(1) {}
  explicit BigLength(BigInt value) : value_(std::move(value)) {
    if (value_ < 1) throw DomainError("BigLength must be >= 1");
  }
  explicit BigLength(std::uint64_t value) : BigLength(BigInt(value)) {}

  const BigInt& value() const noexcept { return value_; }

  std::size_t bit_length() const { return boost::multiprecision::msb(value_) + 1; }
  bool fits_u64() const { return bit_length() <= 64; }
  std::uint64_t to_u64() const { return value_.convert_to<std::uint64_t>(); }

  std::string to_string() const { return value_.str(); }

  friend bool operator==(const BigLength&, const BigLength&) = default;
  friend auto operator<=>(const BigLength& a, const BigLength& b) {
    return a.value_ < b.value_ ? std::strong_ordering::less
           : a.value_ == b.value_ ? std::strong_ordering::equal
                                  : std::strong_ordering::greater;
  }

 private:
  BigInt value_;
};

namespace detail {

inline std::int64_t parse_int64(std::string_view text, const char* what) {
  std::int64_t out = 0;
  auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), out);
  if (ec != std::errc{} || ptr != text.data() + text.size())
    throw DomainError(std::string("malformed ") + what + ": '" + std::string(text) + "'");
  return out;
}

inline bool all_digits(std::string_view text) {
  if (text.empty()) return false;
  for (char c : text)
    if (c < '0' || c > '9') return false;
  return true;
}

}  // namespace detail

/// Parses a length written as a decimal integer ("1000001"), as
/// "<significand>e<exponent>" ("82e12000" == 82 * 10^12000), optionally
/// followed by an integer offset ("1e40+3").
inline BigLength parse_big_length(std::string_view text) {
  std::string_view head = text;
  BigInt offset = 0;
  const auto e_pos = text.find_first_of("eE");
  if (e_pos != std::string_view::npos) {
    const auto sign_pos = text.find_first_of("+-", e_pos + 1);
    if (sign_pos != std::string_view::npos) {
      const auto tail = text.substr(sign_pos + 1);
      if (!detail::all_digits(tail)) throw DomainError("malformed length offset: " + std::string(text));
      offset = BigInt(std::string(tail));
      if (text[sign_pos] == '-') offset = -offset;
      head = text.substr(0, sign_pos);
    }
  }
  BigInt value;
  if (e_pos == std::string_view::npos) {
    if (!detail::all_digits(head)) throw DomainError("malformed length: '" + std::string(text) + "'");
    value = BigInt(std::string(head));
  } else {
    const auto significand = head.substr(0, e_pos);
    const auto exponent = head.substr(e_pos + 1);
    if (!detail::all_digits(significand) || !detail::all_digits(exponent))
      throw DomainError("malformed length: '" + std::string(text) + "'");
    const auto exp = detail::parse_int64(exponent, "exponent");
    if (exp > 10'000'000) throw DomainError("length exponent too large");
    value = BigInt(std::string(significand)) * boost::multiprecision::pow(BigInt(10), static_cast<unsigned>(exp));
  }
  value += offset;
  if (value < 1) throw DomainError("length must be >= 1: '" + std::string(text) + "'");
  return BigLength(std::move(value));
}

/// Natural log of L in quad precision. Uses the top 113 bits plus the exact
/// bit count, so cost does not depend on the size of L.
inline Quad log_quad(const BigInt& value) {
  if (value < 1) throw DomainError("log of non-positive integer");
  const std::size_t bits = boost::multiprecision::msb(value) + 1;
  if (bits <= 64) return logq(static_cast<Quad>(value.convert_to<std::uint64_t>()));
  constexpr std::size_t kKeep = 113;
  const std::size_t shift = bits > kKeep ? bits - kKeep : 0;
  const BigInt top = value >> shift;
  const BigInt hi_part = top >> 64;
  const BigInt lo_part = top & BigInt(0xFFFFFFFFFFFFFFFFull);
  const Quad mantissa = static_cast<Quad>(hi_part.convert_to<std::uint64_t>()) * 0x1p64Q +
                        static_cast<Quad>(lo_part.convert_to<std::uint64_t>());
  return logq(mantissa) + static_cast<Quad>(shift) * M_LN2q;
}

inline Quad log_quad(const BigLength& length) { return log_quad(length.value()); }

/// 10^e, memoised per thread (CSV output asks for the same powers repeatedly).
inline const BigInt& power_of_ten(unsigned e) {
  thread_local std::map<unsigned, BigInt> cache;
  auto it = cache.find(e);
  if (it == cache.end()) {
    if (cache.size() > 4096) cache.clear();
    it = cache.emplace(e, boost::multiprecision::pow(BigInt(10), e)).first;
  }
  return it->second;
}

/// Decimal digit count and leading digits of an integer >= 1.
struct DecimalShape {
  std::uint64_t digit_count = 1;
  std::string leading;
};

/// Exact for every input: small values are printed; large ones go through the
/// quad log, with an integer check whenever the log lands near a boundary.
inline DecimalShape decimal_shape(const BigInt& value, int lead = 10) {
  if (value < 1) throw DomainError("decimal shape of non-positive integer");
  if (lead < 1 || lead > 25) throw DomainError("leading digit count must lie in [1, 25]");
  if (boost::multiprecision::msb(value) < 256) {
    std::string text = value.str();
    return {text.size(), text.substr(0, std::min<std::size_t>(text.size(), static_cast<std::size_t>(lead)))};
  }
  const Quad t = log_quad(value) / M_LN10q;
  auto exponent = static_cast<std::uint64_t>(floorq(t));
  const Quad frac = t - floorq(t);
  // Digit count: log10 within rounding of an integer needs an exact check.
  if (frac < 1e-20Q || frac > 1.0Q - 1e-20Q) {
    const auto nearest = static_cast<std::uint64_t>(rintq(t));
    exponent = value >= power_of_ten(static_cast<unsigned>(nearest)) ? nearest : nearest - 1;
  }
  const std::uint64_t digits = exponent + 1;
  const auto shift = static_cast<unsigned>(digits - static_cast<std::uint64_t>(lead));
  // Leading digits = floor(value / 10^shift); estimate then correct exactly.
  const Quad estimate = expq((t - static_cast<Quad>(shift)) * M_LN10q);
  BigInt guess(static_cast<unsigned long long>(floorq(estimate)));
  const BigInt& scale = power_of_ten(shift);
  while (guess * scale > value) --guess;
  while ((guess + 1) * scale <= value) ++guess;
  return {digits, guess.str()};
}

}  // namespace fragbench
