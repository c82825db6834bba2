#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "fragbench/benford.hpp"
#include "fragbench/big_length.hpp"
#include "fragbench/continuous.hpp"
#include "fragbench/error.hpp"
#include "fragbench/parallel.hpp"
#include "fragbench/rng.hpp"
#include "fragbench/sampling.hpp"

namespace fragbench {

/// Lengths at which a stick dies: 1, and every length whose residue mod n
/// lies in S.
class StoppingSet {
 public:
  StoppingSet() = default;
  StoppingSet(std::uint32_t modulus, std::vector<std::uint32_t> residues)
      : modulus_(modulus), residues_(std::move(residues)) {
    if (modulus_ < 2) throw DomainError("stopping-set modulus n must be >= 2");
    std::sort(residues_.begin(), residues_.end());
    residues_.erase(std::unique(residues_.begin(), residues_.end()), residues_.end());
    member_.assign(modulus_, false);
    for (auto r : residues_) {
      if (r >= modulus_) throw DomainError("stopping-set residue must be < n");
      member_[r] = true;
    }
  }

  /// Parses "n:12;S:1,2,3,4,5,6,9,10". An empty S ("n:3;S:") is allowed.
  static StoppingSet parse(std::string_view text) {
    std::optional<std::uint32_t> modulus;
    std::vector<std::uint32_t> residues;
    bool saw_residues = false;
    std::size_t start = 0;
    while (start <= text.size()) {
      const auto end = std::min(text.find(';', start), text.size());
      auto part = text.substr(start, end - start);
      while (!part.empty() && part.front() == ' ') part.remove_prefix(1);
      while (!part.empty() && part.back() == ' ') part.remove_suffix(1);
      if (!part.empty()) {
        const auto colon = part.find(':');
        if (colon == std::string_view::npos) throw DomainError("stopping set part needs 'key:value': " + std::string(part));
        const auto key = part.substr(0, colon);
        const auto value = part.substr(colon + 1);
        if (key == "n") {
          modulus = static_cast<std::uint32_t>(detail::parse_int64(value, "stopping-set modulus"));
        } else if (key == "S") {
          saw_residues = true;
          std::size_t pos = 0;
          while (pos < value.size()) {
            const auto comma = std::min(value.find(',', pos), value.size());
            const auto item = value.substr(pos, comma - pos);
            if (!item.empty()) {
              const auto r = detail::parse_int64(item, "stopping-set residue");
              if (r < 0) throw DomainError("stopping-set residue must be >= 0");
              residues.push_back(static_cast<std::uint32_t>(r));
            }
            pos = comma + 1;
          }
        } else {
          throw DomainError("unknown stopping set key: " + std::string(key));
        }
      }
      start = end + 1;
    }
    if (!modulus || !saw_residues) throw DomainError("stopping set needs both n and S");
    return StoppingSet(*modulus, std::move(residues));
  }

  std::uint32_t modulus() const noexcept { return modulus_; }
  const std::vector<std::uint32_t>& residues() const noexcept { return residues_; }
  std::size_t size() const noexcept { return residues_.size(); }

  bool contains_residue(std::uint32_t r) const { return member_[r % modulus_]; }

  bool contains(const BigInt& length) const {
    if (length == 1) return true;
    return member_[static_cast<std::size_t>(residue(length))];
  }
  bool contains(const BigLength& length) const { return contains(length.value()); }

  std::uint32_t residue(const BigInt& length) const {
    return static_cast<std::uint32_t>(static_cast<std::uint64_t>(length % modulus_));
  }

  std::string to_string() const {
    std::ostringstream out;
    out << "n:" << modulus_ << ";S:";
    for (std::size_t i = 0; i < residues_.size(); ++i) out << (i ? "," : "") << residues_[i];
    return out.str();
  }

  friend bool operator==(const StoppingSet& a, const StoppingSet& b) {
    return a.modulus_ == b.modulus_ && a.residues_ == b.residues_;
  }

 private:
  std::uint32_t modulus_ = 2;
  std::vector<std::uint32_t> residues_{0};
  std::vector<bool> member_{true, false};
};

/// What to do when the starting length is itself in the stopping set.
enum class StartPolicy : std::uint8_t { reject, force_alive };

struct DiscreteOptions {
  Base base = Base(10.0);
  int level_cap = 100'000;
  /// Bound on living sticks in one tree at one level.
  std::uint64_t stick_cap = 10'000'000;
  StartPolicy start_policy = StartPolicy::reject;
  bool keep_lengths = true;
  unsigned threads = 1;
};

/// One break of a coupled run (discrete stick and its continuous shadow).
struct CoupledBreak {
  BigInt ell_before;
  double p = 0.0;
  std::uint32_t r = 0;
  BigInt x;
  double log_h_before = 0.0;
  double log_h_after = 0.0;  // log of the shadow piece matched with x
};

struct DiscreteOutcome {
  std::vector<BigInt> dead_lengths;  // empty unless keep_lengths
  std::vector<double> mantissas;
  std::vector<double> normalized;  // mantissa of X / L
  std::vector<std::int32_t> levels;
  std::vector<std::uint32_t> trees;
  std::vector<DeathReason> reasons;
  std::vector<std::uint64_t> per_level_dead_counts;
  std::vector<CoupledBreak> coupled_trace;
  int levels_run = 0;
  bool terminated = true;
  CapHit cap_hit = CapHit::none;
  std::uint64_t coupling_checks = 0;
  std::uint64_t coupling_violations = 0;
  double start_mantissa = 0.0;

  std::size_t size() const noexcept { return mantissas.size(); }

  void append(DiscreteOutcome&& other) {
    auto move_into = [](auto& dst, auto& src) {
      dst.insert(dst.end(), std::make_move_iterator(src.begin()), std::make_move_iterator(src.end()));
    };
    move_into(dead_lengths, other.dead_lengths);
    move_into(mantissas, other.mantissas);
    move_into(normalized, other.normalized);
    move_into(levels, other.levels);
    move_into(trees, other.trees);
    move_into(reasons, other.reasons);
    move_into(coupled_trace, other.coupled_trace);
    if (per_level_dead_counts.size() < other.per_level_dead_counts.size())
      per_level_dead_counts.resize(other.per_level_dead_counts.size(), 0);
    for (std::size_t i = 0; i < other.per_level_dead_counts.size(); ++i)
      per_level_dead_counts[i] += other.per_level_dead_counts[i];
    levels_run = std::max(levels_run, other.levels_run);
    terminated = terminated && other.terminated;
    if (cap_hit == CapHit::none) cap_hit = other.cap_hit;
    coupling_checks += other.coupling_checks;
    coupling_violations += other.coupling_violations;
  }
};

namespace detail {

inline void push_dead(DiscreteOutcome& out, const BigInt& length, const Base& base, double start_mantissa,
                      std::int32_t level, std::uint32_t tree, DeathReason why, bool keep_lengths) {
  const double m = mantissa(BigLength(length), base);
  double normalized = m - start_mantissa;
  if (normalized < 0.0) normalized += 1.0;
  if (normalized >= 1.0) normalized = 0.0;
  out.mantissas.push_back(m);
  out.normalized.push_back(normalized);
  out.levels.push_back(level);
  out.trees.push_back(tree);
  out.reasons.push_back(why);
  if (keep_lengths) out.dead_lengths.push_back(length);
  const auto idx = static_cast<std::size_t>(level);
  if (out.per_level_dead_counts.size() <= idx) out.per_level_dead_counts.resize(idx + 1, 0);
  ++out.per_level_dead_counts[idx];
}

/// Uniform on (0, 1) as an exact dyadic U / 2^bits with U in [1, 2^bits).
inline BigInt dyadic_uniform(std::size_t bits, RngStream& rng) {
  for (;;) {
    BigInt u = random_bits(bits, rng);
    if (u != 0) return u;
  }
}

inline double dyadic_to_double(const BigInt& u, std::size_t bits) {
  const std::size_t ubits = boost::multiprecision::msb(u) + 1;
  const std::size_t drop = ubits > 60 ? ubits - 60 : 0;
  const double top = static_cast<double>((u >> drop).convert_to<std::uint64_t>());
  return std::ldexp(top, static_cast<int>(drop) - static_cast<int>(bits));
}

inline Quad dyadic_to_quad(const BigInt& u, std::size_t bits) {
  const std::size_t ubits = boost::multiprecision::msb(u) + 1;
  const std::size_t drop = ubits > 112 ? ubits - 112 : 0;
  const BigInt top = u >> drop;
  const Quad value = static_cast<Quad>((top >> 64).convert_to<std::uint64_t>()) * 0x1p64Q +
                     static_cast<Quad>((top & BigInt(0xFFFFFFFFFFFFFFFFull)).convert_to<std::uint64_t>());
  return ldexpq(value, static_cast<int>(drop) - static_cast<int>(bits));
}

inline void check_start(const BigLength& length, const StoppingSet& stop, StartPolicy policy) {
  if (length.value() < 2) throw DomainError("starting length must be >= 2");
  if (policy == StartPolicy::reject && stop.contains(length))
    throw DomainError("starting length " + (length.bit_length() <= 200 ? length.to_string() : std::string("L")) +
                      " lies in the stopping set " + stop.to_string());
}

/// Breaks a living stick into up to k pieces: repeated uniform cuts of the
/// remainder, stopping early once the remainder has length 1.
inline void split_integer(const BigInt& length, int k, RngStream& rng, std::vector<BigInt>& pieces) {
  pieces.clear();
  BigInt rest = length;
  for (int cut = 0; cut + 1 < k && rest > 1; ++cut) {
    BigInt piece = uniform_below(rest - 1, rng) + 1;
    rest -= piece;
    pieces.push_back(std::move(piece));
  }
  pieces.push_back(std::move(rest));
}

/// One tree of the uniform-cut congruence process.
inline DiscreteOutcome congruence_tree(const BigLength& start, int k, const StoppingSet& stop, std::uint32_t tree,
                                       RngStream rng, const DiscreteOptions& options, double start_mantissa) {
  DiscreteOutcome out;
  out.start_mantissa = start_mantissa;
  std::vector<BigInt> current{start.value()};
  std::vector<BigInt> next, pieces;
  int level = 0;
  while (!current.empty()) {
    if (level >= options.level_cap) {
      out.terminated = false;
      out.cap_hit = CapHit::level_cap;
      break;
    }
    if (current.size() > options.stick_cap) {
      out.terminated = false;
      out.cap_hit = CapHit::stick_cap;
      break;
    }
    next.clear();
    for (const auto& stick : current) {
      split_integer(stick, k, rng, pieces);
      for (auto& piece : pieces) {
        if (stop.contains(piece)) {
          push_dead(out, piece, options.base, start_mantissa, level + 1, tree,
                    piece == 1 ? DeathReason::unit_length : DeathReason::stopping_set, options.keep_lengths);
        } else {
          next.push_back(std::move(piece));
        }
      }
    }
    std::swap(current, next);
    ++level;
    out.levels_run = level;
  }
  return out;
}

/// Runs `trees` independent trees (tree t on stream rng.child(t)) and
/// concatenates their outputs in tree order.
template <typename TreeFn>
DiscreteOutcome run_trees(std::uint64_t trees, unsigned threads, TreeFn&& tree_fn) {
  std::vector<DiscreteOutcome> parts(static_cast<std::size_t>(trees));
  parallel_for(parts.size(), threads, [&](std::size_t t) { parts[t] = tree_fn(static_cast<std::uint32_t>(t)); });
  DiscreteOutcome out;
  for (auto& part : parts) {
    out.start_mantissa = part.start_mantissa;
    out.append(std::move(part));
  }
  return out;
}

}  // namespace detail

/// Exploratory k-part process: each living stick takes up to k - 1 uniform
/// cuts of its remainder; each piece dies iff it lies in the stopping set.
/// Requires n = t k.
inline DiscreteOutcome simulate_general_k(const BigLength& start, int k, const StoppingSet& stop, std::uint64_t trees,
                                          const RngStream& rng, const DiscreteOptions& options = {}) {
  if (k < 2) throw DomainError("k must be >= 2");
  if (stop.modulus() % static_cast<std::uint32_t>(k) != 0) throw DomainError("modulus n must be a multiple of k");
  if (trees < 1) throw DomainError("R must be >= 1");
  detail::check_start(start, stop, options.start_policy);
  const double m0 = mantissa(start, options.base);
  return detail::run_trees(trees, options.threads, [&](std::uint32_t t) {
    return detail::congruence_tree(start, k, stop, t, rng.child(t), options, m0);
  });
}

/// R independent trees; each living stick of length l splits at a uniform
/// point of {1, ..., l - 1}; pieces in the stopping set die.
inline DiscreteOutcome simulate_congruence(const BigLength& start, const StoppingSet& stop, std::uint64_t trees,
                                           const RngStream& rng, const DiscreteOptions& options = {}) {
  if (trees < 1) throw DomainError("R must be >= 1");
  detail::check_start(start, stop, options.start_policy);
  const double m0 = mantissa(start, options.base);
  return detail::run_trees(trees, options.threads, [&](std::uint32_t t) {
    return detail::congruence_tree(start, 2, stop, t, rng.child(t), options, m0);
  });
}

/// Coupling bound checks for one odd/even step, in quad precision.
struct OddEvenCoupling {
  Quad lower_product = 1;  // prod (1 - 2/(l_i - 2)) over earlier living lengths
  Quad upper_product = 1;  // prod (1 + 2/(l_i - 2))
  Quad offset_product = 1;  // prod l_i / (l_i - 4)
};

/// Odd/even process: a stick of odd length l sheds an even piece
/// X = 2 ceil(c (l - 1) / 2) with c uniform, keeps l - X, and stops at 1.
/// With `with_shadow`, a continuous stick driven by the same c runs alongside
/// and every step is checked against the coupling bounds.
inline DiscreteOutcome simulate_odd_even(const BigLength& start, const RngStream& rng, bool with_shadow = false,
                                         const DiscreteOptions& options = {}) {
  const BigInt& L = start.value();
  if (L < 3 || (L & 1) == 0) throw DomainError("odd/even process needs an odd starting length >= 3");
  DiscreteOutcome out;
  const double m0 = mantissa(start, options.base);
  out.start_mantissa = m0;
  RngStream stream = rng;
  BigInt ell = L;
  // The shadow is tracked in quad precision while L fits its range.
  const bool shadow = with_shadow && start.bit_length() < 16000;
  Quad h = shadow ? expq(log_quad(L)) : 0;
  OddEvenCoupling products;
  int level = 0;
  while (ell > 1) {
    if (level >= options.level_cap) {
      out.terminated = false;
      out.cap_hit = CapHit::level_cap;
      break;
    }
    const std::size_t bits = boost::multiprecision::msb(ell) + 1 + 64;
    const BigInt u = detail::dyadic_uniform(bits, stream);
    // ceil(c (l - 1) / 2) with c = u / 2^bits, in exact integer arithmetic.
    const BigInt numerator = u * (ell - 1);
    const BigInt half_count = (numerator + (BigInt(1) << (bits + 1)) - 1) >> (bits + 1);
    const BigInt x = 2 * half_count;
    const BigInt survivor = ell - x;
    detail::push_dead(out, x, options.base, m0, level + 1, 0, DeathReason::stopping_set, options.keep_lengths);
    if (shadow) {
      const Quad c = detail::dyadic_to_quad(u, bits);
      const Quad ell_q = expq(log_quad(ell));
      const Quad y = c * h;
      const Quad h_next = h - y;
      const Quad x_q = expq(log_quad(x));
      const Quad ell_next_q = survivor >= 1 ? expq(log_quad(survivor)) : 0;
      // Rounding step: |d - c| <= 2 / l with d = X / l.
      ++out.coupling_checks;
      const Quad tol = 1e-25Q;
      if (fabsq(x_q / ell_q - c) > 2 / ell_q + tol) ++out.coupling_violations;
      // Piece bounds, for pieces whose own stick and shadow exceed 2.
      if (ell_next_q > 2 && h_next > 2) {
        ++out.coupling_checks;
        const Quad lower = y * products.lower_product - 2;
        const Quad upper = y * products.upper_product + 2 * products.offset_product;
        const Quad slack = tol * fmaxq(1.0Q, fabsq(upper));
        if (x_q < lower - slack || x_q > upper + slack) ++out.coupling_violations;
      }
      if (survivor > 4) {
        products.lower_product *= 1 - 2 / (ell_next_q - 2);
        products.upper_product *= 1 + 2 / (ell_next_q - 2);
        products.offset_product *= ell_next_q / (ell_next_q - 4);
      }
      out.coupled_trace.push_back({ell, static_cast<double>(c), 0, x, static_cast<double>(logq(h)),
                                   static_cast<double>(logq(y))});
      h = h_next;
    }
    ell = survivor;
    ++level;
    out.levels_run = level;
  }
  if (ell == 1) detail::push_dead(out, ell, options.base, m0, level, 0, DeathReason::unit_length, options.keep_lengths);
  return out;
}

/// E[F_L] for the odd/even process: 1 + 2 * sum over even j < L of 1/j,
/// i.e. 1 + H_m with m = (L - 1) / 2. Summed exactly (compensated) up to
/// m = 10^7, asymptotic expansion beyond.
inline double fragment_count_expectation(const BigLength& start) {
  const BigInt& L = start.value();
  if ((L & 1) == 0) throw DomainError("fragment count formula needs an odd length");
  const BigInt m_big = (L - 1) / 2;
  constexpr std::uint64_t kExactLimit = 10'000'000;
  if (m_big <= kExactLimit) {
    const auto m = m_big.convert_to<std::uint64_t>();
    double sum = 0.0, compensation = 0.0;
    // Smallest terms first.
    for (std::uint64_t i = m; i >= 1; --i) {
      const double v = 1.0 / static_cast<double>(i);
      const double t = sum + v;
      compensation += (sum - t) + v;
      sum = t;
    }
    return 1.0 + sum + compensation;
  }
  const Quad m = expq(log_quad(m_big));
  const Quad inv = 1 / m;
  const Quad harmonic = log_quad(m_big) + 0.5772156649015328606065120900824024Q + inv / 2 - inv * inv / 12 +
                        inv * inv * inv * inv / 120;
  return static_cast<double>(1 + harmonic);
}

/// Coupled congruence run (one start stick). Each break of a stick of
/// length l draws a residue r with probability p_r(l) and an independent
/// p uniform on (0, 1), then takes X as the (floor(m p) + 1)-th smallest
/// element of class r in {1, ..., l - 1}, m being the class size. The
/// shadow stick is cut at ratio p; |X / l - p| <= (n + 1) / l is checked
/// exactly on every break.
inline DiscreteOutcome simulate_congruence_coupled(const BigLength& start, const StoppingSet& stop,
                                                   const RngStream& rng, const DiscreteOptions& options = {}) {
  detail::check_start(start, stop, options.start_policy);
  const double m0 = mantissa(start, options.base);
  DiscreteOutcome out;
  out.start_mantissa = m0;
  RngStream stream = rng;
  const std::uint32_t n = stop.modulus();
  struct Living {
    BigInt length;
    double log_h;
  };
  std::vector<Living> current{{start.value(), static_cast<double>(log_quad(start))}};
  std::vector<Living> next;
  int level = 0;
  while (!current.empty()) {
    if (level >= options.level_cap) {
      out.terminated = false;
      out.cap_hit = CapHit::level_cap;
      break;
    }
    if (current.size() > options.stick_cap) {
      out.terminated = false;
      out.cap_hit = CapHit::stick_cap;
      break;
    }
    next.clear();
    for (const auto& stick : current) {
      const BigInt& ell = stick.length;
      const BigInt u = uniform_below(ell - 1, stream) + 1;
      const auto r = static_cast<std::uint32_t>(static_cast<std::uint64_t>(u % n));
      const BigInt m = residue_count(ell, n, r);
      const std::size_t bits = boost::multiprecision::msb(ell) + 1 + 64;
      const BigInt p_num = detail::dyadic_uniform(bits, stream);
      const BigInt j = (m * p_num) >> bits;  // floor(m p)
      const BigInt x = r == 0 ? j * n + n : j * n + r;
      // |X 2^b - U l| <= (n + 1) 2^b  <=>  |X / l - p| <= (n + 1) / l.
      ++out.coupling_checks;
      BigInt diff = (x << bits) - p_num * ell;
      if (diff < 0) diff = -diff;
      if (diff > (BigInt(n + 1) << bits) || x < 1 || x >= ell) ++out.coupling_violations;
      const double p = detail::dyadic_to_double(p_num, bits);
      const double log_x_shadow = stick.log_h + std::log(p);
      const double log_rest_shadow = stick.log_h + std::log1p(-p);
      out.coupled_trace.push_back({ell, p, r, x, stick.log_h, log_x_shadow});
      const BigInt rest = ell - x;
      for (auto [piece, log_h] : {std::pair<const BigInt*, double>{&x, log_x_shadow}, {&rest, log_rest_shadow}}) {
        if (stop.contains(*piece))
          detail::push_dead(out, *piece, options.base, m0, level + 1, 0,
                            *piece == 1 ? DeathReason::unit_length : DeathReason::stopping_set, options.keep_lengths);
        else
          next.push_back({*piece, log_h});
      }
    }
    std::swap(current, next);
    ++level;
    out.levels_run = level;
  }
  return out;
}

/// Which side of |S| = n/2 a stopping set lies on.
enum class Regime : std::uint8_t { small, half, large };

inline const char* to_string(Regime r) {
  switch (r) {
    case Regime::small: return "small";
    case Regime::half: return "half";
    case Regime::large: return "large";
  }
  return "unknown";
}

inline Regime regime_of(const StoppingSet& stop) {
  const auto twice = 2 * stop.size();
  if (twice < stop.modulus()) return Regime::small;
  if (twice == stop.modulus()) return Regime::half;
  return Regime::large;
}

struct RegimeDiagnostics {
  Regime regime = Regime::half;
  std::uint32_t modulus = 2;
  std::size_t set_size = 0;
  std::uint64_t dead_count = 0;
  std::uint64_t start_sticks = 1;
  // Small lengths: fraction below m = 2 n^2 against c / 3, c = 1 / (2 n + 1).
  std::uint64_t small_threshold = 0;
  double small_fraction = 0.0;
  double small_reference = 0.0;
  // Large pieces: fraction with X >= L / 3 against |S| / (6 n^3).
  double large_fraction = 0.0;
  double large_reference = 0.0;
  /// log10 of the base threshold 3^(6 n^3 / |S|) (0 when S is empty).
  double log10_base_threshold = 0.0;
  // Atoms: most frequent exact dead length and its share.
  std::string top_atom;
  double top_atom_frequency = 0.0;
  // Dead-count bound 3 n^2 R (|S| > n/2).
  double dead_bound = 0.0;
  double mean_dead_per_start = 0.0;
};

/// Diagnostics for the non-half regimes. Needs dead lengths to be kept.
inline RegimeDiagnostics regime_diagnostics(const DiscreteOutcome& outcome, const StoppingSet& stop,
                                            const BigLength& start, std::uint64_t start_sticks) {
  if (outcome.dead_lengths.size() != outcome.size())
    throw DomainError("regime diagnostics need the dead lengths (keep_lengths = true)");
  RegimeDiagnostics d;
  const double n = stop.modulus();
  d.regime = regime_of(stop);
  d.modulus = stop.modulus();
  d.set_size = stop.size();
  d.dead_count = outcome.size();
  d.start_sticks = start_sticks;
  d.small_threshold = 2ull * stop.modulus() * stop.modulus();
  d.small_reference = 1.0 / (3.0 * (2.0 * n + 1.0));
  d.large_reference = static_cast<double>(stop.size()) / (6.0 * n * n * n);
  d.log10_base_threshold =
      stop.size() == 0 ? 0.0 : 6.0 * n * n * n / static_cast<double>(stop.size()) * std::log10(3.0);
  d.dead_bound = 3.0 * n * n * static_cast<double>(start_sticks);
  d.mean_dead_per_start = static_cast<double>(d.dead_count) / static_cast<double>(start_sticks);
  if (outcome.size() == 0) return d;
  std::uint64_t small = 0, large = 0;
  std::map<BigInt, std::uint64_t> counts;
  for (const auto& x : outcome.dead_lengths) {
    if (x < d.small_threshold) ++small;
    if (3 * x >= start.value()) ++large;
    ++counts[x];
  }
  const double total = static_cast<double>(outcome.size());
  d.small_fraction = static_cast<double>(small) / total;
  d.large_fraction = static_cast<double>(large) / total;
  const auto top = std::max_element(counts.begin(), counts.end(), [](const auto& a, const auto& b) {
    return a.second < b.second;
  });
  d.top_atom = top->first.str();
  d.top_atom_frequency = static_cast<double>(top->second) / total;
  return d;
}

}  // namespace fragbench
