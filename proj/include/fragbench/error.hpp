#pragma once

#include <stdexcept>
#include <string>

namespace fragbench {

/// Precondition violated by a caller-supplied value.
class DomainError : public std::domain_error {
 public:
  using std::domain_error::domain_error;
};

/// A simulation exceeded one of its hard caps (stick or level count).
class CapExceeded : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Numerical integration could not reach the requested accuracy.
/// Carries the best estimate that was reached.
class QuadratureError : public std::runtime_error {
 public:
  QuadratureError(const std::string& what, double estimate_re, double estimate_im,
                  double achieved_error)
      : std::runtime_error(what),
        estimate_re_(estimate_re),
        estimate_im_(estimate_im),
        achieved_error_(achieved_error) {}

  double estimate_re() const noexcept { return estimate_re_; }
  double estimate_im() const noexcept { return estimate_im_; }
  double achieved_error() const noexcept { return achieved_error_; }

 private:
  double estimate_re_;
  double estimate_im_;
  double achieved_error_;
};

/// Malformed configuration or command line. `field` is the dotted config path.
class UsageError : public std::runtime_error {
 public:
  UsageError(std::string field, const std::string& message)
      : std::runtime_error(field.empty() ? message : field + ": " + message),
        field_(std::move(field)) {}

  const std::string& field() const noexcept { return field_; }

 private:
  std::string field_;
};

namespace detail {

[[noreturn]] inline void domain_fail(const std::string& message) { throw DomainError(message); }

inline void require(bool condition, const char* message) {
  if (!condition) throw DomainError(message);
}

}  // namespace detail
}  // namespace fragbench
