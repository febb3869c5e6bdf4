#pragma once

#include <stdexcept>
#include <string>

namespace cgc {

/// Raised when a geometric construction has no defined answer, e.g. the
/// desired thrust direction of a vanishing force vector.
class SingularityError : public std::domain_error {
 public:
  explicit SingularityError(const std::string& what, double time = 0.0)
      : std::domain_error(what), time_(time) {}
  double time() const noexcept { return time_; }

 private:
  double time_;
};

/// The integrator produced a non-finite state.
class IntegrationBlowup : public std::runtime_error {
 public:
  IntegrationBlowup(const std::string& what, double time)
      : std::runtime_error(what + " at t=" + std::to_string(time)), time_(time) {}
  double time() const noexcept { return time_; }

 private:
  double time_;
};

/// Invalid parameters, gains or configuration values.
class ConfigError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

}  // namespace cgc
