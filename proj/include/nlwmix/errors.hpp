#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace nlwmix {

/// Invalid parameters or configuration (bad dimension, dt <= 0, ...).
class ConfigError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// Vector lengths or grids that do not match the basis.
class ShapeError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// Not enough samples for a statistic to be meaningful.
class SampleError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// Non-finite nodal values, typically a blow-up of the time integration.
class DivergenceError : public std::runtime_error {
 public:
  DivergenceError(const std::string& what, double t, std::size_t step)
      : std::runtime_error(what + " (t=" + std::to_string(t) + ", step=" + std::to_string(step) +
                           ")"),
        time_(t),
        step_(step) {}

  [[nodiscard]] double time() const noexcept { return time_; }
  [[nodiscard]] std::size_t step() const noexcept { return step_; }

 private:
  double time_;
  std::size_t step_;
};

}  // namespace nlwmix
