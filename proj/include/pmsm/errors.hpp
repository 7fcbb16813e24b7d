#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace pmsm {

// Bad user input: machine data, scenario files, out-of-range arguments.
class ValidationError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// A state went NaN/inf during a run.
class NumericalDivergence : public std::runtime_error {
 public:
  NumericalDivergence(const std::string& what, std::size_t last_valid_step, double last_valid_time)
      : std::runtime_error(what), last_valid_step_(last_valid_step), last_valid_time_(last_valid_time) {}

  std::size_t last_valid_step() const noexcept { return last_valid_step_; }
  double last_valid_time() const noexcept { return last_valid_time_; }

 private:
  std::size_t last_valid_step_;
  double last_valid_time_;
};

}  // namespace pmsm
