#pragma once

#include <stdexcept>
#include <string>

namespace airfed {

// Bad inputs: shape mismatches, out-of-range parameters, violated preconditions.
class validation_error : public std::runtime_error {
 public:
  explicit validation_error(const std::string& what) : std::runtime_error(what) {}
};

// A well-posed problem whose target cannot be met (e.g. gap target unreachable
// within the iteration budget).  Carries the best value that was achievable.
class infeasible_error : public std::runtime_error {
 public:
  infeasible_error(const std::string& what, double best_achieved)
      : std::runtime_error(what), best_achieved_(best_achieved) {}
  double best_achieved() const { return best_achieved_; }

 private:
  double best_achieved_;
};

// Internal numerical failure: a bracket that cannot be widened, a denominator
// that collapsed, an iteration cap hit without convergence.
class numerical_error : public std::runtime_error {
 public:
  explicit numerical_error(const std::string& what) : std::runtime_error(what) {}
};

}  // namespace airfed
