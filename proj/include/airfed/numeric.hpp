#pragma once

#include <cmath>

namespace airfed {

// Neumaier-compensated accumulator.  Long bound/objective sums over iterations
// mix terms of very different magnitude; plain += loses the small ones.
class CompensatedSum {
 public:
  void add(double x) {
    double t = sum_ + x;
    if (std::abs(sum_) >= std::abs(x)) {
      comp_ += (sum_ - t) + x;
    } else {
      comp_ += (x - t) + sum_;
    }
    sum_ = t;
  }
  double value() const { return sum_ + comp_; }

 private:
  double sum_ = 0.0;
  double comp_ = 0.0;
};

inline double relative_change(double prev, double next) {
  return std::abs(prev - next) / std::max(std::abs(prev), 1e-300);
}

}  // namespace airfed
