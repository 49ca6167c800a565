#pragma once

#include <cmath>
#include <stdexcept>
#include <string>

namespace ard {

class RangeError : public std::out_of_range {
 public:
  using std::out_of_range::out_of_range;
};

struct NoiseLevels {
  double alpha;
  double sigma;
};

// Variance-preserving schedule with linear beta(t) on [0, T].
struct VPSchedule {
  double beta_min = 0.1;
  double beta_max = 20.0;
  double T = 1.0;

  void validate() const {
    if (!(T > 0.0) || beta_min < 0.0 || beta_max < 0.0) throw std::invalid_argument("VPSchedule: invalid parameters");
  }

  double beta(double t) const { return beta_min + (t / T) * (beta_max - beta_min); }

  // \int_0^t beta(u) du
  double integrated_beta(double t) const { return beta_min * t + 0.5 * (beta_max - beta_min) * t * t / T; }

  NoiseLevels alpha_sigma(double t) const {
    if (!(t >= 0.0 && t <= T)) throw RangeError("alpha_sigma: t=" + std::to_string(t) + " outside [0,T]");
    const double b = integrated_beta(t);
    // sigma via expm1 keeps precision near t=0
    return {std::exp(-0.5 * b), std::sqrt(-std::expm1(-b))};
  }
};

inline NoiseLevels alpha_sigma(const VPSchedule& sched, double t) { return sched.alpha_sigma(t); }

}  // namespace ard
