#pragma once

// Probability-flow ODE of the VP diffusion and its Heun solver.

#include <cstdint>
#include <stdexcept>
#include <vector>

#include "ard/teacher/mixture.hpp"
#include "ard/teacher/schedule.hpp"

namespace ard {

class ConfigError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

// tau_s = T s / S, s = 0..S
struct TrajectoryGrid {
  std::size_t S;
  double T = 1.0;

  explicit TrajectoryGrid(std::size_t steps, double horizon = 1.0) : S(steps), T(horizon) {
    if (S < 1) throw ConfigError("TrajectoryGrid: S must be >= 1");
  }
  double tau(std::size_t s) const { return T * static_cast<double>(s) / static_cast<double>(S); }
};

struct Trajectory {
  std::vector<Vec> states;  // x_{tau_S} first, x_{tau_0} last
  std::uint32_t class_label = 0;
  float cfg_scale = 1.0f;
  std::uint64_t seed = 0;

  const Vec& at_step(std::size_t s) const { return states.at(states.size() - 1 - s); }
};

struct GuidedTeacher {
  const GaussianMixtureTeacher& mixture;
  const VPSchedule& schedule;
  double cfg = 1.0;
};

namespace detail {

// dx/dt = -1/2 beta(t) x - 1/2 beta(t) score. Valid at t = 0 because every
// component std is > 0, which keeps the marginal variance positive.
inline void ode_rhs(const GuidedTeacher& g, const Vec& x, double t, std::size_t label, Vec& out) {
  const auto [alpha, sigma] = g.schedule.alpha_sigma(t);
  const double beta = g.schedule.beta(t);
  const Vec s = g.mixture.cfg_score_at(x, alpha, sigma, label, g.cfg);
  out.resize(x.size());
  for (std::size_t j = 0; j < x.size(); ++j) out[j] = -0.5 * beta * (x[j] + s[j]);
}

}  // namespace detail

inline Vec pf_ode_rhs(const GaussianMixtureTeacher& teacher, const VPSchedule& sched, const Vec& x, double t,
                      std::size_t label, double w) {
  if (!(t > 0.0 && t <= sched.T)) throw RangeError("pf_ode_rhs: t must lie in (0,T]");
  Vec out;
  detail::ode_rhs({teacher, sched, w}, x, t, label, out);
  return out;
}

// Heun integration from T to 0 on fine_steps uniform substeps, recording the
// state at every grid time.
inline Trajectory solve_trajectory(const GaussianMixtureTeacher& teacher, const VPSchedule& sched, const Vec& x_T,
                                   const TrajectoryGrid& grid, std::size_t label, double w, std::size_t fine_steps) {
  if (fine_steps < grid.S || fine_steps % grid.S != 0) {
    throw ConfigError("solve_trajectory: fine_steps (" + std::to_string(fine_steps) +
                      ") must be a positive multiple of S (" + std::to_string(grid.S) + ")");
  }
  if (grid.T != sched.T) throw ConfigError("solve_trajectory: grid and schedule horizons differ");
  if (x_T.size() != teacher.dim()) throw std::invalid_argument("solve_trajectory: x_T has wrong dimension");
  const GuidedTeacher g{teacher, sched, w};
  const std::size_t per_step = fine_steps / grid.S;
  const double h = sched.T / static_cast<double>(fine_steps);

  Trajectory traj;
  traj.class_label = static_cast<std::uint32_t>(label);
  traj.cfg_scale = static_cast<float>(w);
  traj.states.reserve(grid.S + 1);
  traj.states.push_back(x_T);

  Vec x = x_T;
  Vec k1, k2, pred(x.size());
  for (std::size_t i = 0; i < fine_steps; ++i) {
    const double t0 = sched.T - h * static_cast<double>(i);
    const double t1 = i + 1 == fine_steps ? 0.0 : sched.T - h * static_cast<double>(i + 1);
    const double dt = t1 - t0;
    detail::ode_rhs(g, x, t0, label, k1);
    for (std::size_t j = 0; j < x.size(); ++j) pred[j] = x[j] + dt * k1[j];
    detail::ode_rhs(g, pred, t1, label, k2);
    for (std::size_t j = 0; j < x.size(); ++j) x[j] += 0.5 * dt * (k1[j] + k2[j]);
    if ((i + 1) % per_step == 0) traj.states.push_back(x);
  }
  return traj;
}

}  // namespace ard
