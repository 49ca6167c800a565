#pragma once

// Exposure-bias harness: the first k student steps consume ground-truth
// teacher states instead of the model's own predictions; the per-step error
// of every prediction against the teacher trajectory is then averaged.

#include <vector>

#include "ard/inference/sampler.hpp"
#include "ard/teacher/dataset.hpp"

namespace ard {

struct ExposureCurve {
  std::size_t k = 0;
  // per_step[s] = mean over trajectories and elements of (x̂_{tau_s} - x_{tau_s})^2, s = 0..S-1
  std::vector<double> per_step;
  double endpoint() const { return per_step.at(0); }
};

inline ExposureCurve exposure_harness(const StudentParams& p, const StudentConfig& cfg, const VPSchedule& sched,
                                      const TrajectoryDataset& ds, const std::vector<std::size_t>& indices,
                                      std::size_t k, std::size_t threads = 1) {
  const std::size_t S = cfg.S;
  if (k > S - 1) throw RangeError("exposure: k must lie in [0, S-1]");
  if (ds.steps() != S || ds.dim() != cfg.data_dim()) throw DimensionError("exposure: dataset does not match config");
  if (indices.empty()) throw DimensionError("exposure: no trajectories");
  const std::size_t D = cfg.data_dim();
  std::vector<std::vector<double>> err(indices.size(), std::vector<double>(S, 0.0));
  parallel_for(indices.size(), threads, [&](std::size_t r) {
    const std::size_t i = indices[r];
    auto teacher_state = [&](std::size_t s) {
      auto st = ds.state(i, S - s);
      return std::vector<float>(st.begin(), st.end());
    };
    BlockOverride feed = [&](std::size_t s) -> std::optional<std::vector<float>> {
      if (s + k >= S) return teacher_state(s);
      return std::nullopt;
    };
    const Chain c = run_chain(p, cfg, sched, ds.state(i, 0), ds.label(i), feed);
    for (std::size_t j = 1; j <= S; ++j) {
      const std::size_t s = S - j;
      auto truth = ds.state(i, j);
      double acc = 0.0;
      for (std::size_t e = 0; e < D; ++e) {
        const double dlt = static_cast<double>(c.states[j][e]) - truth[e];
        acc += dlt * dlt;
      }
      err[r][s] = acc / static_cast<double>(D);
    }
  });
  ExposureCurve curve;
  curve.k = k;
  curve.per_step.assign(S, 0.0);
  for (const auto& e : err)
    for (std::size_t s = 0; s < S; ++s) curve.per_step[s] += e[s];
  for (auto& v : curve.per_step) v /= static_cast<double>(indices.size());
  return curve;
}

}  // namespace ard
