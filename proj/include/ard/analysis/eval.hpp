#pragma once

// Desk-scale quality report for a student against its teacher.

#include <vector>

#include "ard/analysis/exposure.hpp"
#include "ard/analysis/metrics.hpp"

namespace ard {

struct MetricReport {
  double endpoint_mse = 0.0;      // vs the teacher coupling x_{tau_0}(x_{tau_S})
  double mmd2 = 0.0;              // endpoints vs fresh analytic-teacher samples
  double mmd2_std_error = 0.0;
  double bandwidth = 0.0;
  std::vector<double> per_step;  // deviation curve, index s = 0..S-1
};

// Samples from the priors of trajectories `indices` and compares endpoints to
// the teacher's. Reference samples for MMD share the trajectories' labels and
// are drawn with `ref_seed`; the kernel bandwidth is the median pairwise
// distance of the reference set, so it is the same for every model scored
// against that set.
inline MetricReport evaluate(const StudentParams& p, const StudentConfig& cfg, const VPSchedule& sched,
                             const GaussianMixtureTeacher& teacher, const TrajectoryDataset& ds,
                             const std::vector<std::size_t>& indices, std::uint64_t ref_seed,
                             std::size_t threads = 1) {
  const std::size_t S = cfg.S;
  const std::size_t D = cfg.data_dim();
  if (teacher.dim() != D) throw DimensionError("evaluate: teacher dimension does not match the student");
  std::vector<std::vector<float>> ends(indices.size());
  std::vector<std::vector<double>> err(indices.size(), std::vector<double>(S, 0.0));
  parallel_for(indices.size(), threads, [&](std::size_t r) {
    const std::size_t i = indices[r];
    const Chain c = run_chain(p, cfg, sched, ds.state(i, 0), ds.label(i));
    for (std::size_t j = 1; j <= S; ++j) {
      auto truth = ds.state(i, j);
      double acc = 0.0;
      for (std::size_t e = 0; e < D; ++e) {
        const double dlt = static_cast<double>(c.states[j][e]) - truth[e];
        acc += dlt * dlt;
      }
      err[r][S - j] = acc / static_cast<double>(D);
    }
    ends[r] = c.states.back();
  });
  MetricReport rep;
  rep.per_step.assign(S, 0.0);
  for (const auto& e : err)
    for (std::size_t s = 0; s < S; ++s) rep.per_step[s] += e[s];
  for (auto& v : rep.per_step) v /= static_cast<double>(indices.size());
  rep.endpoint_mse = rep.per_step[0];

  PointSet model, ref;
  Rng rng(derive_seed(ref_seed, 0, /*stream=*/0x3EF));
  for (std::size_t r = 0; r < indices.size(); ++r) {
    model.push(std::span<const float>(ends[r]));
    const Vec x = teacher.sample(rng, ds.label(indices[r]));
    ref.push(std::span<const double>(x));
  }
  const auto m = mmd2_with_error(model, ref, median_bandwidth(ref));
  rep.mmd2 = m.value;
  rep.mmd2_std_error = m.std_error;
  rep.bandwidth = m.bandwidth;
  return rep;
}

}  // namespace ard
