#pragma once

// Minibatches of teacher trajectories laid out for the packed training pass.

#include <cstddef>
#include <span>
#include <vector>

#include "ard/student/config.hpp"
#include "ard/tensor.hpp"
#include "ard/teacher/dataset.hpp"
#include "ard/teacher/mixture.hpp"
#include "ard/teacher/schedule.hpp"

namespace ard {

struct Batch {
  std::size_t B = 0;
  std::size_t S = 0;
  std::size_t D = 0;
  std::vector<float> inputs;   // [B, S, D], block j holds x_{tau_{S-j}}
  std::vector<float> targets;  // [B, S, D], regression target for the prediction made at block j
  std::vector<float> finals;   // [B, D], teacher endpoint x_{tau_0}
  std::vector<std::size_t> labels;

  std::span<const float> input(std::size_t b, std::size_t j) const {
    return std::span<const float>(inputs).subspan((b * S + j) * D, D);
  }
  std::span<const float> target(std::size_t b, std::size_t j) const {
    return std::span<const float>(targets).subspan((b * S + j) * D, D);
  }
  std::span<const float> final_state(std::size_t b) const { return std::span<const float>(finals).subspan(b * D, D); }

  // Rows [begin, end) as a batch of their own.
  Batch rows(std::size_t begin, std::size_t end) const {
    Batch out;
    out.B = end - begin;
    out.S = S;
    out.D = D;
    const auto block = static_cast<std::ptrdiff_t>(S * D);
    out.inputs.assign(inputs.begin() + static_cast<std::ptrdiff_t>(begin) * block,
                      inputs.begin() + static_cast<std::ptrdiff_t>(end) * block);
    out.targets.assign(targets.begin() + static_cast<std::ptrdiff_t>(begin) * block,
                       targets.begin() + static_cast<std::ptrdiff_t>(end) * block);
    out.finals.assign(finals.begin() + static_cast<std::ptrdiff_t>(begin * D),
                      finals.begin() + static_cast<std::ptrdiff_t>(end * D));
    out.labels.assign(labels.begin() + static_cast<std::ptrdiff_t>(begin),
                      labels.begin() + static_cast<std::ptrdiff_t>(end));
    return out;
  }
};

// What PredictedX0 targets are computed from: the teacher's posterior mean
// (with the dataset's guidance scale) at each input state.
struct TargetContext {
  const GaussianMixtureTeacher* teacher = nullptr;
  VPSchedule sched{};
  double cfg_scale = 1.0;
};

inline Batch make_batch(const TrajectoryDataset& ds, std::span<const std::size_t> indices, const StudentConfig& cfg,
                        const TargetContext& ctx = {}) {
  if (ds.steps() != cfg.S) {
    throw DimensionError("batch: dataset has S=" + std::to_string(ds.steps()) + ", student expects " +
                         std::to_string(cfg.S));
  }
  if (ds.dim() != cfg.data_dim()) {
    throw DimensionError("batch: dataset has D=" + std::to_string(ds.dim()) + ", student expects " +
                         std::to_string(cfg.data_dim()));
  }
  const bool x0 = cfg.target == PredictionTarget::PredictedX0;
  if (x0 && ctx.teacher == nullptr) throw ConfigError("batch: predicted-x0 targets need the teacher");
  const std::size_t S = cfg.S;
  const std::size_t D = cfg.data_dim();
  const TrajectoryGrid grid{S, ctx.sched.T};
  Batch b;
  b.B = indices.size();
  b.S = S;
  b.D = D;
  b.inputs.resize(b.B * S * D);
  b.targets.resize(b.B * S * D);
  b.finals.resize(b.B * D);
  b.labels.resize(b.B);
  for (std::size_t r = 0; r < b.B; ++r) {
    const std::size_t i = indices[r];
    if (i >= ds.size()) throw DimensionError("batch: record index out of range");
    b.labels[r] = ds.label(i);
    for (std::size_t j = 0; j < S; ++j) {
      auto in = ds.state(i, j);
      std::copy(in.begin(), in.end(), b.inputs.begin() + static_cast<std::ptrdiff_t>((r * S + j) * D));
      auto dst = b.targets.begin() + static_cast<std::ptrdiff_t>((r * S + j) * D);
      if (!x0) {
        auto next = ds.state(i, j + 1);
        std::copy(next.begin(), next.end(), dst);
      } else {
        const Vec x(in.begin(), in.end());
        const Vec m = ctx.teacher->predicted_x0(ctx.sched, x, grid.tau(S - j), b.labels[r], ctx.cfg_scale);
        std::transform(m.begin(), m.end(), dst, [](double v) { return static_cast<float>(v); });
      }
    }
    auto fin = ds.state(i, S);
    std::copy(fin.begin(), fin.end(), b.finals.begin() + static_cast<std::ptrdiff_t>(r * D));
  }
  return b;
}

inline Batch make_batch(const TrajectoryDataset& ds, const std::vector<std::size_t>& indices, const StudentConfig& cfg,
                        const TargetContext& ctx = {}) {
  return make_batch(ds, std::span<const std::size_t>(indices), cfg, ctx);
}

}  // namespace ard
