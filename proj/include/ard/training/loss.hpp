#pragma once

// Regression objectives: the history-conditioned loss and its step-distillation
// special case (mask M1). Reduction is the mean over batch, steps, and elements.

#include <vector>

#include "ard/student/model.hpp"
#include "ard/training/batch.hpp"

namespace ard {

template <typename F>
BasicTensor<F> batch_tensor(const std::vector<float>& v, Shape shape) {
  return BasicTensor<F>::from(std::move(shape), std::vector<F>(v.begin(), v.end()));
}

// Optional outputs of a loss evaluation.
struct LossDetail {
  std::vector<double> per_step;  // index s-1: mean squared error of the step-s prediction
  std::vector<float> outputs;    // raw network outputs [B, S, D]
};

template <typename F>
BasicTensor<F> ard_loss(const BasicStudentParams<F>& p, const StudentConfig& cfg, const Batch& batch,
                        LossDetail* detail = nullptr, BasicTensor<F>* outputs = nullptr) {
  if (batch.S != cfg.S) {
    throw DimensionError("ard_loss: batch has S=" + std::to_string(batch.S) + ", config expects " +
                         std::to_string(cfg.S));
  }
  if (batch.D != cfg.data_dim()) throw DimensionError("ard_loss: batch dimension does not match the config");
  if (batch.B == 0) throw DimensionError("ard_loss: empty batch");
  const Shape shape{batch.B, batch.S, batch.D};
  auto out = forward_train(p, cfg, batch_tensor<F>(batch.inputs, shape), batch.labels);
  auto diff = sub(out, batch_tensor<F>(batch.targets, shape));
  auto sq = mul(diff, diff);
  auto loss = mean(sq);
  if (detail) {
    const std::size_t S = cfg.S;
    const std::size_t D = batch.D;
    detail->per_step.assign(S, 0.0);
    const auto v = sq.data();
    for (std::size_t b = 0; b < batch.B; ++b)
      for (std::size_t j = 0; j < S; ++j) {
        double acc = 0.0;
        for (std::size_t e = 0; e < D; ++e) acc += v[(b * S + j) * D + e];
        detail->per_step[S - j - 1] += acc;
      }
    for (auto& x : detail->per_step) x /= static_cast<double>(batch.B * D);
    detail->outputs.assign(out.data().begin(), out.data().end());
  }
  if (outputs) *outputs = out;
  return loss;
}

// Step distillation: every prediction sees only its own input state.
template <typename F>
BasicTensor<F> step_loss(const BasicStudentParams<F>& p, const StudentConfig& cfg, const Batch& batch,
                         LossDetail* detail = nullptr, BasicTensor<F>* outputs = nullptr) {
  StudentConfig m1 = cfg;
  m1.mask = MaskOption::M1;
  return ard_loss(p, m1, batch, detail, outputs);
}

// The student's final prediction x̂_{tau_0} from raw outputs [B, S, D]: the
// last block in both target parameterizations (at s = 1 the predicted-x0
// conversion is the identity).
template <typename F>
BasicTensor<F> final_prediction(const BasicTensor<F>& outputs) {
  const std::size_t B = outputs.dim(0);
  const std::size_t S = outputs.dim(1);
  const std::size_t D = outputs.dim(2);
  return reshape(slice(outputs, 1, S - 1, S), {B, D});
}

}  // namespace ard
