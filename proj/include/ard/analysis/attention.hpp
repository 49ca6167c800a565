#pragma once

// Share of post-softmax attention each query step places on every input
// block, averaged uniformly over query tokens, heads, and trajectories.

#include <vector>

#include "ard/student/model.hpp"
#include "ard/training/batch.hpp"
#include "ard/training/loss.hpp"

namespace ard {

struct AttentionReport {
  std::size_t L = 0;
  std::size_t S = 0;
  // scores[layer][s - 1][S - s'] : share of input block s' for query step s
  std::vector<std::vector<std::vector<double>>> scores;

  double at(std::size_t layer, std::size_t s, std::size_t s_input) const {
    return scores.at(layer).at(s - 1).at(S - s_input);
  }
  // Total share on inputs other than the current block.
  double history(std::size_t layer, std::size_t s) const {
    double h = 0.0;
    for (std::size_t si = s + 1; si <= S; ++si) h += at(layer, s, si);
    return h;
  }
};

inline AttentionReport attention_report(const StudentParams& p, const StudentConfig& cfg, const Batch& batch) {
  if (batch.S != cfg.S || batch.D != cfg.data_dim() || batch.B == 0) {
    throw DimensionError("attention_report: trajectories do not match the config");
  }
  AttentionTrace trace;
  forward_train(p, cfg, batch_tensor<float>(batch.inputs, {batch.B, batch.S, batch.D}), batch.labels, &trace);
  const std::size_t S = cfg.S;
  const std::size_t T = cfg.tokens_per_block();
  const std::size_t n = S * T;
  AttentionReport r;
  r.L = cfg.L;
  r.S = S;
  r.scores.assign(cfg.L, std::vector<std::vector<double>>(S, std::vector<double>(S, 0.0)));
  for (std::size_t l = 0; l < cfg.L; ++l) {
    const auto probs = trace.probs[l].data();  // [B*heads, n, n]
    const std::size_t groups = trace.probs[l].dim(0);
    for (std::size_t g = 0; g < groups; ++g)
      for (std::size_t jq = 0; jq < S; ++jq)
        for (std::size_t q = 0; q < T; ++q) {
          const float* row = probs.data() + (g * n + jq * T + q) * n;
          std::vector<double> share(S, 0.0);
          double total = 0.0;
          for (std::size_t jk = 0; jk < S; ++jk) {
            for (std::size_t k = 0; k < T; ++k) share[jk] += row[jk * T + k];
            total += share[jk];
          }
          // Renormalized per query row so a fully gated row is exactly 1.
          for (std::size_t jk = 0; jk < S; ++jk) r.scores[l][S - jq - 1][jk] += share[jk] / total;
        }
    const double norm = static_cast<double>(groups * T);
    for (auto& per_step : r.scores[l])
      for (auto& v : per_step) v /= norm;
  }
  return r;
}

}  // namespace ard
