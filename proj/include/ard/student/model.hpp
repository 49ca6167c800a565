#pragma once

// The autoregressive student: a DiT-style transformer over the packed history
// x_{tau_S}, ..., x_{tau_s}. Tokens from every history block share the patch
// embedder and positional table; an additive token-wise step embedding marks
// which block a token came from, and class + current step enter through adaLN
// modulation.
//
// Two execution paths compute the same function:
//   forward_train  all S queries at once over the packed sequence with masks
//   forward_step   one block at a time, reading history keys/values from a KVCache

#include <cmath>
#include <functional>
#include <span>
#include <type_traits>
#include <stdexcept>
#include <vector>

#include "ard/student/config.hpp"
#include "ard/student/mask.hpp"
#include "ard/student/params.hpp"
#include "ard/teacher/schedule.hpp"
#include "ard/tensor.hpp"

namespace ard {

class StateError : public std::logic_error {
 public:
  using std::logic_error::logic_error;
};

// Post-softmax attention probabilities captured per layer.
//   forward_train: [B*heads, S*T, S*T] over the packed sequence
//   forward_step:  [heads, T, keys] with key blocks listed in key_steps
struct AttentionTrace {
  std::vector<Tensor> probs;
  std::vector<std::vector<std::size_t>> key_steps;
};

// Keys/values of consumed blocks, held only for the history layers (< N).
class KVCache {
 public:
  explicit KVCache(const StudentConfig& cfg) : KVCache(cfg, cfg.S) {}

  // A cache that treats steps above `next_step` as consumed without holding
  // their keys/values (history-free evaluation).
  KVCache(const StudentConfig& cfg, std::size_t next_step)
      : S_(cfg.S), N_(cfg.N), option_(cfg.mask), layers_(cfg.N), reads_(cfg.N, 0), next_(next_step) {
    if (next_step < 1 || next_step > cfg.S) throw RangeError("KVCache: start step outside [1, S]");
  }

  // Step index the next forward_step must consume.
  std::size_t next_step() const { return next_; }
  bool finished() const { return next_ == 0; }

  std::size_t key_length(std::size_t layer) const {
    if (layer >= N_) return 0;
    std::size_t n = 0;
    for (const auto& e : layers_[layer]) n += e.k.dim(0);
    return n;
  }

  std::vector<std::size_t> cached_steps(std::size_t layer) const {
    std::vector<std::size_t> out;
    if (layer < N_)
      for (const auto& e : layers_[layer]) out.push_back(e.step);
    return out;
  }

  // Cached key rows read by attention at `layer` since construction.
  std::size_t rows_read(std::size_t layer) const { return layer < N_ ? reads_[layer] : 0; }

 private:
  struct Entry {
    std::size_t step;
    Tensor k;
    Tensor v;
  };

  friend Tensor forward_step(const StudentParams&, const StudentConfig&, const Tensor&, std::size_t, KVCache&,
                             std::size_t, AttentionTrace*);

  std::size_t S_;
  std::size_t N_;
  MaskOption option_;
  std::vector<std::vector<Entry>> layers_;
  std::vector<std::size_t> reads_;
  std::size_t next_;
};

namespace student_detail {

// [B', C*H*W] -> [B' * T, C*p*p]; tokens row-major over the patch grid,
// features ordered (C, p, p).
template <typename F>
BasicTensor<F> patchify(const BasicTensor<F>& x, const StudentConfig& cfg) {
  const auto& im = cfg.image;
  const std::size_t p = cfg.patch;
  const std::size_t n = x.dim(0);
  auto r = reshape(x, {n, im.channels, im.height / p, p, im.width / p, p});
  auto t = permute(r, {0, 2, 4, 1, 3, 5});
  return reshape(t, {n * cfg.tokens_per_block(), cfg.patch_dim()});
}

template <typename F>
BasicTensor<F> unpatchify(const BasicTensor<F>& tokens, const StudentConfig& cfg, std::size_t n) {
  const auto& im = cfg.image;
  const std::size_t p = cfg.patch;
  auto r = reshape(tokens, {n, im.height / p, im.width / p, im.channels, p, p});
  auto t = permute(r, {0, 3, 1, 4, 2, 5});
  return reshape(t, {n, im.numel()});
}

template <typename F>
BasicTensor<F> linear(const BasicTensor<F>& x, const BasicTensor<F>& w, const BasicTensor<F>& b) { return add(matmul(x, w), b); }

template <typename F>
BasicTensor<F> modulate(const BasicTensor<F>& x, const BasicTensor<F>& shift, const BasicTensor<F>& scale) {
  return add(mul(x, affine(scale, F(1), F(1))), shift);
}

// Per-token copies of per-block rows.
template <typename F>
BasicTensor<F> expand_blocks(const BasicTensor<F>& per_block, std::size_t tokens) {
  std::vector<std::size_t> idx(per_block.dim(0) * tokens);
  for (std::size_t i = 0; i < idx.size(); ++i) idx[i] = i / tokens;
  return gather_rows(per_block, idx);
}

template <typename F>
struct Embedded {
  BasicTensor<F> tokens;  // [B' * T, d]
  BasicTensor<F> cond;    // silu(class + current step) per block, [B', d]
};

template <typename F>
using AttentionFn = std::function<BasicTensor<F>(std::size_t layer, const BasicTensor<F>& normed)>;

// Transformer blocks + final adaLN head; returns the per-block output [B', D]
// including the identity skip from the input block.
template <typename F>
BasicTensor<F> run(const BasicStudentParams<F>& p, const StudentConfig& cfg, const BasicTensor<F>& x, const Embedded<F>& e,
                  const std::type_identity_t<AttentionFn<F>>& attention) {
  const std::size_t d = cfg.d_model;
  const std::size_t T = cfg.tokens_per_block();
  BasicTensor<F> h = e.tokens;
  for (std::size_t l = 0; l < cfg.L; ++l) {
    const auto& b = p.blocks[l];
    auto mod = expand_blocks(linear(e.cond, b.ada_w, b.ada_b), T);
    auto shift1 = slice(mod, 1, 0, d);
    auto scale1 = slice(mod, 1, d, 2 * d);
    auto gate1 = slice(mod, 1, 2 * d, 3 * d);
    auto shift2 = slice(mod, 1, 3 * d, 4 * d);
    auto scale2 = slice(mod, 1, 4 * d, 5 * d);
    auto gate2 = slice(mod, 1, 5 * d, 6 * d);

    auto a = modulate(layernorm(h), shift1, scale1);
    auto attn = linear(attention(l, a), b.proj_w, b.proj_b);
    h = add(h, mul(gate1, attn));

    auto m = modulate(layernorm(h), shift2, scale2);
    auto mlp = linear(gelu(linear(m, b.mlp1_w, b.mlp1_b)), b.mlp2_w, b.mlp2_b);
    h = add(h, mul(gate2, mlp));
  }
  auto fmod = expand_blocks(linear(e.cond, p.final_ada_w, p.final_ada_b), T);
  auto out = modulate(layernorm(h), slice(fmod, 1, 0, d), slice(fmod, 1, d, 2 * d));
  auto pix = unpatchify(linear(out, p.head_w, p.head_b), cfg, x.dim(0));
  return add(pix, x);
}

// [rows, d] -> [groups * heads, tokens, head_dim], rows = groups * tokens
template <typename F>
BasicTensor<F> split_heads(const BasicTensor<F>& x, std::size_t groups, std::size_t tokens, const StudentConfig& cfg) {
  auto r = reshape(x, {groups, tokens, cfg.heads, cfg.head_dim()});
  return reshape(permute(r, {0, 2, 1, 3}), {groups * cfg.heads, tokens, cfg.head_dim()});
}

template <typename F>
BasicTensor<F> merge_heads(const BasicTensor<F>& x, std::size_t groups, std::size_t tokens, const StudentConfig& cfg) {
  auto r = reshape(x, {groups, cfg.heads, tokens, cfg.head_dim()});
  return reshape(permute(r, {0, 2, 1, 3}), {groups * tokens, cfg.d_model});
}

}  // namespace student_detail

// Shared patch embedder: [B', C*H*W] -> [B' * T_tok, d].
template <typename F>
BasicTensor<F> patch_embed(const BasicStudentParams<F>& p, const StudentConfig& cfg, const BasicTensor<F>& x) {
  if (x.rank() != 2 || x.dim(1) != cfg.data_dim()) {
    throw DimensionError("patch_embed: expected [n, " + std::to_string(cfg.data_dim()) + "], got " +
                         to_string(x.shape()));
  }
  return student_detail::linear(student_detail::patchify(x, cfg), p.patch_w, p.patch_b);
}

// tokens [B' * T, d] += pos[token] + time[s of its block]
template <typename F>
BasicTensor<F> add_embeddings(const BasicStudentParams<F>& p, const StudentConfig& cfg, const BasicTensor<F>& tokens,
                             const std::vector<std::size_t>& steps) {
  const std::size_t T = cfg.tokens_per_block();
  if (tokens.rank() != 2 || tokens.dim(0) != steps.size() * T || tokens.dim(1) != cfg.d_model) {
    throw DimensionError("add_embeddings: tokens " + to_string(tokens.shape()) + " do not match " +
                         std::to_string(steps.size()) + " blocks");
  }
  std::vector<std::size_t> time_idx(tokens.dim(0));
  for (std::size_t i = 0; i < steps.size(); ++i) {
    if (steps[i] < 1 || steps[i] > cfg.S) {
      throw RangeError("add_embeddings: step " + std::to_string(steps[i]) + " outside [1, " + std::to_string(cfg.S) +
                       "]");
    }
    std::fill_n(time_idx.begin() + static_cast<std::ptrdiff_t>(i * T), T, steps[i]);
  }
  auto with_pos = reshape(add(reshape(tokens, {steps.size(), T, cfg.d_model}), p.pos), {steps.size() * T, cfg.d_model});
  return add(with_pos, gather_rows(p.time, time_idx));
}

namespace student_detail {

// x: [B', D]; steps/labels: one per block.
template <typename F>
Embedded<F> embed(const BasicStudentParams<F>& p, const StudentConfig& cfg, const BasicTensor<F>& x,
                  const std::vector<std::size_t>& steps, const std::vector<std::size_t>& labels) {
  for (auto c : labels) {
    if (c >= cfg.num_classes) throw RangeError("student: class label " + std::to_string(c) + " out of range");
  }
  auto tokens = add_embeddings(p, cfg, patch_embed(p, cfg, x), steps);
  auto cond = silu(add(gather_rows(p.class_emb, labels), gather_rows(p.cond_step, steps)));
  return {std::move(tokens), std::move(cond)};
}

}  // namespace student_detail

// inputs: [B, S, D] with block j holding x_{tau_{S-j}}; labels: B class ids.
// Returns [B, S, D]: block j is the prediction made at step s = S - j.
template <typename F>
BasicTensor<F> forward_train(const BasicStudentParams<F>& p, const StudentConfig& cfg, const BasicTensor<F>& inputs,
                            const std::vector<std::size_t>& labels, AttentionTrace* trace = nullptr) {
  using namespace student_detail;
  if (inputs.rank() != 3 || inputs.dim(1) != cfg.S || inputs.dim(2) != cfg.data_dim()) {
    throw DimensionError("forward_train: expected [B, " + std::to_string(cfg.S) + ", " +
                         std::to_string(cfg.data_dim()) + "] inputs, got " + to_string(inputs.shape()));
  }
  const std::size_t B = inputs.dim(0);
  if (labels.size() != B) throw DimensionError("forward_train: one label per trajectory required");
  const std::size_t S = cfg.S;
  const std::size_t T = cfg.tokens_per_block();
  const std::size_t seq = S * T;

  std::vector<std::size_t> steps(B * S);
  std::vector<std::size_t> block_labels(B * S);
  for (std::size_t b = 0; b < B; ++b)
    for (std::size_t j = 0; j < S; ++j) {
      steps[b * S + j] = S - j;
      block_labels[b * S + j] = labels[b];
    }
  const BasicTensor<F> x = reshape(inputs, {B * S, cfg.data_dim()});
  const auto e = embed(p, cfg, x, steps, block_labels);

  const Mask history_mask = sequence_mask(cfg, 0);
  const Mask gated_mask = sequence_mask(cfg, cfg.L);
  if (trace) {
    trace->probs.assign(cfg.L, Tensor{});
    trace->key_steps.clear();
  }
  const F inv_sqrt = F(1) / std::sqrt(static_cast<F>(cfg.head_dim()));
  const std::size_t d = cfg.d_model;

  auto attention = [&](std::size_t layer, const BasicTensor<F>& a) {
    const auto& blk = p.blocks[layer];
    auto qkv = linear(a, blk.qkv_w, blk.qkv_b);
    auto q = split_heads(slice(qkv, 1, 0, d), B, seq, cfg);
    auto k = split_heads(slice(qkv, 1, d, 2 * d), B, seq, cfg);
    auto v = split_heads(slice(qkv, 1, 2 * d, 3 * d), B, seq, cfg);
    auto scores = scale(matmul(q, transpose(k)), inv_sqrt);
    auto probs = softmax_rows(scores, layer < cfg.N ? &history_mask : &gated_mask);
    if (trace) trace->probs[layer] = cast<float>(probs);
    return merge_heads(matmul(probs, v), B, seq, cfg);
  };
  auto out = run(p, cfg, x, e, attention);
  return reshape(out, {B, S, cfg.data_dim()});
}

// One autoregressive step: consumes block x_s ([1, D] or [D]) at step s,
// attends to the cached history per the mask option, and appends this block's
// keys/values for the history layers. Returns the raw network output [1, D].
inline Tensor forward_step(const StudentParams& p, const StudentConfig& cfg, const Tensor& x_s, std::size_t s,
                           KVCache& cache, std::size_t label, AttentionTrace* trace = nullptr) {
  using namespace student_detail;
  if (cache.S_ != cfg.S || cache.N_ != cfg.N || cache.option_ != cfg.mask) {
    throw StateError("forward_step: cache was built for a different config");
  }
  if (s != cache.next_) {
    throw StateError("forward_step: cache expects step " + std::to_string(cache.next_) + ", got " + std::to_string(s));
  }
  if (x_s.size() != cfg.data_dim()) throw DimensionError("forward_step: state has wrong size");
  const Tensor x = reshape(x_s, {1, cfg.data_dim()});
  const std::size_t T = cfg.tokens_per_block();
  const std::size_t d = cfg.d_model;
  const auto e = embed(p, cfg, x, {s}, {label});
  const float inv_sqrt = 1.0f / std::sqrt(static_cast<float>(cfg.head_dim()));
  if (trace) {
    trace->probs.assign(cfg.L, Tensor{});
    trace->key_steps.assign(cfg.L, {});
  }

  auto attention = [&](std::size_t layer, const Tensor& a) {
    const auto& blk = p.blocks[layer];
    auto qkv = linear(a, blk.qkv_w, blk.qkv_b);
    auto q = slice(qkv, 1, 0, d);
    auto k = slice(qkv, 1, d, 2 * d);
    auto v = slice(qkv, 1, 2 * d, 3 * d);
    std::vector<std::size_t> key_steps;
    Tensor keys = k;
    Tensor values = v;
    if (layer < cfg.N) {
      const auto allowed = allowed_blocks(cfg.S, s, cfg.mask, layer, cfg.N);
      std::vector<Tensor> ks;
      std::vector<Tensor> vs;
      for (const auto& entry : cache.layers_[layer]) {
        if (std::find(allowed.begin(), allowed.end(), entry.step) == allowed.end()) continue;
        ks.push_back(entry.k);
        vs.push_back(entry.v);
        key_steps.push_back(entry.step);
        cache.reads_[layer] += entry.k.dim(0);
      }
      if (!ks.empty()) {
        ks.push_back(k);
        vs.push_back(v);
        keys = concat(ks, 0);
        values = concat(vs, 0);
      }
    }
    key_steps.push_back(s);
    const std::size_t nk = keys.dim(0);
    auto qh = split_heads(q, 1, T, cfg);
    auto kh = split_heads(keys, 1, nk, cfg);
    auto vh = split_heads(values, 1, nk, cfg);
    auto probs = softmax_rows(scale(matmul(qh, transpose(kh)), inv_sqrt));
    if (trace) {
      trace->probs[layer] = probs.detach();
      trace->key_steps[layer] = key_steps;
    }
    if (layer < cfg.N) {
      const auto keep = retained_after(cfg.S, s, cfg.mask);
      auto& entries = cache.layers_[layer];
      std::erase_if(entries, [&](const auto& en) { return std::find(keep.begin(), keep.end(), en.step) == keep.end(); });
      if (std::find(keep.begin(), keep.end(), s) != keep.end()) entries.push_back({s, k.detach(), v.detach()});
    }
    return merge_heads(matmul(probs, vh), 1, T, cfg);
  };
  auto out = run(p, cfg, x, e, attention);
  cache.next_ = s - 1;
  return out;
}

// Converts a network output at step s into the x_{tau_{s-1}} estimate.
// PredictedX0 uses the deterministic DDIM-style update.
inline std::vector<float> target_transform(const StudentConfig& cfg, const VPSchedule& sched,
                                           std::span<const float> output, std::span<const float> x_s, std::size_t s) {
  std::vector<float> out(output.begin(), output.end());
  if (cfg.target == PredictionTarget::NextSample) return out;
  if (s < 1 || s > cfg.S) throw RangeError("target_transform: step out of range");
  if (output.size() != x_s.size()) throw DimensionError("target_transform: size mismatch");
  const double t_cur = sched.T * static_cast<double>(s) / static_cast<double>(cfg.S);
  const double t_next = sched.T * static_cast<double>(s - 1) / static_cast<double>(cfg.S);
  const auto cur = sched.alpha_sigma(t_cur);
  const auto nxt = sched.alpha_sigma(t_next);
  if (s - 1 == 0) return out;  // alpha = 1, sigma = 0
  for (std::size_t i = 0; i < out.size(); ++i) {
    const double x0 = output[i];
    const double eps = (x_s[i] - cur.alpha * x0) / cur.sigma;
    out[i] = static_cast<float>(nxt.alpha * x0 + nxt.sigma * eps);
  }
  return out;
}

}  // namespace ard
