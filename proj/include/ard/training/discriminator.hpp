#pragma once

// Token-MLP discriminator over patch tokens of x̂_{tau_0} with token-wise
// logits, hinge losses, and adaptive balancing against the regression loss.

#include <algorithm>
#include <atomic>
#include <optional>
#include <vector>

#include "ard/checkpoint.hpp"
#include "ard/rng.hpp"
#include "ard/student/model.hpp"

namespace ard {

struct DiscConfig {
  std::size_t hidden = 64;
  bool conditional = false;
};

template <typename F>
struct BasicDiscParams {
  BasicTensor<F> w1, b1;  // [patch_dim, h], [h]
  BasicTensor<F> pos;     // [T_tok, h]
  BasicTensor<F> class_emb;  // [classes, h], only when conditional
  BasicTensor<F> w2, b2;  // [h, h], [h]
  BasicTensor<F> w3, b3;  // [h, 1], [1]

  bool conditional() const { return class_emb.defined(); }

  BasicTensorList<F> named() const {
    BasicTensorList<F> out = {{"disc.w1", w1}, {"disc.b1", b1}, {"disc.pos", pos}};
    if (conditional()) out.push_back({"disc.class", class_emb});
    out.insert(out.end(), {{"disc.w2", w2}, {"disc.b2", b2}, {"disc.w3", w3}, {"disc.b3", b3}});
    return out;
  }

  std::vector<BasicTensor<F>> tensors() const {
    std::vector<BasicTensor<F>> out;
    for (const auto& nt : named()) out.push_back(nt.tensor);
    return out;
  }
};

using DiscParams = BasicDiscParams<float>;

inline DiscParams init_discriminator(const StudentConfig& cfg, const DiscConfig& dc, std::uint64_t seed) {
  Rng rng(derive_seed(seed, 0, /*stream=*/0xD15C));
  auto normal = [&](Shape shape, double std) {
    std::vector<float> v(numel(shape));
    for (auto& x : v) x = static_cast<float>(rng.truncated_normal(std));
    return Tensor::from(std::move(shape), std::move(v), true);
  };
  const std::size_t h = dc.hidden;
  DiscParams p;
  p.w1 = normal({cfg.patch_dim(), h}, 1.0 / std::sqrt(static_cast<double>(cfg.patch_dim())));
  p.b1 = Tensor::zeros({h}, true);
  p.pos = normal({cfg.tokens_per_block(), h}, 0.02);
  if (dc.conditional) p.class_emb = normal({cfg.num_classes, h}, 0.02);
  p.w2 = normal({h, h}, 1.0 / std::sqrt(static_cast<double>(h)));
  p.b2 = Tensor::zeros({h}, true);
  p.w3 = normal({h, 1}, 1.0 / std::sqrt(static_cast<double>(h)));
  p.b3 = Tensor::zeros({1}, true);
  return p;
}

template <typename U, typename F>
BasicDiscParams<U> cast_disc(const BasicDiscParams<F>& p, bool requires_grad = true) {
  auto c = [&](const BasicTensor<F>& t) { return t.defined() ? cast<U>(t, requires_grad) : BasicTensor<U>{}; };
  return {c(p.w1), c(p.b1), c(p.pos), c(p.class_emb), c(p.w2), c(p.b2), c(p.w3), c(p.b3)};
}

// Evaluations of the discriminator since process start (instrumentation).
inline std::atomic<std::size_t>& discriminator_calls() {
  static std::atomic<std::size_t> n{0};
  return n;
}

// x: [n, D] -> per-sample logits [n] (token logits averaged).
template <typename F>
BasicTensor<F> disc_logits(const BasicDiscParams<F>& p, const StudentConfig& cfg, const BasicTensor<F>& x,
                           const std::vector<std::size_t>* labels = nullptr) {
  using namespace student_detail;
  ++discriminator_calls();
  if (x.rank() != 2 || x.dim(1) != cfg.data_dim()) throw DimensionError("discriminator: expected [n, D] input");
  const std::size_t n = x.dim(0);
  const std::size_t T = cfg.tokens_per_block();
  const std::size_t h = p.b1.size();
  auto z = linear(patchify(x, cfg), p.w1, p.b1);
  z = reshape(add(reshape(z, {n, T, h}), p.pos), {n * T, h});
  if (p.conditional()) {
    if (labels == nullptr || labels->size() != n) throw DimensionError("discriminator: conditional model needs labels");
    z = add(z, expand_blocks(gather_rows(p.class_emb, *labels), T));
  }
  z = gelu(z);
  z = gelu(linear(z, p.w2, p.b2));
  auto token_logits = linear(z, p.w3, p.b3);  // [n*T, 1]
  return mean(reshape(token_logits, {n, T}), 1);
}

template <typename F>
struct HingeLosses {
  BasicTensor<F> d_loss;
  BasicTensor<F> g_loss;
};

// d = mean(relu(1 - D(real))) + mean(relu(1 + D(fake))), g = -mean(D(fake)).
template <typename F>
HingeLosses<F> hinge_losses(const BasicTensor<F>& real_logits, const BasicTensor<F>& fake_logits) {
  if (real_logits.size() == 0 || fake_logits.size() == 0) throw DimensionError("hinge: empty batch");
  auto d = add(mean(relu(affine(real_logits, F(-1), F(1)))), mean(relu(affine(fake_logits, F(1), F(1)))));
  auto g = scale(mean(fake_logits), F(-1));
  return {d, g};
}

template <typename F>
HingeLosses<F> discriminator_loss(const BasicDiscParams<F>& p, const StudentConfig& cfg, const BasicTensor<F>& fake,
                                  const BasicTensor<F>& real, const std::vector<std::size_t>* fake_labels = nullptr,
                                  const std::vector<std::size_t>* real_labels = nullptr) {
  return hinge_losses(disc_logits(p, cfg, real, real_labels), disc_logits(p, cfg, fake, fake_labels));
}

inline constexpr double kBalanceEps = 1e-4;
inline constexpr double kBalanceMax = 1e4;

// Weight of the adversarial term from gradient norms at the output head.
inline double adaptive_balance(double reg_grad_norm, double adv_grad_norm) {
  return std::clamp(reg_grad_norm / (adv_grad_norm + kBalanceEps), 0.0, kBalanceMax);
}

}  // namespace ard
