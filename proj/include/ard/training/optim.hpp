#pragma once

// Decoupled-weight-decay Adam, global-norm clipping, and parameter EMA.

#include <cmath>
#include <vector>

#include "ard/student/params.hpp"
#include "ard/tensor.hpp"

namespace ard {

using GradList = std::vector<std::vector<float>>;

struct AdamWConfig {
  double lr = 1e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  double weight_decay = 0.0;
};

class AdamW {
 public:
  AdamW(const std::vector<Tensor>& params, AdamWConfig cfg) : cfg_(cfg) {
    for (const auto& p : params) {
      m_.emplace_back(p.size(), 0.0f);
      v_.emplace_back(p.size(), 0.0f);
    }
  }

  std::size_t steps() const { return t_; }
  const GradList& first_moments() const { return m_; }
  const GradList& second_moments() const { return v_; }

  void step(std::vector<Tensor>& params, const GradList& grads) {
    if (params.size() != m_.size() || grads.size() != m_.size()) throw DimensionError("adamw: parameter count changed");
    ++t_;
    const double bc1 = 1.0 - std::pow(cfg_.beta1, static_cast<double>(t_));
    const double bc2 = 1.0 - std::pow(cfg_.beta2, static_cast<double>(t_));
    const float b1 = static_cast<float>(cfg_.beta1);
    const float b2 = static_cast<float>(cfg_.beta2);
    for (std::size_t i = 0; i < params.size(); ++i) {
      auto w = params[i].mutable_data();
      const auto& g = grads[i];
      if (g.size() != w.size()) throw DimensionError("adamw: gradient shape mismatch");
      auto& m = m_[i];
      auto& v = v_[i];
      for (std::size_t k = 0; k < w.size(); ++k) {
        m[k] = b1 * m[k] + (1.0f - b1) * g[k];
        v[k] = b2 * v[k] + (1.0f - b2) * g[k] * g[k];
        const double mhat = m[k] / bc1;
        const double vhat = v[k] / bc2;
        double upd = mhat / (std::sqrt(vhat) + cfg_.eps) + cfg_.weight_decay * w[k];
        w[k] = static_cast<float>(w[k] - cfg_.lr * upd);
      }
    }
  }

 private:
  AdamWConfig cfg_;
  GradList m_;
  GradList v_;
  std::size_t t_ = 0;
};

inline double global_norm(const GradList& grads) {
  double s = 0.0;
  for (const auto& g : grads)
    for (float v : g) s += static_cast<double>(v) * v;
  return std::sqrt(s);
}

// Rescales grads to norm max_norm when above it; returns the pre-clip norm.
inline double clip_global_norm(GradList& grads, double max_norm) {
  const double norm = global_norm(grads);
  if (norm > max_norm) {
    const float c = static_cast<float>(max_norm / (norm + 1e-12));
    for (auto& g : grads)
      for (auto& v : g) v *= c;
  }
  return norm;
}

// Shadow copy updated as shadow <- decay * shadow + (1 - decay) * param.
class Ema {
 public:
  explicit Ema(const StudentParams& p) : shadow_(p.clone()) {
    shadow_.for_each([](Tensor& t) { t = t.detach(); });
  }

  const StudentParams& shadow() const { return shadow_; }

  void update(const StudentParams& p, double decay) {
    auto src = p.tensors();
    std::size_t i = 0;
    shadow_.for_each([&](Tensor& t) {
      auto s = t.mutable_data();
      auto x = src[i++].data();
      for (std::size_t k = 0; k < s.size(); ++k) {
        s[k] = static_cast<float>(decay * s[k] + (1.0 - decay) * x[k]);
      }
    });
  }

 private:
  StudentParams shadow_;
};

}  // namespace ard
