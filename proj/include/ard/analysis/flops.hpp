#pragma once

// Closed-form inference cost model, counted in multiply-accumulates (one
// "FLOP" per MAC).
//
// Per transformer layer on T tokens of width d (MLP ratio r):
//   projections  4 T d^2          (qkv + output)
//   scores       T^2 d            (q k^T over the current block)
//   values       T^2 d            (probabilities times v)
//   mlp          2 r T d^2
//   kv_extra     2 T (h T) d      (scores + values over h extra history blocks)
// plus per evaluation: adaLN modulation 6 d^2 per layer and 2 d^2 for the
// final layer, timestep MLP (f d + d^2), class/step embedding negligible,
// patch embedding T p^2 C d, and the output head T d p^2 C_out.

#include <cstddef>
#include <stdexcept>
#include <string>
#include <vector>

#include "ard/student/config.hpp"
#include "ard/student/mask.hpp"

namespace ard {

struct ArchDims {
  std::size_t L = 8;
  std::size_t d_model = 64;
  std::size_t heads = 4;
  std::size_t tokens = 16;  // T_tok
  std::size_t patch = 2;
  std::size_t channels = 1;
  std::size_t out_channels = 1;  // DiT predicts noise and variance: 2C
  std::size_t mlp_ratio = 4;
  std::size_t time_freq = 0;     // sinusoidal width fed to the timestep MLP; 0 if none

  void validate() const {
    if (L < 1 || d_model < 1 || heads < 1 || tokens < 1 || patch < 1 || channels < 1) {
      throw ConfigError("flops: architecture dims must be positive");
    }
  }
};

// DiT-XL/2 on a 32x32x4 latent.
inline ArchDims dit_xl2() { return ArchDims{28, 1152, 16, 256, 2, 4, 8, 4, 256}; }

inline ArchDims dims_of(const StudentConfig& c) {
  return ArchDims{c.L, c.d_model, c.heads, c.tokens_per_block(), c.patch, c.image.channels, c.image.channels,
                  c.mlp_ratio, 0};
}

inline ArchDims parse_arch(const std::string& name) {
  if (name == "dit-xl2" || name == "dit-xl/2") return dit_xl2();
  if (name == "desk") return dims_of(StudentConfig{});
  throw ConfigError("unknown architecture '" + name + "' (expected dit-xl2|desk)");
}

enum class FlopsMode { Student, TeacherCfg, KD };

inline FlopsMode parse_flops_mode(const std::string& s) {
  if (s == "student") return FlopsMode::Student;
  if (s == "teacher" || s == "teacher-cfg") return FlopsMode::TeacherCfg;
  if (s == "kd") return FlopsMode::KD;
  throw ConfigError("unknown flops mode '" + s + "' (expected student|teacher|kd)");
}

struct LayerFlops {
  double projections = 0;
  double attn_scores = 0;
  double attn_values = 0;
  double mlp = 0;
  double kv_extra = 0;
  double total() const { return projections + attn_scores + attn_values + mlp + kv_extra; }
};

struct StepFlops {
  std::size_t s = 0;
  std::size_t evaluations = 1;  // 2 with classifier-free guidance
  std::vector<LayerFlops> layers;
  double embed_head = 0;        // patch embedding, head, and conditioning
  double total() const {
    double t = embed_head;
    for (const auto& l : layers) t += l.total();
    return t;
  }
};

struct FlopsBreakdown {
  std::vector<StepFlops> steps;

  double total() const {
    double t = 0;
    for (const auto& s : steps) t += s.total();
    return t;
  }
  double kv_extra() const {
    double t = 0;
    for (const auto& s : steps)
      for (const auto& l : s.layers) t += l.kv_extra;
    return t;
  }
  double projections() const { return sum(&LayerFlops::projections); }
  double attn_scores() const { return sum(&LayerFlops::attn_scores); }
  double attn_values() const { return sum(&LayerFlops::attn_values); }
  double mlp() const { return sum(&LayerFlops::mlp); }
  double embed_head() const {
    double t = 0;
    for (const auto& s : steps) t += s.embed_head;
    return t;
  }

 private:
  double sum(double LayerFlops::*field) const {
    double t = 0;
    for (const auto& s : steps)
      for (const auto& l : s.layers) t += l.*field;
    return t;
  }
};

// Cost of one network evaluation without history.
inline StepFlops single_eval(const ArchDims& a, std::size_t s) {
  const double T = static_cast<double>(a.tokens);
  const double d = static_cast<double>(a.d_model);
  const double r = static_cast<double>(a.mlp_ratio);
  const double pp = static_cast<double>(a.patch * a.patch);
  StepFlops st;
  st.s = s;
  for (std::size_t l = 0; l < a.L; ++l) {
    LayerFlops lf;
    lf.projections = 4 * T * d * d;
    lf.attn_scores = T * T * d;
    lf.attn_values = T * T * d;
    lf.mlp = 2 * r * T * d * d;
    st.layers.push_back(lf);
  }
  const double adaln = 6 * d * d * static_cast<double>(a.L) + 2 * d * d;
  const double time_mlp = a.time_freq ? static_cast<double>(a.time_freq) * d + d * d : 0.0;
  st.embed_head = T * pp * static_cast<double>(a.channels) * d + T * d * pp * static_cast<double>(a.out_channels) +
                  adaln + time_mlp;
  return st;
}

// mode Student: S autoregressive steps with kv-extra at history layers.
// mode KD: one evaluation. mode TeacherCfg: S evaluations, doubled by guidance.
inline FlopsBreakdown flops_model(const ArchDims& a, std::size_t S, std::size_t N, MaskOption mask, FlopsMode mode) {
  a.validate();
  if (S < 1) throw ConfigError("flops: S must be >= 1");
  if (N > a.L) throw ConfigError("flops: N must be <= L");
  FlopsBreakdown fb;
  const double T = static_cast<double>(a.tokens);
  const double d = static_cast<double>(a.d_model);
  const std::size_t steps = mode == FlopsMode::KD ? 1 : S;
  for (std::size_t s = steps; s >= 1; --s) {
    StepFlops st = single_eval(a, s);
    if (mode == FlopsMode::TeacherCfg) {
      st.evaluations = 2;
      for (auto& l : st.layers) {
        l.projections *= 2;
        l.attn_scores *= 2;
        l.attn_values *= 2;
        l.mlp *= 2;
      }
      st.embed_head *= 2;
    } else if (mode == FlopsMode::Student) {
      for (std::size_t l = 0; l < N; ++l) {
        const double h = static_cast<double>(allowed_blocks(S, s, mask, l, N).size() - 1);
        st.layers[l].kv_extra = 2 * T * (h * T) * d;
      }
    }
    fb.steps.push_back(std::move(st));
  }
  return fb;
}

inline double gflops(double macs) { return macs / 1e9; }

// Student parameter count in closed form; one parameter set serves every step.
inline std::size_t param_count(const StudentConfig& c) {
  const std::size_t d = c.d_model;
  const std::size_t h = c.mlp_ratio * d;
  const std::size_t pd = c.patch_dim();
  const std::size_t per_layer = (d * 6 * d + 6 * d) + (d * 3 * d + 3 * d) + (d * d + d) + (d * h + h) + (h * d + d);
  return (pd * d + d) + c.tokens_per_block() * d + 2 * (c.S + 1) * d + c.num_classes * d + c.L * per_layer +
         (d * 2 * d + 2 * d) + (d * pd + pd);
}

}  // namespace ard
