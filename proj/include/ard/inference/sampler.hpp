#pragma once

// Autoregressive sampling with the KV cache, block injection (image
// manipulation), and sample export.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <functional>
#include <optional>
#include <span>
#include <vector>

#include "ard/parallel.hpp"
#include "ard/rng.hpp"
#include "ard/student/model.hpp"
#include "ard/teacher/dataset.hpp"

namespace ard {

struct SamplerConfig {
  bool use_ema = true;
  std::uint64_t seed = 0;
  std::optional<std::size_t> label;  // unset: drawn uniformly per sample
  std::size_t count = 1;
  std::size_t threads = 1;

  void validate() const {
    if (count < 1) throw ConfigError("sampler.count: must be >= 1");
  }
};

enum class CacheMode {
  Cached,     // the normal KV-cache path
  Recompute,  // fresh cache per step, re-feeding every block consumed so far
  Disabled,   // no history at all: every step starts from an empty cache
};

// Per-step replacement of the block fed to the network: given step s < S,
// returns the state to consume instead of the model's own prediction.
using BlockOverride = std::function<std::optional<std::vector<float>>(std::size_t s)>;

// One chain: states[0] = x_{tau_S} (prior), states[j] = x̂_{tau_{S-j}}.
struct Chain {
  std::size_t label = 0;
  std::uint64_t seed = 0;
  std::vector<std::vector<float>> states;
  std::size_t network_calls = 0;
  std::vector<std::size_t> rows_read;  // cached key rows read per history layer
};

inline Chain run_chain(const StudentParams& p, const StudentConfig& cfg, const VPSchedule& sched,
                       std::span<const float> x_T, std::size_t label, const BlockOverride& override_block = {},
                       CacheMode mode = CacheMode::Cached) {
  const std::size_t S = cfg.S;
  const std::size_t D = cfg.data_dim();
  if (x_T.size() != D) throw DimensionError("sample: prior has wrong dimension");
  Chain c;
  c.label = label;
  c.states.emplace_back(x_T.begin(), x_T.end());
  KVCache cache(cfg);
  std::vector<std::vector<float>> fed;  // blocks consumed so far, S first
  std::vector<float> x(x_T.begin(), x_T.end());
  for (std::size_t s = S; s >= 1; --s) {
    if (s < S && override_block) {
      if (auto repl = override_block(s)) {
        if (repl->size() != D) throw DimensionError("sample: injected block has wrong dimension");
        x = std::move(*repl);
      }
    }
    fed.push_back(x);
    Tensor out;
    const Tensor xs = Tensor::from({D}, x);
    switch (mode) {
      case CacheMode::Cached:
        out = forward_step(p, cfg, xs, s, cache, label);
        ++c.network_calls;
        break;
      case CacheMode::Recompute: {
        KVCache fresh(cfg);
        for (std::size_t j = 0; j < fed.size(); ++j) {
          out = forward_step(p, cfg, Tensor::from({D}, fed[j]), S - j, fresh, label);
          ++c.network_calls;
        }
        break;
      }
      case CacheMode::Disabled: {
        KVCache empty(cfg, s);
        out = forward_step(p, cfg, xs, s, empty, label);
        ++c.network_calls;
        break;
      }
    }
    x = target_transform(cfg, sched, out.data(), x, s);
    c.states.push_back(x);
  }
  for (std::size_t l = 0; l < cfg.N; ++l) c.rows_read.push_back(cache.rows_read(l));
  return c;
}

// Prior draw and label for sample `index`.
inline std::pair<std::vector<float>, std::size_t> sample_start(const StudentConfig& cfg, const SamplerConfig& sc,
                                                               std::size_t index) {
  Rng rng(derive_seed(sc.seed, index, /*stream=*/0x5A3B));
  std::size_t label = sc.label ? *sc.label : static_cast<std::size_t>(rng.below(cfg.num_classes));
  if (label >= cfg.num_classes) throw RangeError("sample: class label out of range");
  std::vector<float> x(cfg.data_dim());
  for (auto& v : x) v = static_cast<float>(rng.normal());
  return {std::move(x), label};
}

struct SampleResult {
  std::size_t S = 0;
  std::size_t D = 0;
  std::vector<Chain> chains;

  std::span<const float> final_state(std::size_t i) const { return chains.at(i).states.back(); }
};

inline SampleResult sample(const StudentParams& p, const StudentConfig& cfg, const VPSchedule& sched,
                           const SamplerConfig& sc, CacheMode mode = CacheMode::Cached) {
  sc.validate();
  SampleResult r{cfg.S, cfg.data_dim(), std::vector<Chain>(sc.count)};
  parallel_for(sc.count, sc.threads, [&](std::size_t i) {
    auto [x, label] = sample_start(cfg, sc, i);
    r.chains[i] = run_chain(p, cfg, sched, x, label, {}, mode);
    r.chains[i].seed = derive_seed(sc.seed, i, 0x5A3B);
  });
  return r;
}

// Sampling with x_src consumed at step s_inject in place of the model's own
// x̂_{tau_{s_inject}}; earlier cache entries come from the model's own chain.
inline Chain manipulate(const StudentParams& p, const StudentConfig& cfg, const VPSchedule& sched,
                        std::span<const float> x_src, std::size_t s_inject, const SamplerConfig& sc,
                        std::size_t index = 0) {
  if (cfg.S < 2 || s_inject < 1 || s_inject > cfg.S - 1) {
    throw RangeError("manipulate: s_inject must lie in [1, S-1]");
  }
  if (x_src.size() != cfg.data_dim()) throw DimensionError("manipulate: source has wrong dimension");
  auto [x, label] = sample_start(cfg, sc, index);
  const std::vector<float> src(x_src.begin(), x_src.end());
  auto chain = run_chain(p, cfg, sched, x, label, [&](std::size_t s) -> std::optional<std::vector<float>> {
    if (s == s_inject) return src;
    return std::nullopt;
  });
  chain.seed = derive_seed(sc.seed, index, 0x5A3B);
  return chain;
}

// Samples as a trajectory dataset (states are the sampled chain, prior first).
inline TrajectoryDataset to_dataset(const SampleResult& r, const VPSchedule& sched, std::uint64_t teacher_hash = 0) {
  DatasetHeader h;
  h.D = static_cast<std::uint32_t>(r.D);
  h.S = static_cast<std::uint32_t>(r.S);
  h.cfg_scale = 0.0f;
  h.beta_min = static_cast<float>(sched.beta_min);
  h.beta_max = static_cast<float>(sched.beta_max);
  h.teacher_hash = teacher_hash;
  TrajectoryDataset ds(h);
  for (const auto& c : r.chains) {
    std::vector<float> flat;
    for (const auto& st : c.states) flat.insert(flat.end(), st.begin(), st.end());
    ds.push_back(static_cast<std::uint32_t>(c.label), c.seed, flat);
  }
  return ds;
}

// 8-bit binary PGM; channels are stacked vertically, values in [lo, hi] map to 0..255.
inline void write_pgm(const std::filesystem::path& path, std::span<const float> x, const ImageShape& shape,
                      double lo = -1.25, double hi = 1.25) {
  if (x.size() != shape.numel()) throw DimensionError("pgm: image has wrong size");
  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  if (!os) throw std::runtime_error("cannot write " + path.string());
  os << "P5\n" << shape.width << ' ' << shape.height * shape.channels << "\n255\n";
  for (float v : x) {
    const double u = std::clamp((static_cast<double>(v) - lo) / (hi - lo), 0.0, 1.0);
    os.put(static_cast<char>(static_cast<unsigned char>(std::lround(u * 255.0))));
  }
}

}  // namespace ard
