#pragma once

// Block-level attention patterns. Blocks are identified by their step index
// s in 1..S; in a packed training sequence block s sits at position S - s.

#include <algorithm>
#include <vector>

#include "ard/student/config.hpp"
#include "ard/tensor.hpp"

namespace ard {

// Steps whose tokens a query block at step s may attend to at `layer`,
// ordered S first. Layers >= N see only the current block.
inline std::vector<std::size_t> allowed_blocks(std::size_t S, std::size_t s_query, MaskOption option, std::size_t layer,
                                               std::size_t N) {
  std::vector<std::size_t> out;
  if (layer >= N || option == MaskOption::M1) return {s_query};
  switch (option) {
    case MaskOption::M2:
      if (s_query + 1 <= S) out.push_back(s_query + 1);
      break;
    case MaskOption::M3:
      if (s_query != S) out.push_back(S);
      break;
    case MaskOption::M4:
      for (std::size_t s = S; s > s_query; --s) out.push_back(s);
      break;
    case MaskOption::M1:
      break;
  }
  out.push_back(s_query);
  return out;
}

// Query-block rows of the mask: [T_tok x S*T_tok] over keys packed S..1.
inline Mask build_mask(std::size_t S, std::size_t s_query, MaskOption option, std::size_t layer, std::size_t N,
                       std::size_t tokens) {
  Mask m(tokens, S * tokens, false);
  for (std::size_t s : allowed_blocks(S, s_query, option, layer, N)) {
    const std::size_t col0 = (S - s) * tokens;
    for (std::size_t r = 0; r < tokens; ++r)
      for (std::size_t c = 0; c < tokens; ++c) m.set(r, col0 + c, true);
  }
  return m;
}

// Full [S*T x S*T] mask of the packed training sequence at `layer`.
inline Mask sequence_mask(const StudentConfig& cfg, std::size_t layer) {
  const std::size_t T = cfg.tokens_per_block();
  const std::size_t n = cfg.S * T;
  Mask m(n, n, false);
  for (std::size_t s = 1; s <= cfg.S; ++s) {
    const Mask rows = build_mask(cfg.S, s, cfg.mask, layer, cfg.N, T);
    const std::size_t row0 = (cfg.S - s) * T;
    std::copy(rows.allow.begin(), rows.allow.end(), m.allow.begin() + static_cast<std::ptrdiff_t>(row0 * n));
  }
  return m;
}

// Steps whose blocks a history layer must keep cached once block s has been
// consumed (what queries at steps < s can still read).
inline std::vector<std::size_t> retained_after(std::size_t S, std::size_t s_consumed, MaskOption option) {
  if (s_consumed <= 1) return {};
  switch (option) {
    case MaskOption::M1: return {};
    case MaskOption::M2: return {s_consumed};
    case MaskOption::M3: return {S};
    case MaskOption::M4: {
      std::vector<std::size_t> out;
      for (std::size_t s = S; s >= s_consumed && s >= 1; --s) out.push_back(s);
      return out;
    }
  }
  return {};
}

}  // namespace ard
