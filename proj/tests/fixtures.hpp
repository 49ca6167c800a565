#pragma once

#include <map>

#include "ard/training/trainer.hpp"

namespace ard::testing {

// Three classes of 1x4x4 images, two components each.
inline GaussianMixtureTeacher small_teacher() {
  Rng rng(5);
  std::vector<MixtureComponent> comps;
  for (int k = 0; k < 6; ++k) {
    Vec m(16);
    for (auto& v : m) v = rng.uniform() * 2.0 - 1.0;
    comps.push_back({1.0 / 6.0, m, 0.15});
  }
  return GaussianMixtureTeacher(std::move(comps), {{0, 1}, {2, 3}, {4, 5}}, ImageShape{1, 4, 4});
}

inline StudentConfig tiny_config(MaskOption mask, std::size_t S = 3, std::size_t N = 1, std::size_t d = 8) {
  StudentConfig c;
  c.L = 2;
  c.N = N;
  c.d_model = d;
  c.heads = 2;
  c.patch = 2;
  c.image = {1, 4, 4};
  c.S = S;
  c.mask = mask;
  c.num_classes = 3;
  c.mlp_ratio = 2;
  return c;
}

inline const TrajectoryDataset& small_dataset(std::size_t S = 3) {
  static std::map<std::size_t, TrajectoryDataset> cache;
  auto it = cache.find(S);
  if (it == cache.end()) {
    auto t = small_teacher();
    it = cache.emplace(S, generate_dataset(t, VPSchedule{}, TrajectoryGrid(S), 64, 1.0, 17, 120)).first;
  }
  return it->second;
}

inline Batch small_batch(const StudentConfig& c, std::size_t B = 3, std::size_t offset = 0) {
  static const auto teacher = small_teacher();
  std::vector<std::size_t> idx(B);
  for (std::size_t i = 0; i < B; ++i) idx[i] = offset + i;
  return make_batch(small_dataset(c.S), idx, c, TargetContext{&teacher, VPSchedule{}, 1.0});
}

// Trained-looking parameters: the zero head of a fresh init would hide most of the network.
inline StudentParams perturbed_params(const StudentConfig& c, std::uint64_t seed) {
  auto p = init_student(c, seed);
  randomize(p, seed + 1, 0.3);
  return p;
}

}  // namespace ard::testing
