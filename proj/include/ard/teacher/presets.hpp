#pragma once

// Named teacher presets and the JSON mixture-file format.
//
// Mixture file:
//   { "shape": [C, H, W],
//     "components": [ { "weight": w, "std": s, "mean": [...] }, ... ],
//     "classes": [ [component indices], ... ] }

#include <cmath>
#include <filesystem>
#include <fstream>
#include <string>

#include "json.hpp"

#include "ard/teacher/mixture.hpp"

namespace ard {

namespace presets {

// 4 classes x 2 template variants on 1x8x8, values roughly in [-1, 1].
inline GaussianMixtureTeacher blobs8() {
  constexpr std::size_t H = 8;
  constexpr std::size_t W = 8;
  auto make = [](auto&& f) {
    Vec m(H * W);
    for (std::size_t r = 0; r < H; ++r)
      for (std::size_t c = 0; c < W; ++c) m[r * W + c] = f(static_cast<double>(r), static_cast<double>(c));
    return m;
  };
  auto blob = [&](double cr, double cc) {
    return make([=](double r, double c) {
      const double d2 = (r - cr) * (r - cr) + (c - cc) * (c - cc);
      return -1.0 + 2.0 * std::exp(-d2 / (2.0 * 1.3 * 1.3));
    });
  };
  auto ring = [&](double radius) {
    return make([=](double r, double c) {
      const double d = std::hypot(r - 3.5, c - 3.5);
      return -1.0 + 2.0 * std::exp(-(d - radius) * (d - radius) / (2.0 * 0.6 * 0.6));
    });
  };
  auto checker = [&](int phase) {
    return make([=](double r, double c) {
      const int v = (static_cast<int>(r) / 2 + static_cast<int>(c) / 2 + phase) % 2;
      return v ? 0.8 : -0.8;
    });
  };
  auto stripes = [&](bool vertical) {
    return make([=](double r, double c) {
      const int v = (static_cast<int>(vertical ? c : r) / 2) % 2;
      return v ? 0.8 : -0.8;
    });
  };
  std::vector<MixtureComponent> comps = {
      {0.125, blob(2.0, 2.0), 0.10},   {0.125, blob(5.0, 5.0), 0.15},   {0.125, ring(2.5), 0.10},
      {0.125, ring(1.2), 0.15},        {0.125, checker(0), 0.10},       {0.125, checker(1), 0.15},
      {0.125, stripes(false), 0.10},   {0.125, stripes(true), 0.15},
  };
  return GaussianMixtureTeacher(std::move(comps), {{0, 1}, {2, 3}, {4, 5}, {6, 7}}, ImageShape{1, H, W});
}

// 8 components on a radius-2 circle in R^2; class c owns the opposite pair {c, c+4}.
inline GaussianMixtureTeacher gmm2d() {
  std::vector<MixtureComponent> comps;
  for (int k = 0; k < 8; ++k) {
    const double a = 2.0 * M_PI * k / 8.0;
    comps.push_back({0.125, {2.0 * std::cos(a), 2.0 * std::sin(a)}, 0.2});
  }
  return GaussianMixtureTeacher(std::move(comps), {{0, 4}, {1, 5}, {2, 6}, {3, 7}}, ImageShape{2, 1, 1});
}

}  // namespace presets

inline GaussianMixtureTeacher teacher_from_json(const nlohmann::json& j) {
  const auto shape = j.at("shape").get<std::vector<std::size_t>>();
  if (shape.size() != 3) throw std::invalid_argument("mixture file: shape must be [C,H,W]");
  std::vector<MixtureComponent> comps;
  for (const auto& c : j.at("components")) {
    comps.push_back({c.at("weight").get<double>(), c.at("mean").get<Vec>(), c.at("std").get<double>()});
  }
  auto classes = j.at("classes").get<std::vector<std::vector<std::size_t>>>();
  return GaussianMixtureTeacher(std::move(comps), std::move(classes), ImageShape{shape[0], shape[1], shape[2]});
}

inline nlohmann::json teacher_to_json(const GaussianMixtureTeacher& t) {
  nlohmann::json j;
  j["shape"] = {t.shape().channels, t.shape().height, t.shape().width};
  j["components"] = nlohmann::json::array();
  for (const auto& c : t.components()) j["components"].push_back({{"weight", c.weight}, {"std", c.std}, {"mean", c.mean}});
  j["classes"] = t.class_map();
  return j;
}

// A preset name or a path to a mixture file.
inline GaussianMixtureTeacher load_teacher(const std::string& spec) {
  if (spec == "blobs8") return presets::blobs8();
  if (spec == "gmm2d") return presets::gmm2d();
  std::ifstream is(spec);
  if (!is) throw LookupError("unknown teacher preset or unreadable mixture file: " + spec);
  return teacher_from_json(nlohmann::json::parse(is));
}

}  // namespace ard
