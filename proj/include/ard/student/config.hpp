#pragma once

#include <algorithm>
#include <cstddef>
#include <initializer_list>
#include <stdexcept>
#include <string>
#include <string_view>
#include <type_traits>
#include <vector>

#include "json.hpp"

#include "ard/teacher/mixture.hpp"
#include "ard/teacher/ode.hpp"

namespace ard {

// M1: current block only (step distillation). M2: {s+1, s}. M3: {S, s}. M4: {S..s}.
enum class MaskOption { M1, M2, M3, M4 };

// NextSample regresses x_{tau_{s-1}} directly; PredictedX0 regresses E[x_0 | x_{tau_s}].
enum class PredictionTarget { NextSample, PredictedX0 };

inline std::string to_string(MaskOption m) {
  switch (m) {
    case MaskOption::M1: return "m1";
    case MaskOption::M2: return "m2";
    case MaskOption::M3: return "m3";
    case MaskOption::M4: return "m4";
  }
  return "?";
}

inline MaskOption parse_mask(const std::string& s) {
  if (s == "m1" || s == "M1") return MaskOption::M1;
  if (s == "m2" || s == "M2") return MaskOption::M2;
  if (s == "m3" || s == "M3") return MaskOption::M3;
  if (s == "m4" || s == "M4") return MaskOption::M4;
  throw ConfigError("unknown mask option '" + s + "' (expected m1..m4)");
}

inline std::string to_string(PredictionTarget t) { return t == PredictionTarget::NextSample ? "next" : "x0"; }

inline PredictionTarget parse_target(const std::string& s) {
  if (s == "next") return PredictionTarget::NextSample;
  if (s == "x0") return PredictionTarget::PredictedX0;
  throw ConfigError("unknown prediction target '" + s + "' (expected next|x0)");
}

struct StudentConfig {
  std::size_t L = 8;
  std::size_t N = 2;
  std::size_t d_model = 64;
  std::size_t heads = 4;
  std::size_t patch = 2;
  ImageShape image{1, 8, 8};
  std::size_t S = 4;
  MaskOption mask = MaskOption::M4;
  PredictionTarget target = PredictionTarget::NextSample;
  std::size_t num_classes = 4;
  std::size_t mlp_ratio = 4;

  std::size_t tokens_per_block() const { return (image.height / patch) * (image.width / patch); }
  std::size_t patch_dim() const { return patch * patch * image.channels; }
  std::size_t head_dim() const { return d_model / heads; }
  std::size_t data_dim() const { return image.numel(); }

  void validate() const {
    if (L < 1) throw ConfigError("student.L: must be >= 1");
    if (N > L) throw ConfigError("student.N: must be <= L (" + std::to_string(L) + ")");
    if (S < 1) throw ConfigError("student.S: must be >= 1");
    if (heads < 1 || d_model % heads != 0) throw ConfigError("student.d_model: must be divisible by heads");
    if (patch < 1 || image.height % patch != 0 || image.width % patch != 0) {
      throw ConfigError("student.patch: H and W must be divisible by patch");
    }
    if (image.numel() == 0) throw ConfigError("student.image: empty image shape");
    if (num_classes < 1) throw ConfigError("student.num_classes: must be >= 1");
    if (mlp_ratio < 1) throw ConfigError("student.mlp_ratio: must be >= 1");
  }

  bool operator==(const StudentConfig&) const = default;
};

inline nlohmann::json to_json(const StudentConfig& c) {
  return {{"L", c.L},
          {"N", c.N},
          {"d_model", c.d_model},
          {"heads", c.heads},
          {"patch", c.patch},
          {"image", {c.image.channels, c.image.height, c.image.width}},
          {"S", c.S},
          {"mask", to_string(c.mask)},
          {"target", to_string(c.target)},
          {"num_classes", c.num_classes},
          {"mlp_ratio", c.mlp_ratio}};
}

// Missing keys keep the values already in `base`.
// Unknown keys are rejected so typos surface as config errors.
inline void reject_unknown_keys(const nlohmann::json& j, const std::string& section,
                                std::initializer_list<std::string_view> known) {
  if (!j.is_object()) throw ConfigError(section + ": must be an object");
  for (const auto& [key, _] : j.items()) {
    if (std::find(known.begin(), known.end(), key) == known.end()) {
      throw ConfigError(section + ": unknown key '" + key + "'");
    }
  }
}

// Reads j[key] into field when present; type errors name the field.
template <typename T>
void read_field(const nlohmann::json& j, const std::string& section, const char* key, T& field) {
  if (!j.contains(key)) return;
  const auto& v = j.at(key);
  const std::string name = section + "." + key;
  if constexpr (std::is_unsigned_v<T> && !std::is_same_v<T, bool>) {
    if (!v.is_number_unsigned()) throw ConfigError(name + ": must be a non-negative integer");
  }
  try {
    field = v.get<T>();
  } catch (const nlohmann::json::exception&) {
    throw ConfigError(name + ": wrong type (" + std::string(v.type_name()) + ")");
  }
}

inline StudentConfig student_config_from_json(const nlohmann::json& j, StudentConfig base = {}) {
  reject_unknown_keys(j, "student",
                      {"L", "N", "d_model", "heads", "patch", "S", "num_classes", "mlp_ratio", "image", "mask", "target"});
  for (const char* key : {"L", "N", "d_model", "heads", "patch", "S", "num_classes", "mlp_ratio"}) {
    std::size_t* field = nullptr;
    const std::string_view k = key;
    if (k == "L") field = &base.L;
    if (k == "N") field = &base.N;
    if (k == "d_model") field = &base.d_model;
    if (k == "heads") field = &base.heads;
    if (k == "patch") field = &base.patch;
    if (k == "S") field = &base.S;
    if (k == "num_classes") field = &base.num_classes;
    if (k == "mlp_ratio") field = &base.mlp_ratio;
    read_field(j, "student", key, *field);
  }
  if (j.contains("image")) {
    std::vector<std::size_t> v;
    read_field(j, "student", "image", v);
    if (v.size() != 3) throw ConfigError("student.image: expected [C,H,W]");
    base.image = {v[0], v[1], v[2]};
  }
  auto parse_named = [&](const char* key, auto parse, auto& field) {
    if (!j.contains(key)) return;
    std::string text;
    read_field(j, "student", key, text);
    try {
      field = parse(text);
    } catch (const std::exception& e) {
      throw ConfigError(std::string("student.") + key + ": " + e.what());
    }
  };
  parse_named("mask", parse_mask, base.mask);
  parse_named("target", parse_target, base.target);
  return base;
}

}  // namespace ard
