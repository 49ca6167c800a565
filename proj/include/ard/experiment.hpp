#pragma once

// Whole-run configuration: JSON file values, then command-line overrides, then
// cross-field validation before any work starts.
//
//   { "teacher": "blobs8" | "path/to/mixture.json",
//     "schedule": { "beta_min": 0.1, "beta_max": 20, "T": 1 },
//     "steps": 4, "cfg": 1.5, "fine_steps": 1000, "count": 1000,
//     "seed": 0, "threads": 1,
//     "student": { ... }, "train": { ... },
//     "sampler": { "count": 16, "class": 2, "use_ema": true } }

#include <filesystem>
#include <fstream>
#include <optional>
#include <string>

#include "json.hpp"

#include "ard/inference/sampler.hpp"
#include "ard/student/config.hpp"
#include "ard/teacher/presets.hpp"
#include "ard/training/trainer.hpp"

namespace ard {

struct ExperimentConfig {
  std::string teacher = "blobs8";
  VPSchedule schedule{};
  std::size_t steps = 4;
  double cfg_scale = 1.5;
  std::size_t fine_steps = kDefaultFineSteps;
  std::size_t count = 1000;
  std::uint64_t seed = 0;
  std::size_t threads = 1;
  StudentConfig student{};
  TrainConfig train{};
  SamplerConfig sampler{};
  bool student_shape_explicit = false;  // image/num_classes/patch set in the file

  // Takes image shape and class count from the teacher unless the file set them.
  void fit_to_teacher(const GaussianMixtureTeacher& teacher_model) {
    if (student_shape_explicit) return;
    student.image = teacher_model.shape();
    student.num_classes = teacher_model.num_classes();
    if (student.image.height % student.patch != 0 || student.image.width % student.patch != 0) student.patch = 1;
  }

  // Cross-field checks; `teacher_model` is the resolved teacher.
  void validate(const GaussianMixtureTeacher& teacher_model) const {
    try {
      schedule.validate();
    } catch (const std::exception& e) {
      throw ConfigError(std::string("schedule: ") + e.what());
    }
    if (steps < 1) throw ConfigError("steps: must be >= 1");
    if (!std::isfinite(cfg_scale)) throw ConfigError("cfg: must be finite");
    if (fine_steps < steps || fine_steps % steps != 0) {
      throw ConfigError("fine_steps: must be a positive multiple of steps (" + std::to_string(steps) + ")");
    }
    if (count < 1) throw ConfigError("count: must be >= 1");
    if (threads < 1) throw ConfigError("threads: must be >= 1");
    student.validate();
    if (student.S != steps) {
      throw ConfigError("student.S: " + std::to_string(student.S) + " differs from steps " + std::to_string(steps));
    }
    if (student.data_dim() != teacher_model.dim()) {
      throw ConfigError("student.image: C*H*W=" + std::to_string(student.data_dim()) + " differs from teacher D=" +
                        std::to_string(teacher_model.dim()));
    }
    if (student.num_classes != teacher_model.num_classes()) {
      throw ConfigError("student.num_classes: " + std::to_string(student.num_classes) + " differs from teacher's " +
                        std::to_string(teacher_model.num_classes()));
    }
    train.validate();
    sampler.validate();
    if (sampler.label && *sampler.label >= teacher_model.num_classes()) {
      throw ConfigError("sampler.class: out of range");
    }
  }
};

inline nlohmann::json to_json(const ExperimentConfig& c) {
  nlohmann::json sampler = {{"count", c.sampler.count}, {"use_ema", c.sampler.use_ema}, {"seed", c.sampler.seed}};
  if (c.sampler.label) sampler["class"] = *c.sampler.label;
  return {{"teacher", c.teacher},
          {"schedule", {{"beta_min", c.schedule.beta_min}, {"beta_max", c.schedule.beta_max}, {"T", c.schedule.T}}},
          {"steps", c.steps},
          {"cfg", c.cfg_scale},
          {"fine_steps", c.fine_steps},
          {"count", c.count},
          {"seed", c.seed},
          {"threads", c.threads},
          {"student", to_json(c.student)},
          {"train", to_json(c.train)},
          {"sampler", sampler}};
}

inline ExperimentConfig experiment_from_json(const nlohmann::json& j, ExperimentConfig c = {}) {
  reject_unknown_keys(j, "config",
                      {"teacher", "schedule", "steps", "cfg", "fine_steps", "count", "seed", "threads", "student",
                       "train", "sampler"});
  read_field(j, "config", "teacher", c.teacher);
  if (j.contains("schedule")) {
    const auto& s = j.at("schedule");
    reject_unknown_keys(s, "schedule", {"beta_min", "beta_max", "T"});
    read_field(s, "schedule", "beta_min", c.schedule.beta_min);
    read_field(s, "schedule", "beta_max", c.schedule.beta_max);
    read_field(s, "schedule", "T", c.schedule.T);
  }
  read_field(j, "config", "steps", c.steps);
  read_field(j, "config", "cfg", c.cfg_scale);
  read_field(j, "config", "fine_steps", c.fine_steps);
  read_field(j, "config", "count", c.count);
  read_field(j, "config", "seed", c.seed);
  read_field(j, "config", "threads", c.threads);
  if (j.contains("student")) {
    const auto& st = j.at("student");
    c.student = student_config_from_json(st, c.student);
    c.student_shape_explicit = st.contains("image") || st.contains("num_classes") || st.contains("patch");
    if (st.contains("S") && !j.contains("steps")) c.steps = c.student.S;
  }
  if (c.student.S != c.steps && !(j.contains("student") && j.at("student").contains("S"))) c.student.S = c.steps;
  if (j.contains("train")) c.train = train_config_from_json(j.at("train"), c.train);
  if (j.contains("sampler")) {
    const auto& s = j.at("sampler");
    reject_unknown_keys(s, "sampler", {"count", "use_ema", "seed", "class"});
    read_field(s, "sampler", "count", c.sampler.count);
    read_field(s, "sampler", "use_ema", c.sampler.use_ema);
    read_field(s, "sampler", "seed", c.sampler.seed);
    if (s.contains("class") && !s.at("class").is_null()) {
      std::size_t label = 0;
      read_field(s, "sampler", "class", label);
      c.sampler.label = label;
    }
  }
  return c;
}

inline ExperimentConfig load_experiment(const std::filesystem::path& path) {
  std::ifstream is(path);
  if (!is) throw ConfigError("config: cannot read " + path.string());
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(is);
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError("config: " + path.string() + " is not valid JSON: " + e.what());
  }
  return experiment_from_json(j);
}

inline GaussianMixtureTeacher resolve_teacher(const std::string& spec) {
  try {
    return load_teacher(spec);
  } catch (const ConfigError&) {
    throw;
  } catch (const std::exception& e) {
    throw ConfigError("teacher: " + std::string(e.what()));
  }
}

}  // namespace ard
