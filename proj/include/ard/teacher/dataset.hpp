#pragma once

// Trajectory dataset ("ARDT") generation and persistence.
//
//   magic "ARDT" | u32 version=1 | u32 D | u32 S | u64 count | f32 cfg_scale
//   | f32 beta_min | f32 beta_max | u64 teacher_hash
//   per record: u32 class_label | u64 seed | (S+1)*D f32 states, x_{tau_S} first

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <span>
#include <vector>

#include "ard/binary_io.hpp"
#include "ard/parallel.hpp"
#include "ard/rng.hpp"
#include "ard/teacher/mixture.hpp"
#include "ard/teacher/ode.hpp"

namespace ard {

inline constexpr std::uint32_t kDatasetVersion = 1;

struct DatasetHeader {
  std::uint32_t D = 0;
  std::uint32_t S = 0;
  std::uint64_t count = 0;
  float cfg_scale = 1.0f;
  float beta_min = 0.1f;
  float beta_max = 20.0f;
  std::uint64_t teacher_hash = 0;
  bool operator==(const DatasetHeader&) const = default;
};

class TrajectoryDataset {
 public:
  TrajectoryDataset() = default;
  explicit TrajectoryDataset(DatasetHeader header) : header_(header) {
    header_.count = 0;
  }

  const DatasetHeader& header() const { return header_; }
  std::size_t size() const { return labels_.size(); }
  std::size_t dim() const { return header_.D; }
  std::size_t steps() const { return header_.S; }
  std::size_t record_floats() const { return (header_.S + 1) * static_cast<std::size_t>(header_.D); }

  std::uint32_t label(std::size_t i) const { return labels_.at(i); }
  std::uint64_t seed(std::size_t i) const { return seeds_.at(i); }

  // State j of record i; j = 0 is x_{tau_S}, j = S is x_{tau_0}.
  std::span<const float> state(std::size_t i, std::size_t j) const {
    return std::span<const float>(states_).subspan(i * record_floats() + j * header_.D, header_.D);
  }
  std::span<const float> record(std::size_t i) const {
    return std::span<const float>(states_).subspan(i * record_floats(), record_floats());
  }

  void push_back(std::uint32_t label, std::uint64_t seed, std::span<const float> states) {
    if (states.size() != record_floats()) throw FormatError("record has wrong size");
    labels_.push_back(label);
    seeds_.push_back(seed);
    states_.insert(states_.end(), states.begin(), states.end());
    header_.count = labels_.size();
  }

  void push_back(const Trajectory& t) {
    std::vector<float> flat;
    flat.reserve(record_floats());
    for (const auto& s : t.states)
      for (double v : s) flat.push_back(static_cast<float>(v));
    push_back(t.class_label, t.seed, flat);
  }

  void write(std::ostream& os) const {
    io::put_magic(os, "ARDT");
    io::put<std::uint32_t>(os, kDatasetVersion);
    io::put<std::uint32_t>(os, header_.D);
    io::put<std::uint32_t>(os, header_.S);
    io::put<std::uint64_t>(os, header_.count);
    io::put<float>(os, header_.cfg_scale);
    io::put<float>(os, header_.beta_min);
    io::put<float>(os, header_.beta_max);
    io::put<std::uint64_t>(os, header_.teacher_hash);
    for (std::size_t i = 0; i < size(); ++i) {
      io::put<std::uint32_t>(os, labels_[i]);
      io::put<std::uint64_t>(os, seeds_[i]);
      io::put_floats(os, record(i));
    }
  }

  static TrajectoryDataset read(std::istream& is) {
    io::expect_magic(is, "ARDT");
    const auto version = io::get<std::uint32_t>(is);
    if (version != kDatasetVersion) throw FormatError("unsupported dataset version " + std::to_string(version));
    DatasetHeader h;
    h.D = io::get<std::uint32_t>(is);
    h.S = io::get<std::uint32_t>(is);
    h.count = io::get<std::uint64_t>(is);
    h.cfg_scale = io::get<float>(is);
    h.beta_min = io::get<float>(is);
    h.beta_max = io::get<float>(is);
    h.teacher_hash = io::get<std::uint64_t>(is);
    if (h.D == 0 || h.S == 0) throw FormatError("dataset header has zero D or S");
    TrajectoryDataset ds(h);
    const std::size_t rf = ds.record_floats();
    ds.labels_.resize(h.count);
    ds.seeds_.resize(h.count);
    ds.states_.resize(h.count * rf);
    for (std::size_t i = 0; i < h.count; ++i) {
      ds.labels_[i] = io::get<std::uint32_t>(is);
      ds.seeds_[i] = io::get<std::uint64_t>(is);
      io::get_floats(is, std::span<float>(ds.states_).subspan(i * rf, rf));
    }
    ds.header_.count = h.count;
    return ds;
  }

  void save(const std::filesystem::path& path) const {
    std::ofstream os(path, std::ios::binary | std::ios::trunc);
    if (!os) throw std::runtime_error("cannot open for writing: " + path.string());
    write(os);
  }

  static TrajectoryDataset load(const std::filesystem::path& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw std::runtime_error("cannot open dataset: " + path.string());
    return read(is);
  }

 private:
  DatasetHeader header_;
  std::vector<std::uint32_t> labels_;
  std::vector<std::uint64_t> seeds_;
  std::vector<float> states_;
};

// Prior draw and class label for trajectory `index` under `seed`.
struct TrajectoryStart {
  std::uint64_t seed;
  std::size_t label;
  Vec x_T;
};

inline TrajectoryStart trajectory_start(const GaussianMixtureTeacher& teacher, std::uint64_t seed, std::uint64_t index) {
  const std::uint64_t s = derive_seed(seed, index);
  Rng rng(s);
  TrajectoryStart start{s, static_cast<std::size_t>(rng.below(teacher.num_classes())), Vec(teacher.dim())};
  for (auto& v : start.x_T) v = rng.normal();
  return start;
}

inline constexpr std::size_t kDefaultFineSteps = 1000;

inline TrajectoryDataset generate_dataset(const GaussianMixtureTeacher& teacher, const VPSchedule& sched,
                                          const TrajectoryGrid& grid, std::size_t n, double w, std::uint64_t seed,
                                          std::size_t fine_steps = kDefaultFineSteps, std::size_t threads = 1) {
  if (n < 1) throw ConfigError("generate_dataset: count must be >= 1");
  DatasetHeader h;
  h.D = static_cast<std::uint32_t>(teacher.dim());
  h.S = static_cast<std::uint32_t>(grid.S);
  h.cfg_scale = static_cast<float>(w);
  h.beta_min = static_cast<float>(sched.beta_min);
  h.beta_max = static_cast<float>(sched.beta_max);
  h.teacher_hash = teacher.hash();
  std::vector<Trajectory> out(n);
  parallel_for(n, threads, [&](std::size_t i) {
    auto start = trajectory_start(teacher, seed, i);
    out[i] = solve_trajectory(teacher, sched, start.x_T, grid, start.label, w, fine_steps);
    out[i].seed = start.seed;
  });
  TrajectoryDataset ds(h);
  for (const auto& t : out) ds.push_back(t);
  return ds;
}

}  // namespace ard
