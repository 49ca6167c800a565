#pragma once

// Flat named-tensor container ("ARDW").
//
//   magic "ARDW" | u32 version | u32 count
//   per tensor: u16 name length, UTF-8 name, u8 rank, u32 extents[rank], f32 payload

#include <filesystem>
#include <fstream>
#include <limits>
#include <string>
#include <vector>

#include "ard/binary_io.hpp"
#include "ard/tensor.hpp"

namespace ard {

template <typename T>
struct BasicNamedTensor {
  std::string name;
  BasicTensor<T> tensor;
};

template <typename T>
using BasicTensorList = std::vector<BasicNamedTensor<T>>;

using NamedTensor = BasicNamedTensor<float>;
using TensorList = BasicTensorList<float>;

inline constexpr std::uint32_t kCheckpointVersion = 1;

inline void write_checkpoint(std::ostream& os, const TensorList& tensors) {
  io::put_magic(os, "ARDW");
  io::put<std::uint32_t>(os, kCheckpointVersion);
  io::put<std::uint32_t>(os, static_cast<std::uint32_t>(tensors.size()));
  for (const auto& [name, t] : tensors) {
    if (name.size() > std::numeric_limits<std::uint16_t>::max()) throw FormatError("tensor name too long: " + name);
    if (t.rank() > std::numeric_limits<std::uint8_t>::max()) throw FormatError("tensor rank too large: " + name);
    io::put<std::uint16_t>(os, static_cast<std::uint16_t>(name.size()));
    os.write(name.data(), static_cast<std::streamsize>(name.size()));
    io::put<std::uint8_t>(os, static_cast<std::uint8_t>(t.rank()));
    for (auto e : t.shape()) io::put<std::uint32_t>(os, static_cast<std::uint32_t>(e));
    io::put_floats(os, t.data());
  }
}

inline TensorList read_checkpoint(std::istream& is) {
  io::expect_magic(is, "ARDW");
  const auto version = io::get<std::uint32_t>(is);
  if (version != kCheckpointVersion) throw FormatError("unsupported checkpoint version " + std::to_string(version));
  const auto count = io::get<std::uint32_t>(is);
  TensorList out;
  out.reserve(count);
  for (std::uint32_t i = 0; i < count; ++i) {
    const auto len = io::get<std::uint16_t>(is);
    std::string name(len, '\0');
    is.read(name.data(), len);
    if (is.gcount() != len) throw FormatError("truncated tensor name");
    const auto rank = io::get<std::uint8_t>(is);
    Shape shape(rank);
    for (auto& e : shape) e = io::get<std::uint32_t>(is);
    std::vector<float> data(numel(shape));
    io::get_floats(is, data);
    out.push_back({std::move(name), Tensor::from(std::move(shape), std::move(data))});
  }
  return out;
}

inline void save_checkpoint(const std::filesystem::path& path, const TensorList& tensors) {
  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  if (!os) throw std::runtime_error("cannot open for writing: " + path.string());
  write_checkpoint(os, tensors);
}

inline TensorList load_checkpoint(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw std::runtime_error("cannot open checkpoint: " + path.string());
  return read_checkpoint(is);
}

}  // namespace ard
