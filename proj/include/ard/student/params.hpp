#pragma once

#include <filesystem>
#include <fstream>
#include <map>
#include <string>
#include <vector>

#include "ard/checkpoint.hpp"
#include "ard/rng.hpp"
#include "ard/student/config.hpp"
#include "ard/tensor.hpp"

namespace ard {

class LoadError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

template <typename T>
struct BasicBlockParams {
  BasicTensor<T> ada_w, ada_b;    // adaLN modulation: [d, 6d], [6d]
  BasicTensor<T> qkv_w, qkv_b;    // [d, 3d], [3d]
  BasicTensor<T> proj_w, proj_b;  // [d, d], [d]
  BasicTensor<T> mlp1_w, mlp1_b;  // [d, r d], [r d]
  BasicTensor<T> mlp2_w, mlp2_b;  // [r d, d], [d]
};

template <typename T>
struct BasicStudentParams {
  BasicTensor<T> patch_w, patch_b;  // [p^2 C, d], [d]
  BasicTensor<T> pos;               // [T_tok, d], shared by every block
  BasicTensor<T> time;              // [S + 1, d], token-wise step embedding
  BasicTensor<T> class_emb;         // [classes, d]
  BasicTensor<T> cond_step;         // [S + 1, d], adaLN conditioning on the current step
  std::vector<BasicBlockParams<T>> blocks;
  BasicTensor<T> final_ada_w, final_ada_b;  // [d, 2d], [2d]
  BasicTensor<T> head_w, head_b;            // [d, p^2 C], [p^2 C]

  BasicTensorList<T> named() const {
    BasicTensorList<T> out = {{"patch.w", patch_w}, {"patch.b", patch_b}, {"pos", pos},
                      {"time", time},       {"class", class_emb}, {"cond_step", cond_step}};
    for (std::size_t l = 0; l < blocks.size(); ++l) {
      const auto& b = blocks[l];
      const std::string p = "block" + std::to_string(l) + ".";
      out.push_back({p + "ada.w", b.ada_w});
      out.push_back({p + "ada.b", b.ada_b});
      out.push_back({p + "qkv.w", b.qkv_w});
      out.push_back({p + "qkv.b", b.qkv_b});
      out.push_back({p + "proj.w", b.proj_w});
      out.push_back({p + "proj.b", b.proj_b});
      out.push_back({p + "mlp1.w", b.mlp1_w});
      out.push_back({p + "mlp1.b", b.mlp1_b});
      out.push_back({p + "mlp2.w", b.mlp2_w});
      out.push_back({p + "mlp2.b", b.mlp2_b});
    }
    out.push_back({"final.ada.w", final_ada_w});
    out.push_back({"final.ada.b", final_ada_b});
    out.push_back({"head.w", head_w});
    out.push_back({"head.b", head_b});
    return out;
  }

  std::vector<BasicTensor<T>> tensors() const {
    std::vector<BasicTensor<T>> out;
    for (auto& nt : named()) out.push_back(nt.tensor);
    return out;
  }

  std::size_t count() const {
    std::size_t n = 0;
    for (const auto& nt : named()) n += nt.tensor.size();
    return n;
  }

  BasicStudentParams clone() const {
    BasicStudentParams p = *this;
    p.for_each([](BasicTensor<T>& t) { t = t.clone(); });
    return p;
  }

  template <typename Fn>
  void for_each(Fn&& fn) {
    for (BasicTensor<T>* t : {&patch_w, &patch_b, &pos, &time, &class_emb, &cond_step}) fn(*t);
    for (auto& b : blocks) {
      for (BasicTensor<T>* t : {&b.ada_w, &b.ada_b, &b.qkv_w, &b.qkv_b, &b.proj_w, &b.proj_b, &b.mlp1_w, &b.mlp1_b, &b.mlp2_w,
                        &b.mlp2_b}) {
        fn(*t);
      }
    }
    for (BasicTensor<T>* t : {&final_ada_w, &final_ada_b, &head_w, &head_b}) fn(*t);
  }
};

using BlockParams = BasicBlockParams<float>;
using StudentParams = BasicStudentParams<float>;
using StudentParams64 = BasicStudentParams<double>;

// Same parameters in another precision, as fresh leaves.
template <typename U, typename T>
BasicStudentParams<U> cast_params(const BasicStudentParams<T>& p, bool requires_grad = true) {
  BasicStudentParams<U> out;
  auto conv = [&](const BasicTensor<T>& t) { return cast<U>(t, requires_grad); };
  out.patch_w = conv(p.patch_w);
  out.patch_b = conv(p.patch_b);
  out.pos = conv(p.pos);
  out.time = conv(p.time);
  out.class_emb = conv(p.class_emb);
  out.cond_step = conv(p.cond_step);
  for (const auto& b : p.blocks) {
    out.blocks.push_back({conv(b.ada_w), conv(b.ada_b), conv(b.qkv_w), conv(b.qkv_b), conv(b.proj_w), conv(b.proj_b),
                          conv(b.mlp1_w), conv(b.mlp1_b), conv(b.mlp2_w), conv(b.mlp2_b)});
  }
  out.final_ada_w = conv(p.final_ada_w);
  out.final_ada_b = conv(p.final_ada_b);
  out.head_w = conv(p.head_w);
  out.head_b = conv(p.head_b);
  return out;
}

// Truncated-normal(0.02) projections and embeddings, zero biases, zero output head.
inline StudentParams init_student(const StudentConfig& cfg, std::uint64_t seed) {
  cfg.validate();
  Rng rng(derive_seed(seed, 0, /*stream=*/0x5EED));
  const std::size_t d = cfg.d_model;
  const std::size_t h = cfg.mlp_ratio * d;
  auto normal = [&](Shape shape) {
    std::vector<float> v(numel(shape));
    for (auto& x : v) x = static_cast<float>(rng.truncated_normal(0.02));
    return Tensor::from(std::move(shape), std::move(v), true);
  };
  auto zeros = [](Shape shape) { return Tensor::zeros(std::move(shape), true); };
  StudentParams p;
  p.patch_w = normal({cfg.patch_dim(), d});
  p.patch_b = zeros({d});
  p.pos = normal({cfg.tokens_per_block(), d});
  p.time = normal({cfg.S + 1, d});
  p.class_emb = normal({cfg.num_classes, d});
  p.cond_step = normal({cfg.S + 1, d});
  for (std::size_t l = 0; l < cfg.L; ++l) {
    BlockParams b;
    b.ada_w = normal({d, 6 * d});
    b.ada_b = zeros({6 * d});
    b.qkv_w = normal({d, 3 * d});
    b.qkv_b = zeros({3 * d});
    b.proj_w = normal({d, d});
    b.proj_b = zeros({d});
    b.mlp1_w = normal({d, h});
    b.mlp1_b = zeros({h});
    b.mlp2_w = normal({h, d});
    b.mlp2_b = zeros({d});
    p.blocks.push_back(std::move(b));
  }
  p.final_ada_w = normal({d, 2 * d});
  p.final_ada_b = zeros({2 * d});
  p.head_w = zeros({d, cfg.patch_dim()});
  p.head_b = zeros({cfg.patch_dim()});
  return p;
}

inline void randomize(StudentParams& p, std::uint64_t seed, double std) {
  Rng rng(seed);
  p.for_each([&](Tensor& t) {
    for (auto& v : t.mutable_data()) v = static_cast<float>(rng.normal() * std);
  });
}

// Copies tensors from a checkpoint into freshly shaped params; any missing,
// extra, or mis-shaped tensor is a load error.
inline StudentParams params_from_tensors(const StudentConfig& cfg, const TensorList& loaded) {
  StudentParams p = init_student(cfg, 0);
  std::map<std::string, const Tensor*> by_name;
  for (const auto& nt : loaded) by_name[nt.name] = &nt.tensor;
  auto expected = p.named();
  if (expected.size() != by_name.size()) {
    throw LoadError("checkpoint holds " + std::to_string(by_name.size()) + " tensors, config expects " +
                    std::to_string(expected.size()));
  }
  for (auto& nt : expected) {
    auto it = by_name.find(nt.name);
    if (it == by_name.end()) throw LoadError("checkpoint lacks tensor " + nt.name);
    if (it->second->shape() != nt.tensor.shape()) {
      throw LoadError("tensor " + nt.name + " has shape " + to_string(it->second->shape()) + ", config expects " +
                      to_string(nt.tensor.shape()));
    }
    auto src = it->second->data();
    std::copy(src.begin(), src.end(), nt.tensor.mutable_data().begin());
  }
  return p;
}

inline void save_student(const std::filesystem::path& ckpt, const StudentParams& p) { save_checkpoint(ckpt, p.named()); }

inline StudentParams load_student(const std::filesystem::path& ckpt, const StudentConfig& cfg) {
  return params_from_tensors(cfg, load_checkpoint(ckpt));
}

inline void save_student_config(const std::filesystem::path& path, const StudentConfig& cfg) {
  std::ofstream os(path);
  if (!os) throw std::runtime_error("cannot write " + path.string());
  os << to_json(cfg).dump(2) << '\n';
}

inline StudentConfig load_student_config(const std::filesystem::path& path) {
  std::ifstream is(path);
  if (!is) throw LoadError("cannot read student config " + path.string());
  auto cfg = student_config_from_json(nlohmann::json::parse(is));
  cfg.validate();
  return cfg;
}

}  // namespace ard
