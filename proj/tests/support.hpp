#pragma once

// Shared test helpers: random generators and a central-difference gradient oracle.

#include <algorithm>
#include <cmath>
#include <functional>
#include <vector>

#include "ard/rng.hpp"
#include "ard/tensor.hpp"

namespace ard::testing {

// Hand-rolled generator for shapes and tensor contents.
struct Gen {
  Rng rng;
  explicit Gen(std::uint64_t seed) : rng(seed) {}

  std::size_t between(std::size_t lo, std::size_t hi) { return lo + static_cast<std::size_t>(rng.below(hi - lo + 1)); }

  Shape shape(std::size_t rank, std::size_t lo = 1, std::size_t hi = 4) {
    Shape s(rank);
    for (auto& d : s) d = between(lo, hi);
    return s;
  }

  template <typename T = double>
  BasicTensor<T> tensor(const Shape& shape, double std = 1.0, bool requires_grad = true) {
    std::vector<T> v(numel(shape));
    for (auto& x : v) x = static_cast<T>(std * rng.normal());
    return BasicTensor<T>::from(shape, std::move(v), requires_grad);
  }

  std::vector<float> floats(std::size_t n, double std = 1.0) {
    std::vector<float> v(n);
    for (auto& x : v) x = static_cast<float>(std * rng.normal());
    return v;
  }
};

// ||a - b|| / max(||a||, ||b||, floor) over whole gradient vectors.
// Gradients that vanish analytically leave only rounding noise; the floor keeps that from reading as error.
inline double relative_error(const std::vector<double>& a, const std::vector<double>& b, double floor = 1e-6) {
  double diff = 0.0, na = 0.0, nb = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    diff += (a[i] - b[i]) * (a[i] - b[i]);
    na += a[i] * a[i];
    nb += b[i] * b[i];
  }
  return std::sqrt(diff) / std::max({std::sqrt(na), std::sqrt(nb), floor});
}

// Largest relative error between reverse-mode gradients and central
// differences of `loss` at `leaves`. The loss is re-evaluated without a tape
// for the perturbed points.
inline double gradient_error(std::vector<Tensor64> leaves,
                             const std::function<Tensor64(const std::vector<Tensor64>&)>& loss, double h = 1e-5) {
  Gradients64 grads;
  {
    Tape64 tape;
    auto l = loss(leaves);
    grads = tape.backward(l);
  }
  double worst = 0.0;
  for (auto& leaf : leaves) {
    if (!leaf.requires_grad()) continue;
    std::vector<double> numeric(leaf.size());
    auto data = leaf.mutable_data();
    for (std::size_t i = 0; i < leaf.size(); ++i) {
      const double keep = data[i];
      data[i] = keep + h;
      const double up = loss(leaves).item();
      data[i] = keep - h;
      const double down = loss(leaves).item();
      data[i] = keep;
      numeric[i] = (up - down) / (2.0 * h);
    }
    worst = std::max(worst, relative_error(grads.of(leaf), numeric));
  }
  return worst;
}

template <typename T>
double max_abs_diff(std::span<const T> a, std::span<const T> b) {
  double m = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) m = std::max(m, std::abs(static_cast<double>(a[i]) - static_cast<double>(b[i])));
  return m;
}

}  // namespace ard::testing
