#pragma once

// Sample-quality proxies: squared MMD with an RBF kernel (unbiased, plus a
// jackknife standard error) and endpoint-coupling MSE.

#include <algorithm>
#include <cmath>
#include <optional>
#include <span>
#include <stdexcept>
#include <vector>

#include "ard/tensor.hpp"

namespace ard {

// n points of dimension dim, row-major.
struct PointSet {
  std::size_t dim = 0;
  std::vector<double> data;

  std::size_t size() const { return dim ? data.size() / dim : 0; }
  const double* row(std::size_t i) const { return data.data() + i * dim; }
  void push(std::span<const float> x) {
    if (dim == 0) dim = x.size();
    if (x.size() != dim) throw DimensionError("points: dimension mismatch");
    data.insert(data.end(), x.begin(), x.end());
  }
  void push(std::span<const double> x) {
    if (dim == 0) dim = x.size();
    if (x.size() != dim) throw DimensionError("points: dimension mismatch");
    data.insert(data.end(), x.begin(), x.end());
  }
};

namespace metrics_detail {

inline std::vector<double> sq_norms(const PointSet& a) {
  std::vector<double> out(a.size());
  for (std::size_t i = 0; i < a.size(); ++i) {
    double s = 0.0;
    for (std::size_t k = 0; k < a.dim; ++k) s += a.row(i)[k] * a.row(i)[k];
    out[i] = s;
  }
  return out;
}

// Squared distances via |x|^2 + |y|^2 - 2 x.y, clamped at 0.
inline std::vector<double> sq_dists(const PointSet& a, const PointSet& b) {
  const auto na = sq_norms(a);
  const auto nb = sq_norms(b);
  std::vector<double> out(a.size() * b.size());
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double* x = a.row(i);
    for (std::size_t j = 0; j < b.size(); ++j) {
      const double* y = b.row(j);
      double dot = 0.0;
      for (std::size_t k = 0; k < a.dim; ++k) dot += x[k] * y[k];
      out[i * b.size() + j] = std::max(0.0, na[i] + nb[j] - 2.0 * dot);
    }
  }
  return out;
}

inline std::vector<double> rbf(std::vector<double> d2, double bandwidth) {
  const double inv = 1.0 / (2.0 * bandwidth * bandwidth);
  for (auto& v : d2) v = std::exp(-v * inv);
  return d2;
}

inline void check(const PointSet& a, const PointSet& b, std::size_t min_n) {
  if (a.size() < min_n || b.size() < min_n) {
    throw DimensionError("mmd: each batch needs at least " + std::to_string(min_n) + " points");
  }
  if (a.dim != b.dim) throw DimensionError("mmd: dimension mismatch");
}

}  // namespace metrics_detail

// Median pairwise Euclidean distance over the pooled points (i < j).
inline double median_bandwidth(const PointSet& a, const PointSet& b) {
  PointSet pooled{a.dim, a.data};
  pooled.data.insert(pooled.data.end(), b.data.begin(), b.data.end());
  const auto d2 = metrics_detail::sq_dists(pooled, pooled);
  const std::size_t n = pooled.size();
  std::vector<double> d;
  d.reserve(n * (n - 1) / 2);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = i + 1; j < n; ++j) d.push_back(std::sqrt(d2[i * n + j]));
  if (d.empty()) throw DimensionError("mmd: need at least two points for the median heuristic");
  auto mid = d.begin() + static_cast<std::ptrdiff_t>(d.size() / 2);
  std::nth_element(d.begin(), mid, d.end());
  double med = *mid;
  if (d.size() % 2 == 0) med = 0.5 * (med + *std::max_element(d.begin(), mid));
  return med > 0 ? med : 1.0;
}

inline double median_bandwidth(const PointSet& a) { return median_bandwidth(a, PointSet{a.dim, {}}); }

struct MmdResult {
  double value = 0.0;
  double std_error = 0.0;  // jackknife, when both batches have equal size >= 3
  double bandwidth = 0.0;
};

// Unbiased MMD^2: off-diagonal within-sample means minus twice the cross mean.
inline MmdResult mmd2_with_error(const PointSet& a, const PointSet& b, std::optional<double> bandwidth = {}) {
  using namespace metrics_detail;
  check(a, b, 2);
  const double bw = bandwidth ? *bandwidth : median_bandwidth(a, b);
  if (!(bw > 0)) throw DimensionError("mmd: bandwidth must be > 0");
  const std::size_t m = a.size();
  const std::size_t n = b.size();
  const auto kaa = rbf(sq_dists(a, a), bw);
  const auto kbb = rbf(sq_dists(b, b), bw);
  const auto kab = rbf(sq_dists(a, b), bw);
  std::vector<double> raa(m, 0.0), rbb(n, 0.0), rab(m, 0.0), cab(n, 0.0);
  double saa = 0.0, sbb = 0.0, sab = 0.0;
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < m; ++j)
      if (i != j) raa[i] += kaa[i * m + j];
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < n; ++j)
      if (i != j) rbb[i] += kbb[i * n + j];
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < n; ++j) {
      rab[i] += kab[i * n + j];
      cab[j] += kab[i * n + j];
    }
  for (double v : raa) saa += v;
  for (double v : rbb) sbb += v;
  for (double v : rab) sab += v;
  const double dm = static_cast<double>(m);
  const double dn = static_cast<double>(n);
  MmdResult r;
  r.bandwidth = bw;
  r.value = saa / (dm * (dm - 1)) + sbb / (dn * (dn - 1)) - 2.0 * sab / (dm * dn);
  if (m == n && m >= 3) {
    // Leave out pair i from both samples.
    std::vector<double> loo(m);
    double avg = 0.0;
    for (std::size_t i = 0; i < m; ++i) {
      const double a2 = saa - 2.0 * raa[i];
      const double b2 = sbb - 2.0 * rbb[i];
      const double c2 = sab - rab[i] - cab[i] + kab[i * n + i];
      loo[i] = a2 / ((dm - 1) * (dm - 2)) + b2 / ((dm - 1) * (dm - 2)) - 2.0 * c2 / ((dm - 1) * (dm - 1));
      avg += loo[i];
    }
    avg /= dm;
    double var = 0.0;
    for (double v : loo) var += (v - avg) * (v - avg);
    r.std_error = std::sqrt((dm - 1) / dm * var);
  }
  return r;
}

inline double mmd2(const PointSet& a, const PointSet& b, std::optional<double> bandwidth = {}) {
  return mmd2_with_error(a, b, bandwidth).value;
}

// V-statistic variant (diagonals included); exactly zero in exact arithmetic for identical batches.
inline double mmd2_biased(const PointSet& a, const PointSet& b, double bandwidth) {
  using namespace metrics_detail;
  check(a, b, 1);
  auto mean_of = [](const std::vector<double>& k) {
    double s = 0.0;
    for (double v : k) s += v;
    return s / static_cast<double>(k.size());
  };
  return mean_of(rbf(sq_dists(a, a), bandwidth)) + mean_of(rbf(sq_dists(b, b), bandwidth)) -
         2.0 * mean_of(rbf(sq_dists(a, b), bandwidth));
}

// Mean over points and elements of (a - b)^2.
inline double endpoint_mse(const PointSet& a, const PointSet& b) {
  if (a.size() != b.size() || a.dim != b.dim || a.size() == 0) throw DimensionError("mse: point sets differ in shape");
  double s = 0.0;
  for (std::size_t i = 0; i < a.data.size(); ++i) s += (a.data[i] - b.data[i]) * (a.data[i] - b.data[i]);
  return s / static_cast<double>(a.data.size());
}

}  // namespace ard
