#pragma once

// Analytic Gaussian-mixture data distribution. Every component is isotropic,
// so the VP-diffused marginal stays a mixture with closed-form score.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "ard/binary_io.hpp"
#include "ard/rng.hpp"
#include "ard/teacher/schedule.hpp"

namespace ard {

using Vec = std::vector<double>;

class LookupError : public std::out_of_range {
 public:
  using std::out_of_range::out_of_range;
};

struct ImageShape {
  std::size_t channels = 1;
  std::size_t height = 8;
  std::size_t width = 8;
  std::size_t numel() const { return channels * height * width; }
  bool operator==(const ImageShape&) const = default;
};

struct MixtureComponent {
  double weight;
  Vec mean;
  double std;
};

class GaussianMixtureTeacher {
 public:
  GaussianMixtureTeacher(std::vector<MixtureComponent> components, std::vector<std::vector<std::size_t>> class_map,
                         ImageShape shape)
      : components_(std::move(components)), class_map_(std::move(class_map)), shape_(shape) {
    validate();
  }

  std::size_t dim() const { return shape_.numel(); }
  const ImageShape& shape() const { return shape_; }
  std::size_t num_classes() const { return class_map_.size(); }
  const std::vector<MixtureComponent>& components() const { return components_; }
  const std::vector<std::vector<std::size_t>>& class_map() const { return class_map_; }

  const std::vector<std::size_t>& class_components(std::size_t label) const {
    if (label >= class_map_.size()) throw LookupError("unknown class label " + std::to_string(label));
    return class_map_[label];
  }

  // grad_x log p_t(x) of the (optionally class-restricted) diffused mixture.
  Vec score(const VPSchedule& sched, const Vec& x, double t, std::optional<std::size_t> label = std::nullopt) const {
    const auto [alpha, sigma] = sched.alpha_sigma(t);
    return score_at(x, alpha, sigma, label);
  }

  Vec score_at(const Vec& x, double alpha, double sigma, std::optional<std::size_t> label) const {
    check_dim(x);
    const std::size_t d = x.size();
    thread_local std::vector<double> logr;
    thread_local std::vector<double> var;
    thread_local std::vector<std::size_t> all;
    const std::vector<std::size_t>* subset = label ? &class_components(*label) : nullptr;
    if (!subset) {
      all.resize(components_.size());
      for (std::size_t k = 0; k < all.size(); ++k) all[k] = k;
      subset = &all;
    }
    logr.resize(subset->size());
    var.resize(subset->size());
    double mx = -std::numeric_limits<double>::infinity();
    for (std::size_t i = 0; i < subset->size(); ++i) {
      const auto& c = components_[(*subset)[i]];
      const double v = alpha * alpha * c.std * c.std + sigma * sigma;
      double sq = 0.0;
      for (std::size_t j = 0; j < d; ++j) {
        const double diff = x[j] - alpha * c.mean[j];
        sq += diff * diff;
      }
      var[i] = v;
      logr[i] = std::log(c.weight) - 0.5 * sq / v - 0.5 * static_cast<double>(d) * std::log(v);
      mx = std::max(mx, logr[i]);
    }
    double z = 0.0;
    for (auto& l : logr) {
      l = std::exp(l - mx);
      z += l;
    }
    Vec out(d, 0.0);
    for (std::size_t i = 0; i < subset->size(); ++i) {
      const auto& c = components_[(*subset)[i]];
      const double coef = logr[i] / z / var[i];
      for (std::size_t j = 0; j < d; ++j) out[j] += coef * (alpha * c.mean[j] - x[j]);
    }
    return out;
  }

  // s_uncond + w (s_cond - s_uncond)
  Vec cfg_score(const VPSchedule& sched, const Vec& x, double t, std::size_t label, double w) const {
    const auto [alpha, sigma] = sched.alpha_sigma(t);
    return cfg_score_at(x, alpha, sigma, label, w);
  }

  Vec cfg_score_at(const Vec& x, double alpha, double sigma, std::size_t label, double w) const {
    Vec cond = score_at(x, alpha, sigma, label);
    if (w == 1.0) return cond;
    Vec uncond = score_at(x, alpha, sigma, std::nullopt);
    if (w == 0.0) return uncond;
    for (std::size_t j = 0; j < cond.size(); ++j) cond[j] = uncond[j] + w * (cond[j] - uncond[j]);
    return cond;
  }

  // Tweedie estimate E[x_0 | x_t] under the guided score.
  Vec predicted_x0(const VPSchedule& sched, const Vec& x, double t, std::size_t label, double w) const {
    const auto [alpha, sigma] = sched.alpha_sigma(t);
    Vec s = cfg_score_at(x, alpha, sigma, label, w);
    for (std::size_t j = 0; j < s.size(); ++j) s[j] = (x[j] + sigma * sigma * s[j]) / alpha;
    return s;
  }

  // Draw from the data distribution (class-restricted when a label is given).
  Vec sample(Rng& rng, std::optional<std::size_t> label = std::nullopt) const {
    const std::size_t k = pick_component(rng, label);
    const auto& c = components_[k];
    Vec x(dim());
    for (std::size_t j = 0; j < x.size(); ++j) x[j] = c.mean[j] + c.std * rng.normal();
    return x;
  }

  std::size_t pick_component(Rng& rng, std::optional<std::size_t> label) const {
    if (!label) return pick_from(rng, nullptr);
    return pick_from(rng, &class_components(*label));
  }

  // Component with the highest posterior under the clean (t=0) mixture.
  std::size_t nearest_component(const Vec& x) const {
    check_dim(x);
    std::size_t best = 0;
    double best_l = -std::numeric_limits<double>::infinity();
    for (std::size_t k = 0; k < components_.size(); ++k) {
      const auto& c = components_[k];
      double sq = 0.0;
      for (std::size_t j = 0; j < x.size(); ++j) sq += (x[j] - c.mean[j]) * (x[j] - c.mean[j]);
      const double v = c.std * c.std;
      const double l = std::log(c.weight) - 0.5 * sq / v - 0.5 * static_cast<double>(x.size()) * std::log(v);
      if (l > best_l) {
        best_l = l;
        best = k;
      }
    }
    return best;
  }

  // First class whose subset owns the component.
  std::size_t class_of_component(std::size_t k) const {
    for (std::size_t c = 0; c < class_map_.size(); ++c) {
      if (std::find(class_map_[c].begin(), class_map_[c].end(), k) != class_map_[c].end()) return c;
    }
    throw LookupError("component " + std::to_string(k) + " belongs to no class");
  }

  std::uint64_t hash() const {
    io::Fnv1a h;
    h.update<std::uint64_t>(shape_.channels);
    h.update<std::uint64_t>(shape_.height);
    h.update<std::uint64_t>(shape_.width);
    for (const auto& c : components_) {
      h.update(c.weight);
      h.update(c.std);
      for (double m : c.mean) h.update(m);
    }
    for (const auto& cls : class_map_) {
      h.update<std::uint64_t>(cls.size());
      for (auto k : cls) h.update<std::uint64_t>(k);
    }
    return h.digest();
  }

 private:
  void validate() const {
    if (components_.empty()) throw std::invalid_argument("mixture: no components");
    double total = 0.0;
    for (const auto& c : components_) {
      if (!(c.std > 0.0)) throw std::invalid_argument("mixture: component std must be > 0");
      if (!(c.weight > 0.0)) throw std::invalid_argument("mixture: component weight must be > 0");
      if (c.mean.size() != dim()) throw std::invalid_argument("mixture: mean dimension does not match image shape");
      total += c.weight;
    }
    if (std::abs(total - 1.0) > 1e-9) throw std::invalid_argument("mixture: weights must sum to 1");
    if (class_map_.empty()) throw std::invalid_argument("mixture: class map is empty");
    for (const auto& cls : class_map_) {
      if (cls.empty()) throw std::invalid_argument("mixture: empty class subset");
      for (auto k : cls) {
        if (k >= components_.size()) throw std::invalid_argument("mixture: class references unknown component");
      }
    }
  }

  void check_dim(const Vec& x) const {
    if (x.size() != dim()) {
      throw std::invalid_argument("mixture: vector of size " + std::to_string(x.size()) + ", expected " +
                                  std::to_string(dim()));
    }
  }

  std::size_t pick_from(Rng& rng, const std::vector<std::size_t>* subset) const {
    const std::size_t n = subset ? subset->size() : components_.size();
    double total = 0.0;
    for (std::size_t i = 0; i < n; ++i) total += components_[subset ? (*subset)[i] : i].weight;
    double u = rng.uniform() * total;
    for (std::size_t i = 0; i < n; ++i) {
      const std::size_t k = subset ? (*subset)[i] : i;
      u -= components_[k].weight;
      if (u < 0.0) return k;
    }
    return subset ? subset->back() : n - 1;
  }

  std::vector<MixtureComponent> components_;
  std::vector<std::vector<std::size_t>> class_map_;
  ImageShape shape_;
};

}  // namespace ard
