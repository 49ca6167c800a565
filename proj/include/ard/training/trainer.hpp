#pragma once

// Distillation training loop.
//
// Each batch is split into fixed-size shards that run forward/backward
// independently (optionally on worker threads); shard gradients are summed in
// shard order, so results do not depend on the thread count.

#include <chrono>
#include <cmath>
#include <filesystem>
#include <limits>
#include <numeric>
#include <optional>
#include <ostream>
#include <sstream>
#include <stdexcept>
#include <vector>

#include "json.hpp"

#include "ard/log.hpp"
#include "ard/parallel.hpp"
#include "ard/training/batch.hpp"
#include "ard/training/discriminator.hpp"
#include "ard/training/loss.hpp"
#include "ard/training/optim.hpp"

namespace ard {

class NumericError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct TrainConfig {
  double learning_rate = 1e-4;
  double weight_decay = 0.0;
  double grad_clip = 1.0;
  std::size_t batch_size = 16;
  std::size_t iterations = 1000;
  double ema_decay = 0.9999;
  bool use_discriminator = false;
  double disc_learning_rate = 1e-4;
  bool disc_conditional = false;
  std::uint64_t seed = 0;
  std::size_t log_every = 10;
  std::size_t ckpt_every = 0;  // 0: final checkpoint only
  std::size_t shard_size = 8;
  std::size_t threads = 1;
  bool online = false;  // regenerate teacher trajectories per batch
  std::size_t online_fine_steps = kDefaultFineSteps;

  void validate() const {
    if (!(learning_rate > 0)) throw ConfigError("train.learning_rate: must be > 0");
    if (weight_decay < 0) throw ConfigError("train.weight_decay: must be >= 0");
    if (!(grad_clip > 0)) throw ConfigError("train.grad_clip: must be > 0");
    if (batch_size < 1) throw ConfigError("train.batch_size: must be >= 1");
    if (!(ema_decay > 0 && ema_decay < 1)) throw ConfigError("train.ema_decay: must lie in (0, 1)");
    if (use_discriminator && !(disc_learning_rate > 0)) throw ConfigError("train.disc_learning_rate: must be > 0");
    if (shard_size < 1) throw ConfigError("train.shard_size: must be >= 1");
    if (log_every < 1) throw ConfigError("train.log_every: must be >= 1");
  }
};

inline nlohmann::json to_json(const TrainConfig& c) {
  return {{"learning_rate", c.learning_rate}, {"weight_decay", c.weight_decay},
          {"grad_clip", c.grad_clip},         {"batch_size", c.batch_size},
          {"iterations", c.iterations},       {"ema_decay", c.ema_decay},
          {"use_discriminator", c.use_discriminator}, {"disc_learning_rate", c.disc_learning_rate},
          {"disc_conditional", c.disc_conditional},   {"seed", c.seed},
          {"log_every", c.log_every},         {"ckpt_every", c.ckpt_every},
          {"shard_size", c.shard_size},       {"threads", c.threads},
          {"online", c.online},               {"online_fine_steps", c.online_fine_steps}};
}

inline TrainConfig train_config_from_json(const nlohmann::json& j, TrainConfig c = {}) {
  reject_unknown_keys(j, "train",
                      {"learning_rate", "weight_decay", "grad_clip", "batch_size", "iterations", "ema_decay",
                       "use_discriminator", "disc_learning_rate", "disc_conditional", "seed", "log_every",
                       "ckpt_every", "shard_size", "threads", "online", "online_fine_steps"});
  auto take = [&](const char* key, auto& field) { read_field(j, "train", key, field); };
  take("learning_rate", c.learning_rate);
  take("weight_decay", c.weight_decay);
  take("grad_clip", c.grad_clip);
  take("batch_size", c.batch_size);
  take("iterations", c.iterations);
  take("ema_decay", c.ema_decay);
  take("use_discriminator", c.use_discriminator);
  take("disc_learning_rate", c.disc_learning_rate);
  take("disc_conditional", c.disc_conditional);
  take("seed", c.seed);
  take("log_every", c.log_every);
  take("ckpt_every", c.ckpt_every);
  take("shard_size", c.shard_size);
  take("threads", c.threads);
  take("online", c.online);
  take("online_fine_steps", c.online_fine_steps);
  return c;
}

struct StepStats {
  double loss = 0.0;             // regression loss
  std::vector<double> per_step;  // index s-1
  double grad_norm = 0.0;        // pre-clip
  double lambda = 0.0;
  double d_loss = 0.0;
  double g_loss = 0.0;
};

inline GradList collect_grads(const Gradients& g, const std::vector<Tensor>& params) {
  GradList out;
  out.reserve(params.size());
  for (const auto& p : params) out.push_back(g.of(p));
  return out;
}

inline void accumulate(GradList& into, const GradList& g, float weight) {
  if (into.empty()) {
    into = g;
    for (auto& v : into)
      for (auto& x : v) x *= weight;
    return;
  }
  for (std::size_t i = 0; i < into.size(); ++i)
    for (std::size_t k = 0; k < into[i].size(); ++k) into[i][k] += weight * g[i][k];
}

class Trainer {
 public:
  Trainer(StudentConfig cfg, TrainConfig tc, StudentParams init, const GaussianMixtureTeacher* teacher = nullptr)
      : cfg_(std::move(cfg)),
        tc_(tc),
        params_(std::move(init)),
        ema_(params_),
        opt_(params_.tensors(), AdamWConfig{tc.learning_rate, 0.9, 0.999, 1e-8, tc.weight_decay}),
        teacher_(teacher) {
    cfg_.validate();
    tc_.validate();
    if (tc_.use_discriminator) {
      if (teacher_ == nullptr) throw ConfigError("train: the discriminator needs the teacher for real samples");
      disc_ = init_discriminator(cfg_, DiscConfig{64, tc_.disc_conditional}, tc_.seed);
      disc_opt_.emplace(disc_->tensors(), AdamWConfig{tc_.disc_learning_rate, 0.9, 0.999, 1e-8, 0.0});
    }
  }

  const StudentConfig& config() const { return cfg_; }
  const StudentParams& params() const { return params_; }
  const StudentParams& ema() const { return ema_.shadow(); }
  const std::optional<DiscParams>& discriminator() const { return disc_; }
  std::size_t iteration() const { return iter_; }

  // One optimizer step on `batch`.
  StepStats step(const Batch& batch) {
    const std::size_t B = batch.B;
    const std::size_t n_shards = (B + tc_.shard_size - 1) / tc_.shard_size;
    const auto tensors = params_.tensors();
    std::vector<GradList> reg_grads(n_shards), adv_grads(n_shards);
    std::vector<LossDetail> details(n_shards);
    std::vector<double> losses(n_shards), g_losses(n_shards);
    std::vector<std::vector<float>> fakes(n_shards);

    parallel_for(n_shards, tc_.threads, [&](std::size_t k) {
      const std::size_t lo = k * tc_.shard_size;
      const std::size_t hi = std::min(B, lo + tc_.shard_size);
      const Batch shard = batch.rows(lo, hi);
      {
        Tape tape;
        Tensor outputs;
        auto loss = ard_loss(params_, cfg_, shard, &details[k], &outputs);
        losses[k] = loss.item();
        reg_grads[k] = collect_grads(tape.backward(loss), tensors);
        if (disc_) {
          auto fin = final_prediction(outputs);
          fakes[k].assign(fin.data().begin(), fin.data().end());
        }
      }
      if (disc_) {
        Tape tape;
        Tensor outputs;
        ard_loss(params_, cfg_, shard, nullptr, &outputs);
        const DiscParams frozen = cast_disc<float>(*disc_, false);
        auto logits = disc_logits(frozen, cfg_, final_prediction(outputs), &shard.labels);
        auto g = scale(mean(logits), -1.0f);
        g_losses[k] = g.item();
        adv_grads[k] = collect_grads(tape.backward(g), tensors);
      }
    });

    StepStats st;
    st.per_step.assign(cfg_.S, 0.0);
    GradList grads, adv;
    for (std::size_t k = 0; k < n_shards; ++k) {
      const std::size_t rows = std::min(B, (k + 1) * tc_.shard_size) - k * tc_.shard_size;
      const double w = static_cast<double>(rows) / static_cast<double>(B);
      st.loss += w * losses[k];
      for (std::size_t s = 0; s < cfg_.S; ++s) st.per_step[s] += w * details[k].per_step[s];
      accumulate(grads, reg_grads[k], static_cast<float>(w));
      if (disc_) {
        st.g_loss += w * g_losses[k];
        accumulate(adv, adv_grads[k], static_cast<float>(w));
      }
    }
    check_finite(st);

    if (disc_) {
      // Head parameters are the last two tensors.
      const std::size_t nh = tensors.size();
      const double reg_norm = global_norm({grads[nh - 2], grads[nh - 1]});
      const double adv_norm = global_norm({adv[nh - 2], adv[nh - 1]});
      st.lambda = adaptive_balance(reg_norm, adv_norm);
      accumulate(grads, adv, static_cast<float>(st.lambda));
    }

    st.grad_norm = clip_global_norm(grads, tc_.grad_clip);
    auto params = params_.tensors();
    opt_.step(params, grads);
    ema_.update(params_, tc_.ema_decay);

    if (disc_) st.d_loss = disc_step(batch, fakes);
    ++iter_;
    return st;
  }

 private:
  double disc_step(const Batch& batch, const std::vector<std::vector<float>>& fakes) {
    std::vector<float> fake;
    for (const auto& f : fakes) fake.insert(fake.end(), f.begin(), f.end());
    Rng rng(derive_seed(tc_.seed, iter_, /*stream=*/0x4EA1));
    std::vector<float> real;
    real.reserve(fake.size());
    for (std::size_t b = 0; b < batch.B; ++b) {
      const Vec x = teacher_->sample(rng, batch.labels[b]);
      for (double v : x) real.push_back(static_cast<float>(v));
    }
    const std::size_t D = batch.D;
    Tape tape;
    auto losses = discriminator_loss(*disc_, cfg_, Tensor::from({batch.B, D}, std::move(fake)),
                                     Tensor::from({batch.B, D}, std::move(real)), &batch.labels, &batch.labels);
    const double d = losses.d_loss.item();
    auto dt = disc_->tensors();
    auto g = collect_grads(tape.backward(losses.d_loss), dt);
    clip_global_norm(g, tc_.grad_clip);
    disc_opt_->step(dt, g);
    return d;
  }

  void check_finite(const StepStats& st) const {
    if (std::isfinite(st.loss) && std::isfinite(st.g_loss)) return;
    std::size_t bad = 0;
    for (std::size_t s = 0; s < st.per_step.size(); ++s) {
      if (!std::isfinite(st.per_step[s])) {
        bad = s + 1;
        break;
      }
    }
    double pn = 0.0;
    for (const auto& t : params_.tensors())
      for (float v : t.data()) pn += static_cast<double>(v) * v;
    std::ostringstream oss;
    oss << "non-finite loss at iteration " << iter_ << ", step index s=" << bad << ", parameter norm "
        << std::sqrt(pn);
    throw NumericError(oss.str());
  }

  StudentConfig cfg_;
  TrainConfig tc_;
  StudentParams params_;
  Ema ema_;
  AdamW opt_;
  const GaussianMixtureTeacher* teacher_;
  std::optional<DiscParams> disc_;
  std::optional<AdamW> disc_opt_;
  std::size_t iter_ = 0;
};

// Metrics CSV header for S steps.
inline std::string metrics_header(std::size_t S) {
  std::string h = "iter,loss";
  for (std::size_t s = 1; s <= S; ++s) h += ",loss_s" + std::to_string(s);
  return h + ",grad_norm,lambda,seconds";
}

struct TrainOutputs {
  std::filesystem::path dir;       // checkpoints go here when non-empty
  std::ostream* metrics = nullptr;  // CSV sink
};

struct TrainResult {
  StudentParams params;
  StudentParams ema;
  std::vector<StepStats> history;
  std::size_t iterations = 0;
};

// Where online-mode trajectories come from.
struct OnlineSource {
  const GaussianMixtureTeacher* teacher = nullptr;
  VPSchedule sched{};
  double cfg_scale = 1.0;
};

inline void save_train_checkpoint(const TrainOutputs& out, std::size_t iter, const Trainer& t) {
  if (out.dir.empty()) return;
  save_student(out.dir / ("step_" + std::to_string(iter) + ".ardw"), t.params());
  save_student(out.dir / ("ema_" + std::to_string(iter) + ".ardw"), t.ema());
}

// Offline mode draws batches from `ds` (shuffled each epoch); online mode
// solves fresh teacher trajectories for every batch and ignores `ds`.
inline TrainResult train(const TrajectoryDataset* ds, const StudentConfig& cfg, const TrainConfig& tc,
                         const TargetContext& targets, const TrainOutputs& out = {}, const OnlineSource& online = {},
                         std::optional<StudentParams> init = std::nullopt) {
  tc.validate();
  cfg.validate();
  if (!tc.online && (ds == nullptr || ds->size() == 0)) throw ConfigError("train: offline mode needs a non-empty dataset");
  if (tc.online && online.teacher == nullptr) throw ConfigError("train: online mode needs a teacher");
  if (ds && !tc.online && ds->steps() != cfg.S) {
    throw ConfigError("train: dataset S=" + std::to_string(ds->steps()) + " but student S=" + std::to_string(cfg.S));
  }
  const GaussianMixtureTeacher* teacher = targets.teacher ? targets.teacher : online.teacher;
  Trainer trainer(cfg, tc, init ? std::move(*init) : init_student(cfg, tc.seed), teacher);
  TrainResult result;
  if (out.metrics) *out.metrics << metrics_header(cfg.S) << '\n';
  const auto t0 = std::chrono::steady_clock::now();

  std::vector<std::size_t> order;
  std::size_t cursor = 0;
  std::size_t epoch = 0;
  auto next_indices = [&]() {
    std::vector<std::size_t> idx;
    while (idx.size() < tc.batch_size) {
      if (cursor == order.size()) {
        order.resize(ds->size());
        std::iota(order.begin(), order.end(), std::size_t{0});
        Rng rng(derive_seed(tc.seed, epoch++, /*stream=*/0xBA7C));
        for (std::size_t i = order.size(); i > 1; --i) std::swap(order[i - 1], order[rng.below(i)]);
        cursor = 0;
      }
      idx.push_back(order[cursor++]);
    }
    return idx;
  };

  for (std::size_t it = 0; it < tc.iterations; ++it) {
    Batch batch;
    if (tc.online) {
      const TrajectoryGrid grid{cfg.S, online.sched.T};
      DatasetHeader h;
      h.D = static_cast<std::uint32_t>(cfg.data_dim());
      h.S = static_cast<std::uint32_t>(cfg.S);
      std::vector<Trajectory> trajs(tc.batch_size);
      parallel_for(tc.batch_size, tc.threads, [&](std::size_t i) {
        auto start = trajectory_start(*online.teacher, derive_seed(tc.seed, it, /*stream=*/0x0411), i);
        trajs[i] = solve_trajectory(*online.teacher, online.sched, start.x_T, grid, start.label, online.cfg_scale,
                                    tc.online_fine_steps);
        trajs[i].seed = start.seed;
      });
      TrajectoryDataset fresh(h);
      for (const auto& t : trajs) fresh.push_back(t);
      std::vector<std::size_t> idx(tc.batch_size);
      std::iota(idx.begin(), idx.end(), std::size_t{0});
      batch = make_batch(fresh, idx, cfg, targets);
    } else {
      batch = make_batch(*ds, next_indices(), cfg, targets);
    }
    StepStats st;
    try {
      st = trainer.step(batch);
    } catch (const NumericError& e) {
      log::error(e.what());
      throw;
    }
    const std::size_t iter = it + 1;
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    if (out.metrics && (iter % tc.log_every == 0 || iter == tc.iterations)) {
      *out.metrics << iter << ',' << st.loss;
      for (double v : st.per_step) *out.metrics << ',' << v;
      *out.metrics << ',' << st.grad_norm << ',' << st.lambda << ',' << secs << '\n';
      out.metrics->flush();
    }
    if (iter % tc.log_every == 0) log::debug("iter ", iter, " loss ", st.loss, " grad_norm ", st.grad_norm);
    if (tc.ckpt_every > 0 && iter % tc.ckpt_every == 0 && iter != tc.iterations) {
      save_train_checkpoint(out, iter, trainer);
    }
    result.history.push_back(std::move(st));
  }
  save_train_checkpoint(out, tc.iterations, trainer);
  result.params = trainer.params();
  result.ema = trainer.ema();
  result.iterations = tc.iterations;
  return result;
}

}  // namespace ard
