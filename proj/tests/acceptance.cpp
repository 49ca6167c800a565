// Acceptance run: one pass/fail line per criterion.

#include <chrono>
#include <cstdio>
#include <iostream>
#include <set>
#include <sstream>

#include "CLI11.hpp"
#include "ard/ard.hpp"
#include "support.hpp"

using namespace ard;
using ard::testing::Gen;

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) { return std::chrono::duration<double>(Clock::now() - t0).count(); }

struct Verdict {
  bool pass = false;
  std::string detail;
};

int failures = 0;

void print_verdict(int id, const std::string& name, const Verdict& v, double secs) {
  if (!v.pass) ++failures;
  std::printf("[%s] %d %s (%.1fs): %s\n", v.pass ? "PASS" : "FAIL", id, name.c_str(), secs, v.detail.c_str());
  std::fflush(stdout);
}

template <typename F>
void criterion(int id, const std::string& name, F&& body) {
  const auto t0 = Clock::now();
  Verdict v;
  try {
    v = body();
  } catch (const std::exception& e) {
    v = {false, std::string("exception: ") + e.what()};
  }
  print_verdict(id, name, v, seconds_since(t0));
}

std::string fmt(const char* f, double a) {
  char buf[128];
  std::snprintf(buf, sizeof buf, f, a);
  return buf;
}

bool within(double value, double ref, double rel) { return std::abs(value - ref) <= rel * std::abs(ref); }

// ---- 1: FLOPs ----

Verdict flops_check() {
  const auto a = dit_xl2();
  auto g = [&](std::size_t S, std::size_t N, MaskOption m, FlopsMode mode) {
    return gflops(flops_model(a, S, N, m, mode).total());
  };
  const double kd = g(1, 0, MaskOption::M1, FlopsMode::KD);
  const double m1 = g(4, 0, MaskOption::M1, FlopsMode::Student);
  const double teacher = g(25, 0, MaskOption::M1, FlopsMode::TeacherCfg);
  const double n6 = g(4, 6, MaskOption::M4, FlopsMode::Student);
  const double n28 = g(4, 28, MaskOption::M4, FlopsMode::Student);
  const double s2_m1 = g(2, 0, MaskOption::M1, FlopsMode::Student);
  const double s2_n6 = g(2, 6, MaskOption::M4, FlopsMode::Student);
  const double r28 = (n28 - m1) / (n6 - m1);
  const double r6 = (n6 - m1) / (s2_n6 - s2_m1);
  // Printed reference values.
  const double printed_r28 = (500.2 - 474.4) / (479.9 - 474.4);
  const double printed_r6 = (479.9 - 474.4) / (238.1 - 237.2);
  const bool ok = within(kd, 118.6, 0.03) && within(m1, 474.4, 0.03) && within(teacher, 5930, 0.03) &&
                  within(r28, 28.0 / 6.0, 0.05) && within(printed_r28, 28.0 / 6.0, 0.05) && within(r6, 6.0, 0.10) &&
                  within(printed_r6, 6.0, 0.10);
  std::ostringstream os;
  os << "kd " << fmt("%.2f", kd) << ", S4/M1 " << fmt("%.2f", m1) << ", teacher " << fmt("%.2f", teacher)
     << ", M4/N6 " << fmt("%.2f", n6) << ", M4/N28 " << fmt("%.2f", n28) << ", delta ratios " << fmt("%.4f", r28)
     << " (printed " << fmt("%.4f", printed_r28) << ", want 28/6 +-5%) and " << fmt("%.4f", r6) << " (printed "
     << fmt("%.4f", printed_r6) << ", want 6 +-10%)";
  return {ok, os.str()};
}

// ---- 2, 3: student ----

constexpr MaskOption kOptions[] = {MaskOption::M1, MaskOption::M2, MaskOption::M3, MaskOption::M4};

StudentConfig probe_config(std::size_t S, MaskOption mask, std::size_t N, std::size_t L) {
  StudentConfig c;
  c.L = L;
  c.N = N;
  c.d_model = 16;
  c.heads = 2;
  c.patch = 2;
  c.image = {1, 4, 4};
  c.S = S;
  c.mask = mask;
  c.num_classes = 3;
  c.mlp_ratio = 2;
  return c;
}

StudentParams random_params(const StudentConfig& c, std::uint64_t seed) {
  auto p = init_student(c, seed);
  randomize(p, seed + 1, 0.2);
  return p;
}

Verdict train_infer_check() {
  Gen g(21);
  double worst = 0.0;
  for (int i = 0; i < 100; ++i) {
    const std::size_t S = g.between(1, 4), L = g.between(2, 3);
    const std::size_t Ns[] = {0, 2, L};
    auto c = probe_config(S, kOptions[i % 4], Ns[(i / 4) % 3], L);
    auto p = random_params(c, 100 + i);
    const std::size_t D = c.data_dim();
    auto inputs = g.tensor<float>({1, S, D}, 1.0, false);
    const std::size_t label = g.between(0, 2);
    auto out = forward_train(p, c, inputs, {label});
    KVCache cache(c);
    for (std::size_t j = 0; j < S; ++j) {
      auto row = inputs.data().subspan(j * D, D);
      auto y = forward_step(p, c, Tensor::from({1, D}, std::vector<float>(row.begin(), row.end())), S - j, cache,
                            label);
      worst = std::max(worst, ard::testing::max_abs_diff<float>(out.data().subspan(j * D, D), y.data()));
    }
  }
  return {worst <= 1e-5, "max |train - step| over 100 instances = " + fmt("%.3g", worst) + " (<= 1e-5)"};
}

std::set<std::size_t> reachable(std::size_t S, std::size_t s, MaskOption m, std::size_t N, std::size_t L) {
  auto table = [&](std::size_t q) {
    std::set<std::size_t> out = {q};
    if (m == MaskOption::M2 && q < S) out.insert(q + 1);
    if (m == MaskOption::M3) out.insert(S);
    if (m == MaskOption::M4)
      for (std::size_t b = q; b <= S; ++b) out.insert(b);
    return out;
  };
  std::vector<std::set<std::size_t>> reach(S + 1);
  for (std::size_t b = 1; b <= S; ++b) reach[b] = {b};
  for (std::size_t l = 0; l < std::min(N, L); ++l) {
    auto next = reach;
    for (std::size_t q = 1; q <= S; ++q)
      for (std::size_t b : table(q)) next[q].insert(reach[b].begin(), reach[b].end());
    reach = next;
  }
  return reach[s];
}

Verdict causality_check() {
  Gen g(22);
  std::size_t probes = 0, leaks = 0, n0_mismatch = 0;
  for (std::size_t S = 1; S <= 4; ++S)
    for (auto m : kOptions)
      for (std::size_t N : {0, 1, 2, 3}) {
        auto c = probe_config(S, m, N, 3);
        auto p = random_params(c, S * 100 + N);
        const std::size_t D = c.data_dim();
        auto inputs = g.tensor<float>({1, S, D}, 1.0, false);
        auto base = forward_train(p, c, inputs, {1});
        if (N == 0) {
          auto m1 = c;
          m1.mask = MaskOption::M1;
          auto ref = forward_train(p, m1, inputs, {1});
          if (!std::equal(ref.data().begin(), ref.data().end(), base.data().begin())) ++n0_mismatch;
        }
        for (std::size_t s = 1; s <= S; ++s) {
          const auto reach = reachable(S, s, m, N, c.L);
          for (std::size_t other = 1; other <= S; ++other) {
            if (reach.count(other)) continue;
            auto data = std::vector<float>(inputs.data().begin(), inputs.data().end());
            for (std::size_t e = 0; e < D; ++e) data[(S - other) * D + e] += 3.0f;
            auto out = forward_train(p, c, Tensor::from(inputs.shape(), data), {1});
            auto a = base.data().subspan((S - s) * D, D);
            auto b = out.data().subspan((S - s) * D, D);
            ++probes;
            if (!std::equal(a.begin(), a.end(), b.begin())) ++leaks;
          }
        }
      }
  std::ostringstream os;
  os << probes << " disallowed-block perturbations, " << leaks << " changed a query; N=0 vs M1 mismatches "
     << n0_mismatch;
  return {leaks == 0 && n0_mismatch == 0 && probes > 0, os.str()};
}

// ---- 4: gradients ----

StudentConfig grad_config(MaskOption m, std::size_t N) {
  auto c = probe_config(3, m, N, 2);
  c.d_model = 8;
  return c;
}

StudentParams64 from_leaves(const StudentParams64& shape, const std::vector<Tensor64>& leaves) {
  auto p = shape;
  std::size_t i = 0;
  p.for_each([&](Tensor64& t) { t = leaves[i++]; });
  return p;
}

Batch random_batch(const StudentConfig& c, Gen& g, std::size_t B) {
  Batch b;
  b.B = B;
  b.S = c.S;
  b.D = c.data_dim();
  b.inputs = g.floats(B * c.S * b.D, 1.0);
  b.targets = g.floats(B * c.S * b.D, 1.0);
  for (std::size_t i = 0; i < B; ++i) b.labels.push_back(g.between(0, c.num_classes - 1));
  return b;
}

Verdict gradient_check() {
  Gen g(31);
  std::ostringstream os;
  double worst_all = 0.0;
  auto record = [&](const std::string& name, double err) {
    worst_all = std::max(worst_all, err);
    os << name << " " << fmt("%.2g", err) << "; ";
  };
  {
    auto c = grad_config(MaskOption::M1, 0);
    auto p64 = cast_params<double>(random_params(c, 1));
    const auto batch = random_batch(c, g, 3);
    record("step", ard::testing::gradient_error(p64.tensors(), [&](const auto& v) {
             return step_loss(from_leaves(p64, v), c, batch);
           }));
  }
  for (auto m : {MaskOption::M2, MaskOption::M3, MaskOption::M4}) {
    auto c = grad_config(m, 1);
    auto p64 = cast_params<double>(random_params(c, 2));
    const auto batch = random_batch(c, g, 3);
    record("ard/" + to_string(m), ard::testing::gradient_error(p64.tensors(), [&](const auto& v) {
             return ard_loss(from_leaves(p64, v), c, batch);
           }));
  }
  auto c = grad_config(MaskOption::M4, 1);
  {
    auto d64 = cast_disc<double>(init_discriminator(c, DiscConfig{8, true}, 3));
    auto fake = g.tensor({3, 16}, 1.0, false);
    auto real = g.tensor({3, 16}, 1.0, false);
    const std::vector<std::size_t> labels = {0, 2, 1};
    record("hinge", ard::testing::gradient_error(d64.tensors(), [&](const std::vector<Tensor64>& v) {
             auto d = d64;
             std::size_t i = 0;
             d.w1 = v[i++];
             d.b1 = v[i++];
             d.pos = v[i++];
             d.class_emb = v[i++];
             d.w2 = v[i++];
             d.b2 = v[i++];
             d.w3 = v[i++];
             d.b3 = v[i++];
             return discriminator_loss(d, c, fake, real, &labels, &labels).d_loss;
           }));
  }
  {
    auto p64 = cast_params<double>(random_params(c, 5));
    const auto frozen = cast_disc<double>(init_discriminator(c, DiscConfig{8, false}, 6), false);
    const auto batch = random_batch(c, g, 3);
    const double lambda = 0.37;
    record("balanced", ard::testing::gradient_error(p64.tensors(), [&](const auto& v) {
             auto p = from_leaves(p64, v);
             Tensor64 outputs;
             auto reg = ard_loss(p, c, batch, nullptr, &outputs);
             auto adv = scale(mean(disc_logits(frozen, c, final_prediction(outputs))), -1.0);
             return add(reg, scale(adv, lambda));
           }));
  }
  os << "worst " << fmt("%.2g", worst_all) << " (<= 1e-3)";
  return {worst_all <= 1e-3, os.str()};
}

// ---- 5: teacher ----

double log_density(const GaussianMixtureTeacher& m, const VPSchedule& sched, const Vec& x, double t,
                   std::optional<std::size_t> label) {
  const auto [alpha, sigma] = sched.alpha_sigma(t);
  std::vector<std::size_t> ks;
  if (label) {
    ks = m.class_components(*label);
  } else {
    for (std::size_t k = 0; k < m.components().size(); ++k) ks.push_back(k);
  }
  const double d = static_cast<double>(x.size());
  double total = 0.0;
  for (auto k : ks) {
    const auto& c = m.components()[k];
    const double v = alpha * alpha * c.std * c.std + sigma * sigma;
    double sq = 0.0;
    for (std::size_t j = 0; j < x.size(); ++j) sq += (x[j] - alpha * c.mean[j]) * (x[j] - alpha * c.mean[j]);
    total += c.weight * std::exp(-0.5 * sq / v) / std::pow(2.0 * M_PI * v, 0.5 * d);
  }
  return std::log(total);
}

double max_abs(const Vec& a, const Vec& b) {
  double m = 0.0;
  for (std::size_t j = 0; j < a.size(); ++j) m = std::max(m, std::abs(a[j] - b[j]));
  return m;
}

Verdict teacher_check() {
  VPSchedule sched;
  Gen g(41);
  double score_err = 0.0;
  for (const auto& m : {presets::gmm2d(), presets::blobs8()})
    for (int i = 0; i < 20; ++i) {
      const double t = 0.02 + 0.97 * g.rng.uniform();
      std::optional<std::size_t> label;
      if (i % 2) label.emplace(g.between(0, m.num_classes() - 1));
      const auto [a, s] = sched.alpha_sigma(t);
      Vec x = m.sample(g.rng, label);
      for (auto& v : x) v = a * v + s * g.rng.normal();
      const Vec score = m.score(sched, x, t, label);
      for (std::size_t j = 0; j < x.size(); ++j) {
        Vec up = x, down = x;
        up[j] += 1e-5;
        down[j] -= 1e-5;
        const double fd = (log_density(m, sched, up, t, label) - log_density(m, sched, down, t, label)) / 2e-5;
        score_err = std::max(score_err, std::abs(fd - score[j]) / std::max(1.0, std::abs(fd)));
      }
    }
  const Vec mu = {0.4, -0.7, 1.2};
  const double sd = 0.3;
  GaussianMixtureTeacher single({{1.0, mu, sd}}, {{0}}, ImageShape{3, 1, 1});
  const Vec x_T = {0.9, -1.3, 0.2};
  const auto [aT, sT] = sched.alpha_sigma(sched.T);
  Vec exact(3);
  for (std::size_t j = 0; j < 3; ++j) exact[j] = mu[j] + sd * (x_T[j] - aT * mu[j]) / std::sqrt(aT * aT * sd * sd + sT * sT);
  auto end = [&](std::size_t n) { return solve_trajectory(single, sched, x_T, TrajectoryGrid(1), 0, 1.0, n).states.back(); };
  const double heun_err = max_abs(end(1000), exact);
  const double ratio = max_abs(end(250), exact) / max_abs(end(500), exact);
  std::ostringstream os;
  os << "score vs FD " << fmt("%.2g", score_err) << " (<= 1e-4), Heun vs closed form " << fmt("%.2g", heun_err)
     << " (<= 1e-4), 250/500 error ratio " << fmt("%.3f", ratio) << " (4 +-25%)";
  return {score_err <= 1e-4 && heun_err <= 1e-4 && std::abs(ratio - 4.0) <= 1.0, os.str()};
}

// ---- 6, 7, 8: desk-scale distillation ----

struct DeskSetup {
  std::size_t trajectories = 50000;
  std::size_t test = 1000;
  std::size_t seeds = 5;
  std::size_t iterations = 1500;
  std::size_t batch = 32;
  double lr = 1e-3;
  double ema = 0.99;
  double cfg_scale = 1.5;
  std::size_t L = 4, d_model = 32, heads = 2, N = 2;
  PredictionTarget target = PredictionTarget::NextSample;
  double budget_s = 1800;
  std::size_t threads = 1;
};

struct SeedResult {
  MetricReport m4, m1;
  std::vector<double> exp_m4, exp_m1;  // endpoint error per k
};

struct DeskRun {
  std::vector<SeedResult> seeds;
  std::optional<AttentionReport> attention;
  double seconds = 0.0;
  std::string error;
};

DeskRun run_desk(const DeskSetup& d) {
  DeskRun run;
  const auto t0 = Clock::now();
  const auto teacher = presets::blobs8();
  const VPSchedule sched;
  const TrajectoryGrid grid(4);
  std::printf("  generating %zu + %zu teacher trajectories\n", d.trajectories, d.test);
  std::fflush(stdout);
  const auto train_ds = generate_dataset(teacher, sched, grid, d.trajectories, d.cfg_scale, 1, 1000, d.threads);
  const auto test_ds = generate_dataset(teacher, sched, grid, d.test, d.cfg_scale, 2, 1000, d.threads);
  std::vector<std::size_t> idx(d.test);
  for (std::size_t i = 0; i < d.test; ++i) idx[i] = i;
  StudentConfig base;
  base.L = d.L;
  base.N = d.N;
  base.d_model = d.d_model;
  base.heads = d.heads;
  base.image = teacher.shape();
  base.num_classes = teacher.num_classes();
  base.S = 4;
  base.target = d.target;
  TrainConfig tc;
  tc.iterations = d.iterations;
  tc.batch_size = d.batch;
  tc.learning_rate = d.lr;
  tc.ema_decay = d.ema;
  tc.threads = d.threads;
  const TargetContext ctx{&teacher, sched, d.cfg_scale};
  for (std::size_t seed = 0; seed < d.seeds; ++seed) {
    SeedResult r;
    for (auto mask : {MaskOption::M4, MaskOption::M1}) {
      auto c = base;
      c.mask = mask;
      if (mask == MaskOption::M1) c.N = 0;
      tc.seed = 1000 + seed;
      const auto trained = train(&train_ds, c, tc, ctx);
      const auto rep = evaluate(trained.ema, c, sched, teacher, test_ds, idx, 77, d.threads);
      std::vector<double> exposure;
      for (std::size_t k = 0; k < c.S; ++k)
        exposure.push_back(exposure_harness(trained.ema, c, sched, test_ds, idx, k, d.threads).endpoint());
      (mask == MaskOption::M4 ? r.m4 : r.m1) = rep;
      (mask == MaskOption::M4 ? r.exp_m4 : r.exp_m1) = exposure;
      if (mask == MaskOption::M4 && seed == 0) {
        std::vector<std::size_t> few(idx.begin(), idx.begin() + std::min<std::size_t>(64, idx.size()));
        run.attention = attention_report(trained.ema, c, make_batch(test_ds, few, c, ctx));
      }
      std::printf("  seed %zu %s: endpoint mse %.5f, mmd2 %.6f (se %.6f), exposure endpoint by k:", seed,
                  to_string(mask).c_str(), rep.endpoint_mse, rep.mmd2, rep.mmd2_std_error);
      for (double e : exposure) std::printf(" %.5f", e);
      std::printf(" [%.0fs]\n", seconds_since(t0));
      std::fflush(stdout);
    }
    run.seeds.push_back(std::move(r));
  }
  run.seconds = seconds_since(t0);
  return run;
}

Verdict ordering_check(const DeskRun& run, const DeskSetup& d) {
  std::size_t wins = 0;
  std::ostringstream os;
  for (const auto& r : run.seeds) {
    const bool w = r.m4.endpoint_mse < r.m1.endpoint_mse && r.m4.mmd2 < r.m1.mmd2;
    wins += w;
  }
  os << "M4/N=" << d.N << " beats M1 on both endpoint MSE and MMD^2 in " << wins << "/" << run.seeds.size()
     << " seeds (need 4/5); total " << fmt("%.0f", run.seconds) << "s (expected <= " << fmt("%.0f", d.budget_s) << "s)";
  return {wins >= 4, os.str()};
}

Verdict exposure_check(const DeskRun& run) {
  std::size_t good = 0;
  std::ostringstream os;
  for (const auto& r : run.seeds) {
    bool mono = true;
    for (std::size_t k = 1; k < r.exp_m4.size(); ++k)
      mono = mono && r.exp_m4[k] <= r.exp_m4[k - 1] && r.exp_m1[k] <= r.exp_m1[k - 1];
    const double gap0 = r.exp_m1.front() - r.exp_m4.front();
    const double gap_last = r.exp_m1.back() - r.exp_m4.back();
    good += mono && gap0 > gap_last;
    os << "[" << (mono ? "mono" : "not-mono") << ", gap " << fmt("%.4g", gap0) << " -> " << fmt("%.4g", gap_last)
       << "] ";
  }
  os << good << "/" << run.seeds.size() << " seeds (need 4/5)";
  return {good >= 4, os.str()};
}

Verdict attention_check(const DeskRun& run, const DeskSetup& d) {
  if (!run.attention) return {false, "no trained model"};
  const auto& a = *run.attention;
  bool history_ok = true, gated_ok = true;
  double min_hist = 1.0;
  for (std::size_t l = 0; l < a.L; ++l)
    for (std::size_t s = 1; s <= a.S; ++s) {
      if (l < d.N && s < a.S) {
        min_hist = std::min(min_hist, a.history(l, s));
        history_ok = history_ok && a.history(l, s) > 0.0;
      }
      if (l >= d.N) gated_ok = gated_ok && a.at(l, s, s) == 1.0;
    }
  std::ostringstream os;
  os << "smallest history share in layers < N at s < S: " << fmt("%.4g", min_hist) << "; gated layers "
     << (gated_ok ? "exactly 1.0" : "NOT exactly 1.0") << " on the current block";
  return {history_ok && gated_ok, os.str()};
}

// ---- 9: determinism ----

std::string bytes_of_dataset(const TrajectoryDataset& ds) {
  std::ostringstream os;
  ds.write(os);
  return os.str();
}

std::string bytes_of_params(const StudentParams& p) {
  std::ostringstream os;
  write_checkpoint(os, p.named());
  return os.str();
}

Verdict determinism_check() {
  const auto teacher = presets::blobs8();
  const VPSchedule sched;
  const TrajectoryGrid grid(4);
  std::vector<std::string> issues;
  auto expect = [&](bool ok, const std::string& what) {
    if (!ok) issues.push_back(what);
  };
  const auto ds1 = generate_dataset(teacher, sched, grid, 40, 1.5, 3, 200, 1);
  const auto ds2 = generate_dataset(teacher, sched, grid, 40, 1.5, 3, 200, 1);
  const auto ds3 = generate_dataset(teacher, sched, grid, 40, 1.5, 3, 200, 4);
  const auto bytes = bytes_of_dataset(ds1);
  expect(bytes == bytes_of_dataset(ds2), "gen across runs");
  expect(bytes == bytes_of_dataset(ds3), "gen across thread counts");
  std::istringstream in(bytes);
  expect(bytes_of_dataset(TrajectoryDataset::read(in)) == bytes, "dataset round-trip");

  StudentConfig c;
  c.L = 2;
  c.N = 1;
  c.d_model = 16;
  c.heads = 2;
  c.image = teacher.shape();
  c.num_classes = teacher.num_classes();
  c.S = 4;
  c.mask = MaskOption::M4;
  TrainConfig tc;
  tc.iterations = 4;
  tc.batch_size = 8;
  tc.shard_size = 2;
  tc.use_discriminator = true;
  const TargetContext ctx{&teacher, sched, 1.5};
  const auto a = train(&ds1, c, tc, ctx);
  const auto b = train(&ds1, c, tc, ctx);
  tc.threads = 3;
  const auto t = train(&ds1, c, tc, ctx);
  const auto pa = bytes_of_params(a.ema);
  expect(pa == bytes_of_params(b.ema), "train across runs");
  expect(pa == bytes_of_params(t.ema), "train across thread counts");
  std::istringstream pin(pa);
  expect(bytes_of_params(params_from_tensors(c, read_checkpoint(pin))) == pa, "checkpoint round-trip");

  SamplerConfig sc;
  sc.count = 6;
  sc.seed = 9;
  const auto s1 = bytes_of_dataset(to_dataset(sample(a.ema, c, sched, sc), sched));
  sc.threads = 3;
  const auto s2 = bytes_of_dataset(to_dataset(sample(a.ema, c, sched, sc), sched));
  expect(s1 == s2, "sample across thread counts");

  std::vector<std::size_t> idx = {0, 1, 2, 3, 4, 5, 6, 7};
  const auto e1 = evaluate(a.ema, c, sched, teacher, ds1, idx, 5, 1);
  const auto e2 = evaluate(a.ema, c, sched, teacher, ds1, idx, 5, 3);
  expect(e1.endpoint_mse == e2.endpoint_mse && e1.mmd2 == e2.mmd2, "eval across thread counts");
  const auto x1 = exposure_harness(a.ema, c, sched, ds1, idx, 1, 1);
  const auto x2 = exposure_harness(a.ema, c, sched, ds1, idx, 1, 3);
  expect(x1.per_step == x2.per_step, "exposure across thread counts");
  std::string detail = "gen, train (with discriminator), sample, eval, exposure bitwise equal across runs and 1/3/4 "
                       "threads; dataset and checkpoint round-trips byte-identical";
  if (!issues.empty()) {
    detail = "differs:";
    for (const auto& i : issues) detail += " " + i + ";";
  }
  return {issues.empty(), detail};
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Acceptance run"};
  DeskSetup desk;
  bool skip_desk = false;
  app.add_option("--trajectories", desk.trajectories, "Training trajectories for the desk runs");
  app.add_option("--seeds", desk.seeds, "Seeds for the desk runs");
  app.add_option("--iterations", desk.iterations, "Training iterations per desk model");
  app.add_option("--threads", desk.threads, "Worker threads");
  app.add_flag("--skip-desk", skip_desk, "Skip criteria 6-8");
  CLI11_PARSE(app, argc, argv);

  criterion(1, "FLOPs accounting", flops_check);
  criterion(2, "train/infer equivalence", train_infer_check);
  criterion(3, "mask causality", causality_check);
  criterion(4, "gradient correctness", gradient_check);
  criterion(5, "teacher exactness", teacher_check);
  if (skip_desk) {
    for (int id : {6, 7, 8}) print_verdict(id, "desk-scale run", {false, "skipped"}, 0.0);
  } else {
    std::printf("  desk setup: blobs8, S=4, cfg %.2f, %zu trajectories, %zu seeds, L=%zu d=%zu heads=%zu N=%zu, "
                "%zu iterations x batch %zu, lr %g, ema %g, target %s\n",
                desk.cfg_scale, desk.trajectories, desk.seeds, desk.L, desk.d_model, desk.heads, desk.N,
                desk.iterations, desk.batch, desk.lr, desk.ema, to_string(desk.target).c_str());
    DeskRun run;
    const auto t0 = Clock::now();
    try {
      run = run_desk(desk);
    } catch (const std::exception& e) {
      run.error = e.what();
    }
    const double secs = seconds_since(t0);
    if (!run.error.empty()) {
      for (int id : {6, 7, 8}) print_verdict(id, "desk-scale run", {false, "exception: " + run.error}, secs);
    } else {
      print_verdict(6, "distillation ordering", ordering_check(run, desk), secs);
      print_verdict(7, "exposure-bias pattern", exposure_check(run), 0.0);
      print_verdict(8, "attention report", attention_check(run, desk), 0.0);
    }
  }
  criterion(9, "determinism", determinism_check);
  std::printf("%d of 9 criteria failed\n", failures);
  return failures == 0 ? 0 : 1;
}
