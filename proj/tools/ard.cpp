// ard: command-line front end for dataset generation, training, sampling and
// analysis. Exit codes: 0 ok, 2 config or missing input, 3 refusal to
// overwrite, 4 numeric failure, 1 anything else.

#include <chrono>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "json.hpp"

#include "ard/ard.hpp"
#include "ard/experiment.hpp"

#ifndef ARD_VERSION
#define ARD_VERSION "unknown"
#endif

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

struct Refusal : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct MissingInput : std::runtime_error {
  using std::runtime_error::runtime_error;
};

std::string hex64(std::uint64_t v) {
  std::ostringstream os;
  os << std::hex << std::setw(16) << std::setfill('0') << v;
  return os.str();
}

std::uint64_t file_hash(const fs::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw MissingInput("cannot read " + path.string());
  ard::io::Fnv1a h;
  char buf[1 << 16];
  while (is) {
    is.read(buf, sizeof(buf));
    h.update(buf, static_cast<std::size_t>(is.gcount()));
  }
  return h.digest();
}

// Flag values; unset optionals leave the config file (or default) value alone.
struct Opts {
  std::string config;
  std::string out;
  bool force = false;
  std::optional<std::string> preset;
  std::optional<std::size_t> steps;
  std::optional<std::string> mask;
  std::optional<std::size_t> n_history;
  std::optional<std::string> target;
  std::optional<double> cfg;
  std::optional<std::uint64_t> seed;
  std::optional<std::size_t> threads;
  std::optional<std::size_t> count;
  std::optional<std::size_t> fine_steps;
  std::optional<std::size_t> layers;
  std::optional<std::size_t> d_model;
  std::optional<std::size_t> heads;
  std::optional<std::size_t> iterations;
  std::optional<std::size_t> batch;
  std::optional<double> lr;
  std::optional<double> ema;
  std::optional<std::size_t> log_every;
  std::optional<std::size_t> ckpt_every;
  bool disc = false;
  bool online = false;
  std::optional<std::size_t> label;
  std::string data;
  std::vector<std::string> ckpts;
  std::string student;
  std::string arch = "dit-xl2";
  std::string mode = "student";
  std::string cache = "cached";
  std::string source;
  std::size_t index = 0;
  std::size_t inject = 1;
  bool raw = false;
};

ard::ExperimentConfig resolve_config(const Opts& o) {
  ard::ExperimentConfig c = o.config.empty() ? ard::ExperimentConfig{} : ard::load_experiment(o.config);
  if (o.preset) c.teacher = *o.preset;
  // Without an explicit step count, a checkpoint's stored config decides it.
  if (!o.steps && o.config.empty() && !o.ckpts.empty()) {
    fs::path p = o.student.empty() ? fs::path(o.ckpts.front()).parent_path() / "student.json" : fs::path(o.student);
    if (fs::exists(p)) {
      c.steps = ard::load_student_config(p).S;
      c.student.S = c.steps;
    }
  }
  if (o.steps) {
    c.steps = *o.steps;
    c.student.S = *o.steps;
  }
  if (o.mask) c.student.mask = ard::parse_mask(*o.mask);
  if (o.n_history) c.student.N = *o.n_history;
  if (o.target) c.student.target = ard::parse_target(*o.target);
  if (o.cfg) c.cfg_scale = *o.cfg;
  if (o.seed) {
    c.seed = *o.seed;
    c.train.seed = *o.seed;
    c.sampler.seed = *o.seed;
  }
  if (o.threads) c.threads = *o.threads;
  c.train.threads = c.threads;
  c.sampler.threads = c.threads;
  if (o.count) {
    c.count = *o.count;
    c.sampler.count = *o.count;
  }
  if (o.fine_steps) c.fine_steps = *o.fine_steps;
  if (o.layers) c.student.L = *o.layers;
  if (o.d_model) c.student.d_model = *o.d_model;
  if (o.heads) c.student.heads = *o.heads;
  if (o.iterations) c.train.iterations = *o.iterations;
  if (o.batch) c.train.batch_size = *o.batch;
  if (o.lr) c.train.learning_rate = *o.lr;
  if (o.ema) c.train.ema_decay = *o.ema;
  if (o.log_every) c.train.log_every = *o.log_every;
  if (o.ckpt_every) c.train.ckpt_every = *o.ckpt_every;
  if (o.disc) c.train.use_discriminator = true;
  if (o.online) c.train.online = true;
  if (o.label) c.sampler.label = *o.label;
  c.train.online_fine_steps = c.fine_steps;
  return c;
}

// Shared state for one command invocation: resolved config, output dir, provenance.
class Run {
 public:
  Run(std::string command, const Opts& o, std::vector<std::string> argv)
      : command_(std::move(command)), opts_(o), argv_(std::move(argv)), t0_(std::chrono::steady_clock::now()) {}

  const Opts& opts() const { return opts_; }
  fs::path dir() const { return opts_.out.empty() ? fs::path("runs") / command_ : fs::path(opts_.out); }

  // Refuses to overwrite `files` (relative to the output dir) unless --force.
  void claim(const std::vector<std::string>& files) {
    for (const auto& f : files) {
      if (fs::exists(dir() / f) && !opts_.force) {
        throw Refusal((dir() / f).string() + " exists; pass --force to overwrite");
      }
    }
    fs::create_directories(dir());
  }

  fs::path output(const std::string& name) {
    outputs_.push_back(name);
    return dir() / name;
  }

  void input(const std::string& path) {
    if (!fs::exists(path)) throw MissingInput("missing input: " + path);
    inputs_[path] = hex64(file_hash(path));
  }

  void finish(const json& config, std::uint64_t seed, json extra = json::object()) {
    const double wall = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0_).count();
    json j = {{"command", command_},
              {"argv", argv_},
              {"config", config},
              {"seed", seed},
              {"version", ARD_VERSION},
              {"wall_time_s", wall},
              {"inputs", inputs_},
              {"outputs", outputs_}};
    for (auto& [k, v] : extra.items()) j[k] = v;
    std::ofstream os(dir() / "run.json", std::ios::trunc);
    if (!os) throw std::runtime_error("cannot write " + (dir() / "run.json").string());
    os << j.dump(2) << '\n';
  }

 private:
  std::string command_;
  Opts opts_;
  std::vector<std::string> argv_;
  std::chrono::steady_clock::time_point t0_;
  json inputs_ = json::object();
  std::vector<std::string> outputs_;
};

struct Resolved {
  ard::ExperimentConfig cfg;
  ard::GaussianMixtureTeacher teacher;
};

Resolved resolve(const Opts& o) {
  auto c = resolve_config(o);
  auto teacher = ard::resolve_teacher(c.teacher);
  c.fit_to_teacher(teacher);
  c.validate(teacher);
  return {std::move(c), std::move(teacher)};
}

ard::TrajectoryDataset load_data(Run& run, const std::string& path, const ard::ExperimentConfig& c,
                                 const ard::GaussianMixtureTeacher& teacher) {
  if (path.empty()) throw MissingInput("--data is required");
  run.input(path);
  auto ds = ard::TrajectoryDataset::load(path);
  const auto& h = ds.header();
  if (h.S != c.steps) {
    throw ard::ConfigError("steps: dataset has S=" + std::to_string(h.S) + " but the config has " +
                           std::to_string(c.steps));
  }
  if (h.D != teacher.dim()) {
    throw ard::ConfigError("teacher: dataset has D=" + std::to_string(h.D) + " but the teacher has " +
                           std::to_string(teacher.dim()));
  }
  if (h.teacher_hash != teacher.hash()) throw ard::ConfigError("teacher: dataset was generated by a different teacher");
  return ds;
}

// Config stored next to a checkpoint, else the resolved one.
ard::StudentConfig student_for(const std::string& ckpt, const Opts& o, const ard::StudentConfig& fallback) {
  fs::path p = o.student;
  if (p.empty() && !ckpt.empty()) p = fs::path(ckpt).parent_path() / "student.json";
  if (p.empty() || !fs::exists(p)) return fallback;
  auto s = ard::load_student_config(p);
  if (o.mask) s.mask = ard::parse_mask(*o.mask);
  if (o.n_history) s.N = *o.n_history;
  s.validate();
  return s;
}

ard::StudentParams load_params(Run& run, const std::string& ckpt, const ard::StudentConfig& s, std::uint64_t seed) {
  if (ckpt.empty()) return ard::init_student(s, seed);
  run.input(ckpt);
  return ard::load_student(ckpt, s);
}

void check_student(const ard::StudentConfig& s, const ard::ExperimentConfig& c, const ard::GaussianMixtureTeacher& t) {
  if (s.S != c.steps) throw ard::ConfigError("steps: checkpoint has S=" + std::to_string(s.S));
  if (s.data_dim() != t.dim()) throw ard::ConfigError("student.image: checkpoint does not match the teacher");
  if (s.num_classes != t.num_classes()) throw ard::ConfigError("student.num_classes: checkpoint does not match the teacher");
}

std::vector<std::size_t> first_n(std::size_t n, std::size_t available) {
  std::vector<std::size_t> idx(std::min(n, available));
  for (std::size_t i = 0; i < idx.size(); ++i) idx[i] = i;
  return idx;
}

ard::CacheMode parse_cache(const std::string& s) {
  if (s == "cached") return ard::CacheMode::Cached;
  if (s == "recompute") return ard::CacheMode::Recompute;
  if (s == "disabled") return ard::CacheMode::Disabled;
  throw ard::ConfigError("cache: unknown mode '" + s + "' (expected cached|recompute|disabled)");
}

std::string model_name(const std::string& ckpt) {
  const fs::path p(ckpt);
  const std::string parent = p.parent_path().filename().string();
  return parent.empty() ? p.stem().string() : parent + "/" + p.stem().string();
}

void write_pgms(Run& run, const std::string& prefix, const std::vector<std::vector<float>>& images,
                const ard::ImageShape& shape) {
  for (std::size_t i = 0; i < images.size(); ++i) {
    std::ostringstream name;
    name << prefix << std::setw(4) << std::setfill('0') << i << ".pgm";
    ard::write_pgm(run.output(name.str()), images[i], shape);
  }
}

// ---- commands ----

void cmd_gen(Run& run) {
  auto [c, teacher] = resolve(run.opts());
  run.claim({"dataset.ardt"});
  const ard::TrajectoryGrid grid(c.steps, c.schedule.T);
  auto ds = ard::generate_dataset(teacher, c.schedule, grid, c.count, c.cfg_scale, c.seed, c.fine_steps, c.threads);
  const auto path = run.output("dataset.ardt");
  ds.save(path);
  const std::string hash = hex64(file_hash(path));
  std::cout << "count " << ds.size() << "\nD " << ds.dim() << "\nS " << ds.steps() << "\nhash " << hash << '\n';
  run.finish(to_json(c), c.seed, {{"dataset_hash", hash}});
}

void cmd_train(Run& run) {
  const auto& o = run.opts();
  auto [c, teacher] = resolve(o);
  std::optional<ard::TrajectoryDataset> ds;
  if (!c.train.online) ds = load_data(run, o.data, c, teacher);
  const double w = ds ? static_cast<double>(ds->header().cfg_scale) : c.cfg_scale;
  run.claim({"student.ardw", "ema.ardw", "student.json", "metrics.csv"});
  ard::save_student_config(run.output("student.json"), c.student);
  std::ofstream metrics(run.output("metrics.csv"), std::ios::trunc);
  const ard::TargetContext targets{&teacher, c.schedule, w};
  const ard::OnlineSource online{&teacher, c.schedule, c.cfg_scale};
  const ard::TrainOutputs outs{c.train.ckpt_every > 0 ? run.dir() : fs::path(), &metrics};
  auto result = ard::train(ds ? &*ds : nullptr, c.student, c.train, targets, outs, online);
  ard::save_student(run.output("student.ardw"), result.params);
  ard::save_student(run.output("ema.ardw"), result.ema);
  const auto& last = result.history.back();
  std::cout << "iterations " << result.iterations << "\nloss " << last.loss << '\n';
  run.finish(to_json(c), c.seed, {{"final_loss", last.loss}});
}

void cmd_sample(Run& run) {
  const auto& o = run.opts();
  auto [c, teacher] = resolve(o);
  const std::string ckpt = o.ckpts.empty() ? std::string() : o.ckpts.front();
  const auto s = student_for(ckpt, o, c.student);
  check_student(s, c, teacher);
  const auto mode = parse_cache(o.cache);
  auto p = load_params(run, ckpt, s, c.seed);
  run.claim({"samples.ardt"});
  const auto r = ard::sample(p, s, c.schedule, c.sampler, mode);
  ard::to_dataset(r, c.schedule, teacher.hash()).save(run.output("samples.ardt"));
  std::vector<std::vector<float>> finals;
  for (const auto& ch : r.chains) finals.push_back(ch.states.back());
  if (s.image.height * s.image.width > 1) write_pgms(run, "sample_", finals, s.image);
  std::cout << "samples " << r.chains.size() << "\nhash " << hex64(file_hash(run.dir() / "samples.ardt")) << '\n';
  run.finish({{"experiment", to_json(c)}, {"student", to_json(s)}, {"cache", o.cache}}, c.sampler.seed);
}

void cmd_eval(Run& run) {
  const auto& o = run.opts();
  auto [c, teacher] = resolve(o);
  if (o.ckpts.empty()) throw MissingInput("--ckpt is required");
  auto ds = load_data(run, o.data, c, teacher);
  run.claim({"eval.json"});
  const auto idx = first_n(c.count, ds.size());
  json models = json::array();
  std::cout << std::left << std::setw(32) << "model" << std::setw(16) << "endpoint_mse" << std::setw(16) << "mmd2"
            << "mmd2_se\n";
  for (const auto& ckpt : o.ckpts) {
    const auto s = student_for(ckpt, o, c.student);
    check_student(s, c, teacher);
    auto p = load_params(run, ckpt, s, c.seed);
    const auto rep = ard::evaluate(p, s, c.schedule, teacher, ds, idx, c.seed, c.threads);
    models.push_back({{"ckpt", ckpt},
                      {"endpoint_mse", rep.endpoint_mse},
                      {"mmd2", rep.mmd2},
                      {"mmd2_std_error", rep.mmd2_std_error},
                      {"bandwidth", rep.bandwidth},
                      {"per_step", rep.per_step}});
    std::cout << std::setw(32) << model_name(ckpt) << std::setw(16) << rep.endpoint_mse << std::setw(16) << rep.mmd2
              << rep.mmd2_std_error << '\n';
  }
  std::ofstream(run.output("eval.json"), std::ios::trunc) << json{{"trajectories", idx.size()}, {"models", models}}.dump(2)
                                                          << '\n';
  run.finish(to_json(c), c.seed);
}

void cmd_attn(Run& run) {
  const auto& o = run.opts();
  auto [c, teacher] = resolve(o);
  if (o.ckpts.empty()) throw MissingInput("--ckpt is required");
  auto ds = load_data(run, o.data, c, teacher);
  const auto s = student_for(o.ckpts.front(), o, c.student);
  check_student(s, c, teacher);
  auto p = load_params(run, o.ckpts.front(), s, c.seed);
  run.claim({"attention.csv", "attention.svg"});
  const auto idx = first_n(c.count, ds.size());
  const ard::TargetContext targets{&teacher, c.schedule, static_cast<double>(ds.header().cfg_scale)};
  const auto batch = ard::make_batch(ds, idx, s, targets);
  const auto rep = ard::attention_report(p, s, batch);
  ard::report::write_text(run.output("attention.csv"), ard::report::attention_csv(rep));
  ard::report::write_text(run.output("attention.svg"), ard::report::attention_svg(rep));
  for (std::size_t l = 0; l < rep.L; ++l) {
    std::cout << "layer " << l;
    for (std::size_t si = 1; si <= rep.S; ++si) std::cout << (si == 1 ? " " : " | ") << "s" << si << ":"
                                                          << ard::report::num(rep.at(l, si, si));
    std::cout << '\n';
  }
  run.finish({{"experiment", to_json(c)}, {"student", to_json(s)}}, c.seed);
}

void cmd_flops(Run& run) {
  const auto& o = run.opts();
  auto c = resolve_config(o);
  auto dims = o.arch == "desk" ? ard::dims_of(c.student) : ard::parse_arch(o.arch);
  dims.validate();
  if (c.steps < 1) throw ard::ConfigError("steps: must be >= 1");
  if (c.student.N > dims.L) throw ard::ConfigError("n-history: must be <= L (" + std::to_string(dims.L) + ")");
  const auto mode = ard::parse_flops_mode(o.mode);
  const auto fb = ard::flops_model(dims, c.steps, c.student.N, c.student.mask, mode);
  const bool write = !o.out.empty();
  if (write) run.claim({"flops.csv", "flops.svg"});
  if (o.raw) {
    std::cout << ard::report::num(ard::gflops(fb.total())) << '\n';
  } else {
    std::cout << std::fixed << std::setprecision(2) << "GFLOPs " << ard::gflops(fb.total()) << "\n"
              << "  projections " << ard::gflops(fb.projections()) << "\n"
              << "  attn_scores " << ard::gflops(fb.attn_scores()) << "\n"
              << "  attn_values " << ard::gflops(fb.attn_values()) << "\n"
              << "  mlp " << ard::gflops(fb.mlp()) << "\n"
              << "  embed_head " << ard::gflops(fb.embed_head()) << "\n"
              << "  kv_extra " << ard::gflops(fb.kv_extra()) << '\n';
  }
  if (write) {
    ard::report::write_text(run.output("flops.csv"), ard::report::flops_csv(fb));
    ard::report::write_text(run.output("flops.svg"), ard::report::flops_svg(fb));
    run.finish({{"arch", o.arch}, {"mode", o.mode}, {"steps", c.steps}, {"mask", ard::to_string(c.student.mask)},
                {"n_history", c.student.N}},
               c.seed, {{"gflops", ard::gflops(fb.total())}});
  }
}

void cmd_exposure(Run& run) {
  const auto& o = run.opts();
  auto [c, teacher] = resolve(o);
  if (o.ckpts.empty()) throw MissingInput("--ckpt is required");
  auto ds = load_data(run, o.data, c, teacher);
  run.claim({"exposure.csv", "exposure.svg"});
  const auto idx = first_n(c.count, ds.size());
  std::vector<std::pair<std::string, ard::ExposureCurve>> curves;
  std::vector<std::pair<std::string, std::vector<double>>> endpoints;
  for (const auto& ckpt : o.ckpts) {
    const auto s = student_for(ckpt, o, c.student);
    check_student(s, c, teacher);
    auto p = load_params(run, ckpt, s, c.seed);
    std::vector<double> ends;
    for (std::size_t k = 0; k < s.S; ++k) {
      auto curve = ard::exposure_harness(p, s, c.schedule, ds, idx, k, c.threads);
      ends.push_back(curve.endpoint());
      std::cout << model_name(ckpt) << " k=" << k << " endpoint_mse " << curve.endpoint() << '\n';
      curves.emplace_back(model_name(ckpt), std::move(curve));
    }
    endpoints.emplace_back(model_name(ckpt), std::move(ends));
  }
  ard::report::write_text(run.output("exposure.csv"), ard::report::exposure_csv(curves));
  ard::report::write_text(run.output("exposure.svg"), ard::report::exposure_svg(endpoints));
  run.finish(to_json(c), c.seed);
}

void cmd_manipulate(Run& run) {
  const auto& o = run.opts();
  auto [c, teacher] = resolve(o);
  if (o.ckpts.empty()) throw MissingInput("--ckpt is required");
  if (o.source.empty()) throw MissingInput("--source is required");
  const auto s = student_for(o.ckpts.front(), o, c.student);
  check_student(s, c, teacher);
  if (o.inject < 1 || o.inject + 1 > s.S) {
    throw ard::ConfigError("inject: must lie in [1, " + std::to_string(s.S > 0 ? s.S - 1 : 0) + "]");
  }
  auto src_ds = load_data(run, o.source, c, teacher);
  if (o.index >= src_ds.size()) throw ard::ConfigError("index: source has only " + std::to_string(src_ds.size()) + " records");
  auto p = load_params(run, o.ckpts.front(), s, c.seed);
  run.claim({"manipulated.ardt"});
  const auto x_src = src_ds.state(o.index, s.S - o.inject);
  ard::SampleResult r{s.S, s.data_dim(), std::vector<ard::Chain>(c.sampler.count)};
  ard::parallel_for(c.sampler.count, c.threads, [&](std::size_t i) {
    r.chains[i] = ard::manipulate(p, s, c.schedule, x_src, o.inject, c.sampler, i);
  });
  ard::to_dataset(r, c.schedule, teacher.hash()).save(run.output("manipulated.ardt"));
  std::vector<std::vector<float>> finals;
  for (const auto& ch : r.chains) finals.push_back(ch.states.back());
  if (s.image.height * s.image.width > 1) {
    auto src_final = src_ds.state(o.index, s.S);
    write_pgms(run, "source_", {std::vector<float>(src_final.begin(), src_final.end())}, s.image);
    write_pgms(run, "manipulated_", finals, s.image);
  }
  std::cout << "manipulated " << r.chains.size() << " samples at s=" << o.inject << '\n';
  run.finish({{"experiment", to_json(c)}, {"student", to_json(s)}, {"index", o.index}, {"inject", o.inject}},
             c.sampler.seed);
}

void add_common(CLI::App* sub, Opts& o) {
  sub->add_option("--config", o.config, "JSON experiment config");
  sub->add_option("--out", o.out, "Output directory (default runs/<command>)");
  sub->add_flag("--force", o.force, "Overwrite existing outputs");
  sub->add_option("--preset", o.preset, "Teacher preset (blobs8|gmm2d) or mixture file");
  sub->add_option("--steps", o.steps, "Number of coarse steps S");
  sub->add_option("--mask", o.mask, "Attention mask m1|m2|m3|m4");
  sub->add_option("--n-history,--n", o.n_history, "Layers with history access N");
  sub->add_option("--target", o.target, "Prediction target next|x0");
  sub->add_option("--cfg", o.cfg, "Classifier-free guidance scale");
  sub->add_option("--seed", o.seed, "Seed");
  sub->add_option("--threads", o.threads, "Worker threads");
  sub->add_option("--count", o.count, "Number of records or samples");
  sub->add_option("--fine-steps", o.fine_steps, "Teacher ODE steps");
  sub->add_option("--layers", o.layers, "Student depth L");
  sub->add_option("--d-model", o.d_model, "Student width");
  sub->add_option("--heads", o.heads, "Attention heads");
  sub->add_option("--class", o.label, "Class label for sampling");
}

int run_main(int argc, char** argv) {
  CLI::App app{"Autoregressive distillation of a diffusion teacher"};
  app.require_subcommand(1);
  Opts o;
  std::string command;
  auto add = [&](const char* name, const char* help) {
    auto* sub = app.add_subcommand(name, help);
    add_common(sub, o);
    sub->callback([&command, name] { command = name; });
    return sub;
  };
  add("gen", "Generate a teacher trajectory dataset");
  auto* train = add("train", "Train a student");
  train->add_option("--data", o.data, "Trajectory dataset");
  train->add_option("--iterations", o.iterations, "Training iterations");
  train->add_option("--batch", o.batch, "Batch size");
  train->add_option("--lr", o.lr, "Learning rate");
  train->add_option("--ema", o.ema, "EMA decay");
  train->add_option("--log-every", o.log_every, "Metrics interval");
  train->add_option("--ckpt-every", o.ckpt_every, "Checkpoint interval (0: final only)");
  train->add_flag("--disc", o.disc, "Add the adversarial term");
  train->add_flag("--online", o.online, "Regenerate teacher trajectories per batch");
  auto* sample = add("sample", "Sample from a student");
  sample->add_option("--ckpt", o.ckpts, "Student checkpoint (omit for initial parameters)");
  sample->add_option("--student", o.student, "Student config JSON");
  sample->add_option("--cache", o.cache, "cached|recompute|disabled");
  auto* eval = add("eval", "Endpoint MSE and MMD against the teacher");
  eval->add_option("--ckpt", o.ckpts, "Student checkpoint(s)");
  eval->add_option("--student", o.student, "Student config JSON");
  eval->add_option("--data", o.data, "Trajectory dataset");
  auto* attn = add("attn", "Attention-to-history report");
  attn->add_option("--ckpt", o.ckpts, "Student checkpoint");
  attn->add_option("--student", o.student, "Student config JSON");
  attn->add_option("--data", o.data, "Trajectory dataset");
  auto* flops = add("flops", "Analytic FLOPs model");
  flops->add_option("--arch", o.arch, "dit-xl2|desk");
  flops->add_option("--mode", o.mode, "student|teacher|kd");
  flops->add_flag("--raw", o.raw, "Print only the total");
  auto* exposure = add("exposure", "Exposure-bias harness");
  exposure->add_option("--ckpt", o.ckpts, "Student checkpoint(s)");
  exposure->add_option("--student", o.student, "Student config JSON");
  exposure->add_option("--data", o.data, "Trajectory dataset");
  auto* manip = add("manipulate", "Inject a source state mid-chain");
  manip->add_option("--ckpt", o.ckpts, "Student checkpoint");
  manip->add_option("--student", o.student, "Student config JSON");
  manip->add_option("--source", o.source, "Dataset holding the source trajectory");
  manip->add_option("--index", o.index, "Record index in the source dataset");
  manip->add_option("--inject", o.inject, "Step s at which the source is injected");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return 2;
  }

  Run run(command, o, std::vector<std::string>(argv, argv + argc));
  try {
    if (command == "gen") cmd_gen(run);
    else if (command == "train") cmd_train(run);
    else if (command == "sample") cmd_sample(run);
    else if (command == "eval") cmd_eval(run);
    else if (command == "attn") cmd_attn(run);
    else if (command == "flops") cmd_flops(run);
    else if (command == "exposure") cmd_exposure(run);
    else if (command == "manipulate") cmd_manipulate(run);
  } catch (const Refusal& e) {
    ard::log::error(e.what());
    return 3;
  } catch (const ard::NumericError& e) {
    ard::log::error("numeric failure: ", e.what());
    return 4;
  } catch (const ard::ConfigError& e) {
    ard::log::error("config: ", e.what());
    return 2;
  } catch (const MissingInput& e) {
    ard::log::error(e.what());
    return 2;
  } catch (const ard::LoadError& e) {
    ard::log::error("input: ", e.what());
    return 2;
  } catch (const ard::FormatError& e) {
    ard::log::error("input: ", e.what());
    return 2;
  } catch (const std::exception& e) {
    ard::log::error(e.what());
    return 1;
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) { return run_main(argc, argv); }
