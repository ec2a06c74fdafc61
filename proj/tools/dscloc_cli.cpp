// dscloc: generate synthetic scenes, fit per-frame depth and DSC tables, and
// evaluate the result.
//
// Exit codes: 0 success, 2 usage, 3 I/O, 4 configuration, 5 fit failure
// (non-finite loss), 6 gradient check above tolerance, 7 degenerate
// evaluation input, 1 anything else.

#include <CLI11.hpp>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>

#include "dscloc/grad_suite.hpp"
#include "dscloc/pipeline.hpp"

namespace fs = std::filesystem;
using namespace dscloc;

namespace {

enum ExitCode { kOk = 0, kOther = 1, kUsage = 2, kIo = 3, kConfig = 4, kFit = 5, kCheck = 6, kDegenerate = 7 };

struct UsageError : std::invalid_argument {
  using std::invalid_argument::invalid_argument;
};

fs::path sibling(const fs::path& output, const std::string& suffix) {
  fs::path p = output;
  p += suffix;
  return p;
}

void ensure_parent(const fs::path& p) {
  if (p.has_parent_path()) fs::create_directories(p.parent_path());
}

void write_text(const fs::path& path, const std::string& text) {
  ensure_parent(path);
  std::ofstream out(path);
  if (!out) throw io::IoError(path, "cannot open for writing");
  out << text;
  if (!out) throw io::IoError(path, "write failed");
}

std::pair<int, int> parse_size(const std::string& s) {
  int w = 0, h = 0;
  char x = 0, extra = 0;
  if (std::sscanf(s.c_str(), "%d%c%d%c", &w, &x, &h, &extra) != 3 || x != 'x' || w < 2 || h < 2)
    throw UsageError("--size must look like WIDTHxHEIGHT, got '" + s + "'");
  return {w, h};
}

// ---------------------------------------------------------------------------

struct GenSceneArgs {
  std::string pattern = "arc";
  int frames = 9;
  std::string size = "80x60";
  std::uint64_t seed = 1;
  double scale = TrajectoryOptions{}.scale;
  double radius = TrajectoryOptions{}.radius;
  std::string out;
  std::string base_config;
};

int gen_scene(const GenSceneArgs& a) {
  SyntheticSceneOptions opt;
  opt.trajectory.pattern = parse_pattern(a.pattern);
  opt.trajectory.n_frames = a.frames;
  opt.trajectory.scale = a.scale;
  opt.trajectory.radius = a.radius;
  std::tie(opt.width, opt.height) = parse_size(a.size);
  opt.scene_seed = a.seed;
  io::RunConfig base = a.base_config.empty() ? io::RunConfig{} : io::load_config(a.base_config);
  io::RunConfig config = generate_synthetic_scene(opt, a.out, base);
  config.output_dir = a.out;
  const fs::path cfg = fs::path(a.out) / "run.cfg";
  io::save_config(cfg, config);
  std::printf("wrote %d frames to %s\nconfig: %s\n", a.frames, a.out.c_str(), cfg.c_str());
  return kOk;
}

// ---------------------------------------------------------------------------

struct FitArgs {
  std::string data;
  std::string config;
  std::string out;
  std::optional<int> epochs;
  std::optional<std::uint64_t> seed;
};

int run_fit(const FitArgs& a) {
  io::RunConfig config = io::load_config(a.config);
  if (!a.data.empty()) config.data_dir = a.data;
  if (a.epochs) config.fit.epochs = *a.epochs;
  if (a.seed) config.fit.seed = *a.seed;
  const fs::path out(a.out);
  config.output_dir = out.has_parent_path() ? out.parent_path().string() : ".";
  if (config.data_dir.empty()) throw io::ConfigError("no dataset: pass --data or set data_dir");
  config.validate();
  const io::Dataset dataset = io::load_dataset(config.data_dir, config.split);
  const FitDataset data = fit_dataset(dataset, config);
  ensure_parent(out);
  io::save_config(sibling(out, ".cfg"), config);
  const FitResult result = fit(data, config.fit, config.pooling_factor_px, [](int epoch, double loss) {
    std::printf("epoch %d loss %.9g\n", epoch, loss);
    std::fflush(stdout);
  });
  io::checkpoint_save(out, result.params, config);
  std::printf("checkpoint: %s\n", out.c_str());
  return kOk;
}

// ---------------------------------------------------------------------------

struct EvalArgs {
  std::string ckpt;
  std::string data;
  std::string mode = "median";
  std::string plot;
  std::string csv;
  std::optional<double> min_depth;
  std::optional<double> max_depth;
};

struct Loaded {
  io::Checkpoint ck;
  io::Dataset dataset;
};

Loaded load_for_eval(const EvalArgs& a) {
  Loaded l{io::checkpoint_load(a.ckpt), {}};
  if (!a.data.empty()) {
    l.ck.config.data_dir = a.data;
    l.ck.config.split.clear();
  }
  if (l.ck.config.data_dir.empty()) throw io::ConfigError("no dataset: pass --data");
  l.dataset = io::load_dataset(l.ck.config.data_dir, l.ck.config.split);
  fit_dataset(l.dataset, l.ck.config);
  return l;
}

fs::path default_output(const std::string& ckpt, const std::string& suffix) {
  fs::path p(ckpt);
  p.replace_extension();
  p += suffix;
  return p;
}

int eval_pose(const EvalArgs& a) {
  Loaded l = load_for_eval(a);
  io::RunConfig& config = l.ck.config;
  if (a.mode == "mean") config.eval.pose_mode = AggregateMode::kMean;
  else if (a.mode == "median") config.eval.pose_mode = AggregateMode::kMedian;
  else throw UsageError("--mode must be mean or median");
  const auto pred = predicted_poses(l.ck.params, config.layout(), *config.intrinsics, config.eval.pose_mode);
  const PoseEvaluation e = evaluate_poses(pred, l.dataset.poses);
  const fs::path plot = a.plot.empty() ? default_output(a.ckpt, ".trajectory.svg") : fs::path(a.plot);
  const fs::path csv = a.csv.empty() ? sibling(plot, ".csv") : fs::path(a.csv);
  ensure_parent(plot);
  ensure_parent(csv);
  trajectory_export(pred, l.dataset.poses, e.alignment, plot, csv);
  io::save_config(sibling(plot, ".cfg"), config);
  std::fputs(format_pose_table(e).c_str(), stdout);
  return kOk;
}

int eval_depth(const EvalArgs& a) {
  Loaded l = load_for_eval(a);
  io::RunConfig& config = l.ck.config;
  if (a.min_depth) config.eval.min_depth_m = *a.min_depth;
  if (a.max_depth) config.eval.max_depth_m = *a.max_depth;
  config.validate();
  const auto pred = predicted_depths(l.ck.params, config.layout());
  if (pred.size() != l.dataset.size())
    throw std::invalid_argument("checkpoint and dataset frame counts differ");
  const auto report = depth_metrics(pred, l.dataset.depths, config.eval.min_depth_m, config.eval.max_depth_m);
  const std::string table = format_depth_table(report);
  const fs::path csv = a.csv.empty() ? default_output(a.ckpt, ".depth.csv") : fs::path(a.csv);
  write_text(csv, table);
  io::save_config(sibling(csv, ".cfg"), config);
  std::fputs(table.c_str(), stdout);
  if (!report.skipped_frames.empty())
    std::fprintf(stderr, "note: %zu frame(s) had no valid pixels\n", report.skipped_frames.size());
  return kOk;
}

// ---------------------------------------------------------------------------

struct GradArgs {
  std::string config;
  std::size_t samples = 150;
  double tolerance = 1e-4;
};

int grad_check(const GradArgs& a) {
  GradSuiteOptions opt;
  if (!a.config.empty()) {
    const io::RunConfig config = io::load_config(a.config);
    config.fit.validate();
    opt.seed = config.fit.seed;
  }
  if (a.samples == 0) throw UsageError("--samples must be positive");
  opt.samples = a.samples;
  opt.min_coordinates = std::min<std::size_t>(opt.min_coordinates, a.samples);
  opt.tolerance = a.tolerance;
  bool ok = true;
  std::printf("check,parameters,checked,skipped,max_rel_error,median_rel_error,status\n");
  for (const auto& r : run_gradient_suite(opt)) {
    std::printf("%s,%zu,%zu,%zu,%.3e,%.3e,%s\n", r.name.c_str(), r.parameters, r.report.checked, r.report.skipped,
                r.report.max_rel_error, r.report.median_rel_error, r.passed ? "ok" : "FAIL");
    ok = ok && r.passed;
  }
  return ok ? kOk : kCheck;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Direct fitting of per-frame depth and directed scene coordinates"};
  app.require_subcommand(1);

  GenSceneArgs gen;
  auto* g = app.add_subcommand("gen-scene", "render a synthetic sequence in the on-disk dataset layout");
  g->add_option("--pattern", gen.pattern, "arc | lateral | orbit")->capture_default_str();
  g->add_option("--frames", gen.frames)->capture_default_str()->check(CLI::Range(3, 100000));
  g->add_option("--size", gen.size, "WIDTHxHEIGHT")->capture_default_str();
  g->add_option("--seed", gen.seed, "texture seed")->capture_default_str();
  g->add_option("--scale", gen.scale, "camera travel per frame")->capture_default_str();
  g->add_option("--radius", gen.radius, "arc / orbit radius")->capture_default_str();
  g->add_option("--config", gen.base_config, "run config whose non-scene fields are carried into run.cfg");
  g->add_option("--out", gen.out)->required();

  FitArgs fa;
  auto* f = app.add_subcommand("fit", "fit depth and DSC tables to a dataset");
  f->add_option("--data", fa.data, "dataset directory (overrides data_dir)");
  f->add_option("--config", fa.config)->required()->check(CLI::ExistingFile);
  f->add_option("--out", fa.out, "checkpoint path")->required();
  f->add_option("--epochs", fa.epochs);
  f->add_option("--seed", fa.seed);

  EvalArgs ep;
  auto* p = app.add_subcommand("eval-pose", "align predicted poses and print median errors");
  p->add_option("--ckpt", ep.ckpt)->required()->check(CLI::ExistingFile);
  p->add_option("--data", ep.data);
  p->add_option("--mode", ep.mode, "mean | median")->capture_default_str();
  p->add_option("--plot", ep.plot, "trajectory SVG");
  p->add_option("--csv", ep.csv, "per-frame CSV");

  EvalArgs ed;
  auto* d = app.add_subcommand("eval-depth", "median-scaled depth metrics");
  d->add_option("--ckpt", ed.ckpt)->required()->check(CLI::ExistingFile);
  d->add_option("--data", ed.data);
  d->add_option("--min", ed.min_depth, "meters");
  d->add_option("--max", ed.max_depth, "meters");
  d->add_option("--csv", ed.csv, "metric table output");

  GradArgs ga;
  auto* c = app.add_subcommand("grad-check", "finite-difference check of every differentiable operation");
  c->add_option("--config", ga.config, "run config (seed)")->check(CLI::ExistingFile);
  c->add_option("--samples", ga.samples, "coordinates per check")->capture_default_str();
  c->add_option("--tol", ga.tolerance, "relative error tolerance")->capture_default_str();

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kUsage;
  }

  try {
    if (*g) return gen_scene(gen);
    if (*f) return run_fit(fa);
    if (*p) return eval_pose(ep);
    if (*d) return eval_depth(ed);
    if (*c) return grad_check(ga);
  } catch (const UsageError& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return kUsage;
  } catch (const io::ConfigError& e) {
    std::fprintf(stderr, "config error: %s\n", e.what());
    return kConfig;
  } catch (const io::IoError& e) {
    std::fprintf(stderr, "I/O error: %s\n", e.what());
    return kIo;
  } catch (const FitError& e) {
    std::fprintf(stderr, "fit failed: %s\n", e.what());
    return kFit;
  } catch (const std::domain_error& e) {
    std::fprintf(stderr, "fit failed: %s\n", e.what());
    return kFit;
  } catch (const DegenerateInputError& e) {
    std::fprintf(stderr, "evaluation failed: %s\n", e.what());
    return kDegenerate;
  } catch (const fs::filesystem_error& e) {
    std::fprintf(stderr, "I/O error: %s\n", e.what());
    return kIo;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return kOther;
  }
  return kUsage;
}
