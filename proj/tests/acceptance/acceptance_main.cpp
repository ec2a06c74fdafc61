// One PASS/FAIL line per acceptance criterion. Exit status is nonzero if any
// criterion fails.

#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iterator>
#include <sstream>
#include <string>

#include "dscloc/grad_suite.hpp"
#include "dscloc/io/checkpoint.hpp"
#include "dscloc/observability.hpp"
#include "dscloc/pipeline.hpp"
#include "support/geometry_suite.hpp"
#include "support/oracles.hpp"

using namespace dscloc;
namespace fs = std::filesystem;

namespace {

struct Outcome {
  bool pass = false;
  std::string detail;
};

std::string fmt(const char* f, auto... args) {
  char buf[512];
  std::snprintf(buf, sizeof(buf), f, args...);
  return buf;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), {}};
}

fs::path scratch(const std::string& name) {
  const fs::path p = fs::temp_directory_path() / ("dscloc_acceptance_" + name);
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

// ---------------------------------------------------------------------------

Outcome geometry() {
  const auto r = oracle::run_geometry_suite(1000, 20240601);
  std::string worst_name;
  for (const auto& [k, v] : r.max_error)
    if (v == r.worst()) worst_name = k;
  const double recovery = std::max(r.max_error.at("recovery"), r.max_error.at("frame_recovery"));
  return {r.worst() < 1e-9 && recovery < 1e-9,
          fmt("%d trials, %zu operations, worst %.2e (%s), pose recovery %.2e", r.trials, r.max_error.size(),
              r.worst(), worst_name.c_str(), recovery)};
}

Outcome gradients() {
  bool ok = true;
  std::size_t min_checked = SIZE_MAX;
  double worst = 0.0;
  bool composed = false;
  std::string failed;
  const auto results = run_gradient_suite();
  for (const auto& r : results) {
    ok = ok && r.passed && r.report.checked >= 100;
    min_checked = std::min(min_checked, r.report.checked);
    worst = std::max(worst, r.report.max_rel_error);
    composed |= r.name == "loop_set_total_loss";
    if (!r.passed) failed += " " + r.name;
  }
  return {ok && composed, fmt("%zu checks, min coordinates %zu, max rel error %.2e%s%s", results.size(), min_checked,
                              worst, failed.empty() ? "" : ", failed:", failed.c_str())};
}

Outcome loop_closure() {
  const Intrinsics K = synthetic_intrinsics(80, 60);
  const PlanarScene scene = default_room(1);
  const auto traj = generate_trajectory({});
  std::vector<ObservedFrame> frames;
  for (int f : {3, 4, 5}) {
    const auto r = render_frame(scene, traj[f].pose, K, 80, 60);
    frames.push_back({r.color, r.depth, traj[f].pose});
  }
  const std::vector<int> idx{0, 1, 2};
  const auto pairs = lcvs_pairs(idx);
  const std::array<int, 3> triple{0, 1, 2};
  const int closed = linearize_pairs(frames, pairs, K).null_space_dimension(1e-6);
  const int chain = linearize_pairs(frames, chain_pairs(std::span<const int, 3>(triple)), K).null_space_dimension(1e-6);
  const std::vector<int> five{0, 1, 2, 3, 4};
  const bool counts = pairs.size() == 6 && lcvs_pairs(five).size() == 20;
  return {counts && closed <= 7 && chain > closed,
          fmt("pairs K=3: %zu, K=5: %zu; null space closed %d, chain %d", pairs.size(), lcvs_pairs(five).size(), closed,
              chain)};
}

struct EndToEnd {
  std::string checkpoint;
  std::string pose_table;
  std::string depth_table;
  PoseEvaluation pose;
  DepthMetricReport depth;
};

// Generates the 80x60 arc on disk, fits it, checkpoints and evaluates. Both
// runs use the same directory since the checkpoint embeds data_dir.
EndToEnd run_end_to_end() {
  const fs::path dir = scratch("end_to_end");
  io::RunConfig config = generate_synthetic_scene({}, dir / "scene");
  config.fit.learning_rate = 1e-3;
  config.fit.epochs = 555;
  config.validate();
  const io::Dataset dataset = io::load_dataset(config.data_dir);
  const FitResult result = fit(fit_dataset(dataset, config), config.fit, config.pooling_factor_px);
  const fs::path ckpt = dir / "run.ckpt";
  io::checkpoint_save(ckpt, result.params, config);

  const io::Checkpoint ck = io::checkpoint_load(ckpt);
  const FrameLayout layout = ck.config.layout();
  EndToEnd out;
  out.checkpoint = slurp(ckpt);
  out.pose = evaluate_poses(predicted_poses(ck.params, layout, *ck.config.intrinsics, ck.config.eval.pose_mode),
                            dataset.poses);
  out.depth = depth_metrics(predicted_depths(ck.params, layout), dataset.depths, 0.1, 10.0);
  out.pose_table = format_pose_table(out.pose);
  out.depth_table = format_depth_table(out.depth);
  fs::remove_all(dir);
  return out;
}

EndToEnd first_run;

Outcome recovery() {
  first_run = run_end_to_end();
  const auto& p = first_run.pose;
  const auto& d = first_run.depth;
  const bool ok = p.position_fraction() < 0.05 && p.errors.median_attitude_deg < 5.0 && d.abs_rel < 0.10 &&
                  d.scale_std_over_med < 0.05;
  return {ok, fmt("position %.2f%% of diameter (<5), attitude %.2f deg (<5), abs_rel %.4f (<0.10), "
                  "scale std/med %.4f (<0.05), alignment scale %.3g",
                  100.0 * p.position_fraction(), p.errors.median_attitude_deg, d.abs_rel, d.scale_std_over_med,
                  p.alignment.scale)};
}

Outcome evaluation() {
  oracle::Random rnd(5);
  double worst_sim3 = 0.0;
  for (int trial = 0; trial < 100; ++trial) {
    Sim3 truth;
    truth.scale = std::exp(rnd.uniform(-1.5, 1.5));
    truth.rotation = axis_angle_to_matrix(rnd.axis_angle(3.1));
    truth.translation = rnd.vec3(-5.0, 5.0);
    std::vector<Vec3<double>> src, dst;
    for (int i = 0; i < 10; ++i) {
      src.push_back(rnd.vec3(-2, 2));
      dst.push_back(truth.apply(src.back()));
    }
    const Sim3 T = umeyama_sim3(src, dst);
    worst_sim3 = std::max({worst_sim3, std::abs(T.scale - truth.scale),
                           (oracle::eig(T.rotation) - oracle::eig(truth.rotation)).cwiseAbs().maxCoeff(),
                           (oracle::eig(T.translation) - oracle::eig(truth.translation)).cwiseAbs().maxCoeff()});
  }

  double worst_depth = 0.0;
  for (int trial = 0; trial < 50; ++trial) {
    std::vector<DepthMap<double>> gt, pred;
    for (int f = 0; f < 5; ++f) {
      gt.emplace_back(8, 6, 1);
      pred.emplace_back(8, 6, 1);
      for (double& v : gt.back().data) v = rnd.uniform(0.02, 14.0);
      for (double& v : pred.back().data) v = rnd.uniform(0.05, 3.0);
    }
    const auto r = depth_metrics(pred, gt, 0.1, 10.0);
    const auto o = oracle::depth_row(pred, gt, 0.1, 10.0);
    for (auto [a, b] : {std::pair{r.abs_rel, o.abs_rel}, {r.sq_rel, o.sq_rel}, {r.rmse, o.rmse},
                        {r.rmse_log, o.rmse_log}, {r.delta1, o.d1}, {r.delta2, o.d2}, {r.delta3, o.d3},
                        {r.scale_std_over_med, o.std_over_med}})
      worst_depth = std::max(worst_depth, std::abs(a - b));
  }

  std::vector<DepthMap<double>> gt, scaled;
  for (int f = 0; f < 4; ++f) {
    gt.emplace_back(8, 6, 1);
    for (double& v : gt.back().data) v = rnd.uniform(0.2, 9.0);
    scaled.push_back(gt.back());
    for (double& v : scaled.back().data) v *= 3.7;
  }
  const auto c = depth_metrics(scaled, gt, 0.1, 10.0);
  const double scaled_err = std::max({c.abs_rel, c.sq_rel, c.rmse, c.rmse_log, c.scale_std_over_med});
  const bool deltas = c.delta1 == 1.0 && c.delta2 == 1.0 && c.delta3 == 1.0;
  return {worst_sim3 < 1e-9 && worst_depth < 1e-12 && scaled_err < 1e-12 && deltas,
          fmt("umeyama worst %.2e, depth metrics vs brute force %.2e, c*gt errors %.2e, deltas %s", worst_sim3,
              worst_depth, scaled_err, deltas ? "1" : "!=1")};
}

Outcome round_trips() {
  // Identity warp.
  const Intrinsics K = synthetic_intrinsics(80, 60);
  const auto frame = render_frame(default_room(1), Pose<double>{}, K, 80, 60);
  const auto warped = synthesize(frame.color, frame.depth, RelativeTransform<double>{}, K, K);
  double warp_err = 0.0;
  for (std::size_t i = 0; i < frame.color.data.size(); ++i)
    if (warped.mask.valid[i / 3]) warp_err = std::max(warp_err, std::abs(warped.image.data[i] - frame.color.data[i]));

  // Dataset.
  const fs::path dir = scratch("roundtrip");
  const io::RunConfig config = generate_synthetic_scene({}, dir / "scene");
  const io::Dataset data = io::load_dataset(config.data_dir);
  const auto traj = generate_trajectory({});
  double depth_err = 0.0;
  std::size_t invalid = 0;
  for (std::size_t f = 0; f < data.size(); ++f) {
    const auto r = render_frame(default_room(1), traj[f].pose, K, 80, 60);
    for (std::size_t i = 0; i < r.depth.data.size(); ++i) {
      invalid += !data.depth_valid[f].valid[i];
      depth_err = std::max(depth_err, std::abs(data.depths[f].data[i] - r.depth.data[i]));
    }
  }

  // Checkpoint.
  FitConfig fc;
  const ParamStore params = init_params(data.size(), config.layout(), fc, 42);
  io::checkpoint_save(dir / "a.ckpt", params, config);
  const io::Checkpoint ck = io::checkpoint_load(dir / "a.ckpt");
  const bool params_exact =
      ck.params.size() == params.size() &&
      std::memcmp(ck.params.values().data(), params.values().data(), params.size() * sizeof(double)) == 0;
  io::checkpoint_save(dir / "b.ckpt", ck.params, ck.config);
  const bool bytes_exact = slurp(dir / "a.ckpt") == slurp(dir / "b.ckpt");
  fs::remove_all(dir);
  return {warp_err < 1e-12 && data.size() == 9 && invalid == 0 && depth_err <= 0.5e-3 && params_exact && bytes_exact,
          fmt("identity warp max error %.1e over %zu valid pixels, %zu frames, depth max error %.2e m, "
              "%zu invalid, params %s, bytes %s",
              warp_err, warped.mask.count(), data.size(), depth_err, invalid, params_exact ? "exact" : "differ",
              bytes_exact ? "exact" : "differ")};
}

Outcome determinism() {
  const EndToEnd second = run_end_to_end();
  const bool ckpt = !first_run.checkpoint.empty() && first_run.checkpoint == second.checkpoint;
  const bool tables = first_run.pose_table == second.pose_table && first_run.depth_table == second.depth_table;
  return {ckpt && tables, fmt("checkpoints %s (%zu bytes), metric tables %s", ckpt ? "identical" : "differ",
                              second.checkpoint.size(), tables ? "identical" : "differ")};
}

}  // namespace

int main() {
  struct Criterion {
    int id;
    const char* name;
    double budget_s;
    std::function<Outcome()> run;
  };
  const Criterion criteria[] = {
      {1, "geometry oracles", 10.0, geometry},
      {2, "gradient checks", 120.0, gradients},
      {3, "loop closure", 60.0, loop_closure},
      {4, "synthetic recovery", 900.0, recovery},
      {5, "evaluation exactness", 30.0, evaluation},
      {6, "round trips", 30.0, round_trips},
      {7, "determinism", 900.0, determinism},
  };
  int failures = 0;
  for (const auto& c : criteria) {
    const auto t0 = std::chrono::steady_clock::now();
    Outcome o;
    try {
      o = c.run();
    } catch (const std::exception& e) {
      o = {false, std::string("exception: ") + e.what()};
    }
    const double s = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    const bool pass = o.pass && s < c.budget_s;
    failures += !pass;
    std::printf("criterion %d %-22s %s  (%.1f s of %.0f s) %s\n", c.id, c.name, pass ? "PASS" : "FAIL", s, c.budget_s,
                o.detail.c_str());
    if (c.id == 4 || c.id == 7) std::printf("%s%s", first_run.pose_table.c_str(), first_run.depth_table.c_str());
    std::fflush(stdout);
  }
  return failures == 0 ? 0 : 1;
}
