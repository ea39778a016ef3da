// Copyright Contributors to the glr Project
// SPDX-License-Identifier: Apache-2.0

#include "glr/cli.hpp"

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <optional>
#include <ostream>

#include <CLI11.hpp>

#include "glr/checkpoint.hpp"
#include "glr/diagnostics.hpp"
#include "glr/error.hpp"
#include "glr/harness.hpp"
#include "glr/psv.hpp"
#include "glr/scenes.hpp"
#include "glr/tensor_io.hpp"

namespace glr {

namespace fs = std::filesystem;

namespace {

std::vector<int> all_views_except(const SceneData& scene, std::optional<int> skip) {
  std::vector<int> ids;
  for (int id : scene.ids())
    if (!skip || id != *skip) ids.push_back(id);
  return ids;
}

Bounds pick_bounds(const SceneData& scene, std::optional<double> near, std::optional<double> far) {
  Bounds b = scene.bounds;
  if (near) b.near = *near;
  if (far) b.far = *far;
  if (!(b.near > 0.0 && b.far > b.near)) throw BoundsError("need 0 < near < far");
  return b;
}

void require_view(const SceneData& scene, int id) {
  const auto ids = scene.ids();
  if (std::find(ids.begin(), ids.end(), id) == ids.end()) {
    throw ShapeError("scene has no view with id " + std::to_string(id));
  }
}

struct Options {
  std::string scene, out, weights, report, config, resume;
  int target = 0;
  int depths = 0;
  int tile = 0;
  std::uint64_t seed = 0;
  std::optional<double> near, far;
  std::string sampling = "depth";
  std::vector<int> inputs, targets;
  bool angular = false;
};

int cmd_build_psv(const Options& o, std::ostream& out) {
  const SceneData scene = load_scene(o.scene);
  require_view(scene, o.target);
  const std::vector<int> inputs = o.inputs.empty() ? scene.ids() : o.inputs;
  const Bounds b = pick_bounds(scene, o.near, o.far);
  std::vector<ImageBuffer> images;
  std::vector<Camera> cams;
  for (int id : inputs) {
    images.push_back(scene.view(id).image);
    cams.push_back(scene.view(id).camera);
  }
  const Camera& target = scene.view(o.target).camera;
  const PlaneSweepVolume psv =
      build_psv_world(images, cams, target, sample_depths(b.near, b.far, o.depths, parse_sampling(o.sampling)),
                      Rect{0, 0, target.width, target.height}, o.angular);
  write_glrt(fs::path(o.out), psv.data);
  out << "wrote " << to_string(psv.data.dims()) << " to " << o.out << '\n';
  return kExitOk;
}

int cmd_train(const Options& o, std::ostream& out) {
  const TrainConfig cfg = read_train_config(o.config);
  std::optional<Checkpoint> resume;
  if (!o.resume.empty()) resume = load_checkpoint(o.resume);
  TrainHooks hooks;
  hooks.on_step = [&](const TrainLogEntry& e) {
    if ((e.step + 1) % 100 == 0 || e.step + 1 == cfg.steps) {
      out << "step " << e.step + 1 << '/' << cfg.steps << " loss " << e.loss << " lr " << e.lr << " grad_norm "
          << e.grad_norm << '\n';
    }
  };
  const TrainResult r = train(cfg, resume, hooks);
  out << "finished at step " << r.state.step;
  if (!cfg.out_dir.empty()) out << ", weights in " << (cfg.out_dir / "final.glrc").string();
  out << '\n';
  return kExitOk;
}

int cmd_eval(const Options& o, std::ostream& out) {
  const SceneData scene = load_scene(o.scene);
  const Checkpoint ckpt = load_checkpoint(o.weights);
  for (int t : o.targets) require_view(scene, t);
  EvalOptions opts;
  opts.inputs = o.inputs;
  opts.bounds = pick_bounds(scene, o.near, o.far);
  opts.tile = o.tile;
  const EvalReport report = evaluate(ckpt, scene, o.targets, opts);
  std::ofstream file(o.report);
  report.write_csv(file);
  if (!file) throw IoError("cannot write " + o.report);
  report.write_csv(out);
  return kExitOk;
}

int cmd_render(const Options& o, std::ostream& out) {
  const SceneData scene = load_scene(o.scene);
  const Checkpoint ckpt = load_checkpoint(o.weights);
  require_view(scene, o.target);
  const ConvGlr<float> model(ckpt.config);
  const std::vector<int> inputs = o.inputs.empty() ? nearest_views(scene, o.target, ckpt.config.views) : o.inputs;
  const ImageBuffer img =
      render_target(scene, {inputs, o.target, pick_bounds(scene, o.near, o.far), o.tile}, model, ckpt.weights);
  write_ppm(fs::path(o.out), img);
  out << "wrote " << o.out << '\n';
  return kExitOk;
}

int cmd_focus(const Options& o, std::ostream& out) {
  const SceneData scene = load_scene(o.scene);
  require_view(scene, o.target);
  const std::vector<int> inputs = o.inputs.empty() ? all_views_except(scene, o.target) : o.inputs;
  const FocusStack stack = focus_stack(scene, o.target, inputs, pick_bounds(scene, o.near, o.far), o.depths,
                                       parse_sampling(o.sampling));
  const fs::path dir(o.out);
  fs::create_directories(dir);
  std::ofstream csv(dir / "focus.csv");
  csv << "index,depth,variance\n" << std::setprecision(17);
  for (int d = 0; d < stack.depths.size(); ++d) {
    std::ostringstream name;
    name << "focus_" << std::setw(3) << std::setfill('0') << d << ".ppm";
    write_ppm(dir / name.str(), stack.images[d]);
    csv << d << ',' << stack.depths.distances[d] << ',' << stack.variance[d] << '\n';
  }
  if (!csv) throw IoError("cannot write " + (dir / "focus.csv").string());
  const int best = stack.sharpest();
  out << "sharpest plane " << best << " at depth " << stack.depths.distances[best] << '\n';
  return kExitOk;
}

int cmd_selftest(const Options& o, std::ostream& out) {
  bool ok = true;
  for (const SuiteResult& r : run_selftest(o.seed)) {
    out << (r.passed ? "PASS " : "FAIL ") << r.name << ": " << r.detail << '\n';
    ok = ok && r.passed;
  }
  return ok ? kExitOk : kExitFailure;
}

}  // namespace

int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Plane sweep volumes and convolutional global latent rendering", "glr"};
  app.require_subcommand(1);
  Options o;

  const auto positive = CLI::PositiveNumber;
  const auto sampling = CLI::IsMember({"depth", "disparity"});

  auto* psv = app.add_subcommand("build-psv", "Build a plane sweep volume for a target view and save it as GLRT");
  psv->add_option("--scene", o.scene, "Scene directory")->required()->check(CLI::ExistingDirectory);
  psv->add_option("--target", o.target, "Target view id")->required();
  psv->add_option("--depths", o.depths, "Number of depth planes")->required()->check(positive);
  psv->add_option("--near", o.near, "Nearest plane distance (default: scene bounds)")->check(positive);
  psv->add_option("--far", o.far, "Farthest plane distance (default: scene bounds)")->check(positive);
  psv->add_option("--sampling", o.sampling, "depth or disparity")->check(sampling);
  psv->add_option("--inputs", o.inputs, "Input view ids (default: every view)")->delimiter(',');
  psv->add_flag("--angular", o.angular, "Append the angular channel");
  psv->add_option("--out", o.out, "Output .glrt file")->required();

  auto* train_cmd = app.add_subcommand("train", "Train a model from a config file");
  train_cmd->add_option("--config", o.config, "Config file")->required()->check(CLI::ExistingFile);
  train_cmd->add_option("--resume", o.resume, "Checkpoint to resume from")->check(CLI::ExistingFile);

  auto* eval_cmd = app.add_subcommand("eval", "Render targets and report PSNR and SSIM");
  eval_cmd->add_option("--scene", o.scene, "Scene directory")->required()->check(CLI::ExistingDirectory);
  eval_cmd->add_option("--weights", o.weights, "Checkpoint")->required()->check(CLI::ExistingFile);
  eval_cmd->add_option("--targets", o.targets, "Target view ids")->required()->delimiter(',');
  eval_cmd->add_option("--report", o.report, "Output CSV report")->required();
  eval_cmd->add_option("--inputs", o.inputs, "Input view ids (default: nearest views)")->delimiter(',');
  eval_cmd->add_option("--near", o.near, "Nearest plane distance")->check(positive);
  eval_cmd->add_option("--far", o.far, "Farthest plane distance")->check(positive);
  eval_cmd->add_option("--tile", o.tile, "Tile size, multiple of 4 (0: whole frame)")->check(CLI::NonNegativeNumber);

  auto* render_cmd = app.add_subcommand("render", "Render one target view to PPM");
  render_cmd->add_option("--scene", o.scene, "Scene directory")->required()->check(CLI::ExistingDirectory);
  render_cmd->add_option("--weights", o.weights, "Checkpoint")->required()->check(CLI::ExistingFile);
  render_cmd->add_option("--target", o.target, "Target view id")->required();
  render_cmd->add_option("--out", o.out, "Output .ppm file")->required();
  render_cmd->add_option("--inputs", o.inputs, "Input view ids (default: nearest views)")->delimiter(',');
  render_cmd->add_option("--near", o.near, "Nearest plane distance")->check(positive);
  render_cmd->add_option("--far", o.far, "Farthest plane distance")->check(positive);
  render_cmd->add_option("--tile", o.tile, "Tile size, multiple of 4 (0: whole frame)")->check(CLI::NonNegativeNumber);

  auto* diagnose = app.add_subcommand("diagnose", "Diagnostics");
  diagnose->require_subcommand(1);
  auto* focus = diagnose->add_subcommand("focus", "Write the mean-PSV focus stack of a target view");
  focus->add_option("--scene", o.scene, "Scene directory")->required()->check(CLI::ExistingDirectory);
  focus->add_option("--target", o.target, "Target view id")->required();
  focus->add_option("--out", o.out, "Output directory")->required();
  o.depths = 64;
  focus->add_option("--depths", o.depths, "Number of depth planes")->check(positive);
  focus->add_option("--near", o.near, "Nearest plane distance")->check(positive);
  focus->add_option("--far", o.far, "Farthest plane distance")->check(positive);
  focus->add_option("--sampling", o.sampling, "depth or disparity")->check(sampling);
  focus->add_option("--inputs", o.inputs, "Input view ids (default: every other view)")->delimiter(',');

  auto* selftest = app.add_subcommand("selftest", "Run the homography, epipolar and gradient suites");
  selftest->add_option("--seed", o.seed, "Random seed");

  std::vector<std::string> reversed(args.rbegin(), args.rend());
  try {
    app.parse(reversed);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? kExitOk : kExitUsage;
  }

  try {
    if (*psv) return cmd_build_psv(o, out);
    if (*train_cmd) return cmd_train(o, out);
    if (*eval_cmd) return cmd_eval(o, out);
    if (*render_cmd) return cmd_render(o, out);
    if (*focus) return cmd_focus(o, out);
    if (*selftest) return cmd_selftest(o, out);
  } catch (const IoError& e) {
    err << "error: " << e.what() << '\n';
    return kExitUsage;
  } catch (const ParseError& e) {
    err << "error: " << e.what() << '\n';
    return kExitUsage;
  } catch (const ShapeError& e) {
    err << "error: " << e.what() << '\n';
    return kExitUsage;
  } catch (const BoundsError& e) {
    err << "error: " << e.what() << '\n';
    return kExitUsage;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return kExitFailure;
  }
  err << app.help();
  return kExitUsage;
}

}  // namespace glr
