// Copyright Contributors to the glr Project
// SPDX-License-Identifier: Apache-2.0

#include "glr/harness.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <map>
#include <sstream>

#include "glr/error.hpp"
#include "glr/metrics.hpp"
#include "glr/psv.hpp"

namespace glr {

namespace fs = std::filesystem;

// Configuration -----------------------------------------------------------------

std::string to_string(LossKind k) {
  switch (k) {
    case LossKind::l2:
      return "l2";
    case LossKind::l1:
      return "l1";
    case LossKind::schedule:
      return "schedule";
  }
  return "?";
}

LossKind parse_loss(const std::string& s) {
  if (s == "l2") return LossKind::l2;
  if (s == "l1") return LossKind::l1;
  if (s == "schedule") return LossKind::schedule;
  throw ParseError("unknown loss '" + s + "' (expected l2, l1 or schedule)", 0);
}

void TrainConfig::validate() const {
  if (scene_dirs.empty()) throw ShapeError("scene_dir is required");
  if (input_views.empty()) throw ShapeError("input_views is required");
  if (target_views.empty()) throw ShapeError("target_views is required");
  for (int t : target_views) {
    if (std::find(input_views.begin(), input_views.end(), t) != input_views.end()) {
      throw ShapeError("target view " + std::to_string(t) + " is also an input view");
    }
  }
  if (model.views != static_cast<int>(input_views.size())) {
    throw ShapeError("model expects " + std::to_string(model.views) + " views but " +
                     std::to_string(input_views.size()) + " input views are listed");
  }
  model.validate();
  if (patch <= 0 || patch % 4 != 0) throw ShapeError("patch must be a positive multiple of 4");
  if (batch < 1) throw ShapeError("batch must be at least 1");
  if (steps < 1) throw ShapeError("steps must be at least 1");
  if (!(lr > 0.0)) throw ShapeError("lr must be positive");
  if (!(clip_norm > 0.0)) throw ShapeError("clip_norm must be positive");
  if (ckpt_every < 0) throw ShapeError("ckpt_every must be non-negative");
  if ((near > 0.0 || far > 0.0) && !(near > 0.0 && far > near)) {
    throw BoundsError("need 0 < near < far");
  }
}

namespace {

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

std::vector<std::string> split_list(const std::string& s) {
  std::vector<std::string> out;
  std::string item;
  for (char c : s) {
    if (c == ',' || c == ' ' || c == '\t') {
      if (!item.empty()) out.push_back(item);
      item.clear();
    } else {
      item += c;
    }
  }
  if (!item.empty()) out.push_back(item);
  return out;
}

template <typename T>
T parse_number(const std::string& s, int line) {
  std::istringstream in(s);
  T v{};
  if (!(in >> v) || !(in >> std::ws).eof()) throw ParseError("bad number '" + s + "'", line);
  return v;
}

bool parse_bool(const std::string& s, int line) {
  if (s == "1" || s == "true" || s == "on" || s == "yes") return true;
  if (s == "0" || s == "false" || s == "off" || s == "no") return false;
  throw ParseError("bad boolean '" + s + "'", line);
}

std::vector<int> parse_ids(const std::string& s, int line) {
  std::vector<int> out;
  for (const std::string& item : split_list(s)) out.push_back(parse_number<int>(item, line));
  return out;
}

std::string join_ids(const std::vector<int>& ids) {
  std::string s;
  for (std::size_t i = 0; i < ids.size(); ++i) s += (i ? "," : "") + std::to_string(ids[i]);
  return s;
}

}  // namespace

TrainConfig parse_train_config(std::istream& in, const fs::path& base_dir) {
  TrainConfig cfg;
  std::map<std::string, int> seen;
  std::string raw;
  int line = 0;
  while (std::getline(in, raw)) {
    ++line;
    if (const auto hash = raw.find('#'); hash != std::string::npos) raw.erase(hash);
    const std::string text = trim(raw);
    if (text.empty()) continue;
    const auto eq = text.find('=');
    if (eq == std::string::npos) throw ParseError("expected 'key = value'", line);
    const std::string key = trim(text.substr(0, eq));
    const std::string value = trim(text.substr(eq + 1));
    if (value.empty()) throw ParseError("empty value for '" + key + "'", line);
    if (seen.contains(key)) throw ParseError("duplicate key '" + key + "'", line);
    seen[key] = line;

    try {
      if (key == "scene_dir") {
        for (const std::string& d : split_list(value)) cfg.scene_dirs.push_back(base_dir / d);
      } else if (key == "input_views") {
        cfg.input_views = parse_ids(value, line);
      } else if (key == "target_views") {
        cfg.target_views = parse_ids(value, line);
      } else if (key == "D") {
        cfg.model.depths = parse_number<int>(value, line);
      } else if (key == "G") {
        cfg.model.group = parse_number<int>(value, line);
      } else if (key == "C") {
        cfg.model.channels = parse_number<int>(value, line);
      } else if (key == "variant") {
        cfg.model.variant = parse_variant(value);
      } else if (key == "upsample") {
        cfg.model.upsample = parse_upsample(value);
      } else if (key == "pos_enc") {
        cfg.model.positional = parse_bool(value, line);
      } else if (key == "ang_enc") {
        cfg.model.angular = parse_bool(value, line);
      } else if (key == "near") {
        cfg.near = parse_number<double>(value, line);
      } else if (key == "far") {
        cfg.far = parse_number<double>(value, line);
      } else if (key == "sampling") {
        cfg.model.sampling = parse_sampling(value);
      } else if (key == "patch") {
        cfg.patch = parse_number<int>(value, line);
      } else if (key == "batch") {
        cfg.batch = parse_number<int>(value, line);
      } else if (key == "steps") {
        cfg.steps = parse_number<std::int64_t>(value, line);
      } else if (key == "lr") {
        cfg.lr = parse_number<double>(value, line);
      } else if (key == "clip_norm") {
        cfg.clip_norm = parse_number<double>(value, line);
      } else if (key == "seed") {
        cfg.seed = parse_number<std::uint64_t>(value, line);
      } else if (key == "loss") {
        cfg.loss = parse_loss(value);
      } else if (key == "ckpt_every") {
        cfg.ckpt_every = parse_number<std::int64_t>(value, line);
      } else if (key == "out_dir") {
        cfg.out_dir = base_dir / value;
      } else {
        throw ParseError("unknown key '" + key + "'", line);
      }
    } catch (const ParseError& e) {
      if (e.line() > 0) throw;
      throw ParseError(e.what(), line);
    } catch (const Error& e) {
      throw ParseError(e.what(), line);
    }
  }
  cfg.model.views = static_cast<int>(cfg.input_views.size());
  return cfg;
}

TrainConfig read_train_config(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open config " + path.string());
  return parse_train_config(in, path.parent_path());
}

void write_train_config(std::ostream& out, const TrainConfig& cfg) {
  std::string dirs;
  for (std::size_t i = 0; i < cfg.scene_dirs.size(); ++i) dirs += (i ? "," : "") + cfg.scene_dirs[i].string();
  out << std::setprecision(17);
  out << "scene_dir = " << dirs << '\n'
      << "input_views = " << join_ids(cfg.input_views) << '\n'
      << "target_views = " << join_ids(cfg.target_views) << '\n'
      << "D = " << cfg.model.depths << '\n'
      << "G = " << cfg.model.group << '\n'
      << "C = " << cfg.model.channels << '\n'
      << "variant = " << to_string(cfg.model.variant) << '\n'
      << "upsample = " << to_string(cfg.model.upsample) << '\n'
      << "pos_enc = " << (cfg.model.positional ? 1 : 0) << '\n'
      << "ang_enc = " << (cfg.model.angular ? 1 : 0) << '\n';
  if (cfg.near > 0.0) out << "near = " << cfg.near << "\nfar = " << cfg.far << '\n';
  out << "sampling = " << to_string(cfg.model.sampling) << '\n'
      << "patch = " << cfg.patch << '\n'
      << "batch = " << cfg.batch << '\n'
      << "steps = " << cfg.steps << '\n'
      << "lr = " << cfg.lr << '\n'
      << "clip_norm = " << cfg.clip_norm << '\n'
      << "seed = " << cfg.seed << '\n'
      << "loss = " << to_string(cfg.loss) << '\n'
      << "ckpt_every = " << cfg.ckpt_every << '\n';
  if (!cfg.out_dir.empty()) out << "out_dir = " << cfg.out_dir.string() << '\n';
}

// Schedules and losses ----------------------------------------------------------

double lr_schedule(std::int64_t step, std::int64_t total, double base, bool final_drop) {
  if (total < 1 || step < 0 || step >= total) {
    throw ShapeError("lr_schedule needs 0 <= step < total");
  }
  // Integer comparisons keep the boundaries exact: step < 0.8 total etc.
  if (step * 10 < total * 8) return base;
  if (!final_drop || step * 100 < total * 95) return base / 10.0;
  return base / 100.0;
}

namespace {

void require_same_shape(const Tensor<float>& pred, const Tensor<float>& gt) {
  require_shape(gt.dims(), pred.dims(), "loss target");
  if (pred.size() == 0) throw ShapeError("loss needs non-empty tensors");
}

}  // namespace

LossValue L2Loss::evaluate(const Tensor<float>& pred, const Tensor<float>& gt) const {
  require_same_shape(pred, gt);
  const double n = static_cast<double>(pred.size());
  LossValue out{0.0, Tensor<float>(pred.dims())};
  for (std::size_t i = 0; i < pred.size(); ++i) {
    const double d = static_cast<double>(pred[i]) - gt[i];
    out.value += d * d;
    out.grad[i] = static_cast<float>(2.0 * d / n);
  }
  out.value /= n;
  return out;
}

LossValue L1Loss::evaluate(const Tensor<float>& pred, const Tensor<float>& gt) const {
  require_same_shape(pred, gt);
  const double n = static_cast<double>(pred.size());
  LossValue out{0.0, Tensor<float>(pred.dims())};
  for (std::size_t i = 0; i < pred.size(); ++i) {
    const double d = static_cast<double>(pred[i]) - gt[i];
    out.value += std::abs(d);
    out.grad[i] = static_cast<float>((d > 0.0 ? 1.0 : d < 0.0 ? -1.0 : 0.0) / n);
  }
  out.value /= n;
  return out;
}

const ImageLoss& LossSchedule::at(std::int64_t step, std::int64_t total) const {
  if (!early || !late) throw ShapeError("loss schedule is missing a loss");
  return static_cast<double>(step) < switch_fraction * static_cast<double>(total) ? *early : *late;
}

LossSchedule make_loss_schedule(LossKind kind) {
  LossSchedule s;
  if (kind == LossKind::l2) s.late = s.early;
  if (kind == LossKind::l1) s.early = s.late;
  return s;
}

LossValue loss(const Tensor<float>& pred, const Tensor<float>& gt, std::int64_t step, std::int64_t total,
               const LossSchedule& schedule) {
  return schedule.at(step, total).evaluate(pred, gt);
}

LossValue loss(const ImageBuffer& pred, const ImageBuffer& gt, std::int64_t step, std::int64_t total,
               const LossSchedule& schedule) {
  if (pred.channels != gt.channels || pred.height != gt.height || pred.width != gt.width) {
    throw ShapeError("loss needs equally shaped images");
  }
  return loss(to_tensor(pred), to_tensor(gt), step, total, schedule);
}

Rect sample_patch(std::mt19937_64& rng, int height, int width, int patch) {
  if (patch <= 0 || patch % 4 != 0) throw ShapeError("patch must be a positive multiple of 4");
  if (patch > height || patch > width) {
    throw ShapeError("patch " + std::to_string(patch) + " does not fit a " + std::to_string(width) + "x" +
                     std::to_string(height) + " image");
  }
  std::uniform_int_distribution<int> ry(0, height - patch);
  std::uniform_int_distribution<int> rx(0, width - patch);
  const int y0 = ry(rng);
  const int x0 = rx(rng);
  return {x0, y0, patch, patch};
}

// Training ----------------------------------------------------------------------

void TrainLog::append(const TrainLogEntry& e) {
  if (!steps.empty() && e.step <= steps.back().step) {
    throw ShapeError("train log step " + std::to_string(e.step) + " does not follow " +
                     std::to_string(steps.back().step));
  }
  steps.push_back(e);
}

void TrainLog::write_csv(std::ostream& out) const {
  out << "step,loss,lr,grad_norm\n" << std::setprecision(9);
  for (const TrainLogEntry& e : steps) out << e.step << ',' << e.loss << ',' << e.lr << ',' << e.grad_norm << '\n';
}

namespace {

struct SampleInputs {
  std::vector<ImageBuffer> images;
  std::vector<Camera> cameras;
};

SampleInputs gather_inputs(const SceneData& scene, const std::vector<int>& ids) {
  SampleInputs s;
  for (int id : ids) {
    const SceneView& v = scene.view(id);
    s.images.push_back(v.image);
    s.cameras.push_back(v.camera);
  }
  return s;
}

Bounds resolve_bounds(const SceneData& scene, const Bounds& requested) {
  return requested.near > 0.0 ? requested : scene.bounds;
}

PlaneSweepVolume sweep(const SceneData& scene, const SampleInputs& in, int target, const Bounds& b,
                       const ModelConfig& m, const Rect& rect) {
  const DepthPlanes planes = sample_depths(b.near, b.far, m.depths, m.sampling);
  return build_psv_world(in.images, in.cameras, scene.view(target).camera, planes, rect, m.angular);
}

// Per-step generator so a resumed run draws the same samples.
std::mt19937_64 step_rng(std::uint64_t seed, std::int64_t step) {
  std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                    static_cast<std::uint32_t>(step), static_cast<std::uint32_t>(static_cast<std::uint64_t>(step) >> 32)};
  return std::mt19937_64(seq);
}

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream out(path);
  out << text;
  if (!out) throw IoError("cannot write " + path.string());
}

}  // namespace

TrainResult train(const TrainConfig& cfg, const std::optional<Checkpoint>& resume, const TrainHooks& hooks) {
  cfg.validate();
  std::vector<SceneData> scenes;
  for (const fs::path& dir : cfg.scene_dirs) scenes.push_back(load_scene(dir));
  std::vector<SampleInputs> inputs;
  for (const SceneData& s : scenes) inputs.push_back(gather_inputs(s, cfg.input_views));

  const ConvGlr<float> model(cfg.model);
  TrainResult result;
  Checkpoint& state = result.state;
  if (resume) {
    if (!(resume->config == cfg.model)) throw ShapeError("checkpoint model config does not match the train config");
    state = *resume;
    if (!state.optimizer) state.optimizer = AdamState<float>::fresh(state.weights);
  } else {
    state.config = cfg.model;
    state.weights = init_weights(cfg.model, cfg.seed);
    state.optimizer = AdamState<float>::fresh(state.weights);
    state.step = 0;
  }

  if (!cfg.out_dir.empty()) fs::create_directories(cfg.out_dir);
  const LossSchedule schedule = make_loss_schedule(cfg.loss);
  const Bounds fixed{cfg.near, cfg.far};

  for (; state.step < cfg.steps; ++state.step) {
    const std::int64_t step = state.step;
    std::mt19937_64 rng = step_rng(cfg.seed, step);
    ParamSet<float> grads = state.weights.zeros_like();
    double loss_sum = 0.0;
    for (int b = 0; b < cfg.batch; ++b) {
      const std::size_t si = std::uniform_int_distribution<std::size_t>(0, scenes.size() - 1)(rng);
      const int target =
          cfg.target_views[std::uniform_int_distribution<std::size_t>(0, cfg.target_views.size() - 1)(rng)];
      const SceneData& scene = scenes[si];
      const ImageBuffer& gt_full = scene.view(target).image;
      const Rect rect = sample_patch(rng, gt_full.height, gt_full.width, cfg.patch);
      const PlaneSweepVolume psv = sweep(scene, inputs[si], target, resolve_bounds(scene, fixed), cfg.model, rect);

      Tape<float> tape;
      const Tensor<float> pred = model.forward(model_input(psv, cfg.model), state.weights, &tape);
      const Tensor<float> gt = to_tensor(crop(gt_full, rect)).reshaped(pred.dims());
      const LossValue lv = loss(pred, gt, step, cfg.steps, schedule);
      loss_sum += lv.value;
      model.backward(lv.grad, state.weights, tape, grads);
    }
    if (cfg.batch > 1) {
      const float inv = 1.0f / static_cast<float>(cfg.batch);
      for (auto& [_, g] : grads)
        for (float& v : g.values()) v *= inv;
    }
    const double mean_loss = loss_sum / cfg.batch;
    const double lr = lr_schedule(step, cfg.steps, cfg.lr, cfg.final_drop);
    const double norm = clip_global_norm(grads, cfg.clip_norm);
    if (!std::isfinite(mean_loss) || !std::isfinite(norm) || !all_finite(grads)) {
      std::ostringstream msg;
      msg << "non-finite training state at step " << step << ": loss " << mean_loss << ", lr " << lr
          << ", grad norm " << norm;
      if (!cfg.out_dir.empty()) write_text(cfg.out_dir / "diagnostic.txt", msg.str() + "\n");
      throw NumericError(msg.str());
    }
    adam_step(state.weights, grads, *state.optimizer, lr);

    const TrainLogEntry entry{step, mean_loss, lr, norm, global_norm(grads)};
    result.log.append(entry);
    if (hooks.on_step) hooks.on_step(entry);

    if (!cfg.out_dir.empty() && cfg.ckpt_every > 0 && (step + 1) % cfg.ckpt_every == 0) {
      Checkpoint snap = state;
      snap.step = step + 1;
      save_checkpoint(cfg.out_dir / ("ckpt_" + std::to_string(step + 1) + ".glrc"), snap);
      const SceneData& scene = scenes.front();
      const int target = cfg.target_views.front();
      const ImageBuffer render =
          render_target(scene, {cfg.input_views, target, fixed, cfg.patch}, model, state.weights);
      const ImageBuffer& gt = scene.view(target).image;
      result.log.evals.push_back({step + 1, psnr(render, gt), ssim(render, gt)});
    }
  }

  if (!cfg.out_dir.empty()) {
    save_checkpoint(cfg.out_dir / "final.glrc", state);
    std::ofstream log(cfg.out_dir / "train_log.csv");
    result.log.write_csv(log);
    if (!result.log.evals.empty()) {
      std::ofstream ev(cfg.out_dir / "eval_log.csv");
      ev << "step,psnr,ssim\n" << std::setprecision(9);
      for (const EvalLogEntry& e : result.log.evals) ev << e.step << ',' << e.psnr << ',' << e.ssim << '\n';
    }
  }
  return result;
}

// Evaluation --------------------------------------------------------------------

std::vector<int> nearest_views(const SceneData& scene, int target, int count) {
  const Eigen::Vector3d c = camera_center(scene.view(target).camera);
  std::vector<std::pair<double, int>> order;
  for (const SceneView& v : scene.views) {
    if (v.id != target) order.emplace_back((camera_center(v.camera) - c).norm(), v.id);
  }
  if (count > static_cast<int>(order.size())) {
    throw ShapeError("scene has " + std::to_string(order.size()) + " views besides the target, " +
                     std::to_string(count) + " requested");
  }
  std::sort(order.begin(), order.end());
  std::vector<int> ids;
  for (int i = 0; i < count; ++i) ids.push_back(order[i].second);
  std::sort(ids.begin(), ids.end());
  return ids;
}

ImageBuffer render_target(const SceneData& scene, const RenderRequest& req, const ConvGlr<float>& model,
                          const ParamSet<float>& weights) {
  if (std::find(req.inputs.begin(), req.inputs.end(), req.target) != req.inputs.end()) {
    throw ShapeError("target view " + std::to_string(req.target) + " is also an input view");
  }
  const Camera& cam = scene.view(req.target).camera;
  const int H = cam.height, W = cam.width;
  if (H % 4 != 0 || W % 4 != 0) throw ShapeError("frame size must be divisible by 4");
  if (req.tile < 0 || req.tile % 4 != 0) throw ShapeError("tile must be a non-negative multiple of 4");
  const int th = req.tile == 0 ? H : std::min(req.tile, H);
  const int tw = req.tile == 0 ? W : std::min(req.tile, W);
  const SampleInputs in = gather_inputs(scene, req.inputs);
  const Bounds b = resolve_bounds(scene, req.bounds);

  ImageBuffer out(3, H, W);
  for (int y0 = 0; y0 < H; y0 += th) {
    for (int x0 = 0; x0 < W; x0 += tw) {
      const Rect rect{x0, y0, std::min(tw, W - x0), std::min(th, H - y0)};
      const ImageBuffer tile = render_view(sweep(scene, in, req.target, b, model.config(), rect), model, weights);
      for (int c = 0; c < 3; ++c)
        for (int y = 0; y < rect.height; ++y)
          for (int x = 0; x < rect.width; ++x) out.at(c, y0 + y, x0 + x) = tile.at(c, y, x);
    }
  }
  return out;
}

void EvalReport::write_csv(std::ostream& out) const {
  out << "view,psnr,ssim\n" << std::setprecision(9);
  for (const ViewMetrics& v : views) out << v.id << ',' << v.psnr << ',' << v.ssim << '\n';
  out << "mean," << mean_psnr << ',' << mean_ssim << '\n';
}

EvalReport score_renders(const SceneData& scene, const std::vector<int>& targets,
                         const std::vector<ImageBuffer>& renders) {
  if (targets.size() != renders.size()) throw ShapeError("one render per target is required");
  if (targets.empty()) throw ShapeError("no evaluation targets");
  EvalReport report;
  for (std::size_t i = 0; i < targets.size(); ++i) {
    const ImageBuffer& gt = scene.view(targets[i]).image;
    report.views.push_back({targets[i], psnr(renders[i], gt), ssim(renders[i], gt)});
    report.mean_psnr += report.views.back().psnr;
    report.mean_ssim += report.views.back().ssim;
  }
  report.mean_psnr /= static_cast<double>(targets.size());
  report.mean_ssim /= static_cast<double>(targets.size());
  return report;
}

EvalReport evaluate(const Checkpoint& ckpt, const SceneData& scene, const std::vector<int>& targets,
                    const EvalOptions& options) {
  const ConvGlr<float> model(ckpt.config);
  std::vector<ImageBuffer> renders;
  for (int t : targets) {
    const std::vector<int> inputs = options.inputs.empty() ? nearest_views(scene, t, ckpt.config.views) : options.inputs;
    renders.push_back(render_target(scene, {inputs, t, options.bounds, options.tile}, model, ckpt.weights));
  }
  return score_renders(scene, targets, renders);
}

}  // namespace glr
