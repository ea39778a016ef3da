// Copyright Contributors to the glr Project
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <iosfwd>
#include <memory>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include "glr/checkpoint.hpp"
#include "glr/convglr.hpp"
#include "glr/image.hpp"
#include "glr/scenes.hpp"

namespace glr {

// Configuration -----------------------------------------------------------------

enum class LossKind { l2, l1, schedule };

std::string to_string(LossKind k);
LossKind parse_loss(const std::string& s);

struct TrainConfig {
  std::vector<std::filesystem::path> scene_dirs;
  std::vector<int> input_views;
  std::vector<int> target_views;
  ModelConfig model;  // model.views follows input_views
  double near = 0.0;  // <= 0: take the bounds of each scene
  double far = 0.0;
  int patch = 64;
  int batch = 1;
  std::int64_t steps = 1000;
  double lr = 1.5e-4;
  double clip_norm = 1.0;
  std::uint64_t seed = 0;
  LossKind loss = LossKind::schedule;
  bool final_drop = true;
  std::int64_t ckpt_every = 0;  // 0 disables periodic checkpoints
  std::filesystem::path out_dir;

  /// Throws ShapeError or BoundsError describing the first violation.
  void validate() const;
};

/// `key = value` lines; '#' starts a comment. Relative paths are resolved
/// against base_dir.
TrainConfig parse_train_config(std::istream& in, const std::filesystem::path& base_dir = {});
TrainConfig read_train_config(const std::filesystem::path& path);
void write_train_config(std::ostream& out, const TrainConfig& cfg);

// Schedules and losses ----------------------------------------------------------

/// base for step < 0.8 total, base / 10 until 0.95 total (or the end when
/// final_drop is off), base / 100 afterwards.
double lr_schedule(std::int64_t step, std::int64_t total, double base, bool final_drop = true);

struct LossValue {
  double value = 0.0;
  Tensor<float> grad;  // dL/dpred, same shape as pred
};

/// Image loss over equally shaped tensors. Perceptual losses plug in here.
class ImageLoss {
 public:
  virtual ~ImageLoss() = default;
  virtual std::string name() const = 0;
  virtual LossValue evaluate(const Tensor<float>& pred, const Tensor<float>& gt) const = 0;
};

/// mean((p - g)^2), gradient 2 (p - g) / N.
class L2Loss final : public ImageLoss {
 public:
  std::string name() const override { return "l2"; }
  LossValue evaluate(const Tensor<float>& pred, const Tensor<float>& gt) const override;
};

/// mean(|p - g|), gradient sign(p - g) / N with sign(0) = 0.
class L1Loss final : public ImageLoss {
 public:
  std::string name() const override { return "l1"; }
  LossValue evaluate(const Tensor<float>& pred, const Tensor<float>& gt) const override;
};

/// `early` until step reaches switch_fraction of total, then `late`.
struct LossSchedule {
  std::shared_ptr<const ImageLoss> early = std::make_shared<L2Loss>();
  std::shared_ptr<const ImageLoss> late = std::make_shared<L1Loss>();
  double switch_fraction = 0.9;

  const ImageLoss& at(std::int64_t step, std::int64_t total) const;
};

LossSchedule make_loss_schedule(LossKind kind);

LossValue loss(const Tensor<float>& pred, const Tensor<float>& gt, std::int64_t step, std::int64_t total,
               const LossSchedule& schedule = {});
LossValue loss(const ImageBuffer& pred, const ImageBuffer& gt, std::int64_t step, std::int64_t total,
               const LossSchedule& schedule = {});

/// Uniform over all valid top-left corners.
Rect sample_patch(std::mt19937_64& rng, int height, int width, int patch);

// Training ----------------------------------------------------------------------

struct TrainLogEntry {
  std::int64_t step = 0;
  double loss = 0.0;
  double lr = 0.0;
  double grad_norm = 0.0;     // before clipping
  double clipped_norm = 0.0;  // after clipping
};

struct EvalLogEntry {
  std::int64_t step = 0;
  double psnr = 0.0;
  double ssim = 0.0;
};

struct TrainLog {
  std::vector<TrainLogEntry> steps;
  std::vector<EvalLogEntry> evals;

  /// Enforces a strictly increasing step index.
  void append(const TrainLogEntry& e);
  void write_csv(std::ostream& out) const;
};

struct TrainResult {
  Checkpoint state;  // final weights, optimizer state and step
  TrainLog log;
};

struct TrainHooks {
  std::function<void(const TrainLogEntry&)> on_step;
};

/// Runs steps [resume.step, cfg.steps). Writes `train_log.csv`, periodic
/// `ckpt_<step>.glrc` and `final.glrc` under cfg.out_dir when it is set.
/// A non-finite loss or gradient aborts with NumericError naming the step,
/// learning rate and gradient norm.
TrainResult train(const TrainConfig& cfg, const std::optional<Checkpoint>& resume = std::nullopt,
                  const TrainHooks& hooks = {});

// Evaluation --------------------------------------------------------------------

/// `count` views closest to the target camera centre (ties by id), target
/// excluded, returned in ascending id order.
std::vector<int> nearest_views(const SceneData& scene, int target, int count);

struct RenderRequest {
  std::vector<int> inputs;
  int target = 0;
  Bounds bounds;  // near <= 0 uses the scene bounds
  int tile = 0;   // 0 renders the whole frame in one pass
};

/// Full-frame render through non-overlapping tiles.
ImageBuffer render_target(const SceneData& scene, const RenderRequest& req, const ConvGlr<float>& model,
                          const ParamSet<float>& weights);

struct ViewMetrics {
  int id = 0;
  double psnr = 0.0;
  double ssim = 0.0;
};

struct EvalReport {
  std::vector<ViewMetrics> views;
  double mean_psnr = 0.0;
  double mean_ssim = 0.0;

  void write_csv(std::ostream& out) const;
};

struct EvalOptions {
  std::vector<int> inputs;  // empty: nearest views per target
  Bounds bounds;
  int tile = 0;
};

/// Throws ShapeError when a target is also an input view.
EvalReport evaluate(const Checkpoint& ckpt, const SceneData& scene, const std::vector<int>& targets,
                    const EvalOptions& options = {});

/// Same protocol with precomputed renders, one per target.
EvalReport score_renders(const SceneData& scene, const std::vector<int>& targets,
                         const std::vector<ImageBuffer>& renders);

}  // namespace glr
