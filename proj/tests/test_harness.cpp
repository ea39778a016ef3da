// Copyright Contributors to the glr Project
// SPDX-License-Identifier: Apache-2.0

#include <cmath>
#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>

#include <gtest/gtest.h>

#include "glr/error.hpp"
#include "glr/harness.hpp"
#include "glr/metrics.hpp"
#include "glr/parallel.hpp"
#include "glr/tensor_io.hpp"

namespace glr {
namespace {

namespace fs = std::filesystem;

fs::path temp_dir(const std::string& name) {
  const fs::path p = fs::temp_directory_path() / ("glr_test_harness_" + name);
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

fs::path small_scene(const std::string& name, int size = 16, std::uint64_t seed = 1) {
  const fs::path dir = temp_dir(name);
  SceneOptions opt;
  opt.image_size = size;
  save_scene(generate_scene(seed, 2, 4, opt), dir);
  return dir;
}

TrainConfig tiny_config(const fs::path& scene) {
  TrainConfig cfg;
  cfg.scene_dirs = {scene};
  cfg.input_views = {0, 2};
  cfg.target_views = {1, 3};
  cfg.model.depths = 4;
  cfg.model.group = 2;
  cfg.model.channels = 2;
  cfg.model.views = 2;
  cfg.patch = 8;
  cfg.batch = 2;
  cfg.steps = 6;
  cfg.lr = 1e-3;
  cfg.seed = 5;
  return cfg;
}

TEST(LrSchedule, StepBoundaries) {
  EXPECT_EQ(lr_schedule(0, 100, 1.5e-4), 1.5e-4);
  EXPECT_EQ(lr_schedule(79, 100, 1.0), 1.0);
  EXPECT_EQ(lr_schedule(80, 100, 1.0), 0.1);
  EXPECT_EQ(lr_schedule(85, 100, 1.0), 0.1);
  EXPECT_EQ(lr_schedule(94, 100, 1.0), 0.1);
  EXPECT_EQ(lr_schedule(95, 100, 1.0), 0.01);
  EXPECT_DOUBLE_EQ(lr_schedule(97, 100, 1.5e-4, true), 1.5e-6);
  EXPECT_DOUBLE_EQ(lr_schedule(97, 100, 1.5e-4, false), 1.5e-5);
}

TEST(LrSchedule, PiecewiseConstantAndNonIncreasing) {
  for (std::int64_t total : {1, 7, 20, 333, 2000}) {
    double prev = lr_schedule(0, total, 1.0);
    int changes = 0;
    for (std::int64_t s = 1; s < total; ++s) {
      const double lr = lr_schedule(s, total, 1.0);
      EXPECT_LE(lr, prev);
      changes += lr != prev;
      prev = lr;
    }
    EXPECT_LE(changes, 2);
  }
  EXPECT_THROW(lr_schedule(10, 10, 1.0), ShapeError);
  EXPECT_THROW(lr_schedule(-1, 10, 1.0), ShapeError);
}

TEST(Loss, ZeroAtTarget) {
  const Tensor<float> a({1, 3, 4, 4}, 0.3f);
  for (std::int64_t step : {0, 95}) {
    const LossValue v = loss(a, a, step, 100);
    EXPECT_EQ(v.value, 0.0);
    for (float g : v.grad.values()) EXPECT_EQ(g, 0.0f);
  }
}

TEST(Loss, L1OnConstantOffset) {
  const Tensor<float> gt({1, 3, 2, 2}, 0.5f);
  const Tensor<float> pred({1, 3, 2, 2}, 0.75f);
  const LossValue v = L1Loss{}.evaluate(pred, gt);
  EXPECT_EQ(v.value, 0.25);
  for (float g : v.grad.values()) EXPECT_EQ(g, 1.0f / 12.0f);
  const LossValue neg = L1Loss{}.evaluate(gt, pred);
  for (float g : neg.grad.values()) EXPECT_EQ(g, -1.0f / 12.0f);
}

TEST(Loss, L2ValueAndGradient) {
  const Tensor<float> gt({4}, std::vector<float>{0.0f, 0.5f, 1.0f, 0.25f});
  const Tensor<float> pred({4}, std::vector<float>{0.5f, 0.5f, 0.0f, 0.5f});
  const LossValue v = L2Loss{}.evaluate(pred, gt);
  EXPECT_DOUBLE_EQ(v.value, (0.25 + 0.0 + 1.0 + 0.0625) / 4.0);
  EXPECT_FLOAT_EQ(v.grad[0], 2.0f * 0.5f / 4.0f);
  EXPECT_FLOAT_EQ(v.grad[2], 2.0f * -1.0f / 4.0f);
  EXPECT_EQ(v.grad[1], 0.0f);
}

TEST(Loss, SwitchesAtNinetyPercent) {
  const LossSchedule s;
  EXPECT_EQ(s.at(0, 100).name(), "l2");
  EXPECT_EQ(s.at(89, 100).name(), "l2");
  EXPECT_EQ(s.at(90, 100).name(), "l1");
  EXPECT_EQ(s.at(1799, 2000).name(), "l2");
  EXPECT_EQ(s.at(1800, 2000).name(), "l1");
  EXPECT_EQ(make_loss_schedule(LossKind::l2).at(99, 100).name(), "l2");
  EXPECT_EQ(make_loss_schedule(LossKind::l1).at(0, 100).name(), "l1");
}

TEST(Loss, PluggableLoss) {
  struct Doubled final : ImageLoss {
    std::string name() const override { return "doubled"; }
    LossValue evaluate(const Tensor<float>& p, const Tensor<float>& g) const override {
      LossValue v = L2Loss{}.evaluate(p, g);
      v.value *= 2.0;
      return v;
    }
  };
  LossSchedule s;
  s.early = std::make_shared<Doubled>();
  const Tensor<float> a({2}, 0.0f), b({2}, 1.0f);
  EXPECT_EQ(loss(a, b, 0, 10, s).value, 2.0);
  EXPECT_EQ(loss(a, b, 9, 10, s).value, 1.0);
}

TEST(Loss, ShapeMismatchThrows) {
  EXPECT_THROW(loss(Tensor<float>({1, 3, 4, 4}), Tensor<float>({1, 3, 4, 5}), 0, 10), ShapeError);
  EXPECT_THROW(loss(ImageBuffer(3, 4, 4), ImageBuffer(3, 4, 5), 0, 10), ShapeError);
}

TEST(SamplePatch, FullImage) {
  std::mt19937_64 rng(1);
  EXPECT_EQ(sample_patch(rng, 64, 64, 64), (Rect{0, 0, 64, 64}));
}

TEST(SamplePatch, UniformOverCorners) {
  std::mt19937_64 rng(2);
  std::map<std::pair<int, int>, int> counts;
  const int draws = 10000;
  for (int i = 0; i < draws; ++i) {
    const Rect r = sample_patch(rng, 8, 8, 4);
    ASSERT_TRUE(r.inside(8, 8));
    ++counts[{r.x0, r.y0}];
  }
  ASSERT_EQ(counts.size(), 25u);
  const double expected = draws / 25.0;
  double chi2 = 0.0;
  for (const auto& [_, n] : counts) chi2 += (n - expected) * (n - expected) / expected;
  EXPECT_LT(chi2, 51.2);  // 24 degrees of freedom, p = 0.001
}

TEST(SamplePatch, DeterministicAndValidated) {
  std::mt19937_64 a(3), b(3);
  for (int i = 0; i < 20; ++i) EXPECT_EQ(sample_patch(a, 40, 24, 8), sample_patch(b, 40, 24, 8));
  EXPECT_THROW(sample_patch(a, 8, 8, 12), ShapeError);
  EXPECT_THROW(sample_patch(a, 8, 8, 6), ShapeError);
}

TEST(TrainConfig, ParseAndWriteRoundTrip) {
  std::istringstream in(R"(# demo
scene_dir = scenes/a, scenes/b
input_views = 0, 1,2
target_views = 3
D = 16
G = 2
C = 8
variant = specialized
upsample = bilinear
pos_enc = 0
ang_enc = true
near = 1.5
far = 4
sampling = disparity
patch = 32
batch = 2
steps = 500
lr = 1.5e-4
clip_norm = 0.5
seed = 9
loss = l2
ckpt_every = 100
out_dir = runs/x
)");
  const TrainConfig cfg = parse_train_config(in, "/base");
  EXPECT_EQ(cfg.scene_dirs, (std::vector<fs::path>{"/base/scenes/a", "/base/scenes/b"}));
  EXPECT_EQ(cfg.input_views, (std::vector<int>{0, 1, 2}));
  EXPECT_EQ(cfg.model.views, 3);
  EXPECT_EQ(cfg.model.variant, RenderVariant::specialized);
  EXPECT_EQ(cfg.model.upsample, UpsampleMode::bilinear);
  EXPECT_FALSE(cfg.model.positional);
  EXPECT_TRUE(cfg.model.angular);
  EXPECT_EQ(cfg.model.sampling, DepthSampling::uniform_disparity);
  EXPECT_EQ(cfg.near, 1.5);
  EXPECT_EQ(cfg.steps, 500);
  EXPECT_EQ(cfg.lr, 1.5e-4);
  EXPECT_EQ(cfg.loss, LossKind::l2);
  EXPECT_EQ(cfg.out_dir, fs::path("/base/runs/x"));
  EXPECT_NO_THROW(cfg.validate());

  std::stringstream ss;
  write_train_config(ss, cfg);
  const TrainConfig back = parse_train_config(ss);
  EXPECT_EQ(back.scene_dirs, cfg.scene_dirs);
  EXPECT_EQ(back.model, cfg.model);
  EXPECT_EQ(back.clip_norm, cfg.clip_norm);
  EXPECT_EQ(back.ckpt_every, cfg.ckpt_every);
  EXPECT_EQ(back.out_dir, cfg.out_dir);
}

int config_error_line(const std::string& text) {
  std::istringstream in(text);
  try {
    parse_train_config(in);
  } catch (const ParseError& e) {
    return e.line();
  }
  return -1;
}

TEST(TrainConfig, ErrorsCarryLineNumbers) {
  EXPECT_EQ(config_error_line("D = 4\nbogus = 1\n"), 2);
  EXPECT_EQ(config_error_line("D = four\n"), 1);
  EXPECT_EQ(config_error_line("\n\nvariant = wide\n"), 3);
  EXPECT_EQ(config_error_line("D = 4\nD = 8\n"), 2);
  EXPECT_EQ(config_error_line("patch 32\n"), 1);
}

TEST(TrainConfig, Validation) {
  TrainConfig cfg = tiny_config("/nowhere");
  EXPECT_NO_THROW(cfg.validate());
  TrainConfig leak = cfg;
  leak.target_views = {0};
  EXPECT_THROW(leak.validate(), ShapeError);
  TrainConfig patch = cfg;
  patch.patch = 10;
  EXPECT_THROW(patch.validate(), ShapeError);
  TrainConfig steps = cfg;
  steps.steps = 0;
  EXPECT_THROW(steps.validate(), ShapeError);
  TrainConfig bounds = cfg;
  bounds.near = 2.0;
  bounds.far = 1.0;
  EXPECT_THROW(bounds.validate(), BoundsError);
}

TEST(Train, LogsEveryStepAndClips) {
  TrainConfig cfg = tiny_config(small_scene("clip"));
  cfg.clip_norm = 0.05;
  const TrainResult r = train(cfg);
  ASSERT_EQ(r.log.steps.size(), 6u);
  for (std::size_t i = 0; i < r.log.steps.size(); ++i) {
    const TrainLogEntry& e = r.log.steps[i];
    EXPECT_EQ(e.step, static_cast<std::int64_t>(i));
    EXPECT_TRUE(std::isfinite(e.loss));
    EXPECT_LE(e.clipped_norm, cfg.clip_norm * (1 + 1e-6));
    EXPECT_EQ(e.lr, lr_schedule(e.step, 6, cfg.lr));
  }
  EXPECT_EQ(r.state.step, 6);
  EXPECT_EQ(r.state.optimizer->step, 6);
}

TEST(Train, DeterministicForAGivenSeed) {
  set_deterministic(true);
  TrainConfig cfg = tiny_config(small_scene("det"));
  const TrainResult a = train(cfg);
  const TrainResult b = train(cfg);
  set_deterministic(false);
  EXPECT_EQ(a.state.weights, b.state.weights);
  EXPECT_EQ(*a.state.optimizer, *b.state.optimizer);
  cfg.seed = 6;
  EXPECT_FALSE(train(cfg).state.weights == a.state.weights);
}

TEST(Train, ResumeMatchesUninterruptedRun) {
  TrainConfig cfg = tiny_config(small_scene("resume"));
  const TrainResult full = train(cfg);
  TrainConfig first = cfg;
  first.out_dir = temp_dir("resume_out");
  first.ckpt_every = 3;
  train(first);
  const Checkpoint mid = load_checkpoint(first.out_dir / "ckpt_3.glrc");
  EXPECT_EQ(mid.step, 3);
  const TrainResult rest = train(cfg, mid);
  EXPECT_EQ(rest.log.steps.front().step, 3);
  EXPECT_EQ(rest.state.weights, full.state.weights);
}

TEST(Train, NoRemainingStepsLeavesWeightsUnchanged) {
  TrainConfig cfg = tiny_config(small_scene("noop"));
  const TrainResult done = train(cfg);
  const TrainResult again = train(cfg, done.state);
  EXPECT_TRUE(again.log.steps.empty());
  EXPECT_EQ(again.state.weights, done.state.weights);
}

TEST(Train, WritesArtifacts) {
  TrainConfig cfg = tiny_config(small_scene("artifacts"));
  cfg.out_dir = temp_dir("artifacts_out");
  cfg.ckpt_every = 2;
  const TrainResult r = train(cfg);
  for (const char* f : {"ckpt_2.glrc", "ckpt_4.glrc", "ckpt_6.glrc", "final.glrc", "train_log.csv", "eval_log.csv"}) {
    EXPECT_TRUE(fs::exists(cfg.out_dir / f)) << f;
  }
  EXPECT_EQ(r.log.evals.size(), 3u);
  std::ifstream log(cfg.out_dir / "train_log.csv");
  std::string header;
  std::getline(log, header);
  EXPECT_EQ(header, "step,loss,lr,grad_norm");
  int rows = 0;
  for (std::string line; std::getline(log, line);) ++rows;
  EXPECT_EQ(rows, 6);
  EXPECT_EQ(load_checkpoint(cfg.out_dir / "final.glrc").weights, r.state.weights);
}

TEST(Train, NonFiniteLossAborts) {
  const fs::path dir = small_scene("nan");
  Tensor<float> img({3, 16, 16}, std::nanf(""));
  write_glrt(dir / "images" / "view_1.glrt", img);
  TrainConfig cfg = tiny_config(dir);
  cfg.target_views = {1};
  cfg.out_dir = temp_dir("nan_out");
  try {
    train(cfg);
    FAIL();
  } catch (const NumericError& e) {
    const std::string msg = e.what();
    EXPECT_NE(msg.find("step 0"), std::string::npos) << msg;
    EXPECT_NE(msg.find("lr"), std::string::npos);
    EXPECT_NE(msg.find("grad norm"), std::string::npos);
  }
  EXPECT_TRUE(fs::exists(cfg.out_dir / "diagnostic.txt"));
}

TEST(TrainLog, StepIndexIsMonotone) {
  TrainLog log;
  log.append({0, 1.0, 0.1, 1.0, 1.0});
  log.append({1, 1.0, 0.1, 1.0, 1.0});
  EXPECT_THROW(log.append({1, 1.0, 0.1, 1.0, 1.0}), ShapeError);
}

TEST(Train, TinyOverfitReducesLoss) {
  const fs::path dir = temp_dir("overfit");
  save_scene(generate_scene(3, 3, 5), dir);
  TrainConfig cfg;
  cfg.scene_dirs = {dir};
  cfg.input_views = {0, 1, 3, 4};
  cfg.target_views = {2};
  cfg.model.depths = 16;
  cfg.model.group = 2;
  cfg.model.channels = 16;
  cfg.model.views = 4;
  cfg.patch = 64;
  cfg.steps = 500;
  cfg.loss = LossKind::l2;
  cfg.seed = 1;
  const TrainResult r = train(cfg);
  const double early = r.log.steps[10].loss;
  const double last = r.log.steps.back().loss;
  EXPECT_LE(last * 10.0, early) << "loss " << early << " -> " << last;
  for (const TrainLogEntry& e : r.log.steps) ASSERT_TRUE(std::isfinite(e.loss));
}

TEST(Evaluate, OracleRendersScorePerfectly) {
  const SceneData scene = load_scene(small_scene("oracle"));
  const std::vector<int> targets = {1, 3};
  const EvalReport rep = score_renders(scene, targets, {scene.view(1).image, scene.view(3).image});
  for (const ViewMetrics& v : rep.views) {
    EXPECT_EQ(v.psnr, 99.0);
    EXPECT_EQ(v.ssim, 1.0);
  }
  EXPECT_EQ(rep.mean_psnr, 99.0);
  EXPECT_EQ(rep.mean_ssim, 1.0);
}

TEST(Evaluate, MeansAreRowAverages) {
  const SceneData scene = load_scene(small_scene("means"));
  ImageBuffer gray(3, 16, 16, 0.5f);
  const EvalReport rep = score_renders(scene, {0, 1, 2}, {gray, scene.view(1).image, gray});
  double p = 0, s = 0;
  for (const ViewMetrics& v : rep.views) {
    p += v.psnr;
    s += v.ssim;
  }
  EXPECT_DOUBLE_EQ(rep.mean_psnr, p / 3.0);
  EXPECT_DOUBLE_EQ(rep.mean_ssim, s / 3.0);
  std::ostringstream csv;
  rep.write_csv(csv);
  EXPECT_EQ(csv.str().rfind("view,psnr,ssim\n0,", 0), 0u);
}

TEST(Evaluate, TargetAmongInputsIsRejected) {
  const SceneData scene = load_scene(small_scene("leak"));
  Checkpoint ckpt;
  ckpt.config = tiny_config("").model;
  ckpt.weights = init_weights(ckpt.config, 1);
  EXPECT_THROW(evaluate(ckpt, scene, {1}, {.inputs = {0, 1}}), ShapeError);
  EXPECT_NO_THROW(evaluate(ckpt, scene, {1}, {.inputs = {0, 2}}));
}

TEST(Evaluate, TiledRenderMatchesSinglePassWhenTheFrameFits) {
  const SceneData scene = load_scene(small_scene("tiles"));
  const ModelConfig m = tiny_config("").model;
  const ConvGlr<float> model(m);
  const ParamSet<float> w = init_weights(m, 2);
  const ImageBuffer one = render_target(scene, {{0, 2}, 1, {}, 0}, model, w);
  const ImageBuffer fits = render_target(scene, {{0, 2}, 1, {}, 16}, model, w);
  const ImageBuffer larger = render_target(scene, {{0, 2}, 1, {}, 64}, model, w);
  EXPECT_EQ(one, fits);
  EXPECT_EQ(one, larger);
  const ImageBuffer tiled = render_target(scene, {{0, 2}, 1, {}, 8}, model, w);
  EXPECT_EQ(tiled.width, 16);
  EXPECT_EQ(tiled.height, 16);
  // The top-left tile only differs from the full frame near its inner border.
  EXPECT_NE(tiled, one);
}

TEST(Evaluate, NearestViewsExcludeTarget) {
  const SceneData scene = load_scene(small_scene("nearest"));
  EXPECT_EQ(nearest_views(scene, 0, 2), (std::vector<int>{1, 2}));
  EXPECT_EQ(nearest_views(scene, 3, 1), (std::vector<int>{2}));
  EXPECT_THROW(nearest_views(scene, 0, 4), ShapeError);
}

}  // namespace
}  // namespace glr
