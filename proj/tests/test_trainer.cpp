#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <limits>
#include <sstream>

#include "motionfuse/train/trainer.hpp"

using namespace mfuse;
using namespace mfuse::train;
using fusion::FusionConfig;
using fusion::Mechanism;
using fusion::Modality;

namespace {

scene::DatasetMix tiny_mix() {
  scene::GeneratorConfig g;
  g.name = "tiny";
  g.height = g.width = 48;
  g.focal = 50;
  g.radius_px_min = 6;
  g.radius_px_max = 9;
  g.min_bodies = 1;
  g.max_bodies = 2;
  g.min_motion_px = 1.5;
  scene::DatasetMix m;
  m.sources = {{g, 1.0}};
  return m;
}

FusionConfig tiny_model(Mechanism m = Mechanism::kSingle) {
  FusionConfig c = FusionConfig::desk();
  c.mechanism = m;
  c.d_model = 16;
  c.n_heads = 2;
  c.n_queries = 6;
  c.ffn_dim = 24;
  c.n_enc_layers = 1;
  c.n_dec_layers = 2;
  c.n_bottleneck = 3;
  c.backbone_widths = {8, 8, 16, 16};
  c.input_height = c.input_width = 48;
  return c;
}

TrainConfig tiny_train(long long steps, std::uint64_t seed = 3) {
  TrainConfig t;
  t.mix = tiny_mix();
  t.batch_size = 2;
  t.samples_per_epoch = 4;
  t.epochs = static_cast<int>((steps + 1) / 2);
  t.max_steps = steps;
  t.points.k = 64;
  t.stats_samples = 8;
  t.seed = seed;
  t.augment.scale_min = 0.9;
  t.augment.scale_max = 1.1;
  t.augment.crop_min = 0.8;
  return t;
}

struct Pretrained {
  fusion::Checkpoint rgb, mot;
};

const Pretrained& pretrained() {
  static const Pretrained p = [] {
    const auto rgb = pretrain_single<float>(Modality::kAppearance, {}, tiny_model(), tiny_train(2, 1));
    const auto mot = pretrain_single<float>(Modality::kMotion, {motion::MotionKind::kOpticalFlow, 0}, tiny_model(),
                                            tiny_train(2, 2));
    return Pretrained{rgb.checkpoint, mot.checkpoint};
  }();
  return p;
}

bool same_sample(const scene::SceneSample& a, const scene::SceneSample& b) {
  return a.height == b.height && a.width == b.width && a.frames == b.frames && a.flow == b.flow &&
         a.depth == b.depth && a.scene_flow == b.scene_flow && a.instance_mask == b.instance_mask &&
         a.valid == b.valid && a.motion_labels == b.motion_labels && a.movable == b.movable;
}

template <class F>
void expect_code(ErrorCode code, F&& f) {
  try {
    f();
    ADD_FAILURE() << "expected " << to_string(code);
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), code) << e.what();
  }
}

}  // namespace

TEST(Optimizer, ClipScalesNormTenDownToClipNorm) {
  auto p = Tensor<double>::parameter({2}, {0.0, 0.0});
  sum(mul(p, Tensor<double>({2}, {6.0, 8.0}))).backward();
  std::vector<Tensor<double>> ps{p};
  EXPECT_DOUBLE_EQ(clip_grad_norm(ps, 0.1), 10.0);
  EXPECT_NEAR(p.grad()[0], 0.06, 1e-15);
  EXPECT_NEAR(p.grad()[1], 0.08, 1e-15);
}

TEST(Optimizer, ClippedNormNeverExceedsLimit) {
  Rng rng(5);
  for (int trial = 0; trial < 100; ++trial) {
    const int n = uniform_int(rng, 1, 20);
    std::vector<double> c(n);
    for (auto& v : c) v = normal(rng) * std::pow(10.0, uniform(rng, -3, 3));
    auto p = Tensor<double>::parameter({n}, std::vector<double>(n, 0.0));
    sum(mul(p, Tensor<double>({n}, c))).backward();
    std::vector<Tensor<double>> ps{p};
    const double before = clip_grad_norm(ps, 0.1);
    double sq = 0;
    for (double g : p.grad()) sq += g * g;
    EXPECT_LE(std::sqrt(sq), 0.1 + 1e-9);
    if (before <= 0.1)
      for (int i = 0; i < n; ++i) EXPECT_EQ(p.grad()[i], c[i]);
  }
}

TEST(Optimizer, AdamWMatchesClosedFormFirstSteps) {
  nn::ParamList<double> ps{{"w", Tensor<double>::parameter({1}, {0.5}), nn::ParamKind::kWeight},
                           {"b", Tensor<double>::parameter({1}, {0.5}), nn::ParamKind::kBias}};
  OptimConfig oc;
  AdamW<double> opt(ps, oc);
  const double lr = 1e-2, g = 0.3;
  double w = 0.5, b = 0.5, m = 0, v = 0;
  for (int t = 1; t <= 3; ++t) {
    opt.zero_grad();
    sum(add(scale(ps[0].tensor, g), scale(ps[1].tensor, g))).backward();
    opt.step(lr);
    m = 0.9 * m + 0.1 * g;
    v = 0.999 * v + 0.001 * g * g;
    const double upd = lr * (m / (1 - std::pow(0.9, t))) / (std::sqrt(v / (1 - std::pow(0.999, t))) + 1e-8);
    w = w * (1 - lr * 0.05) - upd;
    b = b - upd;
    EXPECT_NEAR(ps[0].tensor.data()[0], w, 1e-14);
    EXPECT_NEAR(ps[1].tensor.data()[0], b, 1e-14);
  }
}

TEST(Optimizer, StepDecayDropsTenfold) {
  EXPECT_DOUBLE_EQ(scheduled_lr(1e-4, 0, 8, true), 1e-4);
  EXPECT_DOUBLE_EQ(scheduled_lr(1e-4, 7, 8, true), 1e-4);
  EXPECT_NEAR(scheduled_lr(1e-4, 8, 8, true), 1e-5, 1e-18);
  EXPECT_NEAR(scheduled_lr(1e-4, 16, 8, true), 1e-6, 1e-18);
  EXPECT_NEAR(scheduled_lr(1e-4, 9, 8, false), 1e-5, 1e-18);
  EXPECT_NEAR(scheduled_lr(1e-4, 30, 8, false), 1e-5, 1e-18);

  TrainConfig t = TrainConfig::finetune();
  const long long per = t.steps_per_epoch();
  EXPECT_EQ(per, 63);
  EXPECT_DOUBLE_EQ(t.lr_at(8 * per - 1), 1e-4);
  EXPECT_NEAR(t.lr_at(8 * per), 1e-5, 1e-18);
  EXPECT_NEAR(t.lr_at(10 * per - 1), 1e-5, 1e-18);
}

TEST(Optimizer, BackboneTakesTenthOfBaseRateAndNormsDoNotDecay) {
  fusion::FusionModel<float> model(tiny_model(), 1);
  AdamW<float> opt(model.parameters(), OptimConfig{});
  int backbone = 0, heads = 0;
  for (const auto& p : model.parameters()) {
    const double lr = opt.lr_of(p.name, 1e-4);
    if (p.name.find(".backbone.") != std::string::npos) {
      EXPECT_NEAR(lr, 1e-5, 1e-18) << p.name;
      ++backbone;
    } else {
      EXPECT_DOUBLE_EQ(lr, 1e-4) << p.name;
      ++heads;
    }
  }
  EXPECT_GT(backbone, 0);
  EXPECT_GT(heads, 0);
  for (const auto& s : opt.slots()) {
    const auto& p = *std::find_if(model.parameters().begin(), model.parameters().end(),
                                  [&](const auto& q) { return q.name == s.name; });
    EXPECT_EQ(s.weight_decay, p.kind == nn::ParamKind::kWeight ? 0.05 : 0.0) << s.name;
  }
}

TEST(Augment, FlipTwiceIsIdentity) {
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    const auto s = scene::generate_scene(tiny_mix().sources[0].config, seed);
    const auto f = flip_horizontal(s);
    const auto ff = flip_horizontal(f);
    EXPECT_TRUE(same_sample(s, ff));
    EXPECT_NEAR(ff.camera.principal.x(), s.camera.principal.x(), 1e-12);
    EXPECT_LT((ff.camera.pose_delta.R - s.camera.pose_delta.R).cwiseAbs().maxCoeff(), 1e-12);
    EXPECT_LT((ff.camera.pose_delta.t - s.camera.pose_delta.t).cwiseAbs().maxCoeff(), 1e-12);
  }
}

TEST(Augment, FlipMirrorsFlowAndConjugatesSceneFlow) {
  const auto s = scene::generate_scene(tiny_mix().sources[0].config, 11);
  const auto f = flip_horizontal(s);
  const int w = s.width;
  const scene::Mat3 S = scene::Vec3(-1, 1, 1).asDiagonal();
  for (int y = 0; y < s.height; ++y)
    for (int x = 0; x < w; ++x) {
      const std::size_t p = static_cast<std::size_t>(y) * w + x, q = static_cast<std::size_t>(y) * w + (w - 1 - x);
      EXPECT_EQ(f.flow[2 * q], -s.flow[2 * p]);
      EXPECT_EQ(f.flow[2 * q + 1], s.flow[2 * p + 1]);
      EXPECT_EQ(f.instance_mask[q], s.instance_mask[p]);
      // the mirrored motion is S R S with translation S t
      const scene::Vec3 om(s.scene_flow[6 * p], s.scene_flow[6 * p + 1], s.scene_flow[6 * p + 2]);
      const scene::Vec3 want = scene::axis_angle_from_rotation(S * scene::rotation_from_axis_angle(om) * S);
      for (int k = 0; k < 3; ++k) EXPECT_NEAR(f.scene_flow[6 * q + k], want[k], 1e-5);
      const scene::Vec3 t(s.scene_flow[6 * p + 3], s.scene_flow[6 * p + 4], s.scene_flow[6 * p + 5]);
      const scene::Vec3 st = S * t;
      for (int k = 0; k < 3; ++k) EXPECT_NEAR(f.scene_flow[6 * q + 3 + k], st[k], 1e-7);
    }
  EXPECT_NEAR(f.camera.principal.x(), (w - 1) - s.camera.principal.x(), 1e-12);
}

// Rescaling must agree with re-rendering the same world through a camera whose
// focal length and resolution are scaled by the same factor.
TEST(Augment, RescaledFlowMatchesReRenderedScene) {
  auto g = tiny_mix().sources[0].config;
  g.height = g.width = 64;
  g.radius_px_min = 10;
  g.radius_px_max = 14;
  for (double sc : {1.5, 0.75}) {
    for (std::uint64_t seed = 0; seed < 3; ++seed) {
      const auto s = scene::generate_scene(g, seed);
      const int h = static_cast<int>(std::lround(s.height * sc)), w = static_cast<int>(std::lround(s.width * sc));
      const auto r = rescale(s, h, w);
      scene::CameraModel cam = s.camera;
      cam.focal *= sc;
      cam.height = h;
      cam.width = w;
      cam.principal = (s.camera.principal.array() + 0.5) * sc - 0.5;
      const auto o = scene::render_scene(cam, s.bodies, scene::Background{g.background_depth, 0});
      std::vector<double> err, mag;
      for (int p = 0; p < h * w; ++p) {
        if (!r.valid[p] || !o.valid[p] || r.instance_mask[p] != o.instance_mask[p]) continue;
        err.push_back(std::hypot(r.flow[2 * p] - o.flow[2 * p], r.flow[2 * p + 1] - o.flow[2 * p + 1]));
        mag.push_back(std::hypot(o.flow[2 * p], o.flow[2 * p + 1]));
      }
      ASSERT_GT(err.size(), static_cast<std::size_t>(h * w * 0.9));
      std::nth_element(err.begin(), err.begin() + err.size() / 2, err.end());
      std::nth_element(mag.begin(), mag.begin() + mag.size() / 2, mag.end());
      EXPECT_LT(err[err.size() / 2], 0.05) << "scale " << sc << " seed " << seed;
      EXPECT_GT(mag[mag.size() / 2], 0.2);
    }
  }
}

TEST(Augment, CropBelowMinimumIsRejected) {
  const auto s = scene::generate_scene(tiny_mix().sources[0].config, 0);
  expect_code(ErrorCode::kCropTooSmall, [&] { crop(s, 0, 0, 31, 40); });
  expect_code(ErrorCode::kCropTooSmall, [&] { rescale(s, 20, 48); });
  expect_code(ErrorCode::kInvalidArgument, [&] { crop(s, 20, 0, 40, 40); });
  const auto c = crop(s, 5, 7, 32, 32);
  EXPECT_EQ(c.width, 32);
  EXPECT_EQ(c.flow[0], s.flow[2 * (7 * 48 + 5)]);
  EXPECT_NEAR(c.camera.principal.x(), s.camera.principal.x() - 5, 1e-12);
  for (auto id : c.instance_mask)
    if (id) EXPECT_TRUE(c.motion_labels.count(id));
}

TEST(Config, JsonRoundTripAndValidation) {
  TrainConfig t = TrainConfig::finetune();
  t.seed = 77;
  t.mix = tiny_mix();
  const auto j = to_json(t);
  EXPECT_EQ(to_json(train_config_from_json(j)), j);
  nlohmann::json bad = j;
  bad["p_neg"] = 1.5;
  expect_code(ErrorCode::kInvalidSpec, [&] { train_config_from_json(bad).validate(); });
  bad = j;
  bad["learning_rate"] = 1.0;
  expect_code(ErrorCode::kInvalidSpec, [&] { train_config_from_json(bad); });

  const TrainConfig p = TrainConfig::pretrain();
  EXPECT_EQ(p.epochs, 30);
  EXPECT_EQ(p.batch_size, 8);
  EXPECT_EQ(p.samples_per_epoch, 500);
  EXPECT_DOUBLE_EQ(p.optim.lr, 1e-4);
  EXPECT_DOUBLE_EQ(p.optim.weight_decay, 0.05);
  EXPECT_DOUBLE_EQ(p.optim.clip_norm, 0.1);
  EXPECT_EQ(p.points.k, 12544);
  EXPECT_DOUBLE_EQ(p.p_neg, 0.0);
  EXPECT_EQ(t.epochs, 10);
  EXPECT_DOUBLE_EQ(t.p_neg, 0.3);
}

TEST(Trainer, LossTrajectoryIsDeterministic) {
  auto run = [] {
    auto r = pretrain_single<float>(Modality::kMotion, {motion::MotionKind::kOpticalFlow, 0}, tiny_model(), tiny_train(4));
    std::vector<double> l;
    for (const auto& s : r.history) l.push_back(s.loss);
    return l;
  };
  const auto a = run(), b = run();
  ASSERT_EQ(a.size(), 4u);
  EXPECT_EQ(a, b);
}

TEST(Trainer, JsonlLogHasOneLinePerStep) {
  std::ostringstream log;
  pretrain_single<float>(Modality::kAppearance, {}, tiny_model(), tiny_train(3), &log);
  std::istringstream in(log.str());
  std::string line;
  int n = 0;
  while (std::getline(in, line)) {
    const auto j = nlohmann::json::parse(line);
    EXPECT_EQ(j.at("step").get<int>(), n);
    for (const char* k : {"loss", "loss_ce", "loss_dice", "loss_cls", "loss_noobj", "grad_norm", "lr"})
      EXPECT_TRUE(std::isfinite(j.at(k).get<double>())) << k;
    ++n;
  }
  EXPECT_EQ(n, 3);
}

TEST(Trainer, FrozenAppearanceStreamIsBitIdenticalAfterFinetuning) {
  const auto& pre = pretrained();
  auto tc = tiny_train(100);
  tc.batch_size = 1;
  tc.p_neg = 0.3;
  ExampleSpec spec;
  const auto before = assemble_fusion<float>(pre.rgb, pre.mot, tiny_model(Mechanism::kDecoder), tc.seed, spec);
  const auto r = finetune_fusion<float>(pre.rgb, pre.mot, tiny_model(Mechanism::kDecoder), tc);
  ASSERT_EQ(r.history.size(), 100u);
  const auto pb = before.parameters(), pa = r.model.parameters();
  ASSERT_EQ(pb.size(), pa.size());
  int frozen = 0, moved_motion = 0, moved_head = 0;
  for (std::size_t i = 0; i < pb.size(); ++i) {
    const auto& a = pb[i].tensor;
    const auto& b = pa[i].tensor;
    const bool same = std::equal(a.data(), a.data() + a.numel(), b.data());
    if (frozen_in_finetune(pb[i].name)) {
      EXPECT_TRUE(same) << pb[i].name;
      ++frozen;
    } else if (pb[i].name.rfind("stream.motion.", 0) == 0) {
      moved_motion += !same;
    } else if (pb[i].name.rfind("stream.rgb.decoder.class_head.", 0) == 0) {
      moved_head += !same;
    }
  }
  EXPECT_GT(frozen, 10);
  EXPECT_GT(moved_motion, 10);
  EXPECT_GT(moved_head, 0);
  int neg = 0;
  for (const auto& s : r.history) neg += s.negatives;
  EXPECT_GT(neg, 10);
  EXPECT_LT(neg, 60);
}

TEST(Trainer, ResumeReproducesNextSteps) {
  const auto& pre = pretrained();
  const auto tc = tiny_train(8);
  ExampleSpec spec;
  auto model = assemble_fusion<float>(pre.rgb, pre.mot, tiny_model(Mechanism::kEncoder), tc.seed, spec);
  spec.p_neg = tc.p_neg;
  const auto trainable = [](const std::string& n) { return !frozen_in_finetune(n); };
  Trainer<float> t(model, RunInfo{model.config, tc.seed, spec, tc, "finetune"}, trainable);
  for (int i = 0; i < 3; ++i) t.step();
  const auto ck = t.checkpoint();

  auto model2 = load_model<float>(ck);
  Trainer<float> t2(model2, run_info_from_meta(ck.meta), trainable);
  t2.resume(ck);
  EXPECT_EQ(t2.steps_done(), 3);
  for (int i = 0; i < 2; ++i) {
    const auto a = t.step(), b = t2.step();
    EXPECT_NEAR(a.loss, b.loss, 1e-6);
    EXPECT_NEAR(a.grad_norm, b.grad_norm, 1e-6 * a.grad_norm) << "step " << i;
  }
}

TEST(Trainer, NonFiniteLossRaisesDivergence) {
  auto fc = tiny_model();
  fc.single_stream = Modality::kAppearance;
  fusion::FusionModel<float> model(fc, 1);
  auto ps = model.parameters();
  for (auto& p : ps)
    if (p.name.find("class_head") != std::string::npos) {
      p.tensor.mutable_values()[0] = std::numeric_limits<float>::quiet_NaN();
      break;
    }
  const auto tc = tiny_train(2);
  Trainer<float> t(model, RunInfo{fc, 1, single_spec(Modality::kAppearance, {}, tc), tc, "pretrain"});
  expect_code(ErrorCode::kDivergence, [&] { t.step(); });
}

TEST(Trainer, FusionRejectsMismatchedCheckpoints) {
  const auto& pre = pretrained();
  ExampleSpec spec;
  expect_code(ErrorCode::kCheckpointMismatch,
              [&] { assemble_fusion<float>(pre.mot, pre.rgb, tiny_model(Mechanism::kDecoder), 0, spec); });
  auto wide = tiny_model(Mechanism::kDecoder);
  wide.d_model = 32;
  expect_code(ErrorCode::kCheckpointMismatch, [&] { assemble_fusion<float>(pre.rgb, pre.mot, wide, 0, spec); });
}

TEST(Augment, RandomDrawsNeverGoBelowMinimumCrop) {
  AugmentConfig a;
  a.scale_min = 0.5;
  a.crop_min = 0.3;
  a.p_crop = 1.0;
  Rng rng(4);
  const auto s = scene::generate_scene(tiny_mix().sources[0].config, 2);
  for (int i = 0; i < 50; ++i) {
    const auto o = augment(s, a, rng);
    EXPECT_GE(o.width, kMinCrop);
    EXPECT_GE(o.height, kMinCrop);
  }
}
