#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>
#include <fstream>

#include "motionfuse/scene/generator.hpp"
#include "motionfuse/scene/io.hpp"

using namespace mfuse;
using namespace mfuse::scene;

namespace {

GeneratorConfig rich_config() {
  GeneratorConfig c;
  c.name = "rich";
  c.min_bodies = 2;
  c.max_bodies = 6;
  c.min_static_movable = 1;
  c.p_colinear = 0.25;
  c.p_group = 0.25;
  c.p_part = 0.25;
  return c;
}

// Homography oracle for the background plane z = Z_bg: a pixel p maps to
// K R^T (I - t n^T / Z_bg) K^-1 p. Uses no depth map and no flow code.
Vec2 plane_flow(const CameraModel& cam, double zbg, int x, int y) {
  Mat3 K;
  K << cam.focal, 0, cam.principal.x(), 0, cam.focal, cam.principal.y(), 0, 0, 1;
  const Mat3 H = K * cam.pose_delta.R.transpose() *
                 (Mat3::Identity() - cam.pose_delta.t * Vec3::UnitZ().transpose() / zbg) * K.inverse();
  const Vec3 q = H * Vec3(x, y, 1.0);
  return {q.x() / q.z() - x, q.y() / q.z() - y};
}

}  // namespace

TEST(Generate, EmptyStaticScene) {
  GeneratorConfig c;
  c.min_bodies = c.max_bodies = 0;
  c.static_camera = true;
  auto s = generate_scene(c, 3);
  for (float f : s.flow) EXPECT_EQ(f, 0.0f);
  for (auto m : s.instance_mask) EXPECT_EQ(m, 0);
  EXPECT_TRUE(s.motion_labels.empty());
  EXPECT_EQ(s.tags, std::set<Tag>{Tag::kNone});
}

TEST(Generate, LateralCameraShiftGivesUniformBackgroundFlow) {
  GeneratorConfig c;
  c.min_bodies = c.max_bodies = 0;
  c.background_depth = 10.0;
  c.focal = 100.0;
  c.camera_motion = Rigid::translation(Vec3(0.5, 0, 0));
  auto s = generate_scene(c, 1);
  for (int p = 0; p < s.pixels(); ++p) {
    ASSERT_NEAR(s.flow[2 * p], -5.0, 1e-4);
    ASSERT_NEAR(s.flow[2 * p + 1], 0.0, 1e-4);
  }
}

TEST(Generate, Deterministic) {
  auto c = rich_config();
  for (std::uint64_t seed : {0ULL, 17ULL, 123456789ULL}) {
    auto a = generate_scene(c, seed), b = generate_scene(c, seed);
    EXPECT_EQ(a.frames[0], b.frames[0]);
    EXPECT_EQ(a.frames[1], b.frames[1]);
    EXPECT_EQ(a.flow, b.flow);
    EXPECT_EQ(a.depth[0], b.depth[0]);
    EXPECT_EQ(a.depth[1], b.depth[1]);
    EXPECT_EQ(a.scene_flow, b.scene_flow);
    EXPECT_EQ(a.instance_mask, b.instance_mask);
    EXPECT_EQ(a.motion_labels, b.motion_labels);
    EXPECT_EQ(a.tags, b.tags);
  }
}

TEST(Generate, InvalidSpecsAreRejected) {
  auto expect_invalid = [](const GeneratorConfig& c) {
    try {
      generate_scene(c, 0);
      ADD_FAILURE() << "accepted an invalid spec";
    } catch (const Error& e) {
      EXPECT_EQ(e.code(), ErrorCode::kInvalidSpec);
    }
  };
  GeneratorConfig c;
  c.depth_min = -1;
  expect_invalid(c);
  c = GeneratorConfig{};
  c.height = 16;
  expect_invalid(c);
  c = GeneratorConfig{};
  RigidBody b;
  b.id = 2;
  c.fixed_bodies = {b, b};
  expect_invalid(c);
  c = GeneratorConfig{};
  b.depth = 0;
  c.fixed_bodies = {b};
  expect_invalid(c);
}

TEST(ProjectFlow, BodyTranslatingTwoPixels) {
  GeneratorConfig c;
  c.static_camera = true;
  RigidBody b;
  b.id = 1;
  b.depth = 5.0;
  b.size = 0.6;
  b.motion = Rigid::translation(Vec3(0.1, 0, 0));  // f * 0.1 / 5 = 2 px
  b.moving = true;
  c.fixed_bodies = {b};
  auto s = generate_scene(c, 0);
  int inside = 0;
  for (int p = 0; p < s.pixels(); ++p) {
    const double u = s.flow[2 * p], v = s.flow[2 * p + 1];
    if (s.instance_mask[p] == 1) {
      ++inside;
      ASSERT_NEAR(u, 2.0, 1e-4);
      ASSERT_NEAR(v, 0.0, 1e-4);
    } else {
      ASSERT_EQ(u, 0.0);
      ASSERT_EQ(v, 0.0);
    }
  }
  EXPECT_GT(inside, 100);
}

TEST(ProjectFlow, PureRotationIsDepthIndependent) {
  auto cam = CameraModel::centered(40, 48, 80.0);
  cam.pose_delta.R = rotation_from_euler_deg(2.0, 0.0, 0.0);
  const int n = cam.height * cam.width;
  std::vector<std::uint16_t> none(n, 0);
  std::vector<double> near(n, 2.0), far(n, 50.0);
  auto a = project_flow(near, cam, {}, none), b = project_flow(far, cam, {}, none);
  // oracle: finite rotation homography K R^T K^-1 on the pixel grid
  for (int y = 0; y < cam.height; y += 3)
    for (int x = 0; x < cam.width; x += 3) {
      const int p = y * cam.width + x;
      const Vec2 o = plane_flow(cam, 1.0, x, y);  // t = 0, plane depth irrelevant
      EXPECT_NEAR(a.flow[2 * p], o.x(), 1e-9);
      EXPECT_NEAR(a.flow[2 * p + 1], o.y(), 1e-9);
      EXPECT_NEAR(b.flow[2 * p], a.flow[2 * p], 1e-9);
      EXPECT_NEAR(b.flow[2 * p + 1], a.flow[2 * p + 1], 1e-9);
    }
}

TEST(ProjectFlow, ForwardCameraAndBodyCancel) {
  // Body and camera both advance by 1 along z: the body keeps its place in the
  // image, like a static point at infinite depth.
  GeneratorConfig c;
  c.camera_motion = Rigid::translation(Vec3(0, 0, 1));
  RigidBody b;
  b.depth = 6.0;
  b.size = 0.8;
  b.motion = Rigid::translation(Vec3(0, 0, 1));
  b.moving = true;
  c.fixed_bodies = {b};
  auto s = generate_scene(c, 0);
  for (int p = 0; p < s.pixels(); ++p)
    if (s.instance_mask[p] == 1) {
      ASSERT_NEAR(s.flow[2 * p], 0.0, 1e-9);
      ASSERT_NEAR(s.flow[2 * p + 1], 0.0, 1e-9);
    }
}

TEST(ProjectFlow, PointsBehindTheCameraAreFlaggedInvalid) {
  auto cam = CameraModel::centered(32, 32, 50.0);
  cam.pose_delta = Rigid::translation(Vec3(0, 0, 5));
  std::vector<double> depth(32 * 32, 3.0);
  auto f = project_flow(depth, cam, {}, std::vector<std::uint16_t>(32 * 32, 0));
  for (auto v : f.valid) EXPECT_EQ(v, 0);
}

TEST(Generate, ColinearMoversMimicStaticPoints) {
  auto c = rich_config();
  c.p_colinear = 1.0;
  c.p_group = c.p_part = 0.0;
  int movers = 0;
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    auto s = generate_scene(c, seed);
    ASSERT_TRUE(s.tags.count(Tag::kColinear));
    const Vec3 tc = s.camera.pose_delta.t;
    ASSERT_TRUE(s.camera.pose_delta.R.isIdentity(1e-12));
    for (const auto& b : s.bodies) {
      if (!b.moving) continue;
      ++movers;
      const double alpha = b.motion.t.dot(tc) / tc.squaredNorm();
      ASSERT_NEAR((b.motion.t - alpha * tc).norm(), 0.0, 1e-12);
      ASSERT_GE(std::abs(alpha), 0.2 - 1e-12);
      const double z_app = b.depth / (1 - alpha);
      for (int y = 0; y < s.height; ++y)
        for (int x = 0; x < s.width; ++x) {
          const int p = y * s.width + x;
          if (s.instance_mask[p] != b.id) continue;
          // static point on the same ray at the apparent depth
          const Vec3 X = z_app * s.camera.ray(x, y) - tc;
          const Vec2 q = s.camera.project(X);
          ASSERT_NEAR(s.flow[2 * p], q.x() - x, 1e-3);
          ASSERT_NEAR(s.flow[2 * p + 1], q.y() - y, 1e-3);
        }
    }
  }
  EXPECT_GT(movers, 0);
}

TEST(Generate, InvariantsOverRandomScenes) {
  auto c = rich_config();
  std::map<Tag, int> scenarios;
  for (std::uint64_t seed = 100; seed < 160; ++seed) {
    auto s = generate_scene(c, seed);
    ++scenarios[s.scenario];
    // background flow equals the plane-induced ego flow
    double worst = 0;
    for (int y = 0; y < s.height; ++y)
      for (int x = 0; x < s.width; ++x) {
        const int p = y * s.width + x;
        if (s.instance_mask[p] != 0) continue;
        const Vec2 o = plane_flow(s.camera, c.background_depth, x, y);
        worst = std::max({worst, std::abs(s.flow[2 * p] - o.x()), std::abs(s.flow[2 * p + 1] - o.y())});
      }
    EXPECT_LT(worst, 1e-4) << "seed " << seed;

    EXPECT_TRUE(s.tags.count(Tag::kStaticMovable)) << "distractor requested";
    std::map<int, std::vector<float>> group_flow;
    for (const auto& b : s.bodies) {
      EXPECT_EQ(s.motion_labels.at(b.id), !b.motion.is_identity() || (b.arm && !b.arm->motion.is_identity()));
      if (b.moving) {
        EXPECT_TRUE(b.movable);
      }
      EXPECT_TRUE(scene::detail::four_connected(s.instance_mask, s.height, s.width, b.id)) << "seed " << seed;
      for (int p = 0; p < s.pixels(); ++p) {
        if (s.instance_mask[p] != b.id) continue;
        if (!b.moving) {
          for (int k = 0; k < 6; ++k) ASSERT_EQ(s.scene_flow[6 * p + k], 0.0f);
        }
        if (b.group_id) {
          std::vector<float> six(s.scene_flow.begin() + 6 * p, s.scene_flow.begin() + 6 * p + 6);
          auto [it, fresh] = group_flow.emplace(*b.group_id, six);
          if (!fresh) {
            ASSERT_EQ(it->second, six);
          }
        }
      }
    }
    if (s.scenario == Tag::kPartMotion) {
      bool found = false;
      for (const auto& b : s.bodies)
        if (b.arm && b.motion.is_identity() && !b.arm->motion.is_identity()) {
          found = true;
          EXPECT_TRUE(s.motion_labels.at(b.id));
        }
      EXPECT_TRUE(found);
    }
    if (s.scenario == Tag::kGroupMotion) {
      int members = 0;
      for (const auto& b : s.bodies) members += b.group_id ? 1 : 0;
      EXPECT_GE(members, 2);
    }
  }
  EXPECT_EQ(scenarios.size(), 4u);
}

TEST(Generate, ScenarioFrequency) {
  GeneratorConfig c;
  c.height = c.width = 48;
  c.radius_px_min = 5;
  c.radius_px_max = 8;
  c.min_bodies = 1;
  c.max_bodies = 3;
  c.p_colinear = 0.25;
  int colinear = 0;
  for (std::uint64_t seed = 0; seed < 1000; ++seed) colinear += generate_scene(c, seed).scenario == Tag::kColinear;
  EXPECT_GE(colinear, 210);
  EXPECT_LE(colinear, 290);
}

namespace {
GeneratorConfig tiny(const std::string& name) {
  GeneratorConfig c;
  c.name = name;
  c.height = c.width = 32;
  c.radius_px_min = 4;
  c.radius_px_max = 6;
  c.min_bodies = c.max_bodies = 0;
  return c;
}
}  // namespace

TEST(SampleMix, SingleSource) {
  DatasetMix m{{{tiny("a"), 1.0}}, true};
  Rng rng(1);
  for (int i = 0; i < 20; ++i) EXPECT_EQ(sample_mix(m, rng).source, 0);
}

TEST(SampleMix, EqualLikelihood) {
  DatasetMix m{{{tiny("a"), 1.0}, {tiny("b"), 5.0}, {tiny("c"), 0.5}, {tiny("d"), 2.0}}, true};
  Rng rng(2);
  std::vector<int> count(4, 0);
  for (int i = 0; i < 10000; ++i) ++count[sample_mix(m, rng).source];
  for (int k : count) {
    EXPECT_GE(k / 10000.0, 0.225);
    EXPECT_LE(k / 10000.0, 0.275);
  }
}

TEST(SampleMix, Weighted) {
  DatasetMix m{{{tiny("a"), 3.0}, {tiny("b"), 1.0}}, false};
  Rng rng(3);
  int a = 0;
  for (int i = 0; i < 10000; ++i) a += sample_mix(m, rng).source == 0;
  EXPECT_NEAR(a / 10000.0, 0.75, 0.02);
}

TEST(SampleMix, EmptyMixIsRejected) {
  DatasetMix m;
  Rng rng(0);
  try {
    sample_mix(m, rng);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::kEmptyMix);
  }
}

TEST(Io, SampleRoundTrip) {
  auto s = generate_scene(rich_config(), 5);
  const auto dir = std::filesystem::temp_directory_path() / "mfuse_io_roundtrip";
  std::filesystem::remove_all(dir);
  write_sample(dir, s);
  {
    std::ifstream f(dir / "flow.flo", std::ios::binary);
    char magic[4];
    f.read(magic, 4);
    EXPECT_EQ(std::string(magic, 4), "PIEH");
  }
  auto r = read_sample(dir);
  EXPECT_EQ(r.flow, s.flow);
  EXPECT_EQ(r.depth[0], s.depth[0]);
  EXPECT_EQ(r.depth[1], s.depth[1]);
  EXPECT_EQ(r.scene_flow, s.scene_flow);
  EXPECT_EQ(r.instance_mask, s.instance_mask);
  EXPECT_EQ(r.valid, s.valid);
  EXPECT_EQ(r.motion_labels, s.motion_labels);
  EXPECT_EQ(r.tags, s.tags);
  EXPECT_EQ(r.bodies.size(), s.bodies.size());
  for (std::size_t i = 0; i < s.frames[0].size(); ++i) ASSERT_NEAR(r.frames[0][i], s.frames[0][i], 0.5 / 255 + 1e-6);
  std::filesystem::remove_all(dir);
}

TEST(Io, ConfigJsonRoundTrip) {
  auto c = rich_config();
  c.camera_motion = Rigid::translation(Vec3(0.1, 0.2, 0.3));
  auto back = config_from_json(config_to_json(c));
  EXPECT_EQ(config_to_json(back), config_to_json(c));
  EXPECT_THROW(config_from_json(json{{"heigth", 64}}), Error);
}
