#pragma once

#include <algorithm>
#include <cmath>
#include <numbers>
#include <optional>
#include <queue>
#include <set>
#include <string>
#include <vector>

#include "motionfuse/core/random.hpp"
#include "motionfuse/scene/render.hpp"

namespace mfuse::scene {

struct GeneratorConfig {
  std::string name = "default";
  int height = 96;
  int width = 96;
  double focal = 100.0;
  int min_bodies = 0;
  int max_bodies = 6;
  double background_depth = 12.0;
  double depth_min = 4.0;
  double depth_max = 8.0;
  double radius_px_min = 10.0;  // image-space bounding radius of a body
  double radius_px_max = 18.0;
  double p_movable = 0.7;
  double p_moving = 0.6;
  double p_composite = 0.25;
  int min_static_movable = 0;
  bool static_camera = false;
  double camera_max_translation = 0.25;
  double camera_max_rotation_deg = 1.5;
  double body_max_translation = 0.5;
  double body_max_rotation_deg = 12.0;
  double min_motion_px = 2.5;
  // scenario draw, one per sample; the remainder is the plain scenario
  double p_colinear = 0.0;
  double p_group = 0.0;
  double p_part = 0.0;
  std::optional<Rigid> camera_motion;  // overrides the random ego-motion
  std::vector<RigidBody> fixed_bodies;  // bypasses the random layout when non-empty
  bool use_fixed_bodies = false;

  void validate() const {
    check(height >= 32 && width >= 32, ErrorCode::kInvalidSpec, "generator '", name, "': resolution ",
          height, "x", width, " below 32x32");
    check(focal > 0, ErrorCode::kInvalidSpec, "generator '", name, "': focal must be > 0");
    check(background_depth > 0 && depth_min > 0 && depth_max >= depth_min, ErrorCode::kInvalidSpec,
          "generator '", name, "': non-positive or inverted depth range");
    check(depth_max < background_depth, ErrorCode::kInvalidSpec, "generator '", name,
          "': bodies must lie in front of the background plane");
    check(min_bodies >= 0 && max_bodies >= min_bodies, ErrorCode::kInvalidSpec, "generator '", name,
          "': body count range [", min_bodies, ", ", max_bodies, "] is invalid");
    check(radius_px_min >= 4 && radius_px_max >= radius_px_min, ErrorCode::kInvalidSpec, "generator '",
          name, "': body radius range is invalid");
    check(2 * radius_px_max + 4 < std::min(height, width), ErrorCode::kInvalidSpec, "generator '", name,
          "': bodies do not fit the image");
    for (double p : {p_movable, p_moving, p_composite, p_colinear, p_group, p_part})
      check(p >= 0 && p <= 1, ErrorCode::kInvalidSpec, "generator '", name, "': probability out of [0,1]");
    check(p_colinear + p_group + p_part <= 1 + 1e-12, ErrorCode::kInvalidSpec, "generator '", name,
          "': scenario probabilities sum above 1");
    check(min_static_movable >= 0 && min_static_movable <= max_bodies, ErrorCode::kInvalidSpec,
          "generator '", name, "': min_static_movable exceeds max_bodies");
    if (camera_motion)
      check(camera_motion->is_proper_rotation(), ErrorCode::kInvalidSpec, "generator '", name,
            "': camera rotation not orthonormal");
    std::set<int> ids;
    for (const auto& b : fixed_bodies) {
      b.validate();
      check(ids.insert(b.id).second, ErrorCode::kInvalidSpec, "generator '", name, "': duplicate body id ",
            b.id);
      check(b.id <= 65535, ErrorCode::kInvalidSpec, "body id ", b.id, " does not fit a 16-bit mask");
    }
  }
};

namespace detail {

inline constexpr double kPi = std::numbers::pi;

inline Mat3 rot_z(double a) { return Eigen::AngleAxisd(a, Vec3::UnitZ()).toRotationMatrix(); }

struct Slot {
  double px, py, r, z;
};

inline bool fits(const Slot& s, const std::vector<Slot>& placed, int h, int w, double gap) {
  if (s.px - s.r < 1 || s.py - s.r < 1 || s.px + s.r > w - 2 || s.py + s.r > h - 2) return false;
  for (const auto& o : placed)
    if (std::hypot(s.px - o.px, s.py - o.py) < s.r + o.r + gap) return false;
  return true;
}

inline RigidBody make_body(int id, ShapeKind shape, bool movable, const Slot& s, const CameraModel& cam,
                           Rng& rng) {
  RigidBody b;
  b.id = id;
  b.shape = shape;
  b.movable = movable;
  b.texture_seed = rng();
  b.depth = s.z;
  b.center = {(s.px - cam.principal.x()) * s.z / cam.focal, (s.py - cam.principal.y()) * s.z / cam.focal};
  b.orientation = uniform(rng, 0.0, 2 * kPi);
  const double rb = s.r * s.z / cam.focal;  // world bounding radius
  switch (shape) {
    case ShapeKind::kDisc:
    case ShapeKind::kTriangle: b.size = rb; break;
    case ShapeKind::kRectangle:
      b.aspect = uniform(rng, 0.45, 1.0);
      b.size = rb / std::sqrt(1 + b.aspect * b.aspect);
      break;
    case ShapeKind::kComposite: {
      b.size = 0.45 * rb;
      ArmPart arm;
      arm.angle = uniform(rng, 0.0, 2 * kPi);
      arm.length = 0.6 * rb;
      arm.half_width = std::max(0.14 * rb, 1.6 * s.z / cam.focal);
      b.arm = arm;
      break;
    }
  }
  return b;
}

// Largest image displacement of the centroid or a rim point caused by a
// body transform, measured against the same points left static.
inline double visible_motion_px(const RigidBody& b, const Rigid& m, const CameraModel& cam) {
  const Vec3 c = b.centroid();
  double best = 0;
  for (int k = 0; k < 5; ++k) {
    Vec3 x = c;
    if (k > 0) x += b.size * Vec3(std::cos(k * kPi / 2), std::sin(k * kPi / 2), 0.0);
    const Vec2 a = cam.project(cam.world_to_cam2(x));
    const Vec2 q = cam.project(cam.world_to_cam2(m.apply(x)));
    best = std::max(best, (q - a).norm());
  }
  return best;
}

inline Rigid random_body_motion(const RigidBody& b, const GeneratorConfig& cfg, const CameraModel& cam, Rng& rng) {
  const double max_rot = cfg.body_max_rotation_deg * kPi / 180.0;
  for (int attempt = 0; attempt < 100; ++attempt) {
    const Vec3 rv(uniform(rng, -0.05, 0.05), uniform(rng, -0.05, 0.05), uniform(rng, -max_rot, max_rot));
    const double mt = cfg.body_max_translation;
    const Vec3 t(uniform(rng, -mt, mt), uniform(rng, -mt, mt), uniform(rng, -0.5 * mt, 0.5 * mt));
    const Rigid m = Rigid::about(b.centroid(), rotation_from_axis_angle(rv), t);
    if (visible_motion_px(b, m, cam) >= cfg.min_motion_px) return m;
  }
  // fall back to a pure lateral shift of the required size
  const double shift = cfg.min_motion_px * b.depth / cam.focal * 1.5;
  const double ang = uniform(rng, 0.0, 2 * kPi);
  return Rigid::translation(Vec3(shift * std::cos(ang), shift * std::sin(ang), 0.0));
}

inline Rigid random_arm_motion(const RigidBody& b, Rng& rng) {
  const double beta = uniform(rng, 0.35, 0.7) * (bernoulli(rng, 0.5) ? 1.0 : -1.0);
  return Rigid::about(b.hinge(), rot_z(beta), Vec3::Zero());
}

inline ShapeKind random_movable_shape(const GeneratorConfig& cfg, Rng& rng, double r) {
  if (r >= 11.0 && bernoulli(rng, cfg.p_composite)) return ShapeKind::kComposite;
  return bernoulli(rng, 0.5) ? ShapeKind::kDisc : ShapeKind::kTriangle;
}

inline bool four_connected(const std::vector<std::uint16_t>& mask, int h, int w, int id) {
  std::vector<std::uint8_t> seen(mask.size(), 0);
  int total = 0, start = -1;
  for (int p = 0; p < h * w; ++p)
    if (mask[p] == id) {
      ++total;
      if (start < 0) start = p;
    }
  if (total == 0) return false;
  std::queue<int> q;
  q.push(start);
  seen[start] = 1;
  int reached = 0;
  while (!q.empty()) {
    const int p = q.front();
    q.pop();
    ++reached;
    const int x = p % w, y = p / w;
    const int nb[4][2] = {{x - 1, y}, {x + 1, y}, {x, y - 1}, {x, y + 1}};
    for (auto& c : nb) {
      if (c[0] < 0 || c[1] < 0 || c[0] >= w || c[1] >= h) continue;
      const int r = c[1] * w + c[0];
      if (!seen[r] && mask[r] == id) {
        seen[r] = 1;
        q.push(r);
      }
    }
  }
  return reached == total;
}

inline CameraModel draw_camera(const GeneratorConfig& cfg, Tag scenario, Rng& rng) {
  CameraModel cam = CameraModel::centered(cfg.height, cfg.width, cfg.focal);
  if (cfg.camera_motion) {
    cam.pose_delta = *cfg.camera_motion;
  } else if (scenario == Tag::kColinear) {
    // pure translation with a dominant forward/backward component
    const double tz = uniform(rng, 0.3, 0.6) * (bernoulli(rng, 0.5) ? 1.0 : -1.0);
    cam.pose_delta = Rigid::translation(Vec3(uniform(rng, -0.15, 0.15), uniform(rng, -0.1, 0.1), tz));
  } else if (!cfg.static_camera) {
    const double a = cfg.camera_max_rotation_deg, t = cfg.camera_max_translation;
    cam.pose_delta.R = rotation_from_euler_deg(uniform(rng, -a, a), uniform(rng, -a, a), uniform(rng, -a, a));
    cam.pose_delta.t = Vec3(uniform(rng, -t, t), uniform(rng, -t, t), uniform(rng, -t, t));
  }
  return cam;
}

// Body translation t_b = alpha * t_cam with alpha = 1 - Z_b / Z_app makes the
// body's image motion that of a static point at depth Z_app.
inline Rigid colinear_motion(const RigidBody& b, const GeneratorConfig& cfg, const CameraModel& cam, Rng& rng) {
  const Vec3 tc = cam.pose_delta.t;
  for (int attempt = 0; attempt < 200; ++attempt) {
    const double hi = attempt < 100 ? cfg.depth_max : cfg.background_depth;
    const double z_app = uniform(rng, cfg.depth_min, hi);
    const double alpha = 1.0 - b.depth / z_app;
    if (std::abs(alpha) >= 0.2) return Rigid::translation(alpha * tc);
  }
  return Rigid::translation(0.5 * tc);
}

struct Layout {
  std::vector<RigidBody> bodies;
  Tag scenario = Tag::kNone;
};

inline std::optional<Layout> draw_layout(const GeneratorConfig& cfg, Tag scenario, const CameraModel& cam, Rng& rng) {
  const int need = scenario == Tag::kGroupMotion ? 2 : (scenario == Tag::kNone ? 0 : 1);
  if (need + cfg.min_static_movable > cfg.max_bodies) scenario = Tag::kNone;
  const int forced = cfg.min_static_movable + (scenario == Tag::kNone ? 0 : (scenario == Tag::kGroupMotion ? 2 : 1));
  const int lo = std::max(cfg.min_bodies, std::min(forced, cfg.max_bodies));
  const int n = uniform_int(rng, lo, cfg.max_bodies);

  Layout out;
  out.scenario = scenario;
  std::vector<Slot> placed;
  auto draw_slot = [&](double r_min, double gap) -> std::optional<Slot> {
    for (int a = 0; a < 300; ++a) {
      Slot s{0, 0, uniform(rng, std::max(r_min, cfg.radius_px_min), std::max(r_min, cfg.radius_px_max)),
             uniform(rng, cfg.depth_min, cfg.depth_max)};
      s.px = uniform(rng, s.r + 1, cfg.width - s.r - 2);
      s.py = uniform(rng, s.r + 1, cfg.height - s.r - 2);
      if (fits(s, placed, cfg.height, cfg.width, gap)) return s;
    }
    return std::nullopt;
  };
  auto next_id = [&] { return static_cast<int>(out.bodies.size()) + 1; };

  // static movable distractors
  for (int i = 0; i < cfg.min_static_movable; ++i) {
    auto s = draw_slot(0, 3);
    if (!s) return std::nullopt;
    placed.push_back(*s);
    out.bodies.push_back(make_body(next_id(), random_movable_shape(cfg, rng, s->r), true, *s, cam, rng));
  }

  if (scenario == Tag::kGroupMotion) {
    const int k = std::min(uniform_int(rng, 2, 3), n - static_cast<int>(out.bodies.size()));
    if (k < 2) return std::nullopt;
    auto first = draw_slot(0, 3);
    if (!first) return std::nullopt;
    std::vector<Slot> group{*first};
    placed.push_back(*first);
    while (static_cast<int>(group.size()) < k) {
      bool ok = false;
      for (int a = 0; a < 200 && !ok; ++a) {
        const Slot& prev = group.back();
        Slot s{0, 0, uniform(rng, cfg.radius_px_min, cfg.radius_px_max), prev.z};
        const double ang = uniform(rng, 0.0, 2 * kPi), dist = prev.r + s.r + 1.5;
        s.px = prev.px + dist * std::cos(ang);
        s.py = prev.py + dist * std::sin(ang);
        if (fits(s, placed, cfg.height, cfg.width, 1.0)) {
          group.push_back(s);
          placed.push_back(s);
          ok = true;
        }
      }
      if (!ok) return std::nullopt;
    }
    std::vector<RigidBody> members;
    for (const auto& s : group) {
      const ShapeKind shape = bernoulli(rng, 0.5) ? ShapeKind::kDisc : ShapeKind::kTriangle;
      members.push_back(make_body(next_id() + static_cast<int>(members.size()), shape, true, s, cam, rng));
    }
    // one shared pure translation keeps the six-parameter field identical
    const double mt = cfg.body_max_translation;
    Rigid shared;
    for (int a = 0; a < 100; ++a) {
      shared = Rigid::translation(Vec3(uniform(rng, -mt, mt), uniform(rng, -mt, mt), uniform(rng, -0.3 * mt, 0.3 * mt)));
      bool visible = true;
      for (const auto& m : members) visible = visible && visible_motion_px(m, shared, cam) >= cfg.min_motion_px;
      if (visible) break;
    }
    if (shared.is_identity()) shared = Rigid::translation(Vec3(mt, 0, 0));
    for (auto& m : members) {
      m.motion = shared;
      m.moving = true;
      m.group_id = 1;
      out.bodies.push_back(m);
    }
  } else if (scenario == Tag::kPartMotion) {
    auto s = draw_slot(11.0, 3);
    if (!s) return std::nullopt;
    placed.push_back(*s);
    RigidBody b = make_body(next_id(), ShapeKind::kComposite, true, *s, cam, rng);
    b.arm->motion = random_arm_motion(b, rng);
    b.moving = true;
    out.bodies.push_back(b);
  } else if (scenario == Tag::kColinear) {
    auto s = draw_slot(0, 3);
    if (!s) return std::nullopt;
    placed.push_back(*s);
    RigidBody b = make_body(next_id(), random_movable_shape(cfg, rng, s->r), true, *s, cam, rng);
    b.motion = colinear_motion(b, cfg, cam, rng);
    b.moving = true;
    out.bodies.push_back(b);
  }

  // free bodies; a failed placement just drops the body
  while (static_cast<int>(out.bodies.size()) < n) {
    auto s = draw_slot(0, 3);
    if (!s) break;
    placed.push_back(*s);
    const bool movable = bernoulli(rng, cfg.p_movable);
    const ShapeKind shape = movable ? random_movable_shape(cfg, rng, s->r) : ShapeKind::kRectangle;
    RigidBody b = make_body(next_id(), shape, movable, *s, cam, rng);
    if (movable && bernoulli(rng, cfg.p_moving)) {
      if (scenario == Tag::kColinear) {
        b.motion = colinear_motion(b, cfg, cam, rng);
      } else {
        b.motion = random_body_motion(b, cfg, cam, rng);
        if (b.arm && bernoulli(rng, 0.5)) b.arm->motion = random_arm_motion(b, rng);
      }
      b.moving = b.has_motion();
    }
    out.bodies.push_back(b);
  }
  return out;
}

inline Tag draw_scenario(const GeneratorConfig& cfg, Rng& rng) {
  const double u = uniform01(rng);
  if (u < cfg.p_colinear) return Tag::kColinear;
  if (u < cfg.p_colinear + cfg.p_group) return Tag::kGroupMotion;
  if (u < cfg.p_colinear + cfg.p_group + cfg.p_part) return Tag::kPartMotion;
  return Tag::kNone;
}

inline std::vector<float> to_float(const std::vector<double>& v) { return {v.begin(), v.end()}; }

}  // namespace detail

// Renders both frames and all ground truth for a fixed camera and body set.
inline SceneSample render_scene(const CameraModel& cam, const std::vector<RigidBody>& bodies, const Background& bg) {
  cam.validate();
  const int h = cam.height, w = cam.width, n = h * w;
  SceneSample s;
  s.height = h;
  s.width = w;
  s.camera = cam;
  s.bodies = bodies;

  const View v1 = render_view(cam, Rigid{}, bodies, bg, false);
  const View v2 = render_view(cam, cam.pose_delta, bodies, bg, true);
  s.frames[0] = detail::to_float(v1.rgb);
  s.frames[1] = detail::to_float(v2.rgb);
  s.depth[0] = detail::to_float(v1.depth);
  s.depth[1] = detail::to_float(v2.depth);

  s.instance_mask.assign(n, 0);
  for (int p = 0; p < n; ++p)
    if (v1.body[p] >= 0) s.instance_mask[p] = static_cast<std::uint16_t>(bodies[v1.body[p]].id);

  FlowField ff = project_flow(v1.depth, cam, bodies, s.instance_mask);
  s.flow = detail::to_float(ff.flow);
  s.valid = std::move(ff.valid);

  s.scene_flow.assign(static_cast<std::size_t>(n) * 6, 0.0f);
  for (int p = 0; p < n; ++p) {
    const int b = v1.body[p];
    if (b < 0 || !bodies[b].moving) continue;
    const auto six = centroid_form(bodies[b].part_motion(v1.part[p]), bodies[b].centroid());
    for (int k = 0; k < 6; ++k) s.scene_flow[6 * p + k] = static_cast<float>(six[k]);
  }

  for (const auto& b : bodies) {
    s.motion_labels[b.id] = b.moving;
    s.movable[b.id] = b.movable;
    s.class_names[b.id] = to_string(b.shape);
  }
  return s;
}

inline std::set<Tag> scene_tags(Tag scenario, const std::vector<RigidBody>& bodies) {
  std::set<Tag> tags;
  if (scenario != Tag::kNone) tags.insert(scenario);
  for (const auto& b : bodies)
    if (b.movable && !b.moving) tags.insert(Tag::kStaticMovable);
  if (tags.empty()) tags.insert(Tag::kNone);
  return tags;
}

// The tag a sample is counted under in dataset histograms.
inline Tag primary_tag(const SceneSample& s) {
  if (s.scenario != Tag::kNone) return s.scenario;
  return s.tags.count(Tag::kStaticMovable) ? Tag::kStaticMovable : Tag::kNone;
}

inline SceneSample generate_scene(const GeneratorConfig& cfg, std::uint64_t seed) {
  cfg.validate();
  Rng rng(seed);
  Background bg{cfg.background_depth, rng()};

  if (cfg.use_fixed_bodies || !cfg.fixed_bodies.empty()) {
    const CameraModel cam = detail::draw_camera(cfg, Tag::kNone, rng);
    SceneSample s = render_scene(cam, cfg.fixed_bodies, bg);
    s.tags = scene_tags(Tag::kNone, cfg.fixed_bodies);
    s.seed = seed;
    return s;
  }

  for (int attempt = 0; attempt < 50; ++attempt) {
    const Tag scenario = detail::draw_scenario(cfg, rng);
    const CameraModel cam = detail::draw_camera(cfg, scenario, rng);
    auto layout = detail::draw_layout(cfg, scenario, cam, rng);
    if (!layout) continue;
    if (static_cast<int>(layout->bodies.size()) < cfg.min_bodies) continue;
    for (const auto& b : layout->bodies) b.validate();
    SceneSample s = render_scene(cam, layout->bodies, bg);
    bool connected = true;
    for (const auto& b : layout->bodies)
      connected = connected && detail::four_connected(s.instance_mask, s.height, s.width, b.id);
    if (!connected) continue;
    s.scenario = layout->scenario;
    s.tags = scene_tags(layout->scenario, layout->bodies);
    s.seed = seed;
    return s;
  }
  fail(ErrorCode::kInvalidSpec, "generator '", cfg.name, "': could not place ", cfg.min_bodies,
       "+ bodies after 50 layouts; reduce body count or size");
}

struct MixSource {
  GeneratorConfig config;
  double weight = 1.0;
};

struct DatasetMix {
  std::vector<MixSource> sources;
  bool equal_likelihood = true;

  void validate() const {
    check(!sources.empty(), ErrorCode::kEmptyMix, "dataset mix has no sources");
    for (const auto& s : sources) {
      check(s.weight > 0 && std::isfinite(s.weight), ErrorCode::kInvalidSpec, "mix source '", s.config.name,
            "' has non-positive weight ", s.weight);
      s.config.validate();
    }
  }

  std::vector<double> probabilities() const {
    std::vector<double> p(sources.size(), 1.0);
    if (!equal_likelihood)
      for (std::size_t i = 0; i < sources.size(); ++i) p[i] = sources[i].weight;
    double total = 0;
    for (double x : p) total += x;
    for (auto& x : p) x /= total;
    return p;
  }

  int draw_source(Rng& rng) const {
    check(!sources.empty(), ErrorCode::kEmptyMix, "dataset mix has no sources");
    const auto p = probabilities();
    double u = uniform01(rng);
    for (std::size_t i = 0; i + 1 < p.size(); ++i) {
      if (u < p[i]) return static_cast<int>(i);
      u -= p[i];
    }
    return static_cast<int>(p.size()) - 1;
  }
};

inline SceneSample sample_mix(const DatasetMix& mix, Rng& rng) {
  check(!mix.sources.empty(), ErrorCode::kEmptyMix, "dataset mix has no sources");
  const int src = mix.draw_source(rng);
  SceneSample s = generate_scene(mix.sources[src].config, rng());
  s.source = src;
  return s;
}

}  // namespace mfuse::scene
