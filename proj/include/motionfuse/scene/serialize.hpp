#pragma once

#include <nlohmann/json.hpp>

#include "motionfuse/scene/generator.hpp"

namespace mfuse::scene {

using nlohmann::json;

inline json rigid_to_json(const Rigid& r) {
  json R = json::array();
  for (int i = 0; i < 3; ++i)
    for (int j = 0; j < 3; ++j) R.push_back(r.R(i, j));
  return {{"R", R}, {"t", {r.t.x(), r.t.y(), r.t.z()}}};
}

inline Rigid rigid_from_json(const json& j) {
  Rigid r;
  if (j.contains("rotvec")) {
    const auto& v = j.at("rotvec");
    r.R = rotation_from_axis_angle(Vec3(v.at(0), v.at(1), v.at(2)));
  } else if (j.contains("R")) {
    const auto& R = j.at("R");
    check(R.size() == 9, ErrorCode::kFormat, "rigid transform: R needs 9 numbers");
    for (int i = 0; i < 3; ++i)
      for (int k = 0; k < 3; ++k) r.R(i, k) = R.at(3 * i + k).get<double>();
  }
  if (j.contains("t")) {
    const auto& t = j.at("t");
    r.t = Vec3(t.at(0), t.at(1), t.at(2));
  }
  return r;
}

inline json body_to_json(const RigidBody& b) {
  json j{{"id", b.id},
         {"shape", to_string(b.shape)},
         {"texture_seed", b.texture_seed},
         {"depth", b.depth},
         {"center", {b.center.x(), b.center.y()}},
         {"size", b.size},
         {"aspect", b.aspect},
         {"orientation", b.orientation},
         {"motion", rigid_to_json(b.motion)},
         {"movable", b.movable},
         {"moving", b.moving}};
  if (b.arm)
    j["arm"] = {{"angle", b.arm->angle},
                {"length", b.arm->length},
                {"half_width", b.arm->half_width},
                {"motion", rigid_to_json(b.arm->motion)}};
  if (b.group_id) j["group_id"] = *b.group_id;
  return j;
}

// `moving` is derived from the motion when absent.
inline RigidBody body_from_json(const json& j) {
  RigidBody b;
  b.id = j.at("id");
  b.shape = parse_shape(j.at("shape"));
  b.texture_seed = j.value("texture_seed", std::uint64_t{0});
  b.depth = j.at("depth");
  if (j.contains("center")) b.center = Vec2(j["center"].at(0), j["center"].at(1));
  b.size = j.value("size", 1.0);
  b.aspect = j.value("aspect", 1.0);
  b.orientation = j.value("orientation", 0.0);
  if (j.contains("motion")) b.motion = rigid_from_json(j["motion"]);
  if (j.contains("arm")) {
    const auto& a = j["arm"];
    ArmPart arm;
    arm.angle = a.value("angle", 0.0);
    arm.length = a.at("length");
    arm.half_width = a.at("half_width");
    if (a.contains("motion")) arm.motion = rigid_from_json(a["motion"]);
    b.arm = arm;
  }
  b.movable = j.value("movable", true);
  b.moving = j.contains("moving") ? j["moving"].get<bool>() : b.has_motion();
  if (j.contains("group_id")) b.group_id = j["group_id"].get<int>();
  return b;
}

inline json config_to_json(const GeneratorConfig& c) {
  json j{{"name", c.name},
         {"height", c.height},
         {"width", c.width},
         {"focal", c.focal},
         {"min_bodies", c.min_bodies},
         {"max_bodies", c.max_bodies},
         {"background_depth", c.background_depth},
         {"depth_min", c.depth_min},
         {"depth_max", c.depth_max},
         {"radius_px_min", c.radius_px_min},
         {"radius_px_max", c.radius_px_max},
         {"p_movable", c.p_movable},
         {"p_moving", c.p_moving},
         {"p_composite", c.p_composite},
         {"min_static_movable", c.min_static_movable},
         {"static_camera", c.static_camera},
         {"camera_max_translation", c.camera_max_translation},
         {"camera_max_rotation_deg", c.camera_max_rotation_deg},
         {"body_max_translation", c.body_max_translation},
         {"body_max_rotation_deg", c.body_max_rotation_deg},
         {"min_motion_px", c.min_motion_px},
         {"p_colinear", c.p_colinear},
         {"p_group", c.p_group},
         {"p_part", c.p_part}};
  if (c.camera_motion) j["camera_motion"] = rigid_to_json(*c.camera_motion);
  if (c.use_fixed_bodies || !c.fixed_bodies.empty()) {
    j["fixed_bodies"] = json::array();
    for (const auto& b : c.fixed_bodies) j["fixed_bodies"].push_back(body_to_json(b));
  }
  return j;
}

// Missing keys keep their defaults; unknown keys are rejected so typos in
// hand-written configs surface.
inline GeneratorConfig config_from_json(const json& j) {
  GeneratorConfig c;
  static const std::set<std::string> known{
      "name", "height", "width", "focal", "min_bodies", "max_bodies", "background_depth", "depth_min",
      "depth_max", "radius_px_min", "radius_px_max", "p_movable", "p_moving", "p_composite",
      "min_static_movable", "static_camera", "camera_max_translation", "camera_max_rotation_deg",
      "body_max_translation", "body_max_rotation_deg", "min_motion_px", "p_colinear", "p_group", "p_part",
      "camera_motion", "fixed_bodies"};
  for (auto it = j.begin(); it != j.end(); ++it)
    check(known.count(it.key()) > 0, ErrorCode::kInvalidSpec, "generator config: unknown key '", it.key(), "'");
  c.name = j.value("name", c.name);
  c.height = j.value("height", c.height);
  c.width = j.value("width", c.width);
  c.focal = j.value("focal", c.focal);
  c.min_bodies = j.value("min_bodies", c.min_bodies);
  c.max_bodies = j.value("max_bodies", c.max_bodies);
  c.background_depth = j.value("background_depth", c.background_depth);
  c.depth_min = j.value("depth_min", c.depth_min);
  c.depth_max = j.value("depth_max", c.depth_max);
  c.radius_px_min = j.value("radius_px_min", c.radius_px_min);
  c.radius_px_max = j.value("radius_px_max", c.radius_px_max);
  c.p_movable = j.value("p_movable", c.p_movable);
  c.p_moving = j.value("p_moving", c.p_moving);
  c.p_composite = j.value("p_composite", c.p_composite);
  c.min_static_movable = j.value("min_static_movable", c.min_static_movable);
  c.static_camera = j.value("static_camera", c.static_camera);
  c.camera_max_translation = j.value("camera_max_translation", c.camera_max_translation);
  c.camera_max_rotation_deg = j.value("camera_max_rotation_deg", c.camera_max_rotation_deg);
  c.body_max_translation = j.value("body_max_translation", c.body_max_translation);
  c.body_max_rotation_deg = j.value("body_max_rotation_deg", c.body_max_rotation_deg);
  c.min_motion_px = j.value("min_motion_px", c.min_motion_px);
  c.p_colinear = j.value("p_colinear", c.p_colinear);
  c.p_group = j.value("p_group", c.p_group);
  c.p_part = j.value("p_part", c.p_part);
  if (j.contains("camera_motion")) c.camera_motion = rigid_from_json(j["camera_motion"]);
  if (j.contains("fixed_bodies")) {
    c.use_fixed_bodies = true;
    for (const auto& b : j["fixed_bodies"]) c.fixed_bodies.push_back(body_from_json(b));
  }
  return c;
}

inline json mix_to_json(const DatasetMix& m) {
  json src = json::array();
  for (const auto& s : m.sources) src.push_back({{"config", config_to_json(s.config)}, {"weight", s.weight}});
  return {{"sources", src}, {"equal_likelihood", m.equal_likelihood}};
}

inline DatasetMix mix_from_json(const json& j) {
  DatasetMix m;
  m.equal_likelihood = j.value("equal_likelihood", true);
  if (j.contains("sources"))
    for (const auto& s : j["sources"])
      m.sources.push_back({config_from_json(s.value("config", json::object())), s.value("weight", 1.0)});
  return m;
}

}  // namespace mfuse::scene
