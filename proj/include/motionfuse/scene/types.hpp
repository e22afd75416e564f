#pragma once

#include <array>
#include <cstdint>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "motionfuse/scene/geometry.hpp"

namespace mfuse::scene {

enum class ShapeKind { kDisc, kRectangle, kTriangle, kComposite };

inline const char* to_string(ShapeKind s) {
  switch (s) {
    case ShapeKind::kDisc: return "disc";
    case ShapeKind::kRectangle: return "rectangle";
    case ShapeKind::kTriangle: return "triangle";
    case ShapeKind::kComposite: return "composite";
  }
  return "?";
}

inline ShapeKind parse_shape(const std::string& s) {
  for (auto k : {ShapeKind::kDisc, ShapeKind::kRectangle, ShapeKind::kTriangle, ShapeKind::kComposite})
    if (s == to_string(k)) return k;
  fail(ErrorCode::kInvalidSpec, "unknown shape '", s, "'");
}

enum class Tag { kColinear, kStaticMovable, kGroupMotion, kPartMotion, kNone };

inline const char* to_string(Tag t) {
  switch (t) {
    case Tag::kColinear: return "colinear";
    case Tag::kStaticMovable: return "static_movable";
    case Tag::kGroupMotion: return "group_motion";
    case Tag::kPartMotion: return "part_motion";
    case Tag::kNone: return "none";
  }
  return "?";
}

inline Tag parse_tag(const std::string& s) {
  for (auto t : {Tag::kColinear, Tag::kStaticMovable, Tag::kGroupMotion, Tag::kPartMotion, Tag::kNone})
    if (s == to_string(t)) return t;
  fail(ErrorCode::kFormat, "unknown tag '", s, "'");
}

// Sub-part of a composite body: a bar hinged on the torso rim. Its motion is
// applied in the world frame before the body motion.
struct ArmPart {
  double angle = 0.0;       // direction from the centroid, in the card plane
  double length = 0.0;      // world units, measured from the hinge
  double half_width = 0.0;  // world units
  Rigid motion;
};

inline constexpr double kHingeFraction = 0.8;  // hinge sits at 0.8 torso radii

// Planar textured card, fronto-parallel in frame 1 at z = depth.
struct RigidBody {
  int id = 1;
  ShapeKind shape = ShapeKind::kDisc;
  std::uint64_t texture_seed = 0;
  double depth = 6.0;
  Vec2 center{0.0, 0.0};     // world x, y of the centroid
  double size = 1.0;         // circumradius; half-width for rectangles
  double aspect = 1.0;       // rectangle half-height / half-width
  double orientation = 0.0;  // in-plane rotation, radians
  Rigid motion;              // world frame, x -> R x + t
  std::optional<ArmPart> arm;
  bool movable = true;
  bool moving = false;
  std::optional<int> group_id;

  Vec3 centroid() const { return {center.x(), center.y(), depth}; }
  Vec3 hinge() const {
    return centroid() + Vec3(std::cos(arm->angle), std::sin(arm->angle), 0.0) * (kHingeFraction * size);
  }
  bool has_motion() const {
    return !motion.is_identity() || (arm && !arm->motion.is_identity());
  }
  // Transform carried by the part of the body a local point belongs to.
  Rigid part_motion(int part) const { return part == 2 ? arm->motion.then(motion) : motion; }

  // 0 outside, 1 main body, 2 composite arm. (u, v) is relative to the
  // centroid in the card plane, world units.
  int region(double u, double v) const {
    const double c = std::cos(orientation), s = std::sin(orientation);
    const double a = c * u + s * v, b = -s * u + c * v;
    switch (shape) {
      case ShapeKind::kDisc: return a * a + b * b <= size * size ? 1 : 0;
      case ShapeKind::kRectangle: return std::abs(a) <= size && std::abs(b) <= size * aspect ? 1 : 0;
      case ShapeKind::kTriangle: {
        // equilateral, circumradius `size`, inradius size/2
        constexpr double kPi = 3.14159265358979323846;
        for (double ang : {1.5 * kPi, kPi / 6.0, 5.0 * kPi / 6.0})
          if (a * std::cos(ang) + b * std::sin(ang) > 0.5 * size) return 0;
        return 1;
      }
      case ShapeKind::kComposite: {
        if (u * u + v * v <= size * size) return 1;
        if (!arm) return 0;
        const double dx = std::cos(arm->angle), dy = std::sin(arm->angle);
        const double along = u * dx + v * dy - kHingeFraction * size;
        const double across = -u * dy + v * dx;
        return along >= 0 && along <= arm->length && std::abs(across) <= arm->half_width ? 2 : 0;
      }
    }
    return 0;
  }

  void validate() const {
    check(id >= 1, ErrorCode::kInvalidSpec, "body id must be >= 1, got ", id);
    check(depth > 0, ErrorCode::kInvalidSpec, "body ", id, ": non-positive depth ", depth);
    check(size > 0 && aspect > 0, ErrorCode::kInvalidSpec, "body ", id, ": non-positive size");
    check(motion.is_proper_rotation() && (!arm || arm->motion.is_proper_rotation()),
          ErrorCode::kInvalidSpec, "body ", id, ": motion rotation not orthonormal");
    check(!arm || shape == ShapeKind::kComposite, ErrorCode::kInvalidSpec, "body ", id,
          ": only composites carry an arm");
    check(moving == has_motion(), ErrorCode::kInvalidSpec, "body ", id,
          ": moving flag disagrees with its motion");
    check(!moving || movable, ErrorCode::kInvalidSpec, "body ", id, ": moving but not movable");
  }
};

struct SceneSample {
  int height = 0;
  int width = 0;
  std::array<std::vector<float>, 2> frames;  // H*W*3 interleaved RGB in [0,1]
  std::vector<float> flow;                   // H*W*2, frame 1 -> 2, pixels
  std::array<std::vector<float>, 2> depth;   // H*W each
  std::vector<float> scene_flow;             // H*W*6: axis-angle, translation
  std::vector<std::uint16_t> instance_mask;  // H*W, 0 = background
  std::vector<std::uint8_t> valid;           // H*W, 0 where the point leaves the view frustum
  std::map<int, bool> motion_labels;
  std::map<int, bool> movable;
  std::map<int, std::string> class_names;
  std::set<Tag> tags;
  Tag scenario = Tag::kNone;
  CameraModel camera;
  std::vector<RigidBody> bodies;
  int source = 0;
  std::uint64_t seed = 0;

  int pixels() const { return height * width; }
  std::vector<int> ids() const {
    std::vector<int> out;
    for (auto& [id, m] : motion_labels) out.push_back(id);
    return out;
  }
};

}  // namespace mfuse::scene
