#pragma once

#include <limits>
#include <vector>

#include "motionfuse/scene/texture.hpp"
#include "motionfuse/scene/types.hpp"

namespace mfuse::scene {

inline constexpr double kMinDepth = 1e-6;

struct Background {
  double depth = 12.0;  // fronto-parallel static plane
  std::uint64_t texture_seed = 0;
};

// One rendered view. body/part are per pixel: body index (-1 = background or
// nothing hit), part 1 main / 2 arm.
struct View {
  std::vector<double> rgb;    // H*W*3
  std::vector<double> depth;  // H*W, 0 where no surface was hit
  std::vector<int> body;
  std::vector<int> part;
};

// Ray casting against the planar cards after applying each card's motion.
// `pose` places the viewing camera in the world (identity for frame 1).
// `moved` selects whether body motions are applied (frame 2) or not.
inline View render_view(const CameraModel& cam, const Rigid& pose, const std::vector<RigidBody>& bodies,
                        const Background& bg, bool moved) {
  const int h = cam.height, w = cam.width, n = h * w;
  View v;
  v.rgb.assign(static_cast<std::size_t>(n) * 3, 0.0);
  v.depth.assign(n, 0.0);
  v.body.assign(n, -1);
  v.part.assign(n, 0);

  struct Card {
    int body;
    int part;
    Rigid m, inv;
    Vec3 normal, anchor;
  };
  std::vector<Card> cards;
  for (int b = 0; b < static_cast<int>(bodies.size()); ++b) {
    const auto& body = bodies[b];
    for (int part = 1; part <= (body.arm ? 2 : 1); ++part) {
      Rigid m = moved ? body.part_motion(part) : Rigid{};
      cards.push_back({b, part, m, m.inverse(), m.R * Vec3::UnitZ(), m.apply(body.centroid())});
    }
  }

  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) {
      const int p = y * w + x;
      const Vec3 d = pose.R * cam.ray(x, y);  // camera-depth 1 along the ray
      const Vec3& o = pose.t;
      double best = std::numeric_limits<double>::infinity();
      for (const auto& c : cards) {
        const double nd = c.normal.dot(d);
        if (std::abs(nd) < 1e-12) continue;
        const double s = c.normal.dot(c.anchor - o) / nd;
        if (s <= kMinDepth || s >= best) continue;
        const Vec3 local = c.inv.apply(o + s * d) - bodies[c.body].centroid();
        if (bodies[c.body].region(local.x(), local.y()) != c.part) continue;
        best = s;
        v.body[p] = c.body;
        v.part[p] = c.part;
        const Rgb col = body_color(bodies[c.body], local.x(), local.y());
        for (int k = 0; k < 3; ++k) v.rgb[3 * p + k] = col[k];
      }
      if (v.body[p] < 0) {
        if (std::abs(d.z()) < 1e-12) continue;
        const double s = (bg.depth - o.z()) / d.z();
        if (s <= kMinDepth) continue;
        best = s;
        const Vec3 hit = o + s * d;
        const Rgb col = background_color(hit.x(), hit.y(), bg.texture_seed);
        for (int k = 0; k < 3; ++k) v.rgb[3 * p + k] = col[k];
      }
      v.depth[p] = best;
    }
  return v;
}

struct FlowField {
  std::vector<double> flow;         // H*W*2
  std::vector<std::uint8_t> valid;  // H*W
};

inline int body_index(const std::vector<RigidBody>& bodies, int id) {
  for (int i = 0; i < static_cast<int>(bodies.size()); ++i)
    if (bodies[i].id == id) return i;
  return -1;
}

// Part of body b that frame-1 point x (world) lies on.
inline int part_at(const RigidBody& b, const Vec3& x) {
  const Vec3 local = x - b.centroid();
  const int r = b.region(local.x(), local.y());
  return r == 0 ? 1 : r;
}

// Back-projects every pixel with its frame-1 depth, moves it with its body
// (identity for background), views it from camera 2 and subtracts the pixel.
inline FlowField project_flow(const std::vector<double>& depth, const CameraModel& cam,
                              const std::vector<RigidBody>& bodies, const std::vector<std::uint16_t>& masks) {
  const int h = cam.height, w = cam.width, n = h * w;
  check(static_cast<int>(depth.size()) == n && static_cast<int>(masks.size()) == n,
        ErrorCode::kShapeMismatch, "project_flow: depth/mask size does not match the camera");
  FlowField out;
  out.flow.assign(static_cast<std::size_t>(n) * 2, 0.0);
  out.valid.assign(n, 1);
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) {
      const int p = y * w + x;
      check(depth[p] > 0, ErrorCode::kInvalidArgument, "project_flow: non-positive depth at pixel (", x,
            ",", y, ")");
      const Vec3 X = depth[p] * cam.ray(x, y);
      Vec3 moved = X;
      if (masks[p] != 0) {
        const int b = body_index(bodies, masks[p]);
        check(b >= 0, ErrorCode::kInvalidArgument, "project_flow: mask id ", masks[p], " has no body");
        moved = bodies[b].part_motion(part_at(bodies[b], X)).apply(X);
      }
      const Vec3 c2 = cam.world_to_cam2(moved);
      if (c2.z() <= kMinDepth) {
        out.valid[p] = 0;
        continue;
      }
      // subtracting the reprojected source keeps zero motion exactly zero
      const Vec2 q = cam.project(c2) - cam.project(X);
      out.flow[2 * p] = q.x();
      out.flow[2 * p + 1] = q.y();
    }
  return out;
}

// Six-parameter rigid motion of a pixel: axis-angle of the rotation and the
// displacement of the body centroid, i.e. x -> R (x - c) + c + t.
inline std::array<double, 6> centroid_form(const Rigid& m, const Vec3& c) {
  const Vec3 r = axis_angle_from_rotation(m.R);
  const Vec3 t = m.apply(c) - c;
  return {r.x(), r.y(), r.z(), t.x(), t.y(), t.z()};
}

}  // namespace mfuse::scene
