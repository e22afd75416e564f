#pragma once

#include <cstdint>
#include <vector>

#include "motionfuse/scene/types.hpp"

namespace mfuse::scene {

// Instances a model is asked to segment, as full-resolution binary masks.
struct TargetSet {
  int height = 0;
  int width = 0;
  std::vector<int> ids;
  std::vector<std::vector<std::uint8_t>> masks;

  int size() const { return static_cast<int>(masks.size()); }
  bool empty() const { return masks.empty(); }
  void clear() {
    ids.clear();
    masks.clear();
  }
};

inline std::vector<std::uint8_t> instance_mask_of(const SceneSample& s, int id) {
  std::vector<std::uint8_t> m(s.pixels(), 0);
  for (int p = 0; p < s.pixels(); ++p) m[p] = s.instance_mask[p] == id ? 1 : 0;
  return m;
}

// Moving bodies only: the motion and fusion objective.
inline TargetSet moving_targets(const SceneSample& s) {
  TargetSet t{s.height, s.width, {}, {}};
  for (auto& [id, moving] : s.motion_labels)
    if (moving) {
      t.ids.push_back(id);
      t.masks.push_back(instance_mask_of(s, id));
    }
  return t;
}

// Every body of a movable class, moving or not: the appearance pretraining
// objective.
inline TargetSet movable_targets(const SceneSample& s) {
  TargetSet t{s.height, s.width, {}, {}};
  for (auto& [id, movable] : s.movable)
    if (movable) {
      t.ids.push_back(id);
      t.masks.push_back(instance_mask_of(s, id));
    }
  return t;
}

}  // namespace mfuse::scene
