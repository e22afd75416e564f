#pragma once

#include <algorithm>
#include <cmath>
#include <set>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "motionfuse/core/spatial_ops.hpp"
#include "motionfuse/eval/metrics.hpp"
#include "motionfuse/fusion/decoder.hpp"
#include "motionfuse/loss/criterion.hpp"
#include "motionfuse/scene/types.hpp"

namespace mfuse::eval {

// Every query becomes a detection: its mask logits bilinearly resized to the
// input resolution and thresholded at 0 (sigmoid 0.5), its confidence the
// moving-object class probability. Queries with an empty mask are dropped.
template <class T>
std::vector<Detection> extract_detections(const fusion::Prediction<T>& p, int height, int width) {
  std::vector<BilinearTap> taps;
  taps.reserve(static_cast<std::size_t>(height) * width);
  for (int y = 0; y < height; ++y)
    for (int x = 0; x < width; ++x)
      taps.push_back(bilinear_tap(p.height, p.width, (x + 0.5) / width, (y + 0.5) / height));
  const auto prob = loss::moving_probability(p);
  const std::size_t hw = static_cast<std::size_t>(p.height) * p.width;
  std::vector<Detection> out;
  for (int i = 0; i < p.n_queries(); ++i) {
    const T* row = p.mask_logits.data() + i * hw;
    Detection d{BinaryMask(taps.size(), 0), prob[i]};
    bool any = false;
    for (std::size_t c = 0; c < taps.size(); ++c) {
      double v = 0;
      for (int k = 0; k < 4; ++k) v += taps[c].w[k] * static_cast<double>(row[taps[c].idx[k]]);
      d.mask[c] = v > 0 ? 1 : 0;
      any = any || d.mask[c];
    }
    if (any) out.push_back(std::move(d));
  }
  return out;
}

// Row-major run lengths alternating 0-runs and 1-runs, starting with a
// (possibly empty) 0-run.
inline std::vector<int> rle_encode(const BinaryMask& m) {
  std::vector<int> runs;
  std::uint8_t cur = 0;
  int len = 0;
  for (std::uint8_t v : m) {
    const std::uint8_t b = v ? 1 : 0;
    if (b != cur) {
      runs.push_back(len);
      cur = b;
      len = 0;
    }
    ++len;
  }
  runs.push_back(len);
  return runs;
}

inline BinaryMask rle_decode(const std::vector<int>& runs, std::size_t n) {
  BinaryMask m;
  m.reserve(n);
  std::uint8_t cur = 0;
  for (int r : runs) {
    check(r >= 0, ErrorCode::kFormat, "negative run length");
    m.insert(m.end(), static_cast<std::size_t>(r), cur);
    cur ^= 1;
  }
  check(m.size() == n, ErrorCode::kFormat, "run lengths cover ", m.size(), " pixels, expected ", n);
  return m;
}

// One JSON line of the prediction dump.
inline nlohmann::json frame_to_json(const Frame& f) {
  nlohmann::json inst = nlohmann::json::array();
  for (const auto& d : f.preds) inst.push_back({{"rle_mask", rle_encode(d.mask)}, {"confidence", d.confidence}});
  return {{"frame_id", f.id}, {"height", f.height}, {"width", f.width}, {"instances", inst}};
}

inline Frame frame_from_json(const nlohmann::json& j) {
  Frame f;
  try {
    f.id = j.at("frame_id").get<std::string>();
    f.height = j.at("height").get<int>();
    f.width = j.at("width").get<int>();
    for (const auto& i : j.at("instances"))
      f.preds.push_back({rle_decode(i.at("rle_mask").get<std::vector<int>>(),
                                    static_cast<std::size_t>(f.height) * f.width),
                         i.at("confidence").get<double>()});
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorCode::kFormat, "prediction record: ", e.what());
  }
  return f;
}

inline const std::set<std::string>& coco_moving_classes() {
  static const std::set<std::string> s{
      "person", "bicycle", "car",      "motorcycle", "airplane",     "bus",          "train",        "truck",
      "boat",   "bird",    "cat",      "dog",        "horse",        "sheep",        "cow",          "elephant",
      "bear",   "zebra",   "giraffe",  "frisbee",    "skis",         "snowboard",    "sports ball",  "kite",
      "baseball bat",      "baseball glove",         "skateboard",   "surfboard",    "tennis racket"};
  return s;
}

// The static row, spelled as in the source table ("refrigator"); the correct
// spelling is accepted as well.
inline const std::set<std::string>& coco_static_classes() {
  static const std::set<std::string> s{
      "traffic light", "hydrant",    "fire hydrant", "stop sign",  "parking meter", "bench",       "backpack",
      "umbrella",      "handbag",    "tie",          "suitcase",   "bottle",        "wine glass",  "cup",
      "fork",          "knife",      "spoon",        "bowl",       "banana",        "apple",       "sandwich",
      "orange",        "broccoli",   "carrot",       "hot dog",    "pizza",         "donut",       "cake",
      "chair",         "couch",      "potted plant", "bed",        "dining table",  "toilet",      "tv",
      "laptop",        "mouse",      "remote",       "keyboard",   "cell phone",    "microwave",   "oven",
      "toaster",       "sink",       "refrigator",   "refrigerator", "book",        "clock",       "vase",
      "scissors",      "teddy bear", "hair drier",   "toothbrush"};
  return s;
}

// COCO taxonomy: true for classes that are likely to move.
inline bool movable_class_filter(const std::string& label) {
  if (coco_moving_classes().count(label)) return true;
  if (coco_static_classes().count(label)) return false;
  fail(ErrorCode::kUnknownLabel, "'", label, "' is not a COCO class");
}

// Synthetic taxonomy: the generator's per-body flag.
inline bool movable_class_filter(const scene::RigidBody& b) { return b.movable; }

}  // namespace mfuse::eval
