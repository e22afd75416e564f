#include <gtest/gtest.h>

#include "motionfuse/eval/metrics.hpp"
#include "motionfuse/eval/predictions.hpp"
#include "oracles.hpp"

using namespace mfuse;
using namespace mfuse::eval;

namespace {

BinaryMask rect(int h, int w, int x0, int y0, int x1, int y1) {
  BinaryMask m(static_cast<std::size_t>(h) * w, 0);
  for (int y = y0; y < y1; ++y)
    for (int x = x0; x < x1; ++x) m[static_cast<std::size_t>(y) * w + x] = 1;
  return m;
}

Frame frame(int h, int w, std::vector<Detection> preds, std::vector<BinaryMask> gts) {
  Frame f;
  f.height = h;
  f.width = w;
  f.preds = std::move(preds);
  f.gts = std::move(gts);
  return f;
}

void expect_same(const MetricReport& a, const MetricReport& b) {
  EXPECT_EQ(a.ap.has_value(), b.ap.has_value());
  if (a.ap && b.ap) {
    EXPECT_EQ(*a.ap, *b.ap);
    EXPECT_EQ(*a.ap50, *b.ap50);
    EXPECT_EQ(*a.ap75, *b.ap75);
  }
  EXPECT_EQ(a.pu, b.pu);
  EXPECT_EQ(a.ru, b.ru);
  EXPECT_EQ(a.fu, b.fu);
  EXPECT_EQ(a.fp_per_frame, b.fp_per_frame);
  EXPECT_EQ(a.fn_per_frame, b.fn_per_frame);
  EXPECT_EQ(a.bg, b.bg);
  EXPECT_EQ(a.obj, b.obj);
}

}  // namespace

TEST(Match, IdenticalPredictionsAreAllTruePositives) {
  std::vector<BinaryMask> g{rect(8, 8, 0, 0, 3, 3), rect(8, 8, 4, 4, 8, 8)};
  for (double t : {0.01, 0.5, 1.0}) {
    const auto r = match_detections(g, g, t);
    EXPECT_EQ(r.tp.size(), 2u);
    EXPECT_TRUE(r.fp.empty());
    EXPECT_TRUE(r.fn.empty());
  }
}

TEST(Match, OnePredictionTwoDisjointTargets) {
  std::vector<BinaryMask> g{rect(8, 8, 0, 0, 3, 3), rect(8, 8, 4, 4, 8, 8)};
  const auto r = match_detections({g[1]}, g, 0.5);
  ASSERT_EQ(r.tp.size(), 1u);
  EXPECT_EQ(r.tp[0], std::make_pair(0, 1));
  EXPECT_EQ(r.fn, std::vector<int>{0});
  EXPECT_TRUE(r.fp.empty());
}

TEST(Match, EqualsEnumerationOracle) {
  Rng rng(11);
  for (int trial = 0; trial < 200; ++trial) {
    std::vector<BinaryMask> p, g;
    for (int i = 0; i < 3; ++i) g.push_back(oracle::random_mask(rng, 6, 6));
    for (int i = 0; i < 3; ++i) {
      auto m = g[uniform_int(rng, 0, 2)];
      for (auto& v : m)
        if (bernoulli(rng, 0.2)) v ^= 1;
      p.push_back(bernoulli(rng, 0.7) ? m : oracle::random_mask(rng, 6, 6));
    }
    const double t = uniform(rng, 0.05, 0.9);
    const auto r = match_detections(p, g, t);
    std::vector<std::vector<double>> ious(3, std::vector<double>(3));
    for (int i = 0; i < 3; ++i)
      for (int j = 0; j < 3; ++j) ious[i][j] = oracle::iou(p[i], g[j]);
    const auto o = oracle::lexmax_match(ious, 3, t);
    std::vector<int> got(3, -1);
    for (auto [i, j] : r.tp) got[i] = j;
    EXPECT_EQ(got, o.gt_of) << "trial " << trial;
    EXPECT_EQ(static_cast<int>(r.fp.size()), o.fp);
    EXPECT_EQ(static_cast<int>(r.fn.size()), o.fn);
  }
}

TEST(Match, RejectsThresholdOutsideUnitInterval) {
  EXPECT_THROW(match_detections({}, {}, 0.0), Error);
  EXPECT_THROW(match_detections({}, {}, 1.5), Error);
}

TEST(CocoAp, PerfectDetectionsScoreOne) {
  DetectionSet d;
  auto g = rect(8, 8, 1, 1, 4, 4), h = rect(8, 8, 5, 5, 8, 8);
  d.frames.push_back(frame(8, 8, {{g, 0.31}, {h, 0.9}}, {g, h}));
  d.frames.push_back(frame(8, 8, {{h, 0.05}}, {h}));
  const auto r = coco_ap(d);
  EXPECT_DOUBLE_EQ(*r.ap, 1.0);
  EXPECT_DOUBLE_EQ(*r.ap50, 1.0);
  EXPECT_DOUBLE_EQ(*r.ap75, 1.0);
}

TEST(CocoAp, NoPredictionsScoreZero) {
  DetectionSet d;
  d.frames.push_back(frame(8, 8, {}, {rect(8, 8, 0, 0, 2, 2)}));
  EXPECT_EQ(*coco_ap(d).ap, 0.0);
}

TEST(CocoAp, SpuriousLowerConfidenceDetectionKeepsAp50) {
  // recall 1 is reached at precision 1 before the false positive arrives
  DetectionSet d;
  auto g = rect(8, 8, 0, 0, 4, 4);
  d.frames.push_back(frame(8, 8, {{g, 0.9}, {rect(8, 8, 6, 6, 8, 8), 0.8}}, {g}));
  EXPECT_DOUBLE_EQ(*coco_ap(d).ap50, 1.0);
}

TEST(CocoAp, AbsentWithoutGroundTruth) {
  DetectionSet d;
  d.frames.push_back(frame(8, 8, {{rect(8, 8, 0, 0, 2, 2), 0.9}}, {}));
  EXPECT_FALSE(coco_ap(d).ap.has_value());
  EXPECT_FALSE(evaluate(d).ap50.has_value());
}

TEST(PuRuFu, PerfectAtFullConfidence) {
  DetectionSet d;
  auto g = rect(8, 8, 0, 0, 4, 4);
  d.frames.push_back(frame(8, 8, {{g, 1.0}}, {g}));
  const auto r = pu_ru_fu(d);
  EXPECT_DOUBLE_EQ(r.pu, 1.0);
  EXPECT_DOUBLE_EQ(r.ru, 1.0);
  EXPECT_DOUBLE_EQ(r.fu, 1.0);
}

TEST(PuRuFu, GridHasTwentyOneCells) {
  EXPECT_EQ(iou_grid().size() * confidence_grid().size(), 21u);
}

TEST(PuRuFu, MidConfidenceCountsAtTwoOfThreeThresholds) {
  // found at confidence thresholds 0.3 and 0.5, missed at 0.7, for all seven IoUs
  DetectionSet d;
  auto g = rect(8, 8, 0, 0, 4, 4);
  d.frames.push_back(frame(8, 8, {{g, 0.5}}, {g}));
  const auto r = pu_ru_fu(d);
  EXPECT_NEAR(r.ru, 2.0 / 3.0, 1e-15);
  EXPECT_NEAR(r.pu, 2.0 / 3.0, 1e-15);  // the 0.7 cells have no predictions: precision 0
}

TEST(PuRuFu, FscoreFollowsAveragedPrecisionAndRecall) {
  Rng rng(5);
  for (int t = 0; t < 20; ++t) {
    const auto r = pu_ru_fu(oracle::random_dataset(rng));
    EXPECT_DOUBLE_EQ(r.fu, r.pu + r.ru > 0 ? 2 * r.pu * r.ru / (r.pu + r.ru) : 0.0);
  }
}

TEST(FpFn, PerfectDetectionsHaveNone) {
  DetectionSet d;
  auto g = rect(8, 8, 0, 0, 4, 4);
  d.frames.push_back(frame(8, 8, {{g, 0.99}}, {g}));
  const auto r = fp_fn(d);
  EXPECT_EQ(r.fp_per_frame, 0.0);
  EXPECT_EQ(r.fn_per_frame, 0.0);
}

TEST(FpFn, EmptyPredictionsNormalizePerFrame) {
  DetectionSet d;
  d.frames.push_back(frame(8, 8, {}, {rect(8, 8, 0, 0, 2, 2)}));
  d.frames.push_back(frame(8, 8, {}, {rect(8, 8, 4, 4, 6, 6)}));
  d.frames.push_back(frame(8, 8, {}, {}));
  d.frames.push_back(frame(8, 8, {}, {}));
  const auto r = fp_fn(d);
  EXPECT_DOUBLE_EQ(r.fn_per_frame, 0.5);
  EXPECT_EQ(r.fp_per_frame, 0.0);
}

TEST(FpFn, MixedThreeFramesMatchHandCount) {
  // frame 0: exact hit at 0.8 plus a disjoint spurious mask at 0.4
  // frame 1: half-overlapping prediction (IoU 0.5) at 0.6
  // frame 2: one missed target
  DetectionSet d;
  auto a = rect(8, 8, 0, 0, 4, 4), b = rect(8, 8, 0, 0, 4, 2), c = rect(8, 8, 4, 4, 8, 8);
  d.frames.push_back(frame(8, 8, {{a, 0.8}, {c, 0.4}}, {a}));
  d.frames.push_back(frame(8, 8, {{b, 0.6}}, {a}));
  d.frames.push_back(frame(8, 8, {}, {c}));
  // FP per (iou, conf): spurious counts at conf 0.3 (7 cells); b is FP at conf 0.3/0.5
  // for IoU > 0.5 (0.75, 0.9, 0.95: 6 cells). FN: frame 2 always (21); frame 1 when b
  // is unmatched (6 cells) or filtered at 0.7 (7 cells).
  const auto r = fp_fn(d);
  EXPECT_DOUBLE_EQ(r.fp_per_frame, (7.0 + 6.0) / 21.0 / 3.0);
  EXPECT_DOUBLE_EQ(r.fn_per_frame, (21.0 + 6.0 + 7.0) / 21.0 / 3.0);
  expect_same(evaluate(d), oracle::report(d));
}

TEST(FpFn, SpuriousPredictionNeverLowersFpOrChangesFn) {
  Rng rng(21);
  for (int t = 0; t < 50; ++t) {
    auto d = oracle::random_dataset(rng, 3, 8, 8);
    const auto before = fp_fn(d);
    // a mask disjoint from every target cannot match at any threshold
    auto& f = d.frames[uniform_int(rng, 0, 2)];
    BinaryMask free(64, 1);
    for (const auto& g : f.gts)
      for (int i = 0; i < 64; ++i)
        if (g[i]) free[i] = 0;
    if (std::count(free.begin(), free.end(), 1) == 0) continue;
    f.preds.push_back({free, uniform01(rng)});
    const auto after = fp_fn(d);
    EXPECT_GE(after.fp_per_frame, before.fp_per_frame);
    EXPECT_EQ(after.fn_per_frame, before.fn_per_frame);
  }
}

TEST(FpFn, DeletingCorrectPredictionNeverLowersFn) {
  Rng rng(22);
  for (int t = 0; t < 50; ++t) {
    auto d = oracle::random_dataset(rng, 3, 8, 8);
    auto& f = d.frames[uniform_int(rng, 0, 2)];
    if (f.gts.empty()) continue;
    const auto before = fp_fn(d);
    f.preds.erase(f.preds.begin(), f.preds.begin() + std::min<std::size_t>(f.preds.size(), 1));
    f.preds.push_back({f.gts[0], 0.999});
    const auto with = fp_fn(d);
    f.preds.pop_back();
    const auto without = fp_fn(d);
    EXPECT_GE(without.fn_per_frame, with.fn_per_frame);
    (void)before;
  }
}

TEST(BgObj, PerfectMasks) {
  DetectionSet d;
  auto g = rect(8, 8, 2, 2, 6, 6);
  d.frames.push_back(frame(8, 8, {{g, 0.9}}, {g}));
  const auto r = bg_obj_precision(d);
  EXPECT_DOUBLE_EQ(r.bg, 1.0);
  EXPECT_DOUBLE_EQ(r.obj, 1.0);
}

TEST(BgObj, WholeImageForegroundGivesCoverageRatio) {
  DetectionSet d;
  d.frames.push_back(frame(10, 10, {{BinaryMask(100, 1), 0.9}}, {rect(10, 10, 0, 0, 10, 3)}));
  const auto r = bg_obj_precision(d);
  EXPECT_DOUBLE_EQ(r.obj, 0.3);
  EXPECT_EQ(r.bg, 0.0);  // no background pixels predicted: excluded, nothing left
}

TEST(BgObj, CheckerboardMatchesPixelCount) {
  BinaryMask checker(64), left = rect(8, 8, 0, 0, 4, 8);
  for (int y = 0; y < 8; ++y)
    for (int x = 0; x < 8; ++x) checker[y * 8 + x] = (x + y) % 2;
  DetectionSet d;
  d.frames.push_back(frame(8, 8, {{checker, 0.6}}, {left}));
  const auto r = bg_obj_precision(d);
  // thresholds 0.3 and 0.5 see the checkerboard: 16 of its 32 pixels lie in the left half,
  // and 16 of the 32 background pixels lie outside it. Threshold 0.7 predicts nothing:
  // obj is excluded there and bg = 32/64.
  EXPECT_DOUBLE_EQ(r.obj, 0.5);
  EXPECT_DOUBLE_EQ(r.bg, (0.5 + 0.5 + 0.5) / 3.0);
  expect_same(evaluate(d), oracle::report(d));
}

TEST(Report, RatesStayInUnitInterval) {
  Rng rng(31);
  for (int t = 0; t < 50; ++t) {
    const auto r = evaluate(oracle::random_dataset(rng));
    for (double v : {r.pu, r.ru, r.fu, r.bg, r.obj}) {
      EXPECT_GE(v, 0.0);
      EXPECT_LE(v, 1.0);
    }
    if (r.ap) {
      EXPECT_GE(*r.ap, 0.0);
      EXPECT_LE(*r.ap, 1.0);
    }
    EXPECT_GE(r.fp_per_frame, 0.0);
    EXPECT_GE(r.fn_per_frame, 0.0);
  }
}

TEST(Report, EqualsBruteForceOracle) {
  Rng rng(2024);
  for (int t = 0; t < 200; ++t) {
    const auto d = oracle::random_dataset(rng, uniform_int(rng, 1, 4));
    SCOPED_TRACE(t);
    expect_same(evaluate(d), oracle::report(d));
  }
}

TEST(Report, RejectsMismatchedMaskSize) {
  DetectionSet d;
  d.frames.push_back(frame(8, 8, {{BinaryMask(10, 1), 0.5}}, {}));
  EXPECT_THROW(evaluate(d), Error);
}

TEST(Rle, RoundTripAndLeadingZeroRun) {
  BinaryMask m{1, 1, 0, 0, 0, 1};
  EXPECT_EQ(rle_encode(m), (std::vector<int>{0, 2, 3, 1}));
  EXPECT_EQ(rle_decode(rle_encode(m), 6), m);
  EXPECT_EQ(rle_encode(BinaryMask(4, 0)), std::vector<int>{4});
  Rng rng(1);
  for (int t = 0; t < 20; ++t) {
    auto r = oracle::random_mask(rng, 7, 9);
    EXPECT_EQ(rle_decode(rle_encode(r), r.size()), r);
  }
  EXPECT_THROW(rle_decode({1, 2}, 4), Error);
}

TEST(Rle, FrameRecordRoundTrip) {
  Frame f = frame(4, 4, {{rect(4, 4, 1, 1, 3, 3), 0.25}}, {});
  f.id = "x";
  const auto g = frame_from_json(frame_to_json(f));
  EXPECT_EQ(g.id, "x");
  ASSERT_EQ(g.preds.size(), 1u);
  EXPECT_EQ(g.preds[0].mask, f.preds[0].mask);
  EXPECT_EQ(g.preds[0].confidence, 0.25);
}

TEST(ClassFilter, CocoRows) {
  EXPECT_TRUE(movable_class_filter("car"));
  EXPECT_TRUE(movable_class_filter("person"));
  EXPECT_FALSE(movable_class_filter("bench"));
  EXPECT_FALSE(movable_class_filter("refrigator"));
  EXPECT_EQ(coco_moving_classes().size(), 29u);
  try {
    movable_class_filter("unicorn");
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::kUnknownLabel);
  }
}

TEST(ClassFilter, SyntheticBodiesUseTheirFlag) {
  scene::RigidBody b;
  b.movable = false;
  EXPECT_FALSE(movable_class_filter(b));
  b.movable = true;
  EXPECT_TRUE(movable_class_filter(b));
}
