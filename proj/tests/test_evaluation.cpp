#include <gtest/gtest.h>

#include <algorithm>

#include "lpatch/errors.hpp"
#include "lpatch/evaluation.hpp"
#include "oracles.hpp"
#include "test_util.hpp"

using namespace lpatch;
using namespace lpatch::testing;

TEST(Iou, Examples) {
  EXPECT_DOUBLE_EQ(compute_iou({0, 0, 10, 10}, {0, 0, 10, 10}), 1.0);
  EXPECT_DOUBLE_EQ(compute_iou({0, 0, 10, 10}, {20, 20, 30, 30}), 0.0);
  EXPECT_DOUBLE_EQ(compute_iou({0, 0, 10, 10}, {10, 0, 20, 10}), 0.0);
  EXPECT_NEAR(compute_iou({0, 0, 2, 1}, {1, 0, 3, 1}), 1.0 / 3.0, 1e-12);
}

TEST(Iou, MatchesAreaArithmetic) {
  Rng rng(1);
  for (int t = 0; t < 2000; ++t) {
    const BBox a = random_box(rng);
    const BBox b = random_box(rng);
    const double iw = std::max(0.0, std::min<double>(a.x_max, b.x_max) - std::max<double>(a.x_min, b.x_min));
    const double ih = std::max(0.0, std::min<double>(a.y_max, b.y_max) - std::max<double>(a.y_min, b.y_min));
    const double inter = iw * ih;
    const double aa = (static_cast<double>(a.x_max) - a.x_min) * (static_cast<double>(a.y_max) - a.y_min);
    const double ab = (static_cast<double>(b.x_max) - b.x_min) * (static_cast<double>(b.y_max) - b.y_min);
    EXPECT_NEAR(compute_iou(a, b), inter / (aa + ab - inter), 1e-12);
    EXPECT_EQ(compute_iou(a, b), compute_iou(b, a));
  }
}

TEST(Match, HigherConfidenceWinsSharedTarget) {
  const std::vector<BBox> gt{{0, 0, 10, 10}};
  const std::vector<Detection> preds{{{0, 0, 10, 10}, 0.6f, 0}, {{0, 0, 10, 9}, 0.9f, 1}};
  const MatchResult m = match_detections(preds, gt);
  EXPECT_EQ(m.true_positives, 1);
  EXPECT_EQ(m.false_positives, 1);
  EXPECT_EQ(m.false_negatives, 0);
  ASSERT_EQ(m.pairs.size(), 1u);
  EXPECT_EQ(m.pairs[0].prediction, 1);
}

TEST(Match, ThresholdsApply) {
  const std::vector<BBox> gt{{0, 0, 10, 10}};
  // IoU 0.5 exactly is a match; below the confidence threshold is ignored.
  const std::vector<Detection> half{{{0, 0, 10, 5}, 0.9f, 0}};
  EXPECT_EQ(match_detections(half, gt, 0.5, 0.25).true_positives, 1);
  const std::vector<Detection> low{{{0, 0, 10, 10}, 0.2f, 0}};
  const MatchResult m = match_detections(low, gt, 0.5, 0.25);
  EXPECT_EQ(m.true_positives, 0);
  EXPECT_EQ(m.false_positives, 0);
  EXPECT_EQ(m.false_negatives, 1);
  EXPECT_EQ(match_detections({}, gt).false_negatives, 1);
}

TEST(Match, AgreesWithIndependentMatcherAndIsOrderInvariant) {
  Rng rng(2);
  for (int t = 0; t < 500; ++t) {
    auto images = random_instance(rng);
    for (auto& im : images) {
      const MatchResult m = match_detections(im.predictions, im.ground_truth, 0.5, 0.25);
      EXPECT_EQ(m.true_positives, oracle_true_positives(im.predictions, im.ground_truth, 0.5, 0.25));
      EXPECT_EQ(m.true_positives + m.false_negatives, static_cast<int>(im.ground_truth.size()));
      auto shuffled = im.predictions;
      std::reverse(shuffled.begin(), shuffled.end());
      const MatchResult s = match_detections(shuffled, im.ground_truth, 0.5, 0.25);
      EXPECT_EQ(s.gt_detected, m.gt_detected);
      EXPECT_EQ(s.true_positives, m.true_positives);
    }
  }
}

TEST(AveragePrecision, Examples) {
  std::vector<ImageDetections> perfect{{{{{0, 0, 10, 10}, 0.9f, 0}}, {{0, 0, 10, 10}}}};
  EXPECT_DOUBLE_EQ(average_precision(perfect), 1.0);
  std::vector<ImageDetections> none{{{}, {{0, 0, 10, 10}}}};
  EXPECT_DOUBLE_EQ(average_precision(none), 0.0);
  // One hit ranked below one miss: P = 1/2 at R = 1.
  std::vector<ImageDetections> half{{{{{0, 0, 10, 10}, 0.5f, 0}, {{30, 30, 40, 40}, 0.8f, 1}}, {{0, 0, 10, 10}}}};
  EXPECT_DOUBLE_EQ(average_precision(half), 0.5);
}

TEST(AveragePrecision, EqualsExhaustiveCutoffOracle) {
  Rng rng(3);
  for (int t = 0; t < 200; ++t) {
    const auto images = random_instance(rng);
    EXPECT_EQ(average_precision(images, 0.5, 0.0), oracle_ap(images, 0.5)) << "instance " << t;
  }
}

TEST(AveragePrecision, InvariantToImageAndPredictionOrder) {
  Rng rng(4);
  for (int t = 0; t < 100; ++t) {
    auto images = random_instance(rng);
    const double ap = average_precision(images);
    std::reverse(images.begin(), images.end());
    for (auto& im : images) std::reverse(im.predictions.begin(), im.predictions.end());
    EXPECT_EQ(average_precision(images), ap);
    EXPECT_GE(ap, 0.0);
    EXPECT_LE(ap, 1.0);
  }
}

TEST(Recall, ExamplesAndNoGroundTruth) {
  MatchResult a;
  a.true_positives = 3;
  a.false_negatives = 1;
  MatchResult b;
  b.true_positives = 1;
  b.false_negatives = 3;
  const std::vector<MatchResult> both{a, b};
  EXPECT_DOUBLE_EQ(recall(both), 0.5);
  const std::vector<MatchResult> empty{MatchResult{}};
  EXPECT_THROW(recall(empty), ValidationError);
}

TEST(Asr, Examples) {
  MatchResult clean;
  clean.gt_detected = {1, 1, 0, 1};
  MatchResult attacked;
  attacked.gt_detected = {0, 1, 1, 0};
  const std::vector<MatchResult> c{clean};
  const std::vector<MatchResult> a{attacked};
  // Two of the three clean detections are lost; the newly found one does not count.
  EXPECT_DOUBLE_EQ(attack_success_rate(c, a), 2.0 / 3.0);
  EXPECT_DOUBLE_EQ(attack_success_rate(c, c), 0.0);
  MatchResult nothing;
  nothing.gt_detected = {0, 0};
  const std::vector<MatchResult> n{nothing};
  EXPECT_DOUBLE_EQ(attack_success_rate(n, n), 0.0);
  EXPECT_THROW(attack_success_rate(c, n), DimensionError);
}

// Dropping an attacked-pass detection can only raise ASR.
TEST(Asr, MonotoneInAttackedDetections) {
  Rng rng(5);
  for (int t = 0; t < 300; ++t) {
    std::vector<BBox> gt;
    for (int g = 0; g < 4; ++g) gt.push_back(random_box(rng, 100));
    std::vector<Detection> clean_preds;
    std::vector<Detection> att_preds;
    for (const auto& g : gt) {
      if (rng.uniform() < 0.8) clean_preds.push_back({jitter(rng, g, 1.f), 0.9f, 0});
      if (rng.uniform() < 0.6) att_preds.push_back({jitter(rng, g, 1.f), static_cast<float>(rng.uniform(0.3, 1)), 0});
    }
    if (att_preds.empty()) continue;
    const std::vector<MatchResult> clean{match_detections(clean_preds, gt)};
    const std::vector<MatchResult> before{match_detections(att_preds, gt)};
    att_preds.erase(att_preds.begin() + rng.uniform_int(0, static_cast<int>(att_preds.size()) - 1));
    const std::vector<MatchResult> after{match_detections(att_preds, gt)};
    EXPECT_GE(attack_success_rate(clean, after), attack_success_rate(clean, before));
  }
}

TEST(Nms, SuppressesOverlapsKeepsBest) {
  const std::vector<Detection> d{{{0, 0, 10, 10}, 0.7f, 0}, {{1, 0, 11, 10}, 0.9f, 1}, {{30, 30, 40, 40}, 0.5f, 2}};
  const auto kept = non_max_suppression(d, 0.45);
  ASSERT_EQ(kept.size(), 2u);
  EXPECT_EQ(kept[0].anchor, 1);
  EXPECT_EQ(kept[1].anchor, 2);
  EXPECT_EQ(non_max_suppression(d, 1.0).size(), 3u);
}
