#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "lpatch/adapt.hpp"
#include "lpatch/dataset.hpp"
#include "lpatch/detection.hpp"
#include "lpatch/detector.hpp"

namespace lpatch {

double compute_iou(const BBox& a, const BBox& b);

// Greedy suppression in descending confidence order.
std::vector<Detection> non_max_suppression(std::vector<Detection> detections, double iou_thresh);

struct MatchPair {
  int prediction = -1;    // index into the predictions passed in
  int ground_truth = -1;  // index into the ground-truth list
  double iou = 0.0;
};

struct MatchResult {
  int true_positives = 0;
  int false_positives = 0;
  int false_negatives = 0;
  std::vector<MatchPair> pairs;
  std::vector<std::uint8_t> gt_detected;  // one flag per ground truth
};

// Predictions under conf_thresh are dropped; the rest, by descending
// confidence, each take the unmatched ground truth of highest IoU >= iou_thresh
// (lower index on ties).
MatchResult match_detections(std::span<const Detection> predictions, std::span<const BBox> ground_truth,
                             double iou_thresh = 0.5, double conf_thresh = 0.25);

struct ImageDetections {
  std::vector<Detection> predictions;
  std::vector<BBox> ground_truth;
};

// All-points interpolated AP over the dataset-level precision/recall curve.
double average_precision(std::span<const ImageDetections> images, double iou_thresh = 0.5,
                         double conf_floor = 0.0);

// Throws ValidationError when there is no ground truth.
double recall(std::span<const MatchResult> matches);

// Fraction of clean-detected ground truths that the attacked pass misses.
double attack_success_rate(std::span<const MatchResult> clean, std::span<const MatchResult> attacked);

struct EvalThresholds {
  double iou = 0.5;
  double confidence = 0.25;
  double ap_floor = 0.001;  // predictions kept for the AP sweep
  double nms_iou = 0.45;
};

struct EvalOptions {
  EvalThresholds thresholds;
  PlacementParams placement;
  SceneParams scene;
  std::uint64_t seed = 0;  // evaluation placement seed, shared by every compared arm
  int workers = 1;
};

struct ImageReport {
  std::string image_id;
  int ground_truth = 0;
  int clean_detected = 0;
  int attacked_detected = 0;
  int suppressed = 0;
};

struct MetricsReport {
  double ap = 0.0;
  double recall = 0.0;
  double asr = 0.0;
  double clean_ap = 0.0;
  double clean_recall = 0.0;
  std::vector<ImageReport> per_image;

  nlohmann::json to_json() const;
  std::string to_csv() const;
};

// Post-processed (thresholded at ap_floor, suppressed) detections for one image.
std::vector<Detection> detect_image(const DetectorModel& detector, const Image& image,
                                    const EvalThresholds& thresholds);

double detector_average_precision(const DetectorModel& detector, const Dataset& dataset,
                                  const EvalThresholds& thresholds = {}, int workers = 1);

// Clean pass vs. a pass with `patch` placed on every target; patch == nullptr
// compares the clean pass with itself.
MetricsReport evaluate_patch(const DetectorModel& detector, const Dataset& dataset,
                             const Patch* patch, const EvalOptions& options = {});

struct TransferMatrix {
  std::vector<std::string> sources;
  std::vector<std::string> targets;
  std::vector<std::vector<double>> asr;  // [source][target]

  std::string to_csv() const;
};

TransferMatrix transfer_matrix(std::span<const std::pair<std::string, Patch>> patches,
                               std::span<const std::pair<std::string, const DetectorModel*>> detectors,
                               const Dataset& dataset, const EvalOptions& options = {});

}  // namespace lpatch
