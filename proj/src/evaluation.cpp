#include "lpatch/evaluation.hpp"

#include <algorithm>
#include <numeric>
#include <sstream>
#include <tuple>

#include "lpatch/errors.hpp"
#include "lpatch/parallel.hpp"

namespace lpatch {

namespace {

// Total order used everywhere predictions are ranked: confidence first, then
// box coordinates, so results do not depend on the input order.
bool ranks_before(const Detection& a, const Detection& b) {
  if (a.confidence != b.confidence) return a.confidence > b.confidence;
  return std::tie(a.box.x_min, a.box.y_min, a.box.x_max, a.box.y_max) <
         std::tie(b.box.x_min, b.box.y_min, b.box.x_max, b.box.y_max);
}

std::vector<int> ranked_indices(std::span<const Detection> preds, double conf_thresh) {
  std::vector<int> idx;
  for (int i = 0; i < static_cast<int>(preds.size()); ++i)
    if (preds[i].confidence >= conf_thresh) idx.push_back(i);
  std::stable_sort(idx.begin(), idx.end(),
                   [&](int a, int b) { return ranks_before(preds[a], preds[b]); });
  return idx;
}

// Index of the best unmatched ground truth for `box`, or -1.
int best_match(const BBox& box, std::span<const BBox> gts, const std::vector<std::uint8_t>& taken,
               double iou_thresh, double& best_iou) {
  int best = -1;
  best_iou = 0.0;
  for (int g = 0; g < static_cast<int>(gts.size()); ++g) {
    if (taken[g]) continue;
    const double iou = compute_iou(box, gts[g]);
    if (iou >= iou_thresh && iou > best_iou) {
      best = g;
      best_iou = iou;
    }
  }
  return best;
}

}  // namespace

double compute_iou(const BBox& a, const BBox& b) {
  const double ix = std::max(0.0, static_cast<double>(std::min(a.x_max, b.x_max)) -
                                      std::max(a.x_min, b.x_min));
  const double iy = std::max(0.0, static_cast<double>(std::min(a.y_max, b.y_max)) -
                                      std::max(a.y_min, b.y_min));
  const double inter = ix * iy;
  const double uni = a.area() + b.area() - inter;
  return uni > 0.0 ? inter / uni : 0.0;
}

std::vector<Detection> non_max_suppression(std::vector<Detection> detections, double iou_thresh) {
  std::stable_sort(detections.begin(), detections.end(), ranks_before);
  std::vector<Detection> kept;
  for (const Detection& d : detections) {
    const bool suppressed = std::any_of(kept.begin(), kept.end(), [&](const Detection& k) {
      return compute_iou(k.box, d.box) > iou_thresh;
    });
    if (!suppressed) kept.push_back(d);
  }
  return kept;
}

MatchResult match_detections(std::span<const Detection> predictions, std::span<const BBox> ground_truth,
                             double iou_thresh, double conf_thresh) {
  MatchResult r;
  r.gt_detected.assign(ground_truth.size(), 0);
  for (int p : ranked_indices(predictions, conf_thresh)) {
    double iou = 0.0;
    const int g = best_match(predictions[p].box, ground_truth, r.gt_detected, iou_thresh, iou);
    if (g < 0) {
      ++r.false_positives;
      continue;
    }
    r.gt_detected[g] = 1;
    ++r.true_positives;
    r.pairs.push_back({p, g, iou});
  }
  r.false_negatives = static_cast<int>(ground_truth.size()) - r.true_positives;
  return r;
}

double average_precision(std::span<const ImageDetections> images, double iou_thresh,
                         double conf_floor) {
  struct Entry {
    std::size_t image;
    int pred;
  };
  std::vector<Entry> entries;
  std::size_t n_gt = 0;
  for (std::size_t i = 0; i < images.size(); ++i) {
    n_gt += images[i].ground_truth.size();
    for (int p : ranked_indices(images[i].predictions, conf_floor)) entries.push_back({i, p});
  }
  if (n_gt == 0 || entries.empty()) return 0.0;
  const auto pred = [&](const Entry& e) -> const Detection& {
    return images[e.image].predictions[e.pred];
  };
  // Per-image relative order is preserved, so greedy matching over the merged
  // list equals per-image matching at every cutoff.
  std::stable_sort(entries.begin(), entries.end(),
                   [&](const Entry& a, const Entry& b) { return ranks_before(pred(a), pred(b)); });

  std::vector<std::vector<std::uint8_t>> taken(images.size());
  for (std::size_t i = 0; i < images.size(); ++i) taken[i].assign(images[i].ground_truth.size(), 0);

  std::vector<double> recalls;
  std::vector<double> precisions;
  long tp = 0;
  long fp = 0;
  for (std::size_t k = 0; k < entries.size(); ++k) {
    const Entry& e = entries[k];
    double iou = 0.0;
    const int g = best_match(pred(e).box, images[e.image].ground_truth, taken[e.image], iou_thresh, iou);
    if (g >= 0) {
      taken[e.image][g] = 1;
      ++tp;
    } else {
      ++fp;
    }
    // One curve point per distinct confidence cutoff.
    const bool last_of_group =
        k + 1 == entries.size() || pred(entries[k + 1]).confidence != pred(e).confidence;
    if (last_of_group) {
      recalls.push_back(static_cast<double>(tp) / static_cast<double>(n_gt));
      precisions.push_back(static_cast<double>(tp) / static_cast<double>(tp + fp));
    }
  }
  for (std::size_t k = precisions.size() - 1; k-- > 0;) {
    precisions[k] = std::max(precisions[k], precisions[k + 1]);
  }
  double ap = 0.0;
  double prev = 0.0;
  for (std::size_t k = 0; k < recalls.size(); ++k) {
    ap += (recalls[k] - prev) * precisions[k];
    prev = recalls[k];
  }
  return ap;
}

double recall(std::span<const MatchResult> matches) {
  long tp = 0;
  long total = 0;
  for (const auto& m : matches) {
    tp += m.true_positives;
    total += m.true_positives + m.false_negatives;
  }
  if (total == 0) throw ValidationError("recall is undefined without ground truth");
  return static_cast<double>(tp) / static_cast<double>(total);
}

double attack_success_rate(std::span<const MatchResult> clean, std::span<const MatchResult> attacked) {
  if (clean.size() != attacked.size()) {
    throw DimensionError("clean and attacked evaluations cover different images");
  }
  long detected = 0;
  long suppressed = 0;
  for (std::size_t i = 0; i < clean.size(); ++i) {
    if (clean[i].gt_detected.size() != attacked[i].gt_detected.size()) {
      throw DimensionError("clean and attacked ground truth differ for image " + std::to_string(i));
    }
    for (std::size_t g = 0; g < clean[i].gt_detected.size(); ++g) {
      if (!clean[i].gt_detected[g]) continue;
      ++detected;
      if (!attacked[i].gt_detected[g]) ++suppressed;
    }
  }
  return detected == 0 ? 0.0 : static_cast<double>(suppressed) / static_cast<double>(detected);
}

nlohmann::json MetricsReport::to_json() const {
  nlohmann::json per = nlohmann::json::array();
  for (const auto& r : per_image) {
    per.push_back({{"image", r.image_id},
                   {"ground_truth", r.ground_truth},
                   {"clean_detected", r.clean_detected},
                   {"attacked_detected", r.attacked_detected},
                   {"suppressed", r.suppressed}});
  }
  return {{"ap", ap},          {"recall", recall},
          {"asr", asr},        {"clean_ap", clean_ap},
          {"clean_recall", clean_recall}, {"per_image", per}};
}

std::string MetricsReport::to_csv() const {
  std::ostringstream out;
  out.precision(10);
  out << "metric,value\nap," << ap << "\nrecall," << recall << "\nasr," << asr << "\nclean_ap,"
      << clean_ap << "\nclean_recall," << clean_recall << "\n";
  return out.str();
}

std::vector<Detection> detect_image(const DetectorModel& detector, const Image& image,
                                    const EvalThresholds& t) {
  return non_max_suppression(detector.forward(image)->detections(static_cast<float>(t.ap_floor)),
                             t.nms_iou);
}

double detector_average_precision(const DetectorModel& detector, const Dataset& dataset,
                                  const EvalThresholds& t, int workers) {
  std::vector<ImageDetections> per(dataset.size());
  parallel_for(dataset.size(), workers, [&](std::size_t i) {
    per[i] = {detect_image(detector, dataset[i].image, t), dataset[i].annotation.boxes};
  });
  return average_precision(per, t.iou, t.ap_floor);
}

MetricsReport evaluate_patch(const DetectorModel& detector, const Dataset& dataset,
                             const Patch* patch, const EvalOptions& options) {
  const EvalThresholds& t = options.thresholds;
  std::vector<ImageDetections> clean(dataset.size());
  std::vector<ImageDetections> attacked(dataset.size());
  parallel_for(dataset.size(), options.workers, [&](std::size_t i) {
    const Sample& s = dataset[i];
    clean[i] = {detect_image(detector, s.image, t), s.annotation.boxes};
    if (!patch) {
      attacked[i] = clean[i];
      return;
    }
    Rng placement_rng(derive_seed(options.seed, "eval-placement", i));
    Rng scene_rng(derive_seed(options.seed, "eval-scene", i));
    const PatchedImage patched = apply_patch_to_all_targets(
        s.image, *patch, s.annotation, options.placement, options.scene, placement_rng, scene_rng);
    attacked[i] = {detect_image(detector, patched.image, t), s.annotation.boxes};
  });

  std::vector<MatchResult> clean_m;
  std::vector<MatchResult> attacked_m;
  MetricsReport report;
  for (std::size_t i = 0; i < dataset.size(); ++i) {
    clean_m.push_back(match_detections(clean[i].predictions, clean[i].ground_truth, t.iou, t.confidence));
    attacked_m.push_back(
        match_detections(attacked[i].predictions, attacked[i].ground_truth, t.iou, t.confidence));
    ImageReport r;
    r.image_id = dataset[i].annotation.image_id;
    r.ground_truth = static_cast<int>(dataset[i].annotation.boxes.size());
    r.clean_detected = clean_m.back().true_positives;
    r.attacked_detected = attacked_m.back().true_positives;
    for (std::size_t g = 0; g < clean_m.back().gt_detected.size(); ++g) {
      if (clean_m.back().gt_detected[g] && !attacked_m.back().gt_detected[g]) ++r.suppressed;
    }
    report.per_image.push_back(std::move(r));
  }
  report.ap = average_precision(attacked, t.iou, t.ap_floor);
  report.clean_ap = average_precision(clean, t.iou, t.ap_floor);
  report.recall = recall(attacked_m);
  report.clean_recall = recall(clean_m);
  report.asr = attack_success_rate(clean_m, attacked_m);
  return report;
}

std::string TransferMatrix::to_csv() const {
  std::ostringstream out;
  out.precision(10);
  out << "source";
  for (const auto& t : targets) out << ',' << t;
  out << '\n';
  for (std::size_t r = 0; r < sources.size(); ++r) {
    out << sources[r];
    for (double v : asr[r]) out << ',' << v;
    out << '\n';
  }
  return out.str();
}

TransferMatrix transfer_matrix(std::span<const std::pair<std::string, Patch>> patches,
                               std::span<const std::pair<std::string, const DetectorModel*>> detectors,
                               const Dataset& dataset, const EvalOptions& options) {
  if (detectors.size() < 2) throw ValidationError("transfer matrix needs at least two detectors");
  TransferMatrix m;
  for (const auto& [name, det] : detectors) m.targets.push_back(name);
  for (const auto& [name, patch] : patches) {
    m.sources.push_back(name);
    std::vector<double> row;
    for (const auto& [dname, det] : detectors) {
      row.push_back(evaluate_patch(*det, dataset, &patch, options).asr);
    }
    m.asr.push_back(std::move(row));
  }
  return m;
}

}  // namespace lpatch
