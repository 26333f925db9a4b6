#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "lpatch/adapt.hpp"
#include "lpatch/augment.hpp"
#include "lpatch/dataset.hpp"
#include "lpatch/detector.hpp"
#include "lpatch/losses.hpp"

namespace lpatch {

enum class AugmentMode { none, global, local };
AugmentMode parse_augment_mode(const std::string& name);
std::string to_string(AugmentMode mode);

// How the TV and NPS sums enter the objective. "sum" uses them as is; "mean"
// divides both by the patch pixel count so the default weights stay
// comparable to the detection term whatever the patch side.
enum class RegularizerScale { sum, mean };
RegularizerScale parse_regularizer_scale(const std::string& name);
std::string to_string(RegularizerScale scale);

struct AttackConfig {
  int patch_side = 64;
  int epochs = 200;
  double learning_rate = 0.03;
  std::string optimizer = "adam";
  LossWeights weights;
  RegularizerScale regularizer_scale = RegularizerScale::mean;
  PlacementParams placement;
  SceneParams scene;
  AugmentMode mode = AugmentMode::local;
  std::uint64_t seed = 0;
  int batch_size = 8;
  float confidence_floor = 0.f;  // detections considered by the detection loss
  int workers = 1;

  void validate() const;
};

// Field-for-field JSON mapping; unknown or ill-typed fields raise a
// ValidationError naming the field.
nlohmann::json to_json(const AttackConfig& config);
AttackConfig attack_config_from_json(const nlohmann::json& doc);
AttackConfig load_attack_config(const std::filesystem::path& path);

// Grey value g ~ U(0.3, 0.7) per pixel, copied to all three channels.
Patch init_patch(int side, Rng& rng);
// i.i.d. U(0,1) RGB noise.
Patch make_random_patch(int side, Rng& rng);

// tv_loss / nps_loss are the values that entered the objective, i.e. already
// divided by the pixel count under RegularizerScale::mean.
struct EpochLog {
  int epoch = 0;
  double det_loss = 0.0;
  double tv_loss = 0.0;
  double nps_loss = 0.0;
  double total = 0.0;
};

struct TrainResult {
  Patch patch;
  Patch initial;
  std::vector<EpochLog> log;
  std::uint64_t detector_hash_before = 0;
  std::uint64_t detector_hash_after = 0;
};

// Max confidence on an already patched image; adds its patch gradient to *grad.
double detection_objective(const DetectorModel& detector, const PatchedImage& patched,
                           float confidence_floor, Patch* grad = nullptr);

using EpochCallback = std::function<void(const EpochLog&)>;

// augment -> scene-match and place on every target -> detect -> weighted
// loss -> Adam step on the patch pixels -> clamp to [0,1].
TrainResult train_patch(const AttackConfig& config, const Dataset& dataset,
                        const DetectorModel& detector,
                        const PrintableSet& printable = PrintableSet::standard(),
                        const EpochCallback& on_epoch = {});

// Augmentation step for one training image, per the ablation mode.
Image augment_for_mode(const Image& image, const Annotation& annotation, AugmentMode mode, Rng& rng);

std::string training_log_csv(std::span<const EpochLog> log);

// "APATCHv1", uint32 side, then side*side*3 float32, all little-endian.
void save_patch_sidecar(const std::filesystem::path& path, const Patch& patch);
Patch load_patch_sidecar(const std::filesystem::path& path);

}  // namespace lpatch
