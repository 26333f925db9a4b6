#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include "lpatch/dataset.hpp"
#include "lpatch/detection.hpp"
#include "lpatch/image.hpp"
#include "lpatch/nn.hpp"

namespace lpatch {

// Result of one forward pass, kept alive so confidences can be differentiated.
class DetectionPass {
 public:
  virtual ~DetectionPass() = default;
  // Every raw output slot, no thresholding or suppression.
  virtual std::span<const Detection> candidates() const = 0;
  // d(sum_k g[k] * confidence_k) / d(input image); g is indexed by Detection::anchor.
  virtual Image backward(std::span<const float> confidence_grad) const = 0;

  std::vector<Detection> detections(float confidence_floor) const;
};

// Victim model interface. Implementations must be deterministic and must not
// mutate their parameters from forward().
class DetectorModel {
 public:
  virtual ~DetectorModel() = default;
  virtual std::string name() const = 0;
  virtual int input_size() const = 0;
  virtual bool differentiable() const { return true; }
  virtual std::unique_ptr<DetectionPass> forward(const Image& image) const = 0;
  virtual std::uint64_t parameter_hash() const = 0;

  std::vector<std::vector<Detection>> detect(std::span<const Image> batch,
                                             float confidence_floor) const;
};

enum class ToyVariant { n, s, m };
ToyVariant parse_variant(const std::string& name);
std::string to_string(ToyVariant v);
float width_multiplier(ToyVariant v);

struct ToyDetectorConfig {
  ToyVariant variant = ToyVariant::s;
  int input_size = 96;
  float anchor = 16.f;  // reference box side for the log-size regression
  std::vector<int> base_channels{16, 32, 64, 64};
  std::vector<int> strides{2, 2, 2, 1};
};

// Small single-class grid detector: a stack of 3x3 conv + leaky ReLU blocks
// and a 1x1 head giving (objectness, tx, ty, tw, th) per grid cell.
class ToyDetector final : public DetectorModel {
 public:
  ToyDetector() = default;
  ToyDetector(const ToyDetectorConfig& config, std::uint64_t seed);

  std::string name() const override { return "toy-" + to_string(config_.variant); }
  int input_size() const override { return config_.input_size; }
  std::unique_ptr<DetectionPass> forward(const Image& image) const override;
  std::uint64_t parameter_hash() const override;

  const ToyDetectorConfig& config() const { return config_; }
  int grid_size() const;
  int grid_stride() const;
  std::size_t parameter_count() const;

  // Flat parameter views in layer order (weights, then bias).
  std::vector<float> parameters() const;
  void set_parameters(std::span<const float> flat);

  void save(const std::filesystem::path& path) const;
  static ToyDetector load(const std::filesystem::path& path);

  // One supervised step on a batch; returns the mean loss. Used by training.
  double train_step(std::span<const Sample> batch, nn::Adam& optimizer, double box_weight);

 private:
  struct Activations;
  friend class ToyPass;

  void forward_into(const Image& image, Activations& act) const;

  ToyDetectorConfig config_;
  std::vector<nn::Conv2d> layers_;  // last layer is the 1x1 head
};

struct DetectorTrainOptions {
  int epochs = 30;
  int batch_size = 8;
  double learning_rate = 1e-2;
  double box_weight = 5.0;
  double min_ap = 0.95;
  std::uint64_t seed = 0;
  std::function<void(int epoch, double loss)> on_epoch;
};

struct DetectorTrainResult {
  ToyDetector detector;
  double heldout_ap = 0.0;
  std::vector<double> epoch_loss;
};

// Throws TrainingError (carrying the loss log) when held-out AP@0.5 < min_ap.
DetectorTrainResult train_toy_detector(const Dataset& train, const Dataset& heldout,
                                       const ToyDetectorConfig& config,
                                       const DetectorTrainOptions& options = {});

std::uint64_t fnv1a64(std::span<const std::byte> bytes, std::uint64_t seed = 0xcbf29ce484222325ULL);

}  // namespace lpatch
