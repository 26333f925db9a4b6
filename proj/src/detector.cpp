#include "lpatch/detector.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <numbers>
#include <numeric>

#include <json.hpp>

#include "lpatch/errors.hpp"
#include "lpatch/evaluation.hpp"

namespace lpatch {

namespace {

constexpr char kCheckpointMagic[8] = {'T', 'O', 'Y', 'D', 'E', 'T', 'v', '1'};
constexpr int kHeadOutputs = 5;
constexpr float kMaxLogSize = 6.f;

// Centre offset within a cell, in (-0.5, 1.5) so neighbouring cells can
// also predict a box whose centre lies just outside them.
float cell_offset(float logit) { return 2.f * nn::sigmoid(logit) - 0.5f; }

nn::Tensor to_tensor(const Image& image) {
  nn::Tensor t(3, image.height(), image.width());
  for (int y = 0; y < image.height(); ++y)
    for (int x = 0; x < image.width(); ++x)
      for (int c = 0; c < 3; ++c) t.at(c, y, x) = image.at(y, x, c);
  return t;
}

Image to_image(const nn::Tensor& t) {
  Image img(t.height, t.width);
  for (int y = 0; y < t.height; ++y)
    for (int x = 0; x < t.width; ++x)
      for (int c = 0; c < 3; ++c) img.at(y, x, c) = t.at(c, y, x);
  return img;
}

}  // namespace

std::uint64_t fnv1a64(std::span<const std::byte> bytes, std::uint64_t seed) {
  std::uint64_t h = seed;
  for (std::byte b : bytes) {
    h ^= static_cast<std::uint64_t>(b);
    h *= 0x100000001b3ULL;
  }
  return h;
}

std::vector<Detection> DetectionPass::detections(float confidence_floor) const {
  std::vector<Detection> out;
  for (const Detection& d : candidates())
    if (d.confidence >= confidence_floor) out.push_back(d);
  return out;
}

std::vector<std::vector<Detection>> DetectorModel::detect(std::span<const Image> batch,
                                                          float confidence_floor) const {
  std::vector<std::vector<Detection>> out;
  out.reserve(batch.size());
  for (const Image& img : batch) out.push_back(forward(img)->detections(confidence_floor));
  return out;
}

ToyVariant parse_variant(const std::string& name) {
  if (name == "n") return ToyVariant::n;
  if (name == "s") return ToyVariant::s;
  if (name == "m") return ToyVariant::m;
  throw ValidationError("unknown detector variant '" + name + "' (expected n, s or m)");
}

std::string to_string(ToyVariant v) {
  switch (v) {
    case ToyVariant::n: return "n";
    case ToyVariant::s: return "s";
    case ToyVariant::m: return "m";
  }
  return "?";
}

float width_multiplier(ToyVariant v) {
  switch (v) {
    case ToyVariant::n: return 0.25f;
    case ToyVariant::s: return 0.5f;
    case ToyVariant::m: return 1.0f;
  }
  return 1.f;
}

struct ToyDetector::Activations {
  std::vector<nn::Tensor> outputs;  // [0] is the input; [i+1] is layer i's output
  std::vector<std::vector<float>> cols;
};

ToyDetector::ToyDetector(const ToyDetectorConfig& config, std::uint64_t seed) : config_(config) {
  if (config.base_channels.size() != config.strides.size() || config.base_channels.empty()) {
    throw ValidationError("detector channel and stride lists differ in length");
  }
  const float mult = width_multiplier(config.variant);
  Rng rng(derive_seed(seed, "detector-init"));
  int in = 3;
  for (std::size_t i = 0; i < config.base_channels.size(); ++i) {
    const int out = std::max(4, static_cast<int>(std::lround(config.base_channels[i] * mult)));
    layers_.emplace_back(in, out, 3, config.strides[i]);
    layers_.back().init_he(rng);
    in = out;
  }
  layers_.emplace_back(in, kHeadOutputs, 1, 1);
  layers_.back().init_he(rng);
  for (float& w : layers_.back().weight()) w *= 0.1f;
  layers_.back().bias()[0] = -4.f;  // low objectness prior
}

int ToyDetector::grid_stride() const {
  int s = 1;
  for (int v : config_.strides) s *= v;
  return s;
}

int ToyDetector::grid_size() const {
  int size = config_.input_size;
  for (const auto& layer : layers_) size = layer.output_size(size);
  return size;
}

std::size_t ToyDetector::parameter_count() const {
  std::size_t n = 0;
  for (const auto& l : layers_) n += l.parameter_count();
  return n;
}

std::vector<float> ToyDetector::parameters() const {
  std::vector<float> flat;
  flat.reserve(parameter_count());
  for (const auto& l : layers_) {
    flat.insert(flat.end(), l.weight().begin(), l.weight().end());
    flat.insert(flat.end(), l.bias().begin(), l.bias().end());
  }
  return flat;
}

void ToyDetector::set_parameters(std::span<const float> flat) {
  if (flat.size() != parameter_count()) throw DimensionError("parameter vector size mismatch");
  std::size_t off = 0;
  for (auto& l : layers_) {
    std::copy_n(flat.begin() + off, l.weight().size(), l.weight().begin());
    off += l.weight().size();
    std::copy_n(flat.begin() + off, l.bias().size(), l.bias().begin());
    off += l.bias().size();
  }
}

std::uint64_t ToyDetector::parameter_hash() const {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (const auto& l : layers_) {
    h = fnv1a64(std::as_bytes(l.weight()), h);
    h = fnv1a64(std::as_bytes(l.bias()), h);
  }
  return h;
}

void ToyDetector::forward_into(const Image& image, Activations& act) const {
  if (image.height() != config_.input_size || image.width() != config_.input_size) {
    throw DimensionError(name() + " expects " + std::to_string(config_.input_size) + "x" +
                         std::to_string(config_.input_size) + " input, got " +
                         std::to_string(image.height()) + "x" + std::to_string(image.width()));
  }
  act.outputs.resize(layers_.size() + 1);
  act.cols.resize(layers_.size());
  act.outputs[0] = to_tensor(image);
  for (std::size_t i = 0; i < layers_.size(); ++i) {
    act.outputs[i + 1] = layers_[i].forward(act.outputs[i], act.cols[i]);
    if (i + 1 < layers_.size()) nn::leaky_relu_inplace(act.outputs[i + 1]);
  }
}

class ToyPass final : public DetectionPass {
 public:
  ToyPass(const ToyDetector& det, ToyDetector::Activations act) : det_(det), act_(std::move(act)) {
    const nn::Tensor& head = act_.outputs.back();
    const int g = head.height;
    const auto stride = static_cast<float>(det.grid_stride());
    const auto lim = static_cast<float>(det.input_size());
    const float anchor = det.config().anchor;
    candidates_.reserve(static_cast<std::size_t>(g) * g);
    for (int gy = 0; gy < g; ++gy) {
      for (int gx = 0; gx < g; ++gx) {
        const float cx = (gx + cell_offset(head.at(1, gy, gx))) * stride;
        const float cy = (gy + cell_offset(head.at(2, gy, gx))) * stride;
        const float w = anchor * std::exp(std::clamp(head.at(3, gy, gx), -kMaxLogSize, kMaxLogSize));
        const float h = anchor * std::exp(std::clamp(head.at(4, gy, gx), -kMaxLogSize, kMaxLogSize));
        Detection d;
        d.box = {std::clamp(cx - w / 2, 0.f, lim), std::clamp(cy - h / 2, 0.f, lim),
                 std::clamp(cx + w / 2, 0.f, lim), std::clamp(cy + h / 2, 0.f, lim)};
        d.confidence = nn::sigmoid(head.at(0, gy, gx));
        d.anchor = gy * g + gx;
        candidates_.push_back(d);
      }
    }
  }

  std::span<const Detection> candidates() const override { return candidates_; }

  Image backward(std::span<const float> confidence_grad) const override {
    const nn::Tensor& head = act_.outputs.back();
    if (confidence_grad.size() != candidates_.size()) {
      throw DimensionError("confidence gradient size does not match the detector output");
    }
    nn::Tensor grad(head.channels, head.height, head.width);
    for (std::size_t k = 0; k < candidates_.size(); ++k) {
      const float s = candidates_[k].confidence;
      grad.data[k] = confidence_grad[k] * s * (1.f - s);  // channel 0 plane
    }
    const auto& layers = det_.layers_;
    for (std::size_t i = layers.size(); i-- > 0;) {
      const nn::Tensor& in = act_.outputs[i];
      grad = layers[i].backward_input(grad, in.height, in.width);
      if (i > 0) nn::leaky_relu_backward(in, grad);
    }
    return to_image(grad);
  }

 private:
  const ToyDetector& det_;
  ToyDetector::Activations act_;
  std::vector<Detection> candidates_;
};

std::unique_ptr<DetectionPass> ToyDetector::forward(const Image& image) const {
  Activations act;
  forward_into(image, act);
  return std::make_unique<ToyPass>(*this, std::move(act));
}

double ToyDetector::train_step(std::span<const Sample> batch, nn::Adam& optimizer,
                               double box_weight) {
  std::vector<float> grads(parameter_count(), 0.f);
  std::vector<std::size_t> offsets;
  {
    std::size_t off = 0;
    for (const auto& l : layers_) {
      offsets.push_back(off);
      off += l.parameter_count();
    }
  }
  const int g = grid_size();
  const auto stride = static_cast<float>(grid_stride());
  const float anchor = config_.anchor;
  double total = 0.0;
  Activations act;
  for (const Sample& sample : batch) {
    forward_into(sample.image, act);
    const nn::Tensor& head = act.outputs.back();
    nn::Tensor grad(head.channels, head.height, head.width);

    // Positives: the cell holding the box centre plus its nearest horizontal
    // and vertical neighbours. The largest box wins a contested cell.
    std::vector<const BBox*> target(static_cast<std::size_t>(g) * g, nullptr);
    for (const BBox& b : sample.annotation.boxes) {
      const float fx = b.center_x() / stride;
      const float fy = b.center_y() / stride;
      const int gx = std::clamp(static_cast<int>(std::floor(fx)), 0, g - 1);
      const int gy = std::clamp(static_cast<int>(std::floor(fy)), 0, g - 1);
      const int nx = fx - static_cast<float>(gx) < 0.5f ? gx - 1 : gx + 1;
      const int ny = fy - static_cast<float>(gy) < 0.5f ? gy - 1 : gy + 1;
      const int cells[3][2] = {{gx, gy}, {nx, gy}, {gx, ny}};
      for (const auto& c : cells) {
        if (c[0] < 0 || c[0] >= g || c[1] < 0 || c[1] >= g) continue;
        auto& slot = target[static_cast<std::size_t>(c[1]) * g + c[0]];
        if (!slot || slot->area() < b.area()) slot = &b;
      }
    }
    for (int gy = 0; gy < g; ++gy) {
      for (int gx = 0; gx < g; ++gx) {
        const BBox* t = target[static_cast<std::size_t>(gy) * g + gx];
        const float logit = head.at(0, gy, gx);
        const float s = nn::sigmoid(logit);
        // Positive cells regress objectness towards the IoU of their own box
        // (treated as a constant), so poorly localised cells rank lower.
        float y = 0.f;
        if (t) {
          const float px = (gx + cell_offset(head.at(1, gy, gx))) * stride;
          const float py = (gy + cell_offset(head.at(2, gy, gx))) * stride;
          const float pw = anchor * std::exp(std::clamp(head.at(3, gy, gx), -kMaxLogSize, kMaxLogSize));
          const float ph = anchor * std::exp(std::clamp(head.at(4, gy, gx), -kMaxLogSize, kMaxLogSize));
          y = static_cast<float>(compute_iou({px - pw / 2, py - ph / 2, px + pw / 2, py + ph / 2}, *t));
        }
        // BCE with logits, written to stay finite for large |logit|.
        total += std::max(logit, 0.f) - logit * y + std::log1p(std::exp(-std::abs(logit)));
        grad.at(0, gy, gx) = s - y;
        if (!t) continue;
        const float tx = t->center_x() / stride - gx;
        const float ty = t->center_y() / stride - gy;
        const float tw = std::log(t->width() / anchor);
        const float th = std::log(t->height() / anchor);
        const float sx = nn::sigmoid(head.at(1, gy, gx));
        const float sy = nn::sigmoid(head.at(2, gy, gx));
        const float ex = cell_offset(head.at(1, gy, gx)) - tx;
        const float ey = cell_offset(head.at(2, gy, gx)) - ty;
        const float ew = head.at(3, gy, gx) - tw;
        const float eh = head.at(4, gy, gx) - th;
        total += box_weight * (ex * ex + ey * ey + ew * ew + eh * eh);
        grad.at(1, gy, gx) = static_cast<float>(box_weight * 4.0 * ex * sx * (1.f - sx));
        grad.at(2, gy, gx) = static_cast<float>(box_weight * 4.0 * ey * sy * (1.f - sy));
        grad.at(3, gy, gx) = static_cast<float>(box_weight * 2.0 * ew);
        grad.at(4, gy, gx) = static_cast<float>(box_weight * 2.0 * eh);
      }
    }
    for (std::size_t i = layers_.size(); i-- > 0;) {
      const auto& layer = layers_[i];
      std::span<float> gw(grads.data() + offsets[i], layer.weight().size());
      std::span<float> gb(grads.data() + offsets[i] + layer.weight().size(), layer.bias().size());
      layer.backward_params(grad, act.cols[i], gw, gb);
      if (i == 0) break;
      const nn::Tensor& in = act.outputs[i];
      grad = layer.backward_input(grad, in.height, in.width);
      nn::leaky_relu_backward(in, grad);
    }
  }
  const float inv = 1.f / static_cast<float>(batch.size());
  for (float& v : grads) v *= inv;
  std::vector<float> params = parameters();
  optimizer.step(params, grads);
  set_parameters(params);
  return total / static_cast<double>(batch.size());
}

void ToyDetector::save(const std::filesystem::path& path) const {
  nlohmann::json meta = {{"variant", to_string(config_.variant)},
                         {"input_size", config_.input_size},
                         {"anchor", config_.anchor},
                         {"base_channels", config_.base_channels},
                         {"strides", config_.strides}};
  const std::string header = meta.dump();
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IngestionError("cannot write detector checkpoint " + path.string());
  out.write(kCheckpointMagic, sizeof kCheckpointMagic);
  const auto len = static_cast<std::uint32_t>(header.size());
  out.write(reinterpret_cast<const char*>(&len), sizeof len);
  out.write(header.data(), static_cast<std::streamsize>(header.size()));
  const auto params = parameters();
  out.write(reinterpret_cast<const char*>(params.data()),
            static_cast<std::streamsize>(params.size() * sizeof(float)));
  if (!out) throw IngestionError("short write to " + path.string());
}

ToyDetector ToyDetector::load(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IngestionError("cannot open detector checkpoint " + path.string());
  char magic[8];
  in.read(magic, sizeof magic);
  if (!in || std::memcmp(magic, kCheckpointMagic, sizeof magic) != 0) {
    throw FormatError(path.string() + ": not a toy detector checkpoint (bad magic)");
  }
  std::uint32_t len = 0;
  in.read(reinterpret_cast<char*>(&len), sizeof len);
  std::string header(len, '\0');
  in.read(header.data(), len);
  if (!in) throw FormatError(path.string() + ": truncated checkpoint header");
  ToyDetectorConfig cfg;
  try {
    const auto meta = nlohmann::json::parse(header);
    cfg.variant = parse_variant(meta.at("variant").get<std::string>());
    cfg.input_size = meta.at("input_size").get<int>();
    cfg.anchor = meta.at("anchor").get<float>();
    cfg.base_channels = meta.at("base_channels").get<std::vector<int>>();
    cfg.strides = meta.at("strides").get<std::vector<int>>();
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(path.string() + ": bad checkpoint header: " + e.what());
  }
  ToyDetector det(cfg, 0);
  std::vector<float> params(det.parameter_count());
  in.read(reinterpret_cast<char*>(params.data()),
          static_cast<std::streamsize>(params.size() * sizeof(float)));
  if (!in) throw FormatError(path.string() + ": truncated parameter block");
  det.set_parameters(params);
  return det;
}

DetectorTrainResult train_toy_detector(const Dataset& train, const Dataset& heldout,
                                       const ToyDetectorConfig& config,
                                       const DetectorTrainOptions& options) {
  if (train.size() < 100) throw ValidationError("detector training needs at least 100 images");
  if (heldout.empty()) throw ValidationError("detector training needs a held-out split");
  DetectorTrainResult result{ToyDetector(config, options.seed), 0.0, {}};
  ToyDetector& det = result.detector;
  nn::Adam adam(det.parameter_count(), options.learning_rate);

  std::vector<std::size_t> order(train.size());
  std::iota(order.begin(), order.end(), 0);
  std::vector<Sample> batch;
  for (int epoch = 0; epoch < options.epochs; ++epoch) {
    // Cosine decay to 5% of the base rate.
    const double progress = static_cast<double>(epoch) / std::max(1, options.epochs);
    adam.set_learning_rate(options.learning_rate *
                           (0.05 + 0.95 * 0.5 * (1.0 + std::cos(std::numbers::pi * progress))));
    Rng shuffle(derive_seed(options.seed, "detector-shuffle", static_cast<std::uint64_t>(epoch)));
    for (std::size_t i = order.size(); i > 1; --i) {
      std::swap(order[i - 1], order[static_cast<std::size_t>(shuffle.uniform_int(0, static_cast<int>(i) - 1))]);
    }
    double loss = 0.0;
    int batches = 0;
    for (std::size_t start = 0; start < order.size(); start += options.batch_size) {
      batch.clear();
      for (std::size_t k = start; k < std::min(order.size(), start + options.batch_size); ++k) {
        batch.push_back(train[order[k]]);
      }
      loss += det.train_step(batch, adam, options.box_weight);
      ++batches;
    }
    result.epoch_loss.push_back(loss / std::max(1, batches));
    if (options.on_epoch) options.on_epoch(epoch, result.epoch_loss.back());
  }

  result.heldout_ap = detector_average_precision(det, heldout);
  if (result.heldout_ap < options.min_ap) {
    std::string log;
    for (std::size_t e = 0; e < result.epoch_loss.size(); ++e) {
      log += "\n  epoch " + std::to_string(e + 1) + " loss " + std::to_string(result.epoch_loss[e]);
    }
    throw TrainingError(det.name() + " reached held-out AP@0.5 " +
                        std::to_string(result.heldout_ap) + " < required " +
                        std::to_string(options.min_ap) + log);
  }
  return result;
}

}  // namespace lpatch
