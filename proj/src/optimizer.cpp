#include "lpatch/optimizer.hpp"

#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <limits>
#include <numeric>
#include <sstream>

#include "lpatch/errors.hpp"
#include "lpatch/nn.hpp"
#include "lpatch/parallel.hpp"

namespace lpatch {

namespace {

constexpr char kSidecarMagic[8] = {'A', 'P', 'A', 'T', 'C', 'H', 'v', '1'};

void put_u32(std::ostream& out, std::uint32_t v) {
  const unsigned char b[4] = {static_cast<unsigned char>(v), static_cast<unsigned char>(v >> 8),
                              static_cast<unsigned char>(v >> 16), static_cast<unsigned char>(v >> 24)};
  out.write(reinterpret_cast<const char*>(b), 4);
}

bool get_u32(std::istream& in, std::uint32_t& v) {
  unsigned char b[4];
  if (!in.read(reinterpret_cast<char*>(b), 4)) return false;
  v = b[0] | (b[1] << 8) | (b[2] << 16) | (static_cast<std::uint32_t>(b[3]) << 24);
  return true;
}

}  // namespace

AugmentMode parse_augment_mode(const std::string& name) {
  if (name == "none") return AugmentMode::none;
  if (name == "global") return AugmentMode::global;
  if (name == "local") return AugmentMode::local;
  throw ValidationError("mode: expected none, global or local, got '" + name + "'");
}

std::string to_string(AugmentMode mode) {
  switch (mode) {
    case AugmentMode::none: return "none";
    case AugmentMode::global: return "global";
    case AugmentMode::local: return "local";
  }
  return "?";
}

RegularizerScale parse_regularizer_scale(const std::string& name) {
  if (name == "sum") return RegularizerScale::sum;
  if (name == "mean") return RegularizerScale::mean;
  throw ValidationError("regularizer_scale: expected sum or mean, got '" + name + "'");
}

std::string to_string(RegularizerScale scale) {
  return scale == RegularizerScale::sum ? "sum" : "mean";
}

void AttackConfig::validate() const {
  if (patch_side < 8) throw ValidationError("patch_side must be >= 8");
  if (epochs <= 0) throw ValidationError("epochs must be positive");
  if (!(learning_rate >= 0.0) || !std::isfinite(learning_rate)) {
    throw ValidationError("learning_rate must be a finite non-negative number");
  }
  if (optimizer != "adam") throw ValidationError("optimizer: only \"adam\" is supported");
  if (batch_size <= 0) throw ValidationError("batch_size must be positive");
  if (workers <= 0) throw ValidationError("workers must be positive");
  if (!(confidence_floor >= 0.f && confidence_floor <= 1.f)) {
    throw ValidationError("confidence_floor must lie in [0,1]");
  }
  weights.validate();
  placement.validate();
  scene.validate();
}

nlohmann::json to_json(const AttackConfig& c) {
  return {{"patch_side", c.patch_side},
          {"epochs", c.epochs},
          {"learning_rate", c.learning_rate},
          {"optimizer", c.optimizer},
          {"weights", {{"alpha", c.weights.alpha}, {"beta", c.weights.beta}, {"gamma", c.weights.gamma}}},
          {"regularizer_scale", to_string(c.regularizer_scale)},
          {"placement",
           {{"size_ratio", c.placement.size_ratio},
            {"offset_range", c.placement.offset_range},
            {"rotation_range_deg", c.placement.rotation_range_deg}}},
          {"scene",
           {{"contrast_range", {c.scene.contrast_lo, c.scene.contrast_hi}},
            {"brightness_range", {c.scene.brightness_lo, c.scene.brightness_hi}},
            {"noise_amplitude", c.scene.noise_amplitude}}},
          {"mode", to_string(c.mode)},
          {"seed", c.seed},
          {"batch_size", c.batch_size},
          {"confidence_floor", c.confidence_floor},
          {"workers", c.workers}};
}

namespace {

template <typename T>
void read_field(const nlohmann::json& obj, const std::string& key, const std::string& path, T& out) {
  if (!obj.contains(key)) return;
  try {
    out = obj.at(key).get<T>();
  } catch (const nlohmann::json::exception&) {
    throw ValidationError("config field '" + path + key + "' has the wrong type");
  }
}

void read_range(const nlohmann::json& obj, const std::string& key, const std::string& path,
                float& lo, float& hi) {
  if (!obj.contains(key)) return;
  const auto& v = obj.at(key);
  if (!v.is_array() || v.size() != 2 || !v[0].is_number() || !v[1].is_number()) {
    throw ValidationError("config field '" + path + key + "' must be [lo, hi]");
  }
  lo = v[0].get<float>();
  hi = v[1].get<float>();
}

void reject_unknown(const nlohmann::json& obj, std::initializer_list<const char*> known,
                    const std::string& path) {
  if (!obj.is_object()) throw ValidationError("config section '" + path + "' must be an object");
  for (const auto& [key, value] : obj.items()) {
    const bool ok = std::any_of(known.begin(), known.end(), [&](const char* k) { return key == k; });
    if (!ok) throw ValidationError("unknown config field '" + path + key + "'");
  }
}

}  // namespace

AttackConfig attack_config_from_json(const nlohmann::json& doc) {
  reject_unknown(doc,
                 {"patch_side", "epochs", "learning_rate", "optimizer", "weights", "regularizer_scale",
                  "placement", "scene", "mode", "seed", "batch_size", "confidence_floor", "workers"},
                 "");
  AttackConfig c;
  read_field(doc, "patch_side", "", c.patch_side);
  read_field(doc, "epochs", "", c.epochs);
  read_field(doc, "learning_rate", "", c.learning_rate);
  read_field(doc, "optimizer", "", c.optimizer);
  read_field(doc, "seed", "", c.seed);
  read_field(doc, "batch_size", "", c.batch_size);
  read_field(doc, "confidence_floor", "", c.confidence_floor);
  read_field(doc, "workers", "", c.workers);
  if (doc.contains("mode")) {
    std::string mode;
    read_field(doc, "mode", "", mode);
    c.mode = parse_augment_mode(mode);
  }
  if (doc.contains("regularizer_scale")) {
    std::string scale;
    read_field(doc, "regularizer_scale", "", scale);
    c.regularizer_scale = parse_regularizer_scale(scale);
  }
  if (doc.contains("weights")) {
    const auto& w = doc["weights"];
    reject_unknown(w, {"alpha", "beta", "gamma"}, "weights.");
    read_field(w, "alpha", "weights.", c.weights.alpha);
    read_field(w, "beta", "weights.", c.weights.beta);
    read_field(w, "gamma", "weights.", c.weights.gamma);
  }
  if (doc.contains("placement")) {
    const auto& p = doc["placement"];
    reject_unknown(p, {"size_ratio", "offset_range", "rotation_range_deg"}, "placement.");
    read_field(p, "size_ratio", "placement.", c.placement.size_ratio);
    read_field(p, "offset_range", "placement.", c.placement.offset_range);
    read_field(p, "rotation_range_deg", "placement.", c.placement.rotation_range_deg);
  }
  if (doc.contains("scene")) {
    const auto& s = doc["scene"];
    reject_unknown(s, {"contrast_range", "brightness_range", "noise_amplitude"}, "scene.");
    read_range(s, "contrast_range", "scene.", c.scene.contrast_lo, c.scene.contrast_hi);
    read_range(s, "brightness_range", "scene.", c.scene.brightness_lo, c.scene.brightness_hi);
    read_field(s, "noise_amplitude", "scene.", c.scene.noise_amplitude);
  }
  c.validate();
  return c;
}

AttackConfig load_attack_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IngestionError("cannot open config " + path.string());
  nlohmann::json doc;
  try {
    in >> doc;
  } catch (const nlohmann::json::exception& e) {
    throw ValidationError(path.string() + ": " + e.what());
  }
  return attack_config_from_json(doc);
}

Patch init_patch(int side, Rng& rng) {
  if (side < 8) throw ValidationError("patch side must be >= 8");
  Patch p(side);
  for (int y = 0; y < side; ++y)
    for (int x = 0; x < side; ++x) {
      const auto g = static_cast<float>(rng.uniform(0.3, 0.7));
      for (int c = 0; c < 3; ++c) p.at(y, x, c) = g;
    }
  return p;
}

Patch make_random_patch(int side, Rng& rng) {
  if (side < 8) throw ValidationError("patch side must be >= 8");
  Patch p(side);
  for (float& v : p.pixels()) v = static_cast<float>(rng.uniform());
  return p;
}

Image augment_for_mode(const Image& image, const Annotation& annotation, AugmentMode mode, Rng& rng) {
  switch (mode) {
    case AugmentMode::none: return image;
    case AugmentMode::global: return apply_global_augmentation(image, rng);
    case AugmentMode::local: return apply_local_augmentation(image, annotation, rng);
  }
  return image;
}

double detection_objective(const DetectorModel& detector, const PatchedImage& patched,
                           float confidence_floor, Patch* grad) {
  const auto pass = detector.forward(patched.image);
  const auto candidates = pass->candidates();
  std::vector<Detection> kept;
  for (const Detection& d : candidates) {
    // A NaN would fail the floor test and vanish; surface it instead.
    if (!std::isfinite(d.confidence)) return std::numeric_limits<double>::quiet_NaN();
    if (d.confidence >= confidence_floor) kept.push_back(d);
  }
  const DetLoss dl = det_loss(kept);
  if (!grad || !dl.argmax) return dl.value;
  std::vector<float> conf_grad(candidates.size(), 0.f);
  conf_grad[static_cast<std::size_t>(kept[*dl.argmax].anchor)] = 1.f;
  const Patch g = patch_gradient(patched, pass->backward(conf_grad));
  auto dst = grad->pixels();
  auto src = g.pixels();
  for (std::size_t i = 0; i < dst.size(); ++i) dst[i] += src[i];
  return dl.value;
}

TrainResult train_patch(const AttackConfig& config, const Dataset& dataset,
                        const DetectorModel& detector, const PrintableSet& printable,
                        const EpochCallback& on_epoch) {
  config.validate();
  printable.validate();
  if (dataset.empty()) throw ValidationError("train_patch: dataset is empty");
  if (!detector.differentiable()) {
    throw ContractError(detector.name() + " does not expose confidence gradients");
  }

  TrainResult result;
  result.detector_hash_before = detector.parameter_hash();
  {
    Rng init(derive_seed(config.seed, "init"));
    result.patch = init_patch(config.patch_side, init);
  }
  result.initial = result.patch;
  Patch& patch = result.patch;
  nn::Adam adam(patch.pixels().size(), config.learning_rate);

  std::vector<std::size_t> order(dataset.size());
  std::iota(order.begin(), order.end(), 0);
  const auto& w = config.weights;
  const double reg_scale =
      config.regularizer_scale == RegularizerScale::mean
          ? 1.0 / (static_cast<double>(config.patch_side) * config.patch_side)
          : 1.0;

  for (int epoch = 0; epoch < config.epochs; ++epoch) {
    const auto e = static_cast<std::uint64_t>(epoch);
    Rng shuffle(derive_seed(config.seed, "shuffle", e));
    for (std::size_t i = order.size(); i > 1; --i) {
      std::swap(order[i - 1], order[static_cast<std::size_t>(shuffle.uniform_int(0, static_cast<int>(i) - 1))]);
    }

    EpochLog log{epoch + 1};
    int steps = 0;
    for (std::size_t start = 0; start < order.size(); start += config.batch_size) {
      const std::size_t count = std::min<std::size_t>(config.batch_size, order.size() - start);
      std::vector<double> det_values(count, 0.0);
      std::vector<Patch> det_grads(count);

      parallel_for(count, config.workers, [&](std::size_t b) {
        const std::size_t idx = order[start + b];
        const Sample& sample = dataset[idx];
        Rng aug_rng(derive_seed(config.seed, "augment", e, idx));
        Rng placement_rng(derive_seed(config.seed, "placement", e, idx));
        Rng scene_rng(derive_seed(config.seed, "scene", e, idx));

        const Image augmented = augment_for_mode(sample.image, sample.annotation, config.mode, aug_rng);
        const PatchedImage patched = apply_patch_to_all_targets(
            augmented, patch, sample.annotation, config.placement, config.scene, placement_rng, scene_rng);
        det_grads[b] = Patch(patch.side(), 0.f);
        det_values[b] = detection_objective(detector, patched, config.confidence_floor, &det_grads[b]);
      });

      Patch grad(patch.side(), 0.f);
      double det_mean = 0.0;
      const double inv = 1.0 / static_cast<double>(count);
      for (std::size_t b = 0; b < count; ++b) {
        det_mean += det_values[b] * inv;
        auto dst = grad.pixels();
        auto src = det_grads[b].pixels();
        for (std::size_t i = 0; i < dst.size(); ++i) dst[i] += static_cast<float>(w.alpha * inv * src[i]);
      }
      const double tv = reg_scale * tv_loss(patch, &grad, w.beta * reg_scale);
      const double nps = reg_scale * nps_loss(patch, printable, &grad, w.gamma * reg_scale);
      const double total = total_loss(det_mean, tv, nps, w);
      if (!std::isfinite(total)) {
        std::ostringstream msg;
        msg << "non-finite loss at epoch " << epoch + 1 << ", batch " << start / config.batch_size
            << ": det=" << det_mean << " tv=" << tv << " nps=" << nps;
        throw TrainingError(msg.str());
      }

      adam.step(patch.pixels(), grad.pixels());
      clamp_unit_inplace(patch.pixels());

      log.det_loss += det_mean * static_cast<double>(count);
      log.tv_loss += tv;
      log.nps_loss += nps;
      ++steps;
    }
    log.det_loss /= static_cast<double>(dataset.size());
    log.tv_loss /= steps;
    log.nps_loss /= steps;
    log.total = total_loss(log.det_loss, log.tv_loss, log.nps_loss, w);
    result.log.push_back(log);
    if (on_epoch) on_epoch(log);
  }

  result.detector_hash_after = detector.parameter_hash();
  if (result.detector_hash_after != result.detector_hash_before) {
    throw ContractError("detector parameters changed during patch training");
  }
  return result;
}

std::string training_log_csv(std::span<const EpochLog> log) {
  std::ostringstream out;
  out.precision(10);
  out << "epoch,det_loss,tv_loss,nps_loss,total\n";
  for (const auto& e : log) {
    out << e.epoch << ',' << e.det_loss << ',' << e.tv_loss << ',' << e.nps_loss << ',' << e.total << '\n';
  }
  return out.str();
}

void save_patch_sidecar(const std::filesystem::path& path, const Patch& patch) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IngestionError("cannot write patch sidecar " + path.string());
  out.write(kSidecarMagic, sizeof kSidecarMagic);
  put_u32(out, static_cast<std::uint32_t>(patch.side()));
  for (float v : patch.pixels()) put_u32(out, std::bit_cast<std::uint32_t>(v));
  if (!out) throw IngestionError("short write to " + path.string());
}

Patch load_patch_sidecar(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IngestionError("cannot open patch sidecar " + path.string());
  char magic[8];
  if (!in.read(magic, sizeof magic) || std::memcmp(magic, kSidecarMagic, sizeof magic) != 0) {
    throw FormatError(path.string() + ": bad patch sidecar magic");
  }
  std::uint32_t side = 0;
  if (!get_u32(in, side) || side == 0 || side > 16384) {
    throw FormatError(path.string() + ": bad patch side");
  }
  Patch patch(static_cast<int>(side));
  for (float& v : patch.pixels()) {
    std::uint32_t bits = 0;
    if (!get_u32(in, bits)) throw FormatError(path.string() + ": truncated patch data");
    v = std::bit_cast<float>(bits);
  }
  for (float v : patch.pixels()) {
    if (!(v >= 0.f && v <= 1.f)) throw FormatError(path.string() + ": patch value outside [0,1]");
  }
  return patch;
}

}  // namespace lpatch
