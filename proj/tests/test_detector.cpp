#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <numeric>

#include "lpatch/errors.hpp"
#include "lpatch/evaluation.hpp"
#include "lpatch/optimizer.hpp"
#include "test_util.hpp"

using namespace lpatch;
using lpatch::testing::random_image;
using lpatch::testing::TempDir;

namespace {

struct Shared {
  Dataset train;
  Dataset heldout;
  DetectorTrainResult trained;
};

DetectorTrainOptions quick_options() {
  DetectorTrainOptions o;
  o.epochs = 4;
  o.min_ap = 0.0;
  o.seed = 3;
  return o;
}

// One briefly trained toy-n detector shared by every test in this file.
const Shared& shared() {
  static const Shared s = [] {
    Shared out;
    out.train = make_synthetic_dataset(120, 1);
    out.heldout = make_synthetic_dataset(30, 2);
    ToyDetectorConfig cfg;
    cfg.variant = ToyVariant::n;
    out.trained = train_toy_detector(out.train, out.heldout, cfg, quick_options());
    return out;
  }();
  return s;
}

AttackConfig quick_attack(int epochs) {
  AttackConfig c;
  c.patch_side = 16;
  c.epochs = epochs;
  c.seed = 5;
  return c;
}

Dataset subset(const Dataset& d, std::size_t n) { return Dataset(d.begin(), d.begin() + static_cast<long>(n)); }

class NanPass final : public DetectionPass {
 public:
  explicit NanPass(const Image& img) : shape_(img.height(), img.width()) {
    d_.push_back({{0, 0, 4, 4}, std::numeric_limits<float>::quiet_NaN(), 0});
  }
  std::span<const Detection> candidates() const override { return d_; }
  Image backward(std::span<const float>) const override { return Image(shape_.height(), shape_.width(), 0.f); }

 private:
  Image shape_;
  std::vector<Detection> d_;
};

class FakeDetector final : public DetectorModel {
 public:
  explicit FakeDetector(bool differentiable) : diff_(differentiable) {}
  std::string name() const override { return "fake"; }
  int input_size() const override { return 96; }
  bool differentiable() const override { return diff_; }
  std::unique_ptr<DetectionPass> forward(const Image& image) const override {
    return std::make_unique<NanPass>(image);
  }
  std::uint64_t parameter_hash() const override { return 1; }

 private:
  bool diff_;
};

}  // namespace

TEST(ToyDetector, VariantsScaleWidth) {
  const ToyDetector n({ToyVariant::n}, 0);
  const ToyDetector s({ToyVariant::s}, 0);
  const ToyDetector m({ToyVariant::m}, 0);
  EXPECT_LT(n.parameter_count(), s.parameter_count());
  EXPECT_LT(s.parameter_count(), m.parameter_count());
  EXPECT_EQ(s.grid_size(), 12);
  EXPECT_EQ(s.grid_stride(), 8);
  EXPECT_EQ(s.name(), "toy-s");
  EXPECT_THROW(parse_variant("xl"), ValidationError);
}

TEST(ToyDetector, ForwardShapeAndDeterminism) {
  const ToyDetector det({ToyVariant::s}, 7);
  Rng rng(1);
  const Image img = random_image(rng, 96, 96);
  const auto a = det.forward(img);
  const auto b = det.forward(img);
  ASSERT_EQ(a->candidates().size(), 144u);
  for (std::size_t k = 0; k < 144; ++k) {
    EXPECT_EQ(a->candidates()[k].confidence, b->candidates()[k].confidence);
    EXPECT_EQ(a->candidates()[k].anchor, static_cast<int>(k));
    EXPECT_GT(a->candidates()[k].confidence, 0.f);
    EXPECT_LT(a->candidates()[k].confidence, 1.f);
  }
  EXPECT_THROW(det.forward(Image(64, 64)), DimensionError);
  EXPECT_EQ(ToyDetector({ToyVariant::s}, 7).parameter_hash(), det.parameter_hash());
  EXPECT_NE(ToyDetector({ToyVariant::s}, 8).parameter_hash(), det.parameter_hash());
}

TEST(ToyDetector, InputGradientMatchesFiniteDifferences) {
  const ToyDetector& det = shared().trained.detector;
  const Image& img = shared().heldout[0].image;
  const auto pass = det.forward(img);
  const auto cands = pass->candidates();
  const auto top = std::max_element(cands.begin(), cands.end(), [](const Detection& a, const Detection& b) {
    return a.confidence < b.confidence;
  });
  const std::size_t k = static_cast<std::size_t>(top->anchor);
  std::vector<float> g(cands.size(), 0.f);
  g[k] = 1.f;
  const Image grad = pass->backward(g);
  // Probe the pixels with the largest gradients, where the signal dwarfs float noise.
  std::vector<std::size_t> idx(grad.size());
  std::iota(idx.begin(), idx.end(), 0);
  std::partial_sort(idx.begin(), idx.begin() + 20, idx.end(), [&](std::size_t a, std::size_t b) {
    return std::abs(grad.pixels()[a]) > std::abs(grad.pixels()[b]);
  });
  for (int t = 0; t < 20; ++t) {
    const std::size_t i = idx[static_cast<std::size_t>(t)];
    Image up = img;
    Image dn = img;
    up.pixels()[i] += 1e-3f;
    dn.pixels()[i] -= 1e-3f;
    const double step = static_cast<double>(up.pixels()[i]) - dn.pixels()[i];
    const double fd = (static_cast<double>(det.forward(up)->candidates()[k].confidence) -
                       det.forward(dn)->candidates()[k].confidence) / step;
    const double ad = grad.pixels()[i];
    EXPECT_NEAR(fd, ad, 0.05 * std::abs(ad) + 1e-5) << "pixel " << i;
  }
}

TEST(ToyDetector, CheckpointRoundTrip) {
  TempDir dir("det");
  const ToyDetector& det = shared().trained.detector;
  det.save(dir.path() / "d.bin");
  const ToyDetector back = ToyDetector::load(dir.path() / "d.bin");
  EXPECT_EQ(back.parameter_hash(), det.parameter_hash());
  EXPECT_EQ(back.name(), det.name());
  const Image& img = shared().heldout[1].image;
  const auto a = det.forward(img);
  const auto b = back.forward(img);
  for (std::size_t k = 0; k < a->candidates().size(); ++k)
    EXPECT_EQ(a->candidates()[k].confidence, b->candidates()[k].confidence);

  std::ofstream(dir.path() / "junk.bin") << "definitely not a checkpoint";
  EXPECT_THROW(ToyDetector::load(dir.path() / "junk.bin"), FormatError);
  EXPECT_THROW(ToyDetector::load(dir.path() / "missing.bin"), IngestionError);
}

TEST(ToyDetector, TrainingIsDeterministicAndLearns) {
  const auto& s = shared();
  ToyDetectorConfig cfg;
  cfg.variant = ToyVariant::n;
  const auto again = train_toy_detector(s.train, s.heldout, cfg, quick_options());
  EXPECT_EQ(again.detector.parameter_hash(), s.trained.detector.parameter_hash());
  EXPECT_EQ(again.epoch_loss, s.trained.epoch_loss);
  ASSERT_EQ(s.trained.epoch_loss.size(), 4u);
  EXPECT_LT(s.trained.epoch_loss.back(), s.trained.epoch_loss.front());
}

TEST(ToyDetector, TrainingPreconditions) {
  const auto& s = shared();
  ToyDetectorConfig cfg;
  cfg.variant = ToyVariant::n;
  EXPECT_THROW(train_toy_detector(subset(s.train, 50), s.heldout, cfg, quick_options()), ValidationError);
  auto strict = quick_options();
  strict.epochs = 1;
  strict.min_ap = 0.999;
  EXPECT_THROW(train_toy_detector(s.train, s.heldout, cfg, strict), TrainingError);
}

TEST(AttackConfig, JsonRoundTrip) {
  AttackConfig c;
  c.patch_side = 32;
  c.mode = AugmentMode::global;
  c.weights.beta = 0.5;
  c.scene.contrast_hi = 1.4f;
  c.regularizer_scale = RegularizerScale::sum;
  const AttackConfig back = attack_config_from_json(to_json(c));
  EXPECT_EQ(to_json(back), to_json(c));
}

TEST(AttackConfig, BadFieldsAreNamed) {
  auto expect_message = [](const nlohmann::json& doc, const std::string& field) {
    try {
      attack_config_from_json(doc);
      ADD_FAILURE() << "accepted " << doc.dump();
    } catch (const ValidationError& e) {
      EXPECT_NE(std::string(e.what()).find(field), std::string::npos) << e.what();
    }
  };
  expect_message({{"patch_sidee", 10}}, "patch_sidee");
  expect_message({{"epochs", "many"}}, "epochs");
  expect_message({{"weights", {{"delta", 1}}}}, "weights.delta");
  expect_message({{"scene", {{"contrast_range", {1}}}}}, "scene.contrast_range");
  expect_message({{"mode", "sideways"}}, "mode");
  expect_message({{"patch_side", 4}}, "patch_side");
}

TEST(Patches, InitIsGreyInRange) {
  Rng rng(1);
  const Patch p = init_patch(64, rng);
  for (int y = 0; y < 64; ++y)
    for (int x = 0; x < 64; ++x) {
      EXPECT_GE(p.at(y, x, 0), 0.3f);
      EXPECT_LE(p.at(y, x, 0), 0.7f);
      EXPECT_EQ(p.at(y, x, 0), p.at(y, x, 1));
      EXPECT_EQ(p.at(y, x, 0), p.at(y, x, 2));
    }
  Rng again(1);
  EXPECT_EQ(init_patch(64, again), p);
  EXPECT_THROW(init_patch(4, rng), ValidationError);
}

// Kolmogorov-Smirnov distance of ~1e6 samples from U(0,1).
TEST(Patches, RandomPatchIsUniform) {
  Rng rng(2);
  const Patch p = make_random_patch(578, rng);
  std::vector<float> v(p.pixels().begin(), p.pixels().end());
  std::sort(v.begin(), v.end());
  const double n = static_cast<double>(v.size());
  double d = 0.0;
  for (std::size_t i = 0; i < v.size(); ++i) {
    d = std::max(d, std::abs((i + 1) / n - v[i]));
    d = std::max(d, std::abs(v[i] - i / n));
  }
  EXPECT_LT(d, 0.01);
}

TEST(Sidecar, RoundTripAndCorruption) {
  TempDir dir("sidecar");
  Rng rng(3);
  const Patch p = make_random_patch(24, rng);
  save_patch_sidecar(dir.path() / "p.apatch", p);
  EXPECT_EQ(load_patch_sidecar(dir.path() / "p.apatch"), p);
  EXPECT_EQ(std::filesystem::file_size(dir.path() / "p.apatch"), 8u + 4u + 24u * 24u * 3u * 4u);

  std::ofstream(dir.path() / "magic.apatch", std::ios::binary) << "BPATCHv1xxxx";
  EXPECT_THROW(load_patch_sidecar(dir.path() / "magic.apatch"), FormatError);
  std::filesystem::resize_file(dir.path() / "p.apatch", 100);
  EXPECT_THROW(load_patch_sidecar(dir.path() / "p.apatch"), FormatError);
}

TEST(TrainPatch, ZeroLearningRateKeepsInitialPatch) {
  auto cfg = quick_attack(2);
  cfg.learning_rate = 0.0;
  const auto r = train_patch(cfg, subset(shared().train, 16), shared().trained.detector);
  EXPECT_EQ(r.patch, r.initial);
  ASSERT_EQ(r.log.size(), 2u);
}

TEST(TrainPatch, DeterministicAcrossRunsAndWorkers) {
  const Dataset data = subset(shared().train, 24);
  auto cfg = quick_attack(3);
  const auto a = train_patch(cfg, data, shared().trained.detector);
  const auto b = train_patch(cfg, data, shared().trained.detector);
  cfg.workers = 3;
  const auto c = train_patch(cfg, data, shared().trained.detector);
  EXPECT_EQ(a.patch, b.patch);
  EXPECT_EQ(a.patch, c.patch);
  EXPECT_EQ(training_log_csv(a.log), training_log_csv(c.log));
  EXPECT_NE(a.patch, a.initial);
  for (float v : a.patch.pixels()) {
    ASSERT_GE(v, 0.f);
    ASSERT_LE(v, 1.f);
  }
}

TEST(TrainPatch, DetectorStaysFrozen) {
  const ToyDetector& det = shared().trained.detector;
  const std::uint64_t before = det.parameter_hash();
  const auto r = train_patch(quick_attack(2), subset(shared().train, 16), det);
  EXPECT_EQ(r.detector_hash_before, before);
  EXPECT_EQ(r.detector_hash_after, before);
  EXPECT_EQ(det.parameter_hash(), before);
}

TEST(TrainPatch, DetectionLossFalls) {
  auto cfg = quick_attack(10);
  cfg.patch_side = 32;
  cfg.placement.size_ratio = 0.25f;
  const auto r = train_patch(cfg, subset(shared().train, 32), shared().trained.detector);
  EXPECT_LT(r.log.back().det_loss, r.log.front().det_loss);
}

TEST(TrainPatch, ContractAndNumericFailures) {
  const Dataset data = subset(shared().train, 8);
  EXPECT_THROW(train_patch(quick_attack(1), data, FakeDetector(false)), ContractError);
  EXPECT_THROW(train_patch(quick_attack(1), data, FakeDetector(true)), TrainingError);
  EXPECT_THROW(train_patch(quick_attack(1), Dataset{}, shared().trained.detector), ValidationError);
}

TEST(TrainPatch, LogCsvHasOneRowPerEpoch) {
  const auto r = train_patch(quick_attack(3), subset(shared().train, 8), shared().trained.detector);
  const std::string csv = training_log_csv(r.log);
  EXPECT_EQ(csv.rfind("epoch,det_loss,tv_loss,nps_loss,total\n", 0), 0u);
  EXPECT_EQ(std::count(csv.begin(), csv.end(), '\n'), 4);
}

TEST(AugmentForMode, NoneIsUntouched) {
  const Sample& s = shared().train[0];
  Rng a(9);
  Rng b(9);
  EXPECT_EQ(augment_for_mode(s.image, s.annotation, AugmentMode::none, a), s.image);
  EXPECT_EQ(a.next(), b.next());  // no draws consumed
  EXPECT_THROW(parse_augment_mode("both"), ValidationError);
}

TEST(EvaluatePatch, NoPatchIsNoAttack) {
  const auto r = evaluate_patch(shared().trained.detector, shared().heldout, nullptr);
  EXPECT_EQ(r.asr, 0.0);
  EXPECT_EQ(r.ap, r.clean_ap);
  EXPECT_EQ(r.recall, r.clean_recall);
  EXPECT_EQ(r.per_image.size(), shared().heldout.size());
}

TEST(EvaluatePatch, DeterministicAndBounded) {
  Rng rng(4);
  const Patch p = make_random_patch(32, rng);
  EvalOptions opt;
  opt.seed = 17;
  const auto a = evaluate_patch(shared().trained.detector, shared().heldout, &p, opt);
  opt.workers = 2;
  const auto b = evaluate_patch(shared().trained.detector, shared().heldout, &p, opt);
  EXPECT_EQ(a.to_json().dump(), b.to_json().dump());
  EXPECT_EQ(a.to_csv(), b.to_csv());
  for (double v : {a.ap, a.recall, a.asr, a.clean_ap, a.clean_recall}) {
    EXPECT_GE(v, 0.0);
    EXPECT_LE(v, 1.0);
  }
  const auto j = a.to_json();
  for (const char* key : {"ap", "recall", "asr", "clean_ap", "clean_recall", "per_image"}) EXPECT_TRUE(j.contains(key));
}

TEST(Transfer, MatrixShapeAndDiagonal) {
  const ToyDetector other({ToyVariant::s}, 99);
  Rng rng(5);
  const std::vector<std::pair<std::string, Patch>> patches{{"a", make_random_patch(16, rng)},
                                                           {"b", make_random_patch(16, rng)}};
  const std::vector<std::pair<std::string, const DetectorModel*>> dets{{"n", &shared().trained.detector},
                                                                       {"s", &other}};
  EvalOptions opt;
  const Dataset data = subset(shared().heldout, 10);
  const auto m = transfer_matrix(patches, dets, data, opt);
  ASSERT_EQ(m.asr.size(), 2u);
  ASSERT_EQ(m.asr[0].size(), 2u);
  EXPECT_EQ(m.sources, (std::vector<std::string>{"a", "b"}));
  EXPECT_EQ(m.targets, (std::vector<std::string>{"n", "s"}));
  EXPECT_EQ(m.asr[0][0], evaluate_patch(shared().trained.detector, data, &patches[0].second, opt).asr);
  EXPECT_EQ(m.to_csv(), transfer_matrix(patches, dets, data, opt).to_csv());
  EXPECT_THROW(transfer_matrix(patches, std::span(dets).first(1), data, opt), ValidationError);
}
