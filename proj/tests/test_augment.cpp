#include <gtest/gtest.h>

#include <array>
#include <cmath>

#include "lpatch/augment.hpp"
#include "lpatch/errors.hpp"
#include "test_util.hpp"

using namespace lpatch;
using lpatch::testing::random_image;

namespace {

Annotation random_annotation(Rng& rng, int h, int w, int max_boxes) {
  Annotation a{"x.png", {}, kShipClass};
  const int n = rng.uniform_int(0, max_boxes);
  for (int k = 0; k < n; ++k) {
    const float x0 = static_cast<float>(rng.uniform(0, w - 2));
    const float y0 = static_cast<float>(rng.uniform(0, h - 2));
    a.boxes.push_back({x0, y0, static_cast<float>(rng.uniform(x0 + 1, w)),
                       static_cast<float>(rng.uniform(y0 + 1, h))});
  }
  return a;
}

void expect_unit_range(const Image& img) {
  for (float v : img.pixels()) {
    ASSERT_GE(v, 0.f);
    ASSERT_LE(v, 1.f);
  }
}

}  // namespace

TEST(Kernels, NeutralParametersAreIdentity) {
  Rng rng(1);
  const Image img = random_image(rng, 11, 13);
  EXPECT_EQ(darken(img, 1.f), img);
  EXPECT_EQ(brighten(img, 1.f), img);
  EXPECT_EQ(rain(img, {}), img);
}

TEST(Kernels, GainAndClamp) {
  Image img(2, 2, 0.8f);
  img.at(0, 0, 0) = 0.2f;
  const Image d = darken(img, 0.5f);
  EXPECT_FLOAT_EQ(d.at(0, 0, 0), 0.1f);
  EXPECT_FLOAT_EQ(d.at(1, 1, 2), 0.4f);
  const Image b = brighten(img, 1.5f);
  EXPECT_FLOAT_EQ(b.at(0, 0, 0), 0.3f);
  EXPECT_EQ(b.at(1, 1, 2), 1.f);
}

TEST(Kernels, BlurKeepsConstantImage) {
  const Image flat(20, 9, 0.4f);
  const Image out = blur(flat, 1.7f);
  for (float v : out.pixels()) EXPECT_NEAR(v, 0.4f, 1e-6);
}

TEST(Kernels, BlurPreservesMeanOfImpulse) {
  // Away from the borders a normalised kernel keeps the total mass.
  Image img(41, 41, 0.f);
  img.at(20, 20, 1) = 1.f;
  const Image out = blur(img, 2.f);
  double total = 0.0;
  for (int y = 0; y < 41; ++y)
    for (int x = 0; x < 41; ++x) total += out.at(y, x, 1);
  EXPECT_NEAR(total, 1.0, 1e-5);
  EXPECT_GT(out.at(20, 20, 1), out.at(20, 22, 1));
  EXPECT_FLOAT_EQ(out.at(20, 22, 1), out.at(22, 20, 1));
}

TEST(Kernels, RainBlendsStreakPixels) {
  const Image img(30, 30, 0.1f);
  const std::vector<RainStreak> s{{0.f, 0.f, 20.f, 90.f}};  // straight down column 0
  const Image out = rain(img, s, 0.3f, 0.9f);
  for (int y = 0; y < 30; ++y) {
    const float expect = y <= 20 ? 0.7f * 0.1f + 0.3f * 0.9f : 0.1f;
    EXPECT_NEAR(out.at(y, 0, 0), expect, 1e-6) << y;
    EXPECT_EQ(out.at(y, 5, 0), 0.1f);
  }
}

TEST(Kernels, RandomOpsKeepShapeAndRange) {
  Rng rng(2);
  for (int t = 0; t < 200; ++t) {
    const Image img = random_image(rng, rng.uniform_int(1, 30), rng.uniform_int(1, 30));
    const Image out = apply_op(img, sample_transform(rng));
    ASSERT_TRUE(out.same_shape(img));
    expect_unit_range(out);
  }
}

TEST(Regions, FullImageBox) {
  Rng rng(3);
  const Image img = random_image(rng, 8, 10);
  const auto set = extract_regions(img, {"x", {{0, 0, 10, 8}}, kShipClass});
  ASSERT_EQ(set.regions.size(), 1u);
  EXPECT_EQ(set.regions[0].crop, img);
}

TEST(Regions, SliceOracle) {
  Rng rng(4);
  const Image img = random_image(rng, 10, 10);
  const auto set = extract_regions(img, {"x", {{2, 2, 5, 5}}, kShipClass});
  ASSERT_EQ(set.regions.size(), 1u);
  const auto& r = set.regions[0];
  EXPECT_EQ(r.x0, 2);
  EXPECT_EQ(r.y0, 2);
  ASSERT_EQ(r.crop.height(), 3);
  ASSERT_EQ(r.crop.width(), 3);
  for (int y = 0; y < 3; ++y)
    for (int x = 0; x < 3; ++x)
      for (int c = 0; c < 3; ++c) EXPECT_EQ(r.crop.at(y, x, c), img.at(2 + y, 2 + x, c));
  EXPECT_TRUE(extract_regions(img, {"x", {}, kShipClass}).regions.empty());
  EXPECT_THROW(extract_regions(img, {"x", {{2, 2, 11, 5}}, kShipClass}), ValidationError);
}

TEST(Sampling, DeterministicPerSeed) {
  Rng a(77);
  Rng b(77);
  for (int t = 0; t < 50; ++t) {
    const AugmentOp x = sample_transform(a);
    const AugmentOp y = sample_transform(b);
    ASSERT_EQ(x.kind, y.kind);
    const Image img(6, 6, 0.5f);
    EXPECT_EQ(apply_op(img, x), apply_op(img, y));
  }
}

TEST(Sampling, KindsUniformAndParamsInRange) {
  Rng rng(5);
  const AugmentRanges r;
  std::array<int, 4> counts{};
  const int n = 10000;
  for (int t = 0; t < n; ++t) {
    const AugmentOp op = sample_transform(rng, r);
    ++counts[static_cast<int>(op.kind)];
    switch (op.kind) {
      case AugmentKind::darken: {
        const float g = std::get<GainParams>(op.params).gain;
        EXPECT_GE(g, r.darken_lo);
        EXPECT_LE(g, r.darken_hi);
        break;
      }
      case AugmentKind::brighten: {
        const float g = std::get<GainParams>(op.params).gain;
        EXPECT_GE(g, r.brighten_lo);
        EXPECT_LE(g, r.brighten_hi);
        break;
      }
      case AugmentKind::blur: {
        const float s = std::get<BlurParams>(op.params).sigma;
        EXPECT_GE(s, r.blur_sigma_lo);
        EXPECT_LE(s, r.blur_sigma_hi);
        break;
      }
      case AugmentKind::rain: {
        const auto& p = std::get<RainParams>(op.params);
        EXPECT_GE(static_cast<int>(p.streaks.size()), r.rain_streaks_lo);
        EXPECT_LE(static_cast<int>(p.streaks.size()), r.rain_streaks_hi);
        for (const auto& s : p.streaks) {
          EXPECT_GE(s.length, r.rain_length_lo);
          EXPECT_LE(s.length, r.rain_length_hi);
          EXPECT_GE(s.angle_deg, r.rain_angle_lo);
          EXPECT_LE(s.angle_deg, r.rain_angle_hi);
        }
        break;
      }
    }
  }
  for (int c : counts) {
    EXPECT_GE(c, 0.23 * n);
    EXPECT_LE(c, 0.27 * n);
  }
}

TEST(LocalAugmentation, NoBoxesIsIdentity) {
  Rng rng(6);
  const Image img = random_image(rng, 20, 20);
  EXPECT_EQ(apply_local_augmentation(img, {"x", {}, kShipClass}, rng), img);
}

TEST(LocalAugmentation, DarkenInsideBoxOnly) {
  Rng rng(7);
  const Image img = random_image(rng, 20, 20);
  const Annotation ann{"x", {{4, 5, 10, 15}}, kShipClass};
  const std::vector<AugmentOp> ops{{AugmentKind::darken, GainParams{0.5f}}};
  const Image out = apply_local_augmentation(img, ann, ops);
  for (int y = 0; y < 20; ++y)
    for (int x = 0; x < 20; ++x)
      for (int c = 0; c < 3; ++c) {
        const bool in = x >= 4 && x < 10 && y >= 5 && y < 15;
        EXPECT_EQ(out.at(y, x, c), in ? std::clamp(0.5f * img.at(y, x, c), 0.f, 1.f) : img.at(y, x, c));
      }
}

TEST(LocalAugmentation, LaterBoxWinsOnOverlap) {
  const Image img(10, 10, 0.6f);
  const Annotation ann{"x", {{0, 0, 6, 6}, {3, 3, 9, 9}}, kShipClass};
  const std::vector<AugmentOp> ops{{AugmentKind::darken, GainParams{0.5f}},
                                   {AugmentKind::brighten, GainParams{1.5f}}};
  const Image out = apply_local_augmentation(img, ann, ops);
  EXPECT_FLOAT_EQ(out.at(1, 1, 0), 0.3f);
  EXPECT_FLOAT_EQ(out.at(4, 4, 0), 0.9f);
  EXPECT_FLOAT_EQ(out.at(8, 8, 0), 0.9f);
  EXPECT_THROW(apply_local_augmentation(img, ann, std::span(ops).first(1)), DimensionError);
}

TEST(LocalAugmentation, BackgroundBitIdentical) {
  Rng rng(8);
  for (int t = 0; t < 100; ++t) {
    const int h = rng.uniform_int(16, 64);
    const int w = rng.uniform_int(16, 64);
    const Image img = random_image(rng, h, w);
    const Annotation ann = random_annotation(rng, h, w, 4);
    Rng aug(derive_seed(99, "augment", static_cast<std::uint64_t>(t)));
    const Image out = apply_local_augmentation(img, ann, aug);
    const Mask m = mask_from_boxes(ann.boxes, h, w);
    for (int y = 0; y < h; ++y)
      for (int x = 0; x < w; ++x)
        if (!m.at(y, x))
          for (int c = 0; c < 3; ++c) ASSERT_EQ(out.at(y, x, c), img.at(y, x, c));
    expect_unit_range(out);
    Rng again(derive_seed(99, "augment", static_cast<std::uint64_t>(t)));
    EXPECT_EQ(apply_local_augmentation(img, ann, again), out);
  }
}

TEST(GlobalAugmentation, BlurChangesBackground) {
  Rng rng(9);
  const Image img = random_image(rng, 32, 32);
  AugmentRanges only_blur;
  // Restrict the draw to blur by making every other kind a no-op.
  only_blur.darken_lo = only_blur.darken_hi = 1.f;
  only_blur.brighten_lo = only_blur.brighten_hi = 1.f;
  only_blur.rain_streaks_lo = only_blur.rain_streaks_hi = 0;
  int changed = 0;
  for (int t = 0; t < 20; ++t) {
    Rng r(static_cast<std::uint64_t>(t));
    const Image out = apply_global_augmentation(img, r, only_blur);
    changed += out.at(0, 0, 0) != img.at(0, 0, 0);
  }
  EXPECT_GT(changed, 0);
}

TEST(GlobalAugmentation, Deterministic) {
  Rng rng(10);
  const Image img = random_image(rng, 24, 24);
  Rng a(5);
  Rng b(5);
  EXPECT_EQ(apply_global_augmentation(img, a), apply_global_augmentation(img, b));
}
