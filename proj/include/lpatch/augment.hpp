#pragma once

#include <span>
#include <string_view>
#include <variant>
#include <vector>

#include "lpatch/dataset.hpp"
#include "lpatch/image.hpp"
#include "lpatch/rng.hpp"

namespace lpatch {

enum class AugmentKind { darken, brighten, rain, blur };
std::string_view to_string(AugmentKind kind);

struct GainParams {
  float gain = 1.f;
};

// One streak starts at a fractional position inside the crop and runs
// `length` pixels at `angle_deg` from horizontal.
struct RainStreak {
  float start_x = 0.f;  // in [0,1) of crop width
  float start_y = 0.f;  // in [0,1) of crop height
  float length = 0.f;
  float angle_deg = 70.f;
};

struct RainParams {
  std::vector<RainStreak> streaks;
  float alpha = 0.3f;
  float value = 0.9f;
};

struct BlurParams {
  float sigma = 1.f;
};

struct AugmentOp {
  AugmentKind kind = AugmentKind::darken;
  std::variant<GainParams, RainParams, BlurParams> params = GainParams{};
};

struct AugmentRanges {
  float darken_lo = 0.5f, darken_hi = 0.8f;
  float brighten_lo = 1.2f, brighten_hi = 1.5f;
  float blur_sigma_lo = 1.f, blur_sigma_hi = 2.f;
  int rain_streaks_lo = 5, rain_streaks_hi = 20;
  float rain_length_lo = 10.f, rain_length_hi = 30.f;
  float rain_angle_lo = 60.f, rain_angle_hi = 80.f;
  float rain_alpha = 0.3f;
  float rain_value = 0.9f;
};

// Photometric kernels. All preserve shape and keep values in [0,1].
Image darken(const Image& crop, float gain);
Image brighten(const Image& crop, float gain);
Image rain(const Image& crop, std::span<const RainStreak> streaks, float alpha = 0.3f,
           float value = 0.9f);
// Separable Gaussian, half-width ceil(3 sigma), reflect-101 borders.
Image blur(const Image& crop, float sigma);

Image apply_op(const Image& crop, const AugmentOp& op);

struct Region {
  BBox box;
  int x0 = 0;  // top-left pixel of the crop in the source image
  int y0 = 0;
  Image crop;
};

struct RegionSet {
  std::vector<Region> regions;
};

// One crop per box under the pixel-centre rule; boxes covering no pixel
// centre yield no region.
RegionSet extract_regions(const Image& image, const Annotation& annotation);

AugmentOp sample_transform(Rng& rng, const AugmentRanges& ranges = {});

// x' = (1-M) x + M A(R): each target region gets its own randomly drawn op;
// later boxes win where boxes overlap.
Image apply_local_augmentation(const Image& image, const Annotation& annotation, Rng& rng,
                               const AugmentRanges& ranges = {});
// Same with explicit per-box ops (ops.size() must equal the box count).
Image apply_local_augmentation(const Image& image, const Annotation& annotation,
                               std::span<const AugmentOp> ops);

Image apply_global_augmentation(const Image& image, Rng& rng, const AugmentRanges& ranges = {});

}  // namespace lpatch
