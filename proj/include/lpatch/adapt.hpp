#pragma once

#include <array>
#include <cstdint>
#include <vector>

#include "lpatch/dataset.hpp"
#include "lpatch/image.hpp"
#include "lpatch/rng.hpp"

namespace lpatch {

// P' = clamp(P * c + b + n), c ~ U(contrast), b ~ U(brightness), n ~ U(-a, a) per pixel.
struct SceneParams {
  float contrast_lo = 0.8f;
  float contrast_hi = 1.2f;
  float brightness_lo = -0.1f;
  float brightness_hi = 0.1f;
  float noise_amplitude = 0.05f;

  void validate() const;
  static SceneParams neutral() { return {1.f, 1.f, 0.f, 0.f, 0.f}; }
};

struct PlacementParams {
  float size_ratio = 0.12f;   // placed patch area / box area
  float offset_range = 0.1f;  // centre shift as a fraction of box width/height
  float rotation_range_deg = 20.f;

  void validate() const;
};

struct SceneDraw {
  float contrast = 1.f;
  float brightness = 0.f;
  std::vector<float> noise;  // side*side*3, empty means no noise
};

SceneDraw sample_scene(const SceneParams& params, int side, Rng& rng);

struct SceneMatched {
  Patch patch;
  float contrast = 1.f;
  std::vector<std::uint8_t> unclamped;  // 1 where the clamp did not saturate
};

SceneMatched scene_match(const Patch& patch, const SceneDraw& draw);
Patch scene_match(const Patch& patch, const SceneParams& params, Rng& rng);
// d(loss)/d(input patch) from d(loss)/d(matched patch).
Patch scene_match_backward(const SceneMatched& matched, const Patch& grad_out);

struct PlacementDraw {
  float angle_deg = 0.f;
  float dx = 0.f;  // fraction of box width
  float dy = 0.f;  // fraction of box height
};

PlacementDraw sample_placement(const PlacementParams& params, Rng& rng);

// floor(sqrt(size_ratio * w * h)), at least 1.
int placed_side(const BBox& box, float size_ratio);

// Image pixels covered by one placed patch, each with its bilinear taps into
// the resized patch (normalised over the in-bounds taps).
struct Footprint {
  struct Pixel {
    int y = 0;
    int x = 0;
    std::array<int, 4> source{-1, -1, -1, -1};  // flat index into the resized patch
    std::array<float, 4> weight{};
  };
  int patch_side = 0;
  int side = 0;
  std::vector<Pixel> pixels;
};

struct Placed {
  Image image;
  Mask mask;
  Footprint footprint;
};

Placed place_patch(const Image& image, const Patch& patch, const BBox& box,
                   const PlacementParams& placement, const PlacementDraw& draw);
Placed place_patch(const Image& image, const Patch& patch, const BBox& box,
                   const PlacementParams& placement, Rng& rng);

// Adds d(loss)/d(patch) for the footprint pixels; `owned`, when given,
// restricts the pull-back to pixels this placement still owns.
void accumulate_placement_grad(const Footprint& footprint, const Image& grad_image,
                               Patch& grad_patch, const std::vector<int>* owner = nullptr,
                               int owner_id = -1);

struct PatchInstance {
  SceneMatched scene;
  Footprint footprint;
};

struct PatchedImage {
  Image image;
  int patch_side = 0;
  std::vector<PatchInstance> instances;
  std::vector<int> owner;  // per pixel: index of the instance that wrote it, -1 if none

  Mask mask() const;
};

// Scene-match and place an independent copy of the patch on every box; later
// boxes overwrite earlier ones.
PatchedImage apply_patch_to_all_targets(const Image& image, const Patch& patch,
                                        const Annotation& annotation,
                                        const PlacementParams& placement, const SceneParams& scene,
                                        Rng& placement_rng, Rng& scene_rng);
PatchedImage apply_patch_to_all_targets(const Image& image, const Patch& patch,
                                        const Annotation& annotation,
                                        const PlacementParams& placement, const SceneParams& scene,
                                        Rng& rng);

// d(loss)/d(patch) given d(loss)/d(patched image), summed over instances.
Patch patch_gradient(const PatchedImage& patched, const Image& grad_image);

}  // namespace lpatch
