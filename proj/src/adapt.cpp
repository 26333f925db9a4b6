#include "lpatch/adapt.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

#include "lpatch/errors.hpp"

namespace lpatch {

void SceneParams::validate() const {
  if (!(contrast_lo > 0.f)) throw ValidationError("scene.contrast lower bound must be > 0");
  if (contrast_hi < contrast_lo) throw ValidationError("scene.contrast range is not ordered");
  if (brightness_hi < brightness_lo) throw ValidationError("scene.brightness range is not ordered");
  if (!(noise_amplitude >= 0.f)) throw ValidationError("scene.noise_amplitude must be >= 0");
}

void PlacementParams::validate() const {
  if (!(size_ratio > 0.f && size_ratio < 1.f)) {
    throw ValidationError("placement.size_ratio must lie in (0,1)");
  }
  if (!(offset_range >= 0.f)) throw ValidationError("placement.offset_range must be >= 0");
  if (!(rotation_range_deg >= 0.f && rotation_range_deg <= 180.f)) {
    throw ValidationError("placement.rotation_range_deg must lie in [0,180]");
  }
}

SceneDraw sample_scene(const SceneParams& params, int side, Rng& rng) {
  params.validate();
  SceneDraw d;
  d.contrast = static_cast<float>(rng.uniform(params.contrast_lo, params.contrast_hi));
  d.brightness = static_cast<float>(rng.uniform(params.brightness_lo, params.brightness_hi));
  if (params.noise_amplitude > 0.f) {
    d.noise.resize(static_cast<std::size_t>(side) * side * 3);
    const double a = params.noise_amplitude;
    for (float& n : d.noise) n = static_cast<float>(rng.uniform(-a, a));
  }
  return d;
}

SceneMatched scene_match(const Patch& patch, const SceneDraw& draw) {
  SceneMatched out{patch, draw.contrast, {}};
  auto px = out.patch.pixels();
  if (!draw.noise.empty() && draw.noise.size() != px.size()) {
    throw DimensionError("scene noise field does not match the patch");
  }
  out.unclamped.resize(px.size());
  for (std::size_t i = 0; i < px.size(); ++i) {
    float v = px[i] * draw.contrast + draw.brightness;
    if (!draw.noise.empty()) v += draw.noise[i];
    out.unclamped[i] = (v >= 0.f && v <= 1.f) ? 1 : 0;
    px[i] = std::clamp(v, 0.f, 1.f);
  }
  return out;
}

Patch scene_match(const Patch& patch, const SceneParams& params, Rng& rng) {
  return scene_match(patch, sample_scene(params, patch.side(), rng)).patch;
}

Patch scene_match_backward(const SceneMatched& matched, const Patch& grad_out) {
  Patch grad = grad_out;
  auto g = grad.pixels();
  for (std::size_t i = 0; i < g.size(); ++i) g[i] = matched.unclamped[i] ? g[i] * matched.contrast : 0.f;
  return grad;
}

PlacementDraw sample_placement(const PlacementParams& params, Rng& rng) {
  params.validate();
  PlacementDraw d;
  d.angle_deg = static_cast<float>(rng.uniform(-params.rotation_range_deg, params.rotation_range_deg));
  d.dx = static_cast<float>(rng.uniform(-params.offset_range, params.offset_range));
  d.dy = static_cast<float>(rng.uniform(-params.offset_range, params.offset_range));
  return d;
}

int placed_side(const BBox& box, float size_ratio) {
  const double side = std::sqrt(static_cast<double>(size_ratio) * box.area());
  return std::max(1, static_cast<int>(std::floor(side + 1e-9)));
}

Placed place_patch(const Image& image, const Patch& patch, const BBox& box,
                   const PlacementParams& placement, const PlacementDraw& draw) {
  placement.validate();
  validate_box(box, image.height(), image.width());
  const int side = placed_side(box, placement.size_ratio);
  const Image resized = resize_area(patch.image(), side, side);

  // Integer-aligned block centred on the (shifted) box centre; rotation is
  // about the block centre so a zero angle reproduces the block exactly.
  const double cx = box.center_x() + static_cast<double>(draw.dx) * box.width();
  const double cy = box.center_y() + static_cast<double>(draw.dy) * box.height();
  const int x0 = static_cast<int>(std::floor(cx - side / 2.0 + 0.5));
  const int y0 = static_cast<int>(std::floor(cy - side / 2.0 + 0.5));
  const double bcx = x0 + side / 2.0;
  const double bcy = y0 + side / 2.0;
  const double theta = static_cast<double>(draw.angle_deg) * std::numbers::pi / 180.0;
  const double cs = std::cos(theta);
  const double sn = std::sin(theta);
  const int reach = static_cast<int>(std::ceil(side * std::numbers::sqrt2 / 2.0)) + 2;

  Placed out{image, Mask(image.height(), image.width()), Footprint{patch.side(), side, {}}};
  const int ylo = std::max(0, static_cast<int>(std::floor(bcy)) - reach);
  const int yhi = std::min(image.height() - 1, static_cast<int>(std::ceil(bcy)) + reach);
  const int xlo = std::max(0, static_cast<int>(std::floor(bcx)) - reach);
  const int xhi = std::min(image.width() - 1, static_cast<int>(std::ceil(bcx)) + reach);
  const double half = side / 2.0 - 0.5;
  for (int y = ylo; y <= yhi; ++y) {
    for (int x = xlo; x <= xhi; ++x) {
      const double px = x + 0.5 - bcx;
      const double py = y + 0.5 - bcy;
      const double u = cs * px + sn * py + half;
      const double v = -sn * px + cs * py + half;
      const double u0 = std::floor(u);
      const double v0 = std::floor(v);
      const double fu = u - u0;
      const double fv = v - v0;
      Footprint::Pixel pix{y, x, {-1, -1, -1, -1}, {}};
      const double w[4] = {(1 - fv) * (1 - fu), (1 - fv) * fu, fv * (1 - fu), fv * fu};
      const int du[4] = {0, 1, 0, 1};
      const int dv[4] = {0, 0, 1, 1};
      double total = 0.0;
      for (int t = 0; t < 4; ++t) {
        const int su = static_cast<int>(u0) + du[t];
        const int sv = static_cast<int>(v0) + dv[t];
        if (w[t] <= 0.0 || su < 0 || sv < 0 || su >= side || sv >= side) continue;
        pix.source[t] = sv * side + su;
        total += w[t];
      }
      if (total <= 0.5) continue;
      for (int t = 0; t < 4; ++t)
        if (pix.source[t] >= 0) pix.weight[t] = static_cast<float>(w[t] / total);
      for (int c = 0; c < 3; ++c) {
        float acc = 0.f;
        for (int t = 0; t < 4; ++t)
          if (pix.source[t] >= 0) acc += pix.weight[t] * resized.pixels()[pix.source[t] * 3 + c];
        out.image.at(y, x, c) = std::clamp(acc, 0.f, 1.f);
      }
      out.mask.set(y, x, true);
      out.footprint.pixels.push_back(pix);
    }
  }
  if (out.footprint.pixels.empty()) {
    throw PlacementError("patch footprint falls entirely outside the image");
  }
  return out;
}

Placed place_patch(const Image& image, const Patch& patch, const BBox& box,
                   const PlacementParams& placement, Rng& rng) {
  return place_patch(image, patch, box, placement, sample_placement(placement, rng));
}

void accumulate_placement_grad(const Footprint& fp, const Image& grad_image, Patch& grad_patch,
                               const std::vector<int>* owner, int owner_id) {
  if (grad_patch.side() != fp.patch_side) throw DimensionError("gradient patch size mismatch");
  Image grad_resized(fp.side, fp.side, 0.f);
  auto gr = grad_resized.pixels();
  bool any = false;
  for (const auto& pix : fp.pixels) {
    if (owner && (*owner)[static_cast<std::size_t>(pix.y) * grad_image.width() + pix.x] != owner_id) {
      continue;
    }
    any = true;
    for (int t = 0; t < 4; ++t) {
      if (pix.source[t] < 0) continue;
      for (int c = 0; c < 3; ++c)
        gr[pix.source[t] * 3 + c] += pix.weight[t] * grad_image.at(pix.y, pix.x, c);
    }
  }
  if (!any) return;
  const Image back = fp.side == fp.patch_side
                         ? grad_resized
                         : resize_area_adjoint(grad_resized, fp.patch_side, fp.patch_side);
  auto dst = grad_patch.pixels();
  auto src = back.pixels();
  for (std::size_t i = 0; i < dst.size(); ++i) dst[i] += src[i];
}

Mask PatchedImage::mask() const {
  Mask m(image.height(), image.width());
  for (int y = 0; y < image.height(); ++y)
    for (int x = 0; x < image.width(); ++x)
      if (owner[static_cast<std::size_t>(y) * image.width() + x] >= 0) m.set(y, x, true);
  return m;
}

PatchedImage apply_patch_to_all_targets(const Image& image, const Patch& patch,
                                        const Annotation& annotation,
                                        const PlacementParams& placement, const SceneParams& scene,
                                        Rng& placement_rng, Rng& scene_rng) {
  PatchedImage out{image, patch.side(), {},
                   std::vector<int>(static_cast<std::size_t>(image.height()) * image.width(), -1)};
  for (std::size_t k = 0; k < annotation.boxes.size(); ++k) {
    SceneMatched matched = scene_match(patch, sample_scene(scene, patch.side(), scene_rng));
    const PlacementDraw draw = sample_placement(placement, placement_rng);
    Placed placed = place_patch(out.image, matched.patch, annotation.boxes[k], placement, draw);
    out.image = std::move(placed.image);
    for (const auto& pix : placed.footprint.pixels) {
      out.owner[static_cast<std::size_t>(pix.y) * image.width() + pix.x] = static_cast<int>(k);
    }
    out.instances.push_back({std::move(matched), std::move(placed.footprint)});
  }
  return out;
}

PatchedImage apply_patch_to_all_targets(const Image& image, const Patch& patch,
                                        const Annotation& annotation,
                                        const PlacementParams& placement, const SceneParams& scene,
                                        Rng& rng) {
  return apply_patch_to_all_targets(image, patch, annotation, placement, scene, rng, rng);
}

Patch patch_gradient(const PatchedImage& patched, const Image& grad_image) {
  if (!patched.image.same_shape(grad_image)) throw DimensionError("gradient image shape mismatch");
  const int side = patched.patch_side;
  Patch total(side, 0.f);
  for (std::size_t k = 0; k < patched.instances.size(); ++k) {
    const auto& inst = patched.instances[k];
    Patch g(side, 0.f);
    accumulate_placement_grad(inst.footprint, grad_image, g, &patched.owner, static_cast<int>(k));
    const Patch back = scene_match_backward(inst.scene, g);
    auto dst = total.pixels();
    auto src = back.pixels();
    for (std::size_t i = 0; i < dst.size(); ++i) dst[i] += src[i];
  }
  return total;
}

}  // namespace lpatch
