#include "lpatch/augment.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

#include "lpatch/errors.hpp"

namespace lpatch {

std::string_view to_string(AugmentKind kind) {
  switch (kind) {
    case AugmentKind::darken: return "darken";
    case AugmentKind::brighten: return "brighten";
    case AugmentKind::rain: return "rain";
    case AugmentKind::blur: return "blur";
  }
  return "unknown";
}

namespace {

Image scale_clamped(const Image& crop, float gain) {
  Image out = crop;
  for (float& v : out.pixels()) v = std::clamp(gain * v, 0.f, 1.f);
  return out;
}

int reflect101(int i, int n) {
  if (n == 1) return 0;
  const int period = 2 * (n - 1);
  i %= period;
  if (i < 0) i += period;
  return i < n ? i : period - i;
}

}  // namespace

Image darken(const Image& crop, float gain) { return scale_clamped(crop, gain); }

Image brighten(const Image& crop, float gain) { return scale_clamped(crop, gain); }

Image rain(const Image& crop, std::span<const RainStreak> streaks, float alpha, float value) {
  Image out = crop;
  const int h = crop.height();
  const int w = crop.width();
  std::vector<std::uint8_t> hit(static_cast<std::size_t>(h) * w);
  for (const RainStreak& s : streaks) {
    std::fill(hit.begin(), hit.end(), 0);
    const double angle = s.angle_deg * std::numbers::pi / 180.0;
    const double dx = std::cos(angle);
    const double dy = std::sin(angle);
    const double x0 = s.start_x * w;
    const double y0 = s.start_y * h;
    const int steps = std::max(1, static_cast<int>(std::ceil(s.length * 2.0)));
    for (int k = 0; k <= steps; ++k) {
      const double t = s.length * k / steps;
      const int x = static_cast<int>(std::floor(x0 + dx * t));
      const int y = static_cast<int>(std::floor(y0 + dy * t));
      if (x < 0 || y < 0 || x >= w || y >= h) continue;
      auto& seen = hit[static_cast<std::size_t>(y) * w + x];
      if (seen) continue;
      seen = 1;
      for (int c = 0; c < 3; ++c) {
        float& p = out.at(y, x, c);
        p = std::clamp((1.f - alpha) * p + alpha * value, 0.f, 1.f);
      }
    }
  }
  return out;
}

Image blur(const Image& crop, float sigma) {
  if (!(sigma > 0.f)) return crop;
  const int radius = static_cast<int>(std::ceil(3.0 * sigma));
  std::vector<double> kernel(2 * radius + 1);
  double total = 0.0;
  for (int k = -radius; k <= radius; ++k) {
    kernel[k + radius] = std::exp(-0.5 * k * k / (static_cast<double>(sigma) * sigma));
    total += kernel[k + radius];
  }
  for (double& v : kernel) v /= total;

  const int h = crop.height();
  const int w = crop.width();
  Image tmp(h, w);
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x)
      for (int c = 0; c < 3; ++c) {
        double acc = 0.0;
        for (int k = -radius; k <= radius; ++k)
          acc += kernel[k + radius] * crop.at(y, reflect101(x + k, w), c);
        tmp.at(y, x, c) = static_cast<float>(acc);
      }
  Image out(h, w);
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x)
      for (int c = 0; c < 3; ++c) {
        double acc = 0.0;
        for (int k = -radius; k <= radius; ++k)
          acc += kernel[k + radius] * tmp.at(reflect101(y + k, h), x, c);
        out.at(y, x, c) = std::clamp(static_cast<float>(acc), 0.f, 1.f);
      }
  return out;
}

Image apply_op(const Image& crop, const AugmentOp& op) {
  switch (op.kind) {
    case AugmentKind::darken: return darken(crop, std::get<GainParams>(op.params).gain);
    case AugmentKind::brighten: return brighten(crop, std::get<GainParams>(op.params).gain);
    case AugmentKind::rain: {
      const auto& p = std::get<RainParams>(op.params);
      return rain(crop, p.streaks, p.alpha, p.value);
    }
    case AugmentKind::blur: return blur(crop, std::get<BlurParams>(op.params).sigma);
  }
  return crop;
}

RegionSet extract_regions(const Image& image, const Annotation& annotation) {
  RegionSet set;
  for (const BBox& box : annotation.boxes) {
    validate_box(box, image.height(), image.width());
    const PixelSpan xs = pixel_span(box.x_min, box.x_max, image.width());
    const PixelSpan ys = pixel_span(box.y_min, box.y_max, image.height());
    if (xs.length() == 0 || ys.length() == 0) continue;
    Region r{box, xs.begin, ys.begin, Image(ys.length(), xs.length())};
    for (int y = 0; y < ys.length(); ++y)
      for (int x = 0; x < xs.length(); ++x)
        for (int c = 0; c < 3; ++c) r.crop.at(y, x, c) = image.at(ys.begin + y, xs.begin + x, c);
    set.regions.push_back(std::move(r));
  }
  return set;
}

AugmentOp sample_transform(Rng& rng, const AugmentRanges& r) {
  AugmentOp op;
  op.kind = static_cast<AugmentKind>(rng.uniform_int(0, 3));
  switch (op.kind) {
    case AugmentKind::darken:
      op.params = GainParams{static_cast<float>(rng.uniform(r.darken_lo, r.darken_hi))};
      break;
    case AugmentKind::brighten:
      op.params = GainParams{static_cast<float>(rng.uniform(r.brighten_lo, r.brighten_hi))};
      break;
    case AugmentKind::rain: {
      RainParams p;
      p.alpha = r.rain_alpha;
      p.value = r.rain_value;
      const int n = rng.uniform_int(r.rain_streaks_lo, r.rain_streaks_hi);
      for (int i = 0; i < n; ++i) {
        RainStreak s;
        s.start_x = static_cast<float>(rng.uniform());
        s.start_y = static_cast<float>(rng.uniform());
        s.length = static_cast<float>(rng.uniform(r.rain_length_lo, r.rain_length_hi));
        s.angle_deg = static_cast<float>(rng.uniform(r.rain_angle_lo, r.rain_angle_hi));
        p.streaks.push_back(s);
      }
      op.params = std::move(p);
      break;
    }
    case AugmentKind::blur:
      op.params = BlurParams{static_cast<float>(rng.uniform(r.blur_sigma_lo, r.blur_sigma_hi))};
      break;
  }
  return op;
}

Image apply_local_augmentation(const Image& image, const Annotation& annotation,
                               std::span<const AugmentOp> ops) {
  if (ops.size() != annotation.boxes.size()) {
    throw DimensionError("one augmentation op per box is required");
  }
  Image out = image;
  for (std::size_t k = 0; k < annotation.boxes.size(); ++k) {
    Annotation single{annotation.image_id, {annotation.boxes[k]}, annotation.class_id};
    const RegionSet set = extract_regions(image, single);
    if (set.regions.empty()) continue;
    const Region& r = set.regions.front();
    const Image transformed = apply_op(r.crop, ops[k]);
    for (int y = 0; y < transformed.height(); ++y)
      for (int x = 0; x < transformed.width(); ++x)
        for (int c = 0; c < 3; ++c) out.at(r.y0 + y, r.x0 + x, c) = transformed.at(y, x, c);
  }
  return out;
}

Image apply_local_augmentation(const Image& image, const Annotation& annotation, Rng& rng,
                               const AugmentRanges& ranges) {
  std::vector<AugmentOp> ops;
  ops.reserve(annotation.boxes.size());
  for (std::size_t k = 0; k < annotation.boxes.size(); ++k) ops.push_back(sample_transform(rng, ranges));
  return apply_local_augmentation(image, annotation, ops);
}

Image apply_global_augmentation(const Image& image, Rng& rng, const AugmentRanges& ranges) {
  return apply_op(image, sample_transform(rng, ranges));
}

}  // namespace lpatch
