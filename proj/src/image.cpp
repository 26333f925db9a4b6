#include "lpatch/image.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include <opencv2/core.hpp>
#include <opencv2/imgcodecs.hpp>

#include "lpatch/errors.hpp"

namespace lpatch {

Image::Image(int height, int width, float fill) : height_(height), width_(width) {
  if (height <= 0 || width <= 0) {
    throw DimensionError("image dimensions must be positive, got " + std::to_string(height) +
                         "x" + std::to_string(width));
  }
  pixels_.assign(static_cast<std::size_t>(height) * width * kChannels, fill);
}

Image::Image(int height, int width, std::vector<float> pixels)
    : height_(height), width_(width), pixels_(std::move(pixels)) {
  if (height <= 0 || width <= 0 ||
      pixels_.size() != static_cast<std::size_t>(height) * width * kChannels) {
    throw DimensionError("pixel buffer does not match " + std::to_string(height) + "x" +
                         std::to_string(width) + "x3");
  }
}

Mask::Mask(int height, int width, bool fill) : height_(height), width_(width) {
  if (height <= 0 || width <= 0) throw DimensionError("mask dimensions must be positive");
  values_.assign(static_cast<std::size_t>(height) * width, fill ? 1 : 0);
}

Mask::Mask(int height, int width, std::span<const float> values) : Mask(height, width) {
  if (values.size() != values_.size()) throw DimensionError("mask value count mismatch");
  for (std::size_t i = 0; i < values.size(); ++i) {
    if (values[i] == 1.f) {
      values_[i] = 1;
    } else if (values[i] != 0.f) {
      throw ValidationError("mask is not binary at index " + std::to_string(i));
    }
  }
}

std::size_t Mask::popcount() const {
  return static_cast<std::size_t>(std::count(values_.begin(), values_.end(), 1));
}

Patch::Patch(Image image) : image_(std::move(image)) {
  if (image_.height() != image_.width()) throw DimensionError("patch must be square");
}

void validate_box(const BBox& box, int height, int width) {
  if (!std::isfinite(box.x_min) || !std::isfinite(box.y_min) || !std::isfinite(box.x_max) ||
      !std::isfinite(box.y_max) || !box.valid()) {
    throw ValidationError("degenerate box (" + std::to_string(box.x_min) + "," +
                          std::to_string(box.y_min) + "," + std::to_string(box.x_max) + "," +
                          std::to_string(box.y_max) + ")");
  }
  if (!box.inside(height, width)) {
    throw ValidationError("box (" + std::to_string(box.x_min) + "," + std::to_string(box.y_min) +
                          "," + std::to_string(box.x_max) + "," + std::to_string(box.y_max) +
                          ") lies outside the " + std::to_string(height) + "x" +
                          std::to_string(width) + " image");
  }
}

PixelSpan pixel_span(float lo, float hi, int limit) {
  // i + 0.5 >= lo  <=>  i >= ceil(lo - 0.5); likewise for the open upper end.
  const int begin = std::clamp(static_cast<int>(std::ceil(static_cast<double>(lo) - 0.5)), 0, limit);
  const int end = std::clamp(static_cast<int>(std::ceil(static_cast<double>(hi) - 0.5)), 0, limit);
  return {begin, std::max(begin, end)};
}

Image composite(const Image& base, const Image& overlay, const Mask& mask) {
  if (!base.same_shape(overlay) || mask.height() != base.height() ||
      mask.width() != base.width()) {
    throw DimensionError("composite: base, overlay and mask shapes differ");
  }
  Image out = base;
  auto dst = out.pixels();
  auto src = overlay.pixels();
  const auto m = mask.values();
  for (std::size_t p = 0; p < m.size(); ++p) {
    if (!m[p]) continue;
    for (int c = 0; c < Image::kChannels; ++c) dst[p * 3 + c] = src[p * 3 + c];
  }
  return out;
}

Image composite_overlay_grad(const Image& grad_out, const Mask& mask) {
  if (mask.height() != grad_out.height() || mask.width() != grad_out.width()) {
    throw DimensionError("composite_overlay_grad: shape mismatch");
  }
  Image grad(grad_out.height(), grad_out.width(), 0.f);
  auto dst = grad.pixels();
  auto src = grad_out.pixels();
  const auto m = mask.values();
  for (std::size_t p = 0; p < m.size(); ++p) {
    if (!m[p]) continue;
    for (int c = 0; c < Image::kChannels; ++c) dst[p * 3 + c] = src[p * 3 + c];
  }
  return grad;
}

std::vector<float> clamp_unit(std::span<const float> values) {
  std::vector<float> out(values.begin(), values.end());
  clamp_unit_inplace(out);
  return out;
}

void clamp_unit_inplace(std::span<float> values) {
  for (float& v : values) {
    if (std::isnan(v)) throw ValidationError("clamp_unit: NaN input");
    v = std::clamp(v, 0.f, 1.f);
  }
}

Mask mask_from_boxes(std::span<const BBox> boxes, int height, int width) {
  Mask mask(height, width);
  for (const BBox& box : boxes) {
    validate_box(box, height, width);
    const PixelSpan xs = pixel_span(box.x_min, box.x_max, width);
    const PixelSpan ys = pixel_span(box.y_min, box.y_max, height);
    for (int y = ys.begin; y < ys.end; ++y)
      for (int x = xs.begin; x < xs.end; ++x) mask.set(y, x, true);
  }
  return mask;
}

std::uint8_t to_byte(float v) {
  const double scaled = std::floor(static_cast<double>(std::clamp(v, 0.f, 1.f)) * 255.0 + 0.5);
  return static_cast<std::uint8_t>(std::clamp(scaled, 0.0, 255.0));
}

Image read_image(const std::filesystem::path& path) {
  cv::Mat bgr = cv::imread(path.string(), cv::IMREAD_COLOR);
  if (bgr.empty()) throw IngestionError("cannot read image " + path.string());
  Image img(bgr.rows, bgr.cols);
  for (int y = 0; y < bgr.rows; ++y) {
    const auto* row = bgr.ptr<cv::Vec3b>(y);
    for (int x = 0; x < bgr.cols; ++x) {
      img.at(y, x, 0) = row[x][2] / 255.f;
      img.at(y, x, 1) = row[x][1] / 255.f;
      img.at(y, x, 2) = row[x][0] / 255.f;
    }
  }
  return img;
}

void write_image(const std::filesystem::path& path, const Image& image) {
  cv::Mat bgr(image.height(), image.width(), CV_8UC3);
  for (int y = 0; y < image.height(); ++y) {
    auto* row = bgr.ptr<cv::Vec3b>(y);
    for (int x = 0; x < image.width(); ++x) {
      row[x][2] = to_byte(image.at(y, x, 0));
      row[x][1] = to_byte(image.at(y, x, 1));
      row[x][0] = to_byte(image.at(y, x, 2));
    }
  }
  std::vector<int> params;
  const auto ext = path.extension().string();
  if (ext == ".jpg" || ext == ".jpeg") params = {cv::IMWRITE_JPEG_QUALITY, 95};
  if (!cv::imwrite(path.string(), bgr, params)) {
    throw IngestionError("cannot write image " + path.string());
  }
}

AxisResampler::AxisResampler(int in_size, int out_size) : in_(in_size) {
  if (in_size <= 0 || out_size <= 0) throw DimensionError("resampler sizes must be positive");
  taps_.resize(out_size);
  const double ratio = static_cast<double>(in_size) / out_size;
  for (int k = 0; k < out_size; ++k) {
    const double lo = k * ratio;
    const double hi = (k + 1) * ratio;
    const int first = static_cast<int>(std::floor(lo));
    const int last = std::min(in_size - 1, static_cast<int>(std::ceil(hi)) - 1);
    for (int i = first; i <= last; ++i) {
      const double overlap = std::min<double>(hi, i + 1) - std::max<double>(lo, i);
      if (overlap > 1e-12) taps_[k].push_back({i, static_cast<float>(overlap / ratio)});
    }
  }
}

Image resize_area(const Image& src, int out_height, int out_width) {
  if (src.height() == out_height && src.width() == out_width) return src;
  const AxisResampler ry(src.height(), out_height);
  const AxisResampler rx(src.width(), out_width);
  // Horizontal pass into a double buffer, then vertical.
  std::vector<double> tmp(static_cast<std::size_t>(src.height()) * out_width * 3, 0.0);
  for (int y = 0; y < src.height(); ++y)
    for (int x = 0; x < out_width; ++x)
      for (const auto& t : rx.taps(x))
        for (int c = 0; c < 3; ++c)
          tmp[(static_cast<std::size_t>(y) * out_width + x) * 3 + c] +=
              static_cast<double>(t.weight) * src.at(y, t.source, c);
  Image out(out_height, out_width, 0.f);
  for (int y = 0; y < out_height; ++y)
    for (int x = 0; x < out_width; ++x)
      for (int c = 0; c < 3; ++c) {
        double acc = 0.0;
        for (const auto& t : ry.taps(y))
          acc += static_cast<double>(t.weight) *
                 tmp[(static_cast<std::size_t>(t.source) * out_width + x) * 3 + c];
        out.at(y, x, c) = static_cast<float>(acc);
      }
  return out;
}

Image resize_area_adjoint(const Image& grad_out, int in_height, int in_width) {
  const AxisResampler ry(in_height, grad_out.height());
  const AxisResampler rx(in_width, grad_out.width());
  std::vector<double> tmp(static_cast<std::size_t>(in_height) * grad_out.width() * 3, 0.0);
  for (int y = 0; y < grad_out.height(); ++y)
    for (const auto& t : ry.taps(y))
      for (int x = 0; x < grad_out.width(); ++x)
        for (int c = 0; c < 3; ++c)
          tmp[(static_cast<std::size_t>(t.source) * grad_out.width() + x) * 3 + c] +=
              static_cast<double>(t.weight) * grad_out.at(y, x, c);
  Image grad(in_height, in_width, 0.f);
  std::vector<double> acc(static_cast<std::size_t>(in_height) * in_width * 3, 0.0);
  for (int y = 0; y < in_height; ++y)
    for (int x = 0; x < grad_out.width(); ++x)
      for (const auto& t : rx.taps(x))
        for (int c = 0; c < 3; ++c)
          acc[(static_cast<std::size_t>(y) * in_width + t.source) * 3 + c] +=
              static_cast<double>(t.weight) *
              tmp[(static_cast<std::size_t>(y) * grad_out.width() + x) * 3 + c];
  auto dst = grad.pixels();
  for (std::size_t i = 0; i < acc.size(); ++i) dst[i] = static_cast<float>(acc[i]);
  return grad;
}

}  // namespace lpatch
