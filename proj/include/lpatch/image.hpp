#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

namespace lpatch {

// H x W x 3 float image, interleaved RGB, values in [0,1].
class Image {
 public:
  static constexpr int kChannels = 3;

  Image() = default;
  Image(int height, int width, float fill = 0.f);
  Image(int height, int width, std::vector<float> pixels);

  int height() const { return height_; }
  int width() const { return width_; }
  std::size_t size() const { return pixels_.size(); }
  bool empty() const { return pixels_.empty(); }

  float& at(int y, int x, int c) { return pixels_[index(y, x, c)]; }
  float at(int y, int x, int c) const { return pixels_[index(y, x, c)]; }
  std::size_t index(int y, int x, int c) const {
    return (static_cast<std::size_t>(y) * width_ + x) * kChannels + c;
  }

  std::span<float> pixels() { return pixels_; }
  std::span<const float> pixels() const { return pixels_; }

  bool same_shape(const Image& other) const {
    return height_ == other.height_ && width_ == other.width_;
  }
  friend bool operator==(const Image&, const Image&) = default;

 private:
  int height_ = 0;
  int width_ = 0;
  std::vector<float> pixels_;
};

// Strictly binary H x W mask.
class Mask {
 public:
  Mask() = default;
  Mask(int height, int width, bool fill = false);
  // Throws ValidationError if any value is not exactly 0 or 1.
  Mask(int height, int width, std::span<const float> values);

  int height() const { return height_; }
  int width() const { return width_; }
  bool at(int y, int x) const { return values_[static_cast<std::size_t>(y) * width_ + x] != 0; }
  void set(int y, int x, bool v) { values_[static_cast<std::size_t>(y) * width_ + x] = v ? 1 : 0; }
  std::size_t popcount() const;
  std::span<const std::uint8_t> values() const { return values_; }

  friend bool operator==(const Mask&, const Mask&) = default;

 private:
  int height_ = 0;
  int width_ = 0;
  std::vector<std::uint8_t> values_;
};

// Square learnable patch; side x side x 3.
class Patch {
 public:
  Patch() = default;
  explicit Patch(int side, float fill = 0.f) : image_(side, side, fill) {}
  explicit Patch(Image image);

  int side() const { return image_.height(); }
  const Image& image() const { return image_; }
  Image& image() { return image_; }
  std::span<float> pixels() { return image_.pixels(); }
  std::span<const float> pixels() const { return image_.pixels(); }
  float at(int y, int x, int c) const { return image_.at(y, x, c); }
  float& at(int y, int x, int c) { return image_.at(y, x, c); }

  friend bool operator==(const Patch&, const Patch&) = default;

 private:
  Image image_;
};

// Horizontal bounding box in pixel coordinates.
struct BBox {
  float x_min = 0.f;
  float y_min = 0.f;
  float x_max = 0.f;
  float y_max = 0.f;

  float width() const { return x_max - x_min; }
  float height() const { return y_max - y_min; }
  double area() const {
    return (static_cast<double>(x_max) - x_min) * (static_cast<double>(y_max) - y_min);
  }
  float center_x() const { return 0.5f * (x_min + x_max); }
  float center_y() const { return 0.5f * (y_min + y_max); }

  bool valid() const { return x_min < x_max && y_min < y_max; }
  bool inside(int height, int width) const {
    return x_min >= 0.f && y_min >= 0.f && x_max <= static_cast<float>(width) &&
           y_max <= static_cast<float>(height);
  }
  friend bool operator==(const BBox&, const BBox&) = default;
};

// Throws ValidationError when the box is degenerate or leaves the image.
void validate_box(const BBox& box, int height, int width);

// Half-open pixel span [begin, end) covered by a box along one axis under the
// pixel-centre rule lo <= i + 0.5 < hi.
struct PixelSpan {
  int begin = 0;
  int end = 0;
  int length() const { return end > begin ? end - begin : 0; }
};
PixelSpan pixel_span(float lo, float hi, int limit);

// base*(1-M) + overlay*M, per channel.
Image composite(const Image& base, const Image& overlay, const Mask& mask);
// Gradient of composite() w.r.t. overlay: grad_out masked by M.
Image composite_overlay_grad(const Image& grad_out, const Mask& mask);

std::vector<float> clamp_unit(std::span<const float> values);
void clamp_unit_inplace(std::span<float> values);

Mask mask_from_boxes(std::span<const BBox> boxes, int height, int width);

// 8-bit PNG/JPEG I/O; format chosen by extension.
Image read_image(const std::filesystem::path& path);
void write_image(const std::filesystem::path& path, const Image& image);
std::uint8_t to_byte(float v);

// Separable area-weighted resampler (linear, so it has a clean adjoint).
class AxisResampler {
 public:
  struct Tap {
    int source;
    float weight;
  };
  AxisResampler() = default;
  AxisResampler(int in_size, int out_size);
  int in_size() const { return in_; }
  int out_size() const { return static_cast<int>(taps_.size()); }
  std::span<const Tap> taps(int out_index) const { return taps_[out_index]; }

 private:
  int in_ = 0;
  std::vector<std::vector<Tap>> taps_;
};

Image resize_area(const Image& src, int out_height, int out_width);
// Adjoint of resize_area: maps a gradient on the output back to the input.
Image resize_area_adjoint(const Image& grad_out, int in_height, int in_width);

}  // namespace lpatch
