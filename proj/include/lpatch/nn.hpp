#pragma once

#include <span>
#include <vector>

#include "lpatch/rng.hpp"

namespace lpatch::nn {

// Channel-major C x H x W activation.
struct Tensor {
  int channels = 0;
  int height = 0;
  int width = 0;
  std::vector<float> data;

  Tensor() = default;
  Tensor(int c, int h, int w, float fill = 0.f)
      : channels(c), height(h), width(w), data(static_cast<std::size_t>(c) * h * w, fill) {}
  std::size_t plane() const { return static_cast<std::size_t>(height) * width; }
  float& at(int c, int y, int x) { return data[c * plane() + static_cast<std::size_t>(y) * width + x]; }
  float at(int c, int y, int x) const {
    return data[c * plane() + static_cast<std::size_t>(y) * width + x];
  }
};

// Square-kernel convolution, zero "same" padding, via im2col + GEMM.
class Conv2d {
 public:
  Conv2d() = default;
  Conv2d(int in_channels, int out_channels, int kernel, int stride);

  int in_channels() const { return in_; }
  int out_channels() const { return out_; }
  int kernel() const { return kernel_; }
  int stride() const { return stride_; }
  int output_size(int input_size) const { return (input_size + 2 * pad_ - kernel_) / stride_ + 1; }
  std::size_t parameter_count() const { return weight_.size() + bias_.size(); }

  std::span<float> weight() { return weight_; }
  std::span<const float> weight() const { return weight_; }
  std::span<float> bias() { return bias_; }
  std::span<const float> bias() const { return bias_; }

  void init_he(Rng& rng);

  // `cols` receives the im2col buffer needed by the backward passes.
  Tensor forward(const Tensor& x, std::vector<float>& cols) const;
  Tensor backward_input(const Tensor& grad_out, int in_height, int in_width) const;
  // Accumulates into grad_weight / grad_bias.
  void backward_params(const Tensor& grad_out, std::span<const float> cols,
                       std::span<float> grad_weight, std::span<float> grad_bias) const;

 private:
  int in_ = 0;
  int out_ = 0;
  int kernel_ = 1;
  int stride_ = 1;
  int pad_ = 0;
  std::vector<float> weight_;  // out x (in * k * k), row-major
  std::vector<float> bias_;
};

inline constexpr float kLeakySlope = 0.1f;
void leaky_relu_inplace(Tensor& t);
// grad *= d(leaky)/dx, using the activation output to recover the sign.
void leaky_relu_backward(const Tensor& activated, Tensor& grad);

float sigmoid(float x);

// Adaptive-moment optimiser over a flat parameter vector.
class Adam {
 public:
  explicit Adam(std::size_t size, double lr, double beta1 = 0.9, double beta2 = 0.999,
                double eps = 1e-8);
  void step(std::span<float> params, std::span<const float> grads);
  double learning_rate() const { return lr_; }
  void set_learning_rate(double lr) { lr_ = lr; }
  long steps() const { return t_; }

 private:
  double lr_;
  double beta1_;
  double beta2_;
  double eps_;
  long t_ = 0;
  std::vector<double> m_;
  std::vector<double> v_;
};

}  // namespace lpatch::nn
