#include "lpatch/nn.hpp"

#include <cmath>
#include <numbers>

#include <Eigen/Core>

#include "lpatch/errors.hpp"

namespace lpatch::nn {

namespace {

using RowMatrix = Eigen::Matrix<float, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MapMatrix = Eigen::Map<RowMatrix>;
using ConstMapMatrix = Eigen::Map<const RowMatrix>;

}  // namespace

Conv2d::Conv2d(int in_channels, int out_channels, int kernel, int stride)
    : in_(in_channels), out_(out_channels), kernel_(kernel), stride_(stride), pad_(kernel / 2) {
  if (in_channels <= 0 || out_channels <= 0 || kernel <= 0 || stride <= 0) {
    throw ValidationError("invalid convolution geometry");
  }
  weight_.assign(static_cast<std::size_t>(out_) * in_ * kernel_ * kernel_, 0.f);
  bias_.assign(out_, 0.f);
}

void Conv2d::init_he(Rng& rng) {
  const double fan_in = static_cast<double>(in_) * kernel_ * kernel_;
  const double std = std::sqrt(2.0 / fan_in);
  for (float& w : weight_) {
    // Box-Muller
    const double u1 = std::max(rng.uniform(), 1e-12);
    const double u2 = rng.uniform();
    w = static_cast<float>(std * std::sqrt(-2.0 * std::log(u1)) *
                           std::cos(2.0 * std::numbers::pi * u2));
  }
  std::fill(bias_.begin(), bias_.end(), 0.f);
}

Tensor Conv2d::forward(const Tensor& x, std::vector<float>& cols) const {
  if (x.channels != in_) throw DimensionError("conv input channel mismatch");
  const int ho = output_size(x.height);
  const int wo = output_size(x.width);
  const int k2 = kernel_ * kernel_;
  const std::size_t n = static_cast<std::size_t>(ho) * wo;
  cols.assign(static_cast<std::size_t>(in_) * k2 * n, 0.f);
  for (int c = 0; c < in_; ++c) {
    for (int ky = 0; ky < kernel_; ++ky) {
      for (int kx = 0; kx < kernel_; ++kx) {
        float* row = cols.data() + ((static_cast<std::size_t>(c) * k2) + ky * kernel_ + kx) * n;
        for (int oy = 0; oy < ho; ++oy) {
          const int iy = oy * stride_ - pad_ + ky;
          if (iy < 0 || iy >= x.height) continue;
          const float* src = x.data.data() + c * x.plane() + static_cast<std::size_t>(iy) * x.width;
          float* dst = row + static_cast<std::size_t>(oy) * wo;
          for (int ox = 0; ox < wo; ++ox) {
            const int ix = ox * stride_ - pad_ + kx;
            if (ix >= 0 && ix < x.width) dst[ox] = src[ix];
          }
        }
      }
    }
  }
  Tensor y(out_, ho, wo);
  ConstMapMatrix w(weight_.data(), out_, static_cast<Eigen::Index>(in_) * k2);
  ConstMapMatrix col(cols.data(), static_cast<Eigen::Index>(in_) * k2, static_cast<Eigen::Index>(n));
  MapMatrix out(y.data.data(), out_, static_cast<Eigen::Index>(n));
  out.noalias() = w * col;
  for (int o = 0; o < out_; ++o) out.row(o).array() += bias_[o];
  return y;
}

Tensor Conv2d::backward_input(const Tensor& grad_out, int in_height, int in_width) const {
  const int ho = grad_out.height;
  const int wo = grad_out.width;
  const int k2 = kernel_ * kernel_;
  const std::size_t n = static_cast<std::size_t>(ho) * wo;
  RowMatrix dcols(static_cast<Eigen::Index>(in_) * k2, static_cast<Eigen::Index>(n));
  ConstMapMatrix w(weight_.data(), out_, static_cast<Eigen::Index>(in_) * k2);
  ConstMapMatrix g(grad_out.data.data(), out_, static_cast<Eigen::Index>(n));
  dcols.noalias() = w.transpose() * g;

  Tensor dx(in_, in_height, in_width);
  for (int c = 0; c < in_; ++c) {
    for (int ky = 0; ky < kernel_; ++ky) {
      for (int kx = 0; kx < kernel_; ++kx) {
        const float* row = dcols.data() + ((static_cast<std::size_t>(c) * k2) + ky * kernel_ + kx) * n;
        for (int oy = 0; oy < ho; ++oy) {
          const int iy = oy * stride_ - pad_ + ky;
          if (iy < 0 || iy >= in_height) continue;
          float* dst = dx.data.data() + c * dx.plane() + static_cast<std::size_t>(iy) * in_width;
          const float* src = row + static_cast<std::size_t>(oy) * wo;
          for (int ox = 0; ox < wo; ++ox) {
            const int ix = ox * stride_ - pad_ + kx;
            if (ix >= 0 && ix < in_width) dst[ix] += src[ox];
          }
        }
      }
    }
  }
  return dx;
}

void Conv2d::backward_params(const Tensor& grad_out, std::span<const float> cols,
                             std::span<float> grad_weight, std::span<float> grad_bias) const {
  const int k2 = kernel_ * kernel_;
  const auto n = static_cast<Eigen::Index>(grad_out.plane());
  ConstMapMatrix g(grad_out.data.data(), out_, n);
  ConstMapMatrix col(cols.data(), static_cast<Eigen::Index>(in_) * k2, n);
  MapMatrix gw(grad_weight.data(), out_, static_cast<Eigen::Index>(in_) * k2);
  gw.noalias() += g * col.transpose();
  // Plain loop: Eigen's vectorised reductions sum in an alignment-dependent
  // order, which made results depend on heap layout.
  for (int o = 0; o < out_; ++o) {
    const float* row = grad_out.data.data() + static_cast<std::size_t>(o) * grad_out.plane();
    double acc = 0.0;
    for (Eigen::Index i = 0; i < n; ++i) acc += row[i];
    grad_bias[o] += static_cast<float>(acc);
  }
}

void leaky_relu_inplace(Tensor& t) {
  for (float& v : t.data) v = v > 0.f ? v : kLeakySlope * v;
}

void leaky_relu_backward(const Tensor& activated, Tensor& grad) {
  for (std::size_t i = 0; i < grad.data.size(); ++i)
    if (!(activated.data[i] > 0.f)) grad.data[i] *= kLeakySlope;
}

float sigmoid(float x) { return 1.f / (1.f + std::exp(-x)); }

Adam::Adam(std::size_t size, double lr, double beta1, double beta2, double eps)
    : lr_(lr), beta1_(beta1), beta2_(beta2), eps_(eps), m_(size, 0.0), v_(size, 0.0) {}

void Adam::step(std::span<float> params, std::span<const float> grads) {
  if (params.size() != m_.size() || grads.size() != m_.size()) {
    throw DimensionError("optimiser state size mismatch");
  }
  ++t_;
  const double c1 = 1.0 - std::pow(beta1_, static_cast<double>(t_));
  const double c2 = 1.0 - std::pow(beta2_, static_cast<double>(t_));
  for (std::size_t i = 0; i < params.size(); ++i) {
    const double g = grads[i];
    m_[i] = beta1_ * m_[i] + (1.0 - beta1_) * g;
    v_[i] = beta2_ * v_[i] + (1.0 - beta2_) * g * g;
    const double mhat = m_[i] / c1;
    const double vhat = v_[i] / c2;
    params[i] -= static_cast<float>(lr_ * mhat / (std::sqrt(vhat) + eps_));
  }
}

}  // namespace lpatch::nn
