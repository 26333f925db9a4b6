#pragma once

#include <array>
#include <filesystem>
#include <optional>
#include <span>
#include <vector>

#include "lpatch/detection.hpp"
#include "lpatch/image.hpp"

namespace lpatch {

struct PrintableSet {
  std::vector<std::array<float, 3>> colors;

  void validate() const;
  // 3x3x3 lattice over {0.1, 0.5, 0.9} plus three neutral greys.
  static PrintableSet standard();
  // One "r g b" triple per line, floats in [0,1]; '#' starts a comment.
  static PrintableSet load(const std::filesystem::path& path);
};

// The optional gradient outputs are accumulated as grad += weight * dL/dP.

// Sum over pixels of the squared distance to the nearest printable colour.
double nps_loss(const Patch& patch, const PrintableSet& printable, Patch* grad = nullptr,
                double weight = 1.0);

// Squared-difference total variation over the interior index set
// i, j in [0, N-2], summed over channels.
double tv_loss(const Patch& patch, Patch* grad = nullptr, double weight = 1.0);

struct DetLoss {
  double value = 0.0;
  std::optional<std::size_t> argmax;
};

// Maximum confidence over the detections; 0 when there are none.
DetLoss det_loss(std::span<const Detection> detections);

struct LossWeights {
  double alpha = 1.0;   // detection
  double beta = 0.1;    // total variation
  double gamma = 0.01;  // non-printability

  void validate() const;
};

double total_loss(double det, double tv, double nps, const LossWeights& w);

}  // namespace lpatch
