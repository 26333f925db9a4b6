#include "lpatch/losses.hpp"

#include <cmath>
#include <fstream>
#include <limits>
#include <sstream>

#include "lpatch/errors.hpp"

namespace lpatch {

void PrintableSet::validate() const {
  if (colors.empty()) throw ValidationError("printable colour set is empty");
  for (const auto& c : colors)
    for (float v : c)
      if (!(v >= 0.f && v <= 1.f)) throw ValidationError("printable colour outside [0,1]");
}

PrintableSet PrintableSet::standard() {
  PrintableSet set;
  const float levels[3] = {0.1f, 0.5f, 0.9f};
  for (float r : levels)
    for (float g : levels)
      for (float b : levels) set.colors.push_back({r, g, b});
  for (float grey : {0.f, 0.3f, 0.7f}) set.colors.push_back({grey, grey, grey});
  return set;
}

PrintableSet PrintableSet::load(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IngestionError("cannot open printable colour file " + path.string());
  PrintableSet set;
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
    std::istringstream ss(line);
    std::array<float, 3> rgb{};
    if (!(ss >> rgb[0])) continue;
    if (!(ss >> rgb[1] >> rgb[2])) {
      throw ParseError(path.string() + ":" + std::to_string(lineno) + ": expected \"r g b\"");
    }
    set.colors.push_back(rgb);
  }
  set.validate();
  return set;
}

double nps_loss(const Patch& patch, const PrintableSet& printable, Patch* grad, double weight) {
  printable.validate();
  const auto px = patch.pixels();
  double total = 0.0;
  for (std::size_t p = 0; p < px.size(); p += 3) {
    double best = std::numeric_limits<double>::infinity();
    std::size_t best_k = 0;
    for (std::size_t k = 0; k < printable.colors.size(); ++k) {
      double d = 0.0;
      for (int c = 0; c < 3; ++c) {
        const double diff = static_cast<double>(px[p + c]) - printable.colors[k][c];
        d += diff * diff;
      }
      if (d < best) {
        best = d;
        best_k = k;
      }
    }
    total += best;
    if (grad) {
      auto g = grad->pixels();
      for (int c = 0; c < 3; ++c)
        g[p + c] += static_cast<float>(
            weight * 2.0 * (static_cast<double>(px[p + c]) - printable.colors[best_k][c]));
    }
  }
  return total;
}

double tv_loss(const Patch& patch, Patch* grad, double weight) {
  const int n = patch.side();
  if (n < 2) throw ValidationError("tv_loss needs a patch side >= 2");
  double total = 0.0;
  for (int i = 0; i + 1 < n; ++i) {
    for (int j = 0; j + 1 < n; ++j) {
      for (int c = 0; c < 3; ++c) {
        const double p = patch.at(i, j, c);
        const double down = p - patch.at(i + 1, j, c);
        const double right = p - patch.at(i, j + 1, c);
        total += down * down + right * right;
        if (grad) {
          grad->at(i, j, c) += static_cast<float>(weight * 2.0 * (down + right));
          grad->at(i + 1, j, c) -= static_cast<float>(weight * 2.0 * down);
          grad->at(i, j + 1, c) -= static_cast<float>(weight * 2.0 * right);
        }
      }
    }
  }
  return total;
}

DetLoss det_loss(std::span<const Detection> detections) {
  DetLoss out;
  for (std::size_t k = 0; k < detections.size(); ++k) {
    if (!out.argmax || detections[k].confidence > out.value) {
      out.value = detections[k].confidence;
      out.argmax = k;
    }
  }
  return out;
}

void LossWeights::validate() const {
  if (alpha < 0 || beta < 0 || gamma < 0) throw ValidationError("loss weights must be non-negative");
  if (alpha == 0 && beta == 0 && gamma == 0) throw ValidationError("loss weights are all zero");
}

double total_loss(double det, double tv, double nps, const LossWeights& w) {
  return w.alpha * det + w.beta * tv + w.gamma * nps;
}

}  // namespace lpatch
