#pragma once

#include "lpatch/image.hpp"

namespace lpatch {

struct Detection {
  BBox box;
  float confidence = 0.f;
  int anchor = -1;  // detector-specific output slot, used to route gradients
};

}  // namespace lpatch
