#pragma once

#include <cstdint>
#include <random>
#include <string_view>

namespace lpatch {

// Seeded generator with platform-independent uniform draws. The standard
// distributions are implementation-defined, so draws are built directly on
// the raw 64-bit engine output.
class Rng {
 public:
  explicit Rng(std::uint64_t seed = 0) : engine_(seed) {}

  // U[0,1)
  double uniform() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }
  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }
  // Inclusive integer range.
  int uniform_int(int lo, int hi);
  std::uint64_t next() { return engine_(); }

 private:
  std::mt19937_64 engine_;
};

std::uint64_t splitmix64(std::uint64_t x);

// Independent per-concern stream seeds: derive_seed(master, "placement", epoch, i).
std::uint64_t derive_seed(std::uint64_t master, std::string_view stream,
                          std::uint64_t a = 0, std::uint64_t b = 0);

}  // namespace lpatch
