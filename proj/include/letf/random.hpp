#pragma once

#include "letf/core.hpp"

#include <cstdint>
#include <random>
#include <span>

namespace letf {

/// Seeded pseudo-random stream. Identical (seed, stream) pairs produce
/// identical draws, so runs are reproducible bit for bit.
class RngStream {
 public:
  RngStream(std::uint64_t seed, std::uint64_t stream = 0);

  std::uint64_t seed() const { return seed_; }
  std::uint64_t stream() const { return stream_; }

  double uniform();
  double normal();
  Vector normal_vector(Index n);
  Matrix normal_matrix(Index rows, Index cols);

  /// Index drawn with probability proportional to `weights` (need not be normalized).
  Index categorical(std::span<const double> weights);

  std::mt19937_64& engine() { return engine_; }

 private:
  std::uint64_t seed_;
  std::uint64_t stream_;
  std::mt19937_64 engine_;
  std::uniform_real_distribution<double> unit_{0.0, 1.0};
  std::normal_distribution<double> gauss_{0.0, 1.0};
};

}  // namespace letf
