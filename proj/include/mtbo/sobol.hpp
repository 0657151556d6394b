#pragma once

#include <cstdint>
#include <vector>

namespace mtbo {

// Sobol low-discrepancy sequence with optional randomization (Matousek linear
// matrix scramble plus digital shift). A zero seed gives the plain sequence.
// Gray-code stepping; direction numbers cover up to kMaxDimension coordinates.
class SobolSequence {
 public:
  static constexpr int kMaxDimension = 128;

  explicit SobolSequence(int dimension, std::uint64_t scramble_seed = 0);

  int dimension() const { return dim_; }

  // Position the stream so the next call to next() returns point `index`.
  void seek(std::uint64_t index);

  // Returns the next point, each coordinate in (0, 1).
  const std::vector<double>& next();

 private:
  void advance();

  int dim_;
  std::uint64_t index_ = 0;                    // index of the point in state_
  std::vector<std::uint32_t> directions_;      // dim_ x 32, row-major
  std::vector<std::uint32_t> shift_;
  std::vector<std::uint32_t> state_;
  std::vector<double> point_;
};

// Convenience: `count` points in [0,1)^dim as a flat row-major array.
std::vector<double> sobol_points(int dimension, std::size_t count,
                                 std::uint64_t scramble_seed);

}  // namespace mtbo
