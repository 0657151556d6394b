#include "mtbo/sobol.hpp"

#include <bit>
#include <stdexcept>

#include "mtbo/rng.hpp"

#include "sobol_tables.inc"

namespace mtbo {

namespace {
constexpr int kBits = 32;

// Parity of the AND of two 32-bit words; one output bit of the GF(2) matrix
// product used by the linear matrix scramble.
inline std::uint32_t parity(std::uint32_t a) {
  return static_cast<std::uint32_t>(std::popcount(a) & 1);
}
}  // namespace

SobolSequence::SobolSequence(int dimension, std::uint64_t scramble_seed)
    : dim_(dimension),
      directions_(static_cast<std::size_t>(dimension) * kBits),
      shift_(dimension, 0),
      state_(dimension, 0),
      point_(dimension) {
  if (dimension < 1 || dimension > kMaxDimension) {
    throw std::invalid_argument("SobolSequence: dimension must be in [1, 128]");
  }

  for (int d = 0; d < dim_; ++d) {
    std::uint32_t* v = &directions_[static_cast<std::size_t>(d) * kBits];
    if (d == 0) {
      // van der Corput: v_j = 2^(31-j)
      for (int j = 0; j < kBits; ++j) v[j] = 1u << (kBits - 1 - j);
      continue;
    }
    const int row = d - 1;
    const unsigned deg = kPolyDegree[row];
    const unsigned poly = kPolyCoeff[row];
    const unsigned* m = &kInitNumbers[kInitOffset[row]];
    for (unsigned j = 0; j < deg; ++j) v[j] = m[j] << (kBits - 1 - j);
    for (int l = static_cast<int>(deg); l < kBits; ++l) {
      std::uint32_t n = v[l - deg] >> deg;
      for (unsigned j = 1; j < deg; ++j) {
        if ((poly >> (deg - j - 1)) & 1u) n ^= v[l - j];
      }
      n ^= v[l - deg];
      v[l] = n;
    }
  }

  if (scramble_seed != 0) {
    auto eng = make_engine(scramble_seed, 0x536f626fULL);
    for (int d = 0; d < dim_; ++d) {
      // Random lower-triangular (in digit order, MSB first) unit-diagonal
      // matrix over GF(2), applied to every direction number of this
      // dimension, then a random digital shift.
      std::uint32_t rows[kBits];
      for (int i = 0; i < kBits; ++i) {
        const std::uint32_t diag = 1u << (kBits - 1 - i);
        const std::uint32_t high =
            i == 0 ? 0u : (~0u << (kBits - i));  // digits before i
        rows[i] = diag | (static_cast<std::uint32_t>(eng()) & high);
      }
      std::uint32_t* v = &directions_[static_cast<std::size_t>(d) * kBits];
      for (int j = 0; j < kBits; ++j) {
        std::uint32_t out = 0;
        for (int i = 0; i < kBits; ++i) {
          out |= parity(rows[i] & v[j]) << (kBits - 1 - i);
        }
        v[j] = out;
      }
      shift_[d] = static_cast<std::uint32_t>(eng());
    }
  }

  seek(0);
}

void SobolSequence::seek(std::uint64_t index) {
  index_ = index;
  const std::uint64_t gray = index ^ (index >> 1);
  for (int d = 0; d < dim_; ++d) {
    const std::uint32_t* v = &directions_[static_cast<std::size_t>(d) * kBits];
    std::uint32_t x = 0;
    for (int j = 0; j < kBits; ++j) {
      if ((gray >> j) & 1u) x ^= v[j];
    }
    state_[d] = x;
  }
}

const std::vector<double>& SobolSequence::next() {
  constexpr double scale = 1.0 / 4294967296.0;  // 2^-32
  for (int d = 0; d < dim_; ++d) {
    point_[d] = (static_cast<double>(state_[d] ^ shift_[d]) + 0.5) * scale;
  }
  advance();
  return point_;
}

void SobolSequence::advance() {
  ++index_;
  const int j = std::countr_zero(index_);
  for (int d = 0; d < dim_; ++d) {
    state_[d] ^= directions_[static_cast<std::size_t>(d) * kBits + j];
  }
}

std::vector<double> sobol_points(int dimension, std::size_t count,
                                 std::uint64_t scramble_seed) {
  SobolSequence seq(dimension, scramble_seed);
  std::vector<double> out;
  out.reserve(count * dimension);
  for (std::size_t i = 0; i < count; ++i) {
    const auto& p = seq.next();
    out.insert(out.end(), p.begin(), p.end());
  }
  return out;
}

}  // namespace mtbo
