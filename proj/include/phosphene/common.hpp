// Copyright 2026 The Phosphene Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//      http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#pragma once

#include <cmath>
#include <cstdint>
#include <random>
#include <stdexcept>
#include <string>

#include <Eigen/Core>

namespace phosphene {

// Dense aliases. Images and stimuli are row-major so that Eigen's linear
// indexing matches the row-major electrode / pixel order used on disk.
template <typename Scalar>
using ImageT = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

// n_e x 3 matrix, columns (freq [Hz], amp [threshold multiples], pdur [ms]).
template <typename Scalar>
using StimulusT = Eigen::Matrix<Scalar, Eigen::Dynamic, 3, Eigen::RowMajor>;

using Image = ImageT<double>;
using Percept = ImageT<double>;
using Stimulus = StimulusT<double>;
using StimulusGrad = StimulusT<double>;

enum StimulusColumn : int { kFreq = 0, kAmp = 1, kPdur = 2 };

// Error hierarchy. CLI exit codes are derived from these (see tools/).
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};
class InvalidGeometry : public Error {
 public:
  using Error::Error;
};
class InvalidParameter : public Error {
 public:
  using Error::Error;
};
class DimensionError : public Error {
 public:
  using Error::Error;
};
class IndexError : public Error {
 public:
  using Error::Error;
};
class IoError : public Error {
 public:
  using Error::Error;
};
class ParseError : public Error {
 public:
  using Error::Error;
};
class LoadError : public IoError {
 public:
  using IoError::IoError;
};
class ContractError : public Error {
 public:
  using Error::Error;
};
class DivergenceError : public Error {
 public:
  using Error::Error;
};

using Rng = std::mt19937_64;

// Uniform double in [0, 1). Implemented here rather than through
// std::uniform_real_distribution so seeded streams are identical across
// standard library implementations.
inline double uniform01(Rng& rng) {
  return static_cast<double>(rng() >> 11) * 0x1.0p-53;
}

inline double uniform(Rng& rng, double lo, double hi) {
  return lo + (hi - lo) * uniform01(rng);
}

// Uniform integer in [lo, hi].
inline int uniform_int(Rng& rng, int lo, int hi) {
  const auto span = static_cast<std::uint64_t>(hi - lo) + 1;
  return lo + static_cast<int>(rng() % span);
}

// Standard normal via Box-Muller, portable for the same reason as uniform01.
inline double normal01(Rng& rng) {
  double u1 = uniform01(rng);
  while (u1 <= 0.0) u1 = uniform01(rng);
  const double u2 = uniform01(rng);
  return std::sqrt(-2.0 * std::log(u1)) * std::cos(6.283185307179586 * u2);
}

template <typename Container>
void shuffle(Container& c, Rng& rng) {
  for (std::size_t i = c.size(); i > 1; --i) {
    const auto j = static_cast<std::size_t>(rng() % i);
    std::swap(c[i - 1], c[j]);
  }
}

}  // namespace phosphene
