// Copyright 2026 The statemorph authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#pragma once

#include <cmath>
#include <cstdint>
#include <numbers>
#include <vector>

#include "statemorph/matrix.hpp"

namespace statemorph {

// Deterministic counter-based generator (SplitMix64 stream).  The standard
// library distributions are deliberately avoided: their output is not pinned
// by the standard, and reproducibility byte-for-byte matters here.
class Prng {
 public:
  explicit Prng(std::uint64_t seed) : seed_(seed) {}

  static std::uint64_t splitmix(std::uint64_t z) {
    z += 0x9e3779b97f4a7c15ULL;
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
  }

  std::uint64_t next_u64() {
    return splitmix(seed_ + 0x9e3779b97f4a7c15ULL * ++counter_);
  }

  // An independent deterministic stream, e.g. one per test instance.
  Prng substream(std::uint64_t index) const {
    return Prng(splitmix(seed_ ^ splitmix(index + 0x51ED2701A4D5B2EFULL)));
  }

  // Uniform in [0, 1).
  double uniform() {
    return static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
  }

  // Uniform integer in [0, n).
  std::uint64_t below(std::uint64_t n) { return next_u64() % n; }

  // Standard normal via Box-Muller (pair cached).
  double gauss() {
    if (have_spare_) {
      have_spare_ = false;
      return spare_;
    }
    const double u1 = uniform();
    const double u2 = uniform();
    const double r = std::sqrt(-2.0 * std::log1p(-u1));
    const double ang = 2.0 * std::numbers::pi * u2;
    spare_ = r * std::sin(ang);
    have_spare_ = true;
    return r * std::cos(ang);
  }

  Complex complex_gauss() {
    const double re = gauss();
    const double im = gauss();
    return Complex(re, im);
  }

  ComplexVector gaussian_vector(int d) {
    ComplexVector v(d);
    for (int i = 0; i < d; ++i) v(i) = complex_gauss();
    return v;
  }

  ComplexMatrix gaussian_matrix(int rows, int cols) {
    ComplexMatrix m(rows, cols);
    for (int i = 0; i < rows; ++i) {
      for (int j = 0; j < cols; ++j) m(i, j) = complex_gauss();
    }
    return m;
  }

  // Haar-like random pure state: normalized complex-Gaussian vector.
  ComplexVector random_ket(int d) {
    for (;;) {
      ComplexVector v = gaussian_vector(d);
      const double nrm = v.norm();
      if (nrm > 1e-6) return v / nrm;
    }
  }

  // Random density matrix, Wishart style: G G^dag normalized to unit trace.
  ComplexMatrix random_density(int d, int rank = 0) {
    if (rank <= 0) rank = d;
    const ComplexMatrix g = gaussian_matrix(d, rank);
    ComplexMatrix rho = g * g.adjoint();
    rho /= rho.trace().real();
    return 0.5 * (rho + rho.adjoint());
  }

  // Haar-like random unitary: QR of a Gaussian matrix with the phases of
  // the R diagonal absorbed into Q.
  ComplexMatrix random_unitary(int d) {
    const ComplexMatrix g = gaussian_matrix(d, d);
    Eigen::HouseholderQR<ComplexMatrix> qr(g);
    ComplexMatrix q = qr.householderQ();
    const ComplexMatrix r = qr.matrixQR().triangularView<Eigen::Upper>();
    for (int i = 0; i < d; ++i) {
      const Complex rii = r(i, i);
      const double mag = std::abs(rii);
      q.col(i) *= (mag > 0.0) ? rii / mag : Complex(1.0, 0.0);
    }
    return q;
  }

  std::vector<int> random_permutation(int n) {
    std::vector<int> p(n);
    for (int i = 0; i < n; ++i) p[i] = i;
    for (int i = n - 1; i > 0; --i) {
      const int j = static_cast<int>(below(static_cast<std::uint64_t>(i) + 1));
      std::swap(p[i], p[j]);
    }
    return p;
  }

 private:
  std::uint64_t seed_ = 0;
  std::uint64_t counter_ = 0;
  double spare_ = 0.0;
  bool have_spare_ = false;
};

}  // namespace statemorph
