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

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <complex>
#include <limits>
#include <string>
#include <utility>

#include "statemorph/errors.hpp"

namespace statemorph {

using Complex = std::complex<double>;
using ComplexMatrix = Eigen::MatrixXcd;
using ComplexVector = Eigen::VectorXcd;
using RealMatrix = Eigen::MatrixXd;
using RealVector = Eigen::VectorXd;

// Numerical policy.  All thresholds used for accept/reject decisions live
// here so the whole library agrees on them.
namespace tol {
// A matrix handed to a Hermitian routine is rejected when the asymmetry
// ||H - H^dag||_F exceeds this; below it the input is symmetrized.
inline constexpr double hermitian_reject = 1e-8;
// Relative eigenvalue floor for "is PSD": lambda_min >= -psd_accept * max(1, ||H||_2).
inline constexpr double psd_accept = 1e-8;
// Overlaps with modulus below this are treated as exactly zero.
inline constexpr double zero_overlap = 1e-12;
// Purity threshold: tr(rho^2) >= 1 - purity_gap means "pure".
inline constexpr double purity_gap = 1e-9;
// Default feasibility tolerance for the PSD solvers.
inline constexpr double feasibility = 1e-7;
// |margin| below this marks a verdict as a boundary case.
inline constexpr double boundary_band = 1e-6;
}  // namespace tol

inline double frobenius(const ComplexMatrix& a) { return a.norm(); }

inline double hermiticity_defect(const ComplexMatrix& a) {
  return (a - a.adjoint()).norm();
}

// Eigendecomposition of a Hermitian matrix, eigenvalues ascending.
struct HermitianEig {
  RealVector values;
  ComplexMatrix vectors;  // orthonormal columns, vectors.col(k) <-> values[k]
};

namespace detail {
inline void require_square(const ComplexMatrix& h, const char* who) {
  if (h.rows() != h.cols()) {
    throw NonSquareError(std::string(who) + ": matrix is " +
                         std::to_string(h.rows()) + "x" +
                         std::to_string(h.cols()));
  }
}

inline void require_hermitian(const ComplexMatrix& h, const char* who) {
  require_square(h, who);
  const double defect = hermiticity_defect(h);
  if (defect > tol::hermitian_reject) {
    throw NonHermitianError(std::string(who) +
                            ": asymmetry ||H - H^dag|| = " +
                            std::to_string(defect));
  }
}
}  // namespace detail

inline HermitianEig eigh(const ComplexMatrix& h) {
  detail::require_hermitian(h, "eigh");
  const ComplexMatrix sym = 0.5 * (h + h.adjoint());
  Eigen::SelfAdjointEigenSolver<ComplexMatrix> es(sym);
  if (es.info() != Eigen::Success) {
    throw Error("eigh: eigensolver did not converge");
  }
  return HermitianEig{es.eigenvalues(), es.eigenvectors()};
}

// Smallest eigenvalue of a Hermitian matrix; the library's PSD test is
// psd_margin(H) >= -tol::psd_accept * max(1, ||H||_2).
inline double psd_margin(const ComplexMatrix& h) {
  return eigh(h).values(0);
}

inline double spectral_scale(const RealVector& eigenvalues) {
  double s = 1.0;
  for (Eigen::Index i = 0; i < eigenvalues.size(); ++i) {
    s = std::max(s, std::abs(eigenvalues(i)));
  }
  return s;
}

inline bool is_psd(const ComplexMatrix& h, double rel_tol = tol::psd_accept) {
  const HermitianEig eg = eigh(h);
  return eg.values(0) >= -rel_tol * spectral_scale(eg.values);
}

// Trace norm ||A||_1 = sum of singular values.
inline double trace_norm(const ComplexMatrix& a) {
  detail::require_square(a, "trace_norm");
  if (a.rows() == 0) return 0.0;
  Eigen::JacobiSVD<ComplexMatrix> svd(a);
  return svd.singularValues().sum();
}

// Principal square root of a PSD matrix.  Eigenvalues slightly below zero
// (within the PSD acceptance band) are clipped; anything lower is rejected.
inline ComplexMatrix sqrtm_psd(const ComplexMatrix& p) {
  const HermitianEig eg = eigh(p);
  const double floor = -tol::psd_accept * spectral_scale(eg.values);
  RealVector roots(eg.values.size());
  for (Eigen::Index i = 0; i < eg.values.size(); ++i) {
    const double lam = eg.values(i);
    if (lam < floor) {
      throw NotPSDError("sqrtm_psd: eigenvalue " + std::to_string(lam) +
                        " below PSD acceptance floor " + std::to_string(floor));
    }
    roots(i) = std::sqrt(std::max(lam, 0.0));
  }
  return eg.vectors * roots.asDiagonal() * eg.vectors.adjoint();
}

// Uhlmann fidelity F(rho, omega) = tr sqrt(sqrt(omega) rho sqrt(omega)),
// computed from the eigenvalues of sqrt(omega) rho sqrt(omega).
inline double fidelity(const ComplexMatrix& rho, const ComplexMatrix& omega) {
  detail::require_square(rho, "fidelity");
  detail::require_square(omega, "fidelity");
  if (rho.rows() != omega.rows()) {
    throw DimensionMismatchError("fidelity: dimensions " +
                                 std::to_string(rho.rows()) + " vs " +
                                 std::to_string(omega.rows()));
  }
  const ComplexMatrix so = sqrtm_psd(omega);
  const ComplexMatrix m = so * rho * so;
  const HermitianEig eg = eigh(0.5 * (m + m.adjoint()));
  double f = 0.0;
  for (Eigen::Index i = 0; i < eg.values.size(); ++i) {
    f += std::sqrt(std::max(eg.values(i), 0.0));
  }
  return std::clamp(f, 0.0, 1.0);
}

// Row-major vectorization: vec(M)[(i,j)] = M(i,j) at index i*cols + j.
// With this convention, tracing out the second tensor factor of
// vec(M) vec(M)^dag yields M M^dag.
inline ComplexVector vec_rowmajor(const ComplexMatrix& m) {
  ComplexVector v(m.rows() * m.cols());
  for (Eigen::Index i = 0; i < m.rows(); ++i) {
    for (Eigen::Index j = 0; j < m.cols(); ++j) {
      v(i * m.cols() + j) = m(i, j);
    }
  }
  return v;
}

// A pair of purifications of rho and omega on H (x) H that attain the
// maximal overlap |<xi_rho|xi_omega>| = F(rho, omega).  Built from the
// polar decomposition of sqrt(omega) sqrt(rho).
inline std::pair<ComplexVector, ComplexVector> max_overlap_purifications(
    const ComplexMatrix& rho, const ComplexMatrix& omega) {
  detail::require_square(rho, "max_overlap_purifications");
  detail::require_square(omega, "max_overlap_purifications");
  if (rho.rows() != omega.rows()) {
    throw DimensionMismatchError(
        "max_overlap_purifications: dimensions differ");
  }
  const ComplexMatrix sr = sqrtm_psd(rho);
  const ComplexMatrix so = sqrtm_psd(omega);
  const ComplexMatrix m = so * sr;
  Eigen::JacobiSVD<ComplexMatrix> svd(m, Eigen::ComputeFullU | Eigen::ComputeFullV);
  const ComplexMatrix up = svd.matrixU() * svd.matrixV().adjoint();
  // tr_2 of vec(A) vec(A)^dag is A A^dag, so these purify rho and omega.
  ComplexVector xi_rho = vec_rowmajor(sr * up.adjoint());
  ComplexVector xi_omega = vec_rowmajor(so);
  return {std::move(xi_rho), std::move(xi_omega)};
}

// Entrywise (Hadamard) product.
inline ComplexMatrix hadamard(const ComplexMatrix& c, const ComplexMatrix& d) {
  if (c.rows() != d.rows() || c.cols() != d.cols()) {
    throw ShapeMismatchError("hadamard: shapes " + std::to_string(c.rows()) +
                             "x" + std::to_string(c.cols()) + " vs " +
                             std::to_string(d.rows()) + "x" +
                             std::to_string(d.cols()));
  }
  return c.cwiseProduct(d);
}

inline ComplexMatrix kron(const ComplexMatrix& a, const ComplexMatrix& b) {
  ComplexMatrix out(a.rows() * b.rows(), a.cols() * b.cols());
  for (Eigen::Index i = 0; i < a.rows(); ++i) {
    for (Eigen::Index j = 0; j < a.cols(); ++j) {
      out.block(i * b.rows(), j * b.cols(), b.rows(), b.cols()) = a(i, j) * b;
    }
  }
  return out;
}

}  // namespace statemorph
