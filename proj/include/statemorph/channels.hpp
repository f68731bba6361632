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
#include <string>
#include <utility>
#include <vector>

#include "statemorph/feasibility.hpp"
#include "statemorph/random.hpp"
#include "statemorph/states.hpp"

namespace statemorph {

// ---------------------------------------------------------------------------
// Channel representations.
//
// Choi convention used throughout: J = sum_ij E_ij (x) T(E_ij) with the
// composite row index (i, a) = i * dim_out + a, so the d_out x d_out block
// at (i, j) is T(|i><j|).  Trace preservation reads Tr_out J = I_in, and
// T(rho) = sum_ij rho_ij * block(i, j).
// ---------------------------------------------------------------------------

class ChoiMatrix;

// A channel in Kraus form: T(rho) = sum_mu A_mu rho A_mu^dag with
// sum_mu A_mu^dag A_mu = I (completeness within 1e-8).
class KrausChannel {
 public:
  KrausChannel(int dim_in, int dim_out, std::vector<ComplexMatrix> ops)
      : KrausChannel(dim_in, dim_out, std::move(ops), true) {}

  // Skips the completeness check; for tests that corrupt operators on
  // purpose and for intermediate construction steps.
  static KrausChannel unchecked(int dim_in, int dim_out,
                                std::vector<ComplexMatrix> ops) {
    return KrausChannel(dim_in, dim_out, std::move(ops), false);
  }

  int dim_in() const { return dim_in_; }
  int dim_out() const { return dim_out_; }
  const std::vector<ComplexMatrix>& kraus_operators() const { return ops_; }

  double completeness_residual() const {
    ComplexMatrix s = ComplexMatrix::Zero(dim_in_, dim_in_);
    for (const ComplexMatrix& a : ops_) s += a.adjoint() * a;
    return (s - ComplexMatrix::Identity(dim_in_, dim_in_)).norm();
  }

  ComplexMatrix apply_raw(const ComplexMatrix& rho) const {
    if (rho.rows() != dim_in_ || rho.cols() != dim_in_) {
      throw DimensionMismatchError("KrausChannel::apply: input is " +
                                   std::to_string(rho.rows()) + "x" +
                                   std::to_string(rho.cols()));
    }
    ComplexMatrix out = ComplexMatrix::Zero(dim_out_, dim_out_);
    for (const ComplexMatrix& a : ops_) out += a * rho * a.adjoint();
    return out;
  }

  DensityMatrix apply(const DensityMatrix& rho) const {
    return DensityMatrix(apply_raw(rho.matrix()));
  }

  ChoiMatrix choi() const;

 private:
  KrausChannel(int dim_in, int dim_out, std::vector<ComplexMatrix> ops,
               bool validate)
      : dim_in_(dim_in), dim_out_(dim_out), ops_(std::move(ops)) {
    if (dim_in_ < 1 || dim_out_ < 1 || ops_.empty()) {
      throw DimensionMismatchError("KrausChannel: empty description");
    }
    for (const ComplexMatrix& a : ops_) {
      if (a.rows() != dim_out_ || a.cols() != dim_in_) {
        throw DimensionMismatchError("KrausChannel: operator is " +
                                     std::to_string(a.rows()) + "x" +
                                     std::to_string(a.cols()));
      }
    }
    if (validate) {
      const double res = completeness_residual();
      if (res > 1e-8) {
        throw NotTracePreservingError("KrausChannel: completeness residual " +
                                      std::to_string(res));
      }
    }
  }

  int dim_in_;
  int dim_out_;
  std::vector<ComplexMatrix> ops_;
};

inline ComplexMatrix apply_channel(const KrausChannel& ch,
                                   const ComplexMatrix& rho) {
  return ch.apply_raw(rho);
}

class ChoiMatrix {
 public:
  ChoiMatrix(ComplexMatrix j, int dim_in, int dim_out, double tp_tol = 1e-8)
      : dim_in_(dim_in), dim_out_(dim_out), j_(std::move(j)) {
    if (j_.rows() != dim_in_ * dim_out_ || j_.cols() != j_.rows()) {
      throw DimensionMismatchError("ChoiMatrix: matrix is " +
                                   std::to_string(j_.rows()) + "x" +
                                   std::to_string(j_.cols()) + ", expected " +
                                   std::to_string(dim_in_ * dim_out_));
    }
    if (hermiticity_defect(j_) > tol::hermitian_reject) {
      throw NonHermitianError("ChoiMatrix: not Hermitian");
    }
    j_ = 0.5 * (j_ + j_.adjoint());
    const HermitianEig eg = eigh(j_);
    if (eg.values(0) < -tol::psd_accept * spectral_scale(eg.values)) {
      throw NotPSDError("ChoiMatrix: eigenvalue " +
                        std::to_string(eg.values(0)));
    }
    const double tp = trace_preservation_residual();
    if (tp > tp_tol) {
      throw NotTracePreservingError("ChoiMatrix: ||Tr_out J - I|| = " +
                                    std::to_string(tp));
    }
  }

  int dim_in() const { return dim_in_; }
  int dim_out() const { return dim_out_; }
  const ComplexMatrix& matrix() const { return j_; }

  ComplexMatrix partial_trace_out() const {
    ComplexMatrix t(dim_in_, dim_in_);
    for (int i = 0; i < dim_in_; ++i) {
      for (int j = 0; j < dim_in_; ++j) {
        Complex s(0.0, 0.0);
        for (int a = 0; a < dim_out_; ++a) {
          s += j_(i * dim_out_ + a, j * dim_out_ + a);
        }
        t(i, j) = s;
      }
    }
    return t;
  }

  double trace_preservation_residual() const {
    return (partial_trace_out() -
            ComplexMatrix::Identity(dim_in_, dim_in_)).norm();
  }

  ComplexMatrix apply_raw(const ComplexMatrix& rho) const {
    if (rho.rows() != dim_in_ || rho.cols() != dim_in_) {
      throw DimensionMismatchError("ChoiMatrix::apply: wrong input dimension");
    }
    ComplexMatrix out = ComplexMatrix::Zero(dim_out_, dim_out_);
    for (int i = 0; i < dim_in_; ++i) {
      for (int j = 0; j < dim_in_; ++j) {
        out += rho(i, j) *
               j_.block(i * dim_out_, j * dim_out_, dim_out_, dim_out_);
      }
    }
    return out;
  }

 private:
  int dim_in_;
  int dim_out_;
  ComplexMatrix j_;
};

inline ChoiMatrix KrausChannel::choi() const {
  const int d = dim_in_ * dim_out_;
  ComplexMatrix j = ComplexMatrix::Zero(d, d);
  ComplexVector v(d);
  for (const ComplexMatrix& a : ops_) {
    for (int i = 0; i < dim_in_; ++i) {
      for (int out = 0; out < dim_out_; ++out) {
        v(i * dim_out_ + out) = a(out, i);
      }
    }
    j += v * v.adjoint();
  }
  return ChoiMatrix(std::move(j), dim_in_, dim_out_);
}

// Kraus operators from the spectral decomposition of a Choi matrix
// (eigenvalues above `cutoff`, largest first).  The operators are polished
// with S^{-1/2} so completeness holds to machine precision even when the
// input is trace preserving only within its tolerance.
inline KrausChannel kraus_from_choi(const ChoiMatrix& choi,
                                    double cutoff = 1e-10) {
  const int din = choi.dim_in();
  const int dout = choi.dim_out();
  const HermitianEig eg = eigh(choi.matrix());
  std::vector<ComplexMatrix> ops;
  for (Eigen::Index k = eg.values.size() - 1; k >= 0; --k) {
    const double lam = eg.values(k);
    if (lam <= cutoff) break;
    const double s = std::sqrt(lam);
    ComplexMatrix a(dout, din);
    for (int i = 0; i < din; ++i) {
      for (int out = 0; out < dout; ++out) {
        a(out, i) = s * eg.vectors(i * dout + out, k);
      }
    }
    ops.push_back(std::move(a));
  }
  if (ops.empty()) {
    throw NotPSDError("kraus_from_choi: no eigenvalue above cutoff");
  }
  ComplexMatrix s = ComplexMatrix::Zero(din, din);
  for (const ComplexMatrix& a : ops) s += a.adjoint() * a;
  const HermitianEig sg = eigh(s);
  if (sg.values(0) < 1e-6) {
    throw NotTracePreservingError(
        "kraus_from_choi: completeness operator nearly singular");
  }
  RealVector inv_roots(sg.values.size());
  for (Eigen::Index i = 0; i < sg.values.size(); ++i) {
    inv_roots(i) = 1.0 / std::sqrt(sg.values(i));
  }
  const ComplexMatrix fix =
      sg.vectors * inv_roots.asDiagonal() * sg.vectors.adjoint();
  for (ComplexMatrix& a : ops) a = a * fix;
  return KrausChannel(din, dout, std::move(ops));
}

// One measurement outcome of an instrument: label and Kraus operators.
// Label 0 is reserved for the failure outcome.
struct OutcomeBranch {
  int label = 0;
  std::vector<ComplexMatrix> ops;
};

// A quantum instrument: a channel split into labeled branches whose union
// satisfies completeness.
class Instrument {
 public:
  Instrument(int dim_in, int dim_out, std::vector<OutcomeBranch> branches)
      : dim_in_(dim_in), dim_out_(dim_out), branches_(std::move(branches)) {
    if (branches_.empty()) {
      throw DimensionMismatchError("Instrument: no branches");
    }
    for (const OutcomeBranch& br : branches_) {
      for (const ComplexMatrix& a : br.ops) {
        if (a.rows() != dim_out_ || a.cols() != dim_in_) {
          throw DimensionMismatchError("Instrument: operator shape");
        }
      }
    }
    const double res = completeness_residual();
    if (res > 1e-8) {
      throw NotTracePreservingError("Instrument: completeness residual " +
                                    std::to_string(res));
    }
  }

  int dim_in() const { return dim_in_; }
  int dim_out() const { return dim_out_; }
  int num_branches() const { return static_cast<int>(branches_.size()); }
  const std::vector<OutcomeBranch>& branches() const { return branches_; }

  double completeness_residual() const {
    ComplexMatrix s = ComplexMatrix::Zero(dim_in_, dim_in_);
    for (const OutcomeBranch& br : branches_) {
      for (const ComplexMatrix& a : br.ops) s += a.adjoint() * a;
    }
    return (s - ComplexMatrix::Identity(dim_in_, dim_in_)).norm();
  }

  // Unnormalized branch output sum_mu A_mu rho A_mu^dag.
  ComplexMatrix apply_branch_raw(int branch, const ComplexMatrix& rho) const {
    ComplexMatrix out = ComplexMatrix::Zero(dim_out_, dim_out_);
    for (const ComplexMatrix& a : branches_.at(branch).ops) {
      out += a * rho * a.adjoint();
    }
    return out;
  }

  double branch_probability(int branch, const ComplexMatrix& rho) const {
    return apply_branch_raw(branch, rho).trace().real();
  }

  KrausChannel total_channel() const {
    std::vector<ComplexMatrix> ops;
    for (const OutcomeBranch& br : branches_) {
      for (const ComplexMatrix& a : br.ops) ops.push_back(a);
    }
    return KrausChannel(dim_in_, dim_out_, std::move(ops));
  }

 private:
  int dim_in_;
  int dim_out_;
  std::vector<OutcomeBranch> branches_;
};

// An isometry U : H_A -> H_B (x) H_J (x) H_E (outputs, outcome register,
// environment), flattened with row index (b * outcome_dim + j) * env_dim + mu.
struct IsometryWitness {
  ComplexMatrix map;
  int dim_in = 0;
  int dim_out = 0;
  int outcome_dim = 1;
  int env_dim = 1;
  double isometry_defect = 0.0;  // ||U^dag U - I||_F after polishing
};

namespace detail {

inline ComplexMatrix inverse_sqrt_hermitian(const ComplexMatrix& h,
                                            double floor_tol,
                                            const char* who) {
  const HermitianEig eg = eigh(h);
  if (eg.values(0) < floor_tol) {
    throw WitnessInconsistentError(std::string(who) +
                                   ": factor nearly singular (eigenvalue " +
                                   std::to_string(eg.values(0)) + ")");
  }
  RealVector inv_roots(eg.values.size());
  for (Eigen::Index i = 0; i < eg.values.size(); ++i) {
    inv_roots(i) = 1.0 / std::sqrt(eg.values(i));
  }
  return eg.vectors * inv_roots.asDiagonal() * eg.vectors.adjoint();
}

// Builds an isometry U (D x dA, D >= dA) with U x_i ~= w_i for the columns
// of X and W.  Requires the two Gram matrices to agree within gram_tol;
// the map on the orthogonal complement of span{x_i} is an arbitrary
// orthonormal extension.
inline ComplexMatrix build_isometry(const ComplexMatrix& X,
                                    const ComplexMatrix& W, double gram_tol) {
  const int dA = static_cast<int>(X.rows());
  const int n = static_cast<int>(X.cols());
  const int D = static_cast<int>(W.rows());
  if (W.cols() != n) {
    throw ShapeMismatchError("build_isometry: column counts differ");
  }
  if (D < dA) {
    throw WitnessInconsistentError(
        "build_isometry: target space smaller than source space");
  }
  const double gram_gap = (X.adjoint() * X - W.adjoint() * W)
                              .cwiseAbs()
                              .maxCoeff();
  if (gram_gap > gram_tol) {
    throw WitnessInconsistentError("build_isometry: Gram mismatch " +
                                   std::to_string(gram_gap));
  }

  Eigen::JacobiSVD<ComplexMatrix> svd(
      X, Eigen::ComputeFullU | Eigen::ComputeThinV);
  int r = 0;
  while (r < std::min(dA, n) && svd.singularValues()(r) > 1e-9) ++r;
  if (r == 0) {
    throw WitnessInconsistentError("build_isometry: source family is zero");
  }
  const ComplexMatrix q_span = svd.matrixU().leftCols(r);

  // Images of the span basis: V = W R^+ with R the coordinates of X in
  // q_span; since X = U S V^dag, R^+ = V_r S_r^{-1}.
  ComplexMatrix v_img(D, r);
  {
    ComplexMatrix vr = svd.matrixV().leftCols(r);
    for (int c = 0; c < r; ++c) vr.col(c) /= svd.singularValues()(c);
    v_img = W * vr;
  }
  // Polar correction: matching Grams make V nearly orthonormal already.
  v_img = v_img * inverse_sqrt_hermitian(v_img.adjoint() * v_img, 1e-8,
                                         "build_isometry");

  ComplexMatrix u(D, dA);
  u = v_img * q_span.adjoint();
  if (r < dA) {
    Eigen::JacobiSVD<ComplexMatrix> vsvd(v_img, Eigen::ComputeFullU);
    const ComplexMatrix v_ext = vsvd.matrixU().middleCols(r, dA - r);
    u += v_ext * svd.matrixU().rightCols(dA - r).adjoint();
  }
  // Final polish to an exact isometry.
  u = u * inverse_sqrt_hermitian(u.adjoint() * u, 1e-8, "build_isometry");
  return u;
}

inline int ceil_div(int a, int b) { return (a + b - 1) / b; }

}  // namespace detail

// Stinespring-style dilation for a pure-to-pure transformation certified by
// a Gram witness M: maps |a_i> to |b_i> (x) |xi_i> with <xi_i|xi_j> = M_ij,
// so tracing out the environment sends alpha_i to beta_i.  A nonzero
// gauge_seed rotates the environment factor by a deterministic random
// unitary; all gauges give the same channel on the span of the sources.
inline IsometryWitness isometry_from_gram_witness(
    const std::vector<Ket>& sources, const std::vector<Ket>& targets,
    const ComplexMatrix& m, std::uint64_t gauge_seed = 0) {
  const int n = static_cast<int>(sources.size());
  if (n == 0 || static_cast<int>(targets.size()) != n) {
    throw SizeMismatchError("isometry_from_gram_witness: family sizes");
  }
  const int da = sources[0].dim();
  const int db = targets[0].dim();
  if (m.rows() != n || m.cols() != n) {
    throw ShapeMismatchError("isometry_from_gram_witness: witness size");
  }
  for (int i = 0; i < n; ++i) {
    if (std::abs(m(i, i) - Complex(1.0, 0.0)) > 1e-6) {
      throw WitnessInconsistentError(
          "isometry_from_gram_witness: witness diagonal is not 1");
    }
    for (int j = 0; j < n; ++j) {
      const Complex ga = sources[i].overlap(sources[j]);
      const Complex gb = targets[i].overlap(targets[j]);
      if (std::abs(ga - m(i, j) * gb) > 1e-6) {
        throw WitnessInconsistentError(
            "isometry_from_gram_witness: witness does not reproduce the "
            "source Gram matrix at (" +
            std::to_string(i) + "," + std::to_string(j) + ")");
      }
    }
  }

  const ComplexMatrix c = detail::gram_factor(0.5 * (m + m.adjoint()));
  const int rank = static_cast<int>(c.rows());
  const int env = std::max(rank, detail::ceil_div(da, db));

  ComplexMatrix xi = ComplexMatrix::Zero(env, n);
  xi.topRows(rank) = c;
  if (gauge_seed != 0) {
    Prng gauge_rng(gauge_seed);
    xi = gauge_rng.random_unitary(env) * xi;
  }

  ComplexMatrix x(da, n), w(db * env, n);
  for (int i = 0; i < n; ++i) {
    x.col(i) = sources[i].amplitudes();
    for (int b = 0; b < db; ++b) {
      w.col(i).segment(b * env, env) = targets[i].amplitudes()(b) * xi.col(i);
    }
  }
  ComplexMatrix u = detail::build_isometry(x, w, 1e-6);

  IsometryWitness out;
  out.map = std::move(u);
  out.dim_in = da;
  out.dim_out = db;
  out.outcome_dim = 1;
  out.env_dim = env;
  out.isometry_defect =
      (out.map.adjoint() * out.map -
       ComplexMatrix::Identity(da, da)).norm();
  return out;
}

// Kraus operators of the channel obtained by tracing the outcome register
// and environment out of an isometry witness.
inline KrausChannel channel_from_isometry(const IsometryWitness& w) {
  std::vector<ComplexMatrix> ops;
  const int slots = w.outcome_dim * w.env_dim;
  ops.reserve(slots);
  for (int s = 0; s < slots; ++s) {
    ComplexMatrix a(w.dim_out, w.dim_in);
    for (int b = 0; b < w.dim_out; ++b) {
      a.row(b) = w.map.row(b * slots + s);
    }
    ops.push_back(std::move(a));
  }
  return KrausChannel(w.dim_in, w.dim_out, std::move(ops));
}

// Exact channel taking two pure sources to two arbitrary targets.  Such a
// channel exists precisely when F(sigma_1, sigma_2) >= |<a_1|a_2>|; the
// construction routes each source onto a maximal-overlap purification of its
// target and discards the purifying register, so no iterative solve is
// involved.  Throws WitnessInconsistentError when the overlap exceeds the
// fidelity by more than 1e-6.
inline KrausChannel channel_from_pure_pair(const Ket& a1, const Ket& a2,
                                           const ComplexMatrix& b1,
                                           const ComplexMatrix& b2,
                                           std::uint64_t gauge_seed = 0) {
  if (a1.dim() != a2.dim()) {
    throw DimensionMismatchError("channel_from_pure_pair: source dimensions");
  }
  if (b1.rows() != b2.rows() || b1.rows() != b1.cols() ||
      b2.rows() != b2.cols()) {
    throw DimensionMismatchError("channel_from_pure_pair: target shapes");
  }
  const int dout = static_cast<int>(b1.rows());

  const auto [xi1, xi2] = max_overlap_purifications(b1, b2);
  // The purifications attain the fidelity with a real, nonnegative overlap.
  const double f = xi1.dot(xi2).real();
  const Complex c = a1.overlap(a2);
  if (std::abs(c) > f + 1e-6) {
    throw WitnessInconsistentError(
        "channel_from_pure_pair: target fidelity " + std::to_string(f) +
        " is below the source overlap " + std::to_string(std::abs(c)));
  }

  ComplexMatrix m = ComplexMatrix::Identity(2, 2);
  if (f > 1e-12) {
    Complex w = c / f;
    // Rounding at the boundary |c| = F can push the ratio just past the unit
    // disc; clamp so the witness stays positive semidefinite.
    const double mod = std::abs(w);
    if (mod > 1.0) w /= mod;
    m(0, 1) = w;
    m(1, 0) = std::conj(w);
  }

  const std::vector<Ket> sources = {a1, a2};
  const std::vector<Ket> lifted = {Ket::normalized(xi1), Ket::normalized(xi2)};
  const KrausChannel big = channel_from_isometry(
      isometry_from_gram_witness(sources, lifted, m, gauge_seed));

  // Trace out the purifying register (the second tensor factor of the
  // row-major vectorization).
  std::vector<ComplexMatrix> ops;
  ops.reserve(big.kraus_operators().size() * dout);
  for (const ComplexMatrix& a : big.kraus_operators()) {
    for (int j = 0; j < dout; ++j) {
      ComplexMatrix k(dout, a.cols());
      for (int i = 0; i < dout; ++i) k.row(i) = a.row(i * dout + j);
      ops.push_back(std::move(k));
    }
  }
  return KrausChannel(a1.dim(), dout, std::move(ops));
}

// Instrument induced by measuring the outcome register of an isometry
// witness; branch k collects the environment slots of outcome k.
inline std::vector<std::vector<ComplexMatrix>> branch_operators_from_isometry(
    const IsometryWitness& w) {
  std::vector<std::vector<ComplexMatrix>> branches(w.outcome_dim);
  for (int j = 0; j < w.outcome_dim; ++j) {
    branches[j].reserve(w.env_dim);
    for (int mu = 0; mu < w.env_dim; ++mu) {
      ComplexMatrix a(w.dim_out, w.dim_in);
      for (int b = 0; b < w.dim_out; ++b) {
        a.row(b) = w.map.row((b * w.outcome_dim + j) * w.env_dim + mu);
      }
      branches[j].push_back(std::move(a));
    }
  }
  return branches;
}

// Builds the instrument that realizes a multi-outcome pure-state
// transformation from Hadamard-sum witness blocks: outcome j (label j+1)
// takes |a_i> to |b_i^j> with probability P(i, j).  When the probability
// rows are subnormalized, the witness must carry the failure slack as its
// last block; the failure branch (label 0) prepares the first basis state.
inline Instrument instrument_from_witness(
    const std::vector<Ket>& sources,
    const std::vector<std::vector<Ket>>& target_families,
    const ProbabilityMatrix& p, const std::vector<ComplexMatrix>& pi_blocks,
    std::uint64_t gauge_seed = 0) {
  const int n = static_cast<int>(sources.size());
  const int m = static_cast<int>(target_families.size());
  if (n == 0 || m == 0) {
    throw SizeMismatchError("instrument_from_witness: empty description");
  }
  if (p.n() != n || p.outcomes() != m) {
    throw BadProbabilityMatrixError(
        "instrument_from_witness: probability shape");
  }
  const bool has_failure = (static_cast<int>(pi_blocks.size()) == m + 1);
  if (!has_failure) {
    if (static_cast<int>(pi_blocks.size()) != m) {
      throw WitnessInconsistentError(
          "instrument_from_witness: expected m or m+1 witness blocks");
    }
    if (!p.rows_exact()) {
      throw WitnessInconsistentError(
          "instrument_from_witness: subnormalized probabilities need a "
          "failure block");
    }
  }
  const int da = sources[0].dim();
  int db = 0;
  for (int j = 0; j < m; ++j) {
    if (static_cast<int>(target_families[j].size()) != n) {
      throw SizeMismatchError("instrument_from_witness: family " +
                              std::to_string(j) + " size");
    }
    const int d = target_families[j][0].dim();
    if (db == 0) db = d;
    if (d != db) {
      throw DimensionMismatchError(
          "instrument_from_witness: target dimensions differ across families");
    }
  }

  const int mt = m + (has_failure ? 1 : 0);
  for (int j = 0; j < mt; ++j) {
    const ComplexMatrix& pi = pi_blocks[j];
    if (pi.rows() != n || pi.cols() != n) {
      throw WitnessInconsistentError("instrument_from_witness: block " +
                                     std::to_string(j) + " shape");
    }
    for (int i = 0; i < n; ++i) {
      const double want = (j < m) ? p(i, j) : p.failure(i);
      if (std::abs(pi(i, i) - Complex(want, 0.0)) > 1e-6) {
        throw WitnessInconsistentError(
            "instrument_from_witness: block diagonal does not match the "
            "probability matrix");
      }
    }
  }
  // The witness must reproduce the source Gram matrix.
  for (int i = 0; i < n; ++i) {
    for (int k = 0; k < n; ++k) {
      Complex acc(0.0, 0.0);
      for (int j = 0; j < m; ++j) {
        acc += pi_blocks[j](i, k) *
               target_families[j][i].overlap(target_families[j][k]);
      }
      if (has_failure) acc += pi_blocks[m](i, k);
      if (std::abs(acc - sources[i].overlap(sources[k])) > 1e-6) {
        throw WitnessInconsistentError(
            "instrument_from_witness: witness does not reproduce the source "
            "Gram matrix");
      }
    }
  }

  // Factor each block; column i of factor j is sqrt(P_i^j) |phi_i^j>.
  std::vector<ComplexMatrix> factors;
  factors.reserve(mt);
  int env = 1;
  for (int j = 0; j < mt; ++j) {
    ComplexMatrix sym = 0.5 * (pi_blocks[j] + pi_blocks[j].adjoint());
    if (sym.cwiseAbs().maxCoeff() < 1e-14) {
      factors.push_back(ComplexMatrix::Zero(1, n));
    } else {
      factors.push_back(detail::gram_factor(sym));
    }
    env = std::max(env, static_cast<int>(factors.back().rows()));
  }
  env = std::max(env, detail::ceil_div(da, db * mt));

  std::optional<ComplexMatrix> gauge;
  if (gauge_seed != 0) {
    Prng gauge_rng(gauge_seed);
    gauge = gauge_rng.random_unitary(env);
  }

  ComplexMatrix x(da, n);
  ComplexMatrix w = ComplexMatrix::Zero(db * mt * env, n);
  const Ket failure_target = Ket::basis(db, 0);
  for (int i = 0; i < n; ++i) {
    x.col(i) = sources[i].amplitudes();
    for (int j = 0; j < mt; ++j) {
      ComplexVector c = ComplexVector::Zero(env);
      c.head(factors[j].rows()) = factors[j].col(i);
      if (gauge) c = (*gauge) * c;
      const ComplexVector& tgt = (j < m)
                                     ? target_families[j][i].amplitudes()
                                     : failure_target.amplitudes();
      for (int b = 0; b < db; ++b) {
        w.col(i).segment((b * mt + j) * env, env) += tgt(b) * c;
      }
    }
  }

  IsometryWitness iso;
  iso.map = detail::build_isometry(x, w, 1e-5);
  iso.dim_in = da;
  iso.dim_out = db;
  iso.outcome_dim = mt;
  iso.env_dim = env;
  iso.isometry_defect =
      (iso.map.adjoint() * iso.map -
       ComplexMatrix::Identity(da, da)).norm();

  std::vector<std::vector<ComplexMatrix>> slot_ops =
      branch_operators_from_isometry(iso);
  std::vector<OutcomeBranch> branches;
  branches.reserve(mt);
  for (int j = 0; j < mt; ++j) {
    OutcomeBranch br;
    br.label = (j < m) ? j + 1 : 0;
    br.ops = std::move(slot_ops[j]);
    branches.push_back(std::move(br));
  }
  return Instrument(da, db, std::move(branches));
}

// Instrument extracted from a Choi matrix for a pure-to-mixed instance:
// each Kraus operator of J becomes one outcome, and the induced pure-state
// decompositions sum_k P_i^k |b_i^k><b_i^k| = sigma_i are returned with it.
struct ChoiInstrument {
  Instrument instrument;
  // decompositions[i] lists (probability, post state) over the outcomes
  // that fire on source i.
  std::vector<std::vector<std::pair<double, Ket>>> decompositions;
};

inline ChoiInstrument instrument_from_choi(const StateSet& sources,
                                           const StateSet& targets,
                                           const ChoiMatrix& choi) {
  const int n = sources.size();
  if (targets.size() != n) {
    throw SizeMismatchError("instrument_from_choi: set sizes differ");
  }
  if (!sources.all_pure()) {
    throw SourceNotPureError("instrument_from_choi: sources must be pure");
  }
  if (choi.dim_in() != sources.dim() || choi.dim_out() != targets.dim()) {
    throw DimensionMismatchError("instrument_from_choi: dimension mismatch");
  }
  for (int i = 0; i < n; ++i) {
    const double gap = trace_norm(choi.apply_raw(sources.density(i).matrix()) -
                                  targets.density(i).matrix());
    if (gap > 1e-6) {
      throw WitnessInconsistentError(
          "instrument_from_choi: Choi matrix misses target " +
          std::to_string(i) + " by " + std::to_string(gap));
    }
  }

  const KrausChannel ch = kraus_from_choi(choi);
  std::vector<OutcomeBranch> branches;
  branches.reserve(ch.kraus_operators().size());
  int label = 1;
  for (const ComplexMatrix& a : ch.kraus_operators()) {
    branches.push_back(OutcomeBranch{label++, {a}});
  }
  Instrument inst(choi.dim_in(), choi.dim_out(), std::move(branches));

  std::vector<std::vector<std::pair<double, Ket>>> decomps(n);
  for (int i = 0; i < n; ++i) {
    const ComplexVector a_i = sources.ket(i).amplitudes();
    ComplexMatrix recon = ComplexMatrix::Zero(choi.dim_out(), choi.dim_out());
    for (const ComplexMatrix& a : ch.kraus_operators()) {
      const ComplexVector img = a * a_i;
      const double prob = img.squaredNorm();
      if (prob > 1e-12) {
        const Ket b = Ket::normalized(img);
        decomps[i].push_back({prob, b});
        recon += prob * b.projector();
      }
    }
    const double gap = trace_norm(recon - targets.density(i).matrix());
    if (gap > 1e-6) {
      throw WitnessInconsistentError(
          "instrument_from_choi: decomposition for source " +
          std::to_string(i) + " misses the target by " + std::to_string(gap));
    }
  }
  return ChoiInstrument{std::move(inst), std::move(decomps)};
}

// ---------------------------------------------------------------------------
// Verification.
// ---------------------------------------------------------------------------

struct ChannelVerification {
  double tolerance = 1e-6;
  std::vector<double> state_errors;  // trace-norm error per source
  double max_state_error = 0.0;
  double completeness_residual = 0.0;
  // Instrument checks (empty for plain channels):
  RealMatrix probability_errors;
  RealMatrix post_state_errors;
  double max_probability_error = 0.0;
  double max_post_state_error = 0.0;
  bool pass = false;
};

inline ChannelVerification verify_channel(const KrausChannel& ch,
                                          const StateSet& sources,
                                          const StateSet& targets,
                                          double tolerance = 1e-6) {
  if (sources.size() != targets.size()) {
    throw SizeMismatchError("verify_channel: set sizes differ");
  }
  ChannelVerification v;
  v.tolerance = tolerance;
  v.completeness_residual = ch.completeness_residual();
  for (int i = 0; i < sources.size(); ++i) {
    const double err = trace_norm(ch.apply_raw(sources.density(i).matrix()) -
                                  targets.density(i).matrix());
    v.state_errors.push_back(err);
    v.max_state_error = std::max(v.max_state_error, err);
  }
  v.pass = v.max_state_error <= tolerance && v.completeness_residual <= 1e-8;
  return v;
}

inline ChannelVerification verify_channel(const Instrument& inst,
                                          const StateSet& sources,
                                          const StateSet& targets,
                                          double tolerance = 1e-6) {
  return verify_channel(inst.total_channel(), sources, targets, tolerance);
}

// Per-outcome verification against declared target families and outcome
// probabilities.  Branch labels j >= 1 refer to target_families[j-1];
// label 0 is the failure branch, expected to prepare the first basis state
// with the leftover probability.  Post states are only checked for
// outcomes with probability above 1e-9.
inline ChannelVerification verify_channel(
    const Instrument& inst, const StateSet& sources,
    const std::vector<std::vector<Ket>>& target_families,
    const ProbabilityMatrix& p, double tolerance = 1e-6) {
  const int n = sources.size();
  const int m = static_cast<int>(target_families.size());
  if (p.n() != n || p.outcomes() != m) {
    throw BadProbabilityMatrixError("verify_channel: probability shape");
  }
  ChannelVerification v;
  v.tolerance = tolerance;
  v.completeness_residual = inst.completeness_residual();
  const int nb = inst.num_branches();
  v.probability_errors = RealMatrix::Zero(n, nb);
  v.post_state_errors = RealMatrix::Zero(n, nb);
  const Ket failure_target = Ket::basis(inst.dim_out(), 0);
  for (int i = 0; i < n; ++i) {
    const ComplexMatrix rho = sources.density(i).matrix();
    double total_err = 0.0;
    for (int br = 0; br < nb; ++br) {
      const int label = inst.branches()[br].label;
      double expected_p;
      const Ket* expected_state;
      if (label == 0) {
        expected_p = p.failure(i);
        expected_state = &failure_target;
      } else {
        if (label < 1 || label > m) {
          throw WitnessInconsistentError("verify_channel: branch label " +
                                         std::to_string(label) +
                                         " has no target family");
        }
        expected_p = p(i, label - 1);
        expected_state = &target_families[label - 1][i];
      }
      const ComplexMatrix out = inst.apply_branch_raw(br, rho);
      const double got_p = out.trace().real();
      const double perr = std::abs(got_p - expected_p);
      v.probability_errors(i, br) = perr;
      v.max_probability_error = std::max(v.max_probability_error, perr);
      if (expected_p > 1e-9) {
        const double serr =
            trace_norm(out / got_p - expected_state->projector());
        v.post_state_errors(i, br) = serr;
        v.max_post_state_error = std::max(v.max_post_state_error, serr);
        total_err = std::max(total_err, serr);
      }
      total_err = std::max(total_err, perr);
    }
    v.state_errors.push_back(total_err);
    v.max_state_error = std::max(v.max_state_error, total_err);
  }
  v.pass = v.max_probability_error <= tolerance &&
           v.max_post_state_error <= tolerance &&
           v.completeness_residual <= 1e-8;
  return v;
}

// ---------------------------------------------------------------------------
// Gauge-independence probe.
// ---------------------------------------------------------------------------

struct UniquenessReport {
  double max_difference = 0.0;  // trace-norm action gap on the source span
  int span_dim = 0;
  bool pass = false;
};

// Builds the channel for a feasible pure-to-pure instance twice, with
// independent environment gauges, and compares the actions on an
// operator basis of the span of the sources.  When no target overlap
// vanishes the transformation is unique there, so the gap must be tiny.
inline UniquenessReport uniqueness_probe_with_witness(
    const std::vector<Ket>& sources, const std::vector<Ket>& targets,
    const ComplexMatrix& witness) {
  const int n = static_cast<int>(sources.size());
  for (int i = 0; i < n; ++i) {
    for (int j = 0; j < n; ++j) {
      if (std::abs(targets[i].overlap(targets[j])) <= tol::zero_overlap) {
        throw OrthogonalTargetsError(
            "uniqueness_probe: target overlap (" + std::to_string(i) + "," +
            std::to_string(j) + ") vanishes; the channel is not unique");
      }
    }
  }
  const KrausChannel ch1 =
      channel_from_isometry(isometry_from_gram_witness(sources, targets,
                                                       witness, 0));
  const KrausChannel ch2 =
      channel_from_isometry(isometry_from_gram_witness(sources, targets,
                                                       witness,
                                                       0x9d5af3c2u));
  const int da = sources[0].dim();
  ComplexMatrix x(da, n);
  for (int i = 0; i < n; ++i) x.col(i) = sources[i].amplitudes();
  Eigen::JacobiSVD<ComplexMatrix> svd(x, Eigen::ComputeFullU);
  int r = 0;
  while (r < std::min<int>(da, n) && svd.singularValues()(r) > 1e-9) ++r;

  UniquenessReport rep;
  rep.span_dim = r;
  for (int a = 0; a < r; ++a) {
    for (int b = 0; b < r; ++b) {
      const ComplexMatrix e =
          svd.matrixU().col(a) * svd.matrixU().col(b).adjoint();
      const ComplexMatrix d1 = ch1.apply_raw(e);
      const ComplexMatrix d2 = ch2.apply_raw(e);
      rep.max_difference = std::max(rep.max_difference, trace_norm(d1 - d2));
    }
  }
  rep.pass = rep.max_difference <= 1e-7;
  return rep;
}

}  // namespace statemorph
