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

#include <algorithm>
#include <bit>
#include <cstdint>
#include <optional>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "statemorph/states.hpp"

namespace statemorph {

enum class FeasStatus { Feasible, Infeasible, Indeterminate };

inline const char* to_string(FeasStatus s) {
  switch (s) {
    case FeasStatus::Feasible: return "feasible";
    case FeasStatus::Infeasible: return "infeasible";
    default: return "indeterminate";
  }
}

// Result of a feasibility query.  `witness` is nonempty only for Feasible
// outcomes (one matrix per variable block) and has been re-validated by
// direct substitution.  Infeasible outcomes always carry a certificate
// description in `note`; Indeterminate outcomes report the best residual
// reached before the iteration gave up.
struct FeasibilityOutcome {
  FeasStatus status = FeasStatus::Indeterminate;
  std::vector<ComplexMatrix> witness;
  double margin = std::numeric_limits<double>::quiet_NaN();
  double residual = std::numeric_limits<double>::quiet_NaN();
  long iterations = 0;
  std::string note;
};

struct SolveOptions {
  double feas_tol = tol::feasibility;
  long max_iterations = 50000;
  // Convergence is declared when successive iterates move less than this.
  double move_tol = 1e-12;
  // Give up early when the best residual improves by less than
  // stall_improvement (relatively) over a window of stall_window iterations
  // while still far from feasible.  Iterates converging toward a feasible
  // set keep improving per window even at sublinear rates, while a residual
  // plateau (positive distance between the cone and the affine set) levels
  // off within a couple of windows.
  long stall_window = 300;
  double stall_improvement = 1e-2;
  // First look for a witness whose blocks clear the PSD cone by this margin
  // (substituting X = Y + shift*I); such witnesses survive later exact
  // pinning of fixed entries.  When the inflated pass cannot decide, the
  // plain problem is solved as a fallback.  Zero disables the extra pass.
  double interior_shift = 1e-5;
};

// One affine condition sum_b tr(coeff[b] * X_b) (=|>=) target over the
// block-diagonal Hermitian variable (X_1, ..., X_B).  Coefficients must be
// Hermitian; blocks without a coefficient entry get a zero matrix.
struct AffineConstraint {
  enum class Rel { Eq, Ge };
  std::vector<ComplexMatrix> coeff;
  double target = 0.0;
  Rel rel = Rel::Eq;
};

// Feasibility problem: does a PSD block-diagonal X satisfy all constraints?
struct AffinePSDProblem {
  std::vector<int> block_dims;
  std::vector<AffineConstraint> constraints;
  // Optional warm start (same shapes as block_dims); projected onto the
  // affine set before iterating.
  std::vector<ComplexMatrix> initial;

  AffineConstraint& new_constraint(double target,
                                   AffineConstraint::Rel rel =
                                       AffineConstraint::Rel::Eq) {
    AffineConstraint c;
    c.coeff.reserve(block_dims.size());
    for (int k : block_dims) c.coeff.push_back(ComplexMatrix::Zero(k, k));
    c.target = target;
    c.rel = rel;
    constraints.push_back(std::move(c));
    return constraints.back();
  }
};

namespace detail {

// ---------------------------------------------------------------------------
// Isometric real coordinates for Hermitian matrices.  A k x k Hermitian H
// maps to k^2 reals: the diagonal, then (sqrt2 Re H_ij, sqrt2 Im H_ij) for
// i < j in row-major order.  The scaling makes tr(AB) the Euclidean dot
// product of the coordinate vectors, so orthogonal projections agree in
// both pictures.
// ---------------------------------------------------------------------------

inline constexpr double kSqrt2 = 1.4142135623730950488;

inline int herm_coord_count(int k) { return k * k; }

inline void herm_to_coords(const ComplexMatrix& h, double* x) {
  const int k = static_cast<int>(h.rows());
  int idx = 0;
  for (int i = 0; i < k; ++i) x[idx++] = h(i, i).real();
  for (int i = 0; i < k; ++i) {
    for (int j = i + 1; j < k; ++j) {
      x[idx++] = kSqrt2 * h(i, j).real();
      x[idx++] = kSqrt2 * h(i, j).imag();
    }
  }
}

inline ComplexMatrix coords_to_herm(const double* x, int k) {
  ComplexMatrix h(k, k);
  int idx = 0;
  for (int i = 0; i < k; ++i) h(i, i) = x[idx++];
  for (int i = 0; i < k; ++i) {
    for (int j = i + 1; j < k; ++j) {
      const double re = x[idx++] / kSqrt2;
      const double im = x[idx++] / kSqrt2;
      h(i, j) = Complex(re, im);
      h(j, i) = Complex(re, -im);
    }
  }
  return h;
}

// Coordinate indices of the diagonal entry (i,i) and of the off-diagonal
// pair (i,j), i < j, within a block of dimension k.
inline int diag_coord(int /*k*/, int i) { return i; }
inline std::pair<int, int> offdiag_coords(int k, int i, int j) {
  // Pairs are laid out row-major after the k diagonal slots.
  const int pair_index = i * k - i * (i + 1) / 2 - i + (j - i - 1);
  const int base = k + 2 * pair_index;
  return {base, base + 1};
}

struct BlockLayout {
  std::vector<int> dims;
  std::vector<int> offsets;  // coordinate offset of each block
  int total = 0;

  explicit BlockLayout(const std::vector<int>& d) : dims(d) {
    offsets.reserve(d.size());
    for (int k : d) {
      offsets.push_back(total);
      total += herm_coord_count(k);
    }
  }
};

inline std::vector<ComplexMatrix> coords_to_blocks(const RealVector& x,
                                                   const BlockLayout& lay) {
  std::vector<ComplexMatrix> out;
  out.reserve(lay.dims.size());
  for (std::size_t b = 0; b < lay.dims.size(); ++b) {
    out.push_back(coords_to_herm(x.data() + lay.offsets[b], lay.dims[b]));
  }
  return out;
}

// Projection onto the PSD cone (per block): eigenvalue clipping.
inline void project_psd(RealVector& x, const BlockLayout& lay) {
  for (std::size_t b = 0; b < lay.dims.size(); ++b) {
    const int k = lay.dims[b];
    double* base = x.data() + lay.offsets[b];
    if (k == 1) {
      base[0] = std::max(base[0], 0.0);
      continue;
    }
    ComplexMatrix h = coords_to_herm(base, k);
    Eigen::SelfAdjointEigenSolver<ComplexMatrix> es(h);
    RealVector lam = es.eigenvalues();
    bool clipped = false;
    for (int i = 0; i < k; ++i) {
      if (lam(i) < 0.0) {
        lam(i) = 0.0;
        clipped = true;
      }
    }
    if (clipped) {
      h = es.eigenvectors() * lam.asDiagonal() * es.eigenvectors().adjoint();
      herm_to_coords(h, base);
    }
  }
}

// Maximal cliques of a graph on <= 64 vertices (Bron-Kerbosch with pivot).
inline void max_cliques(std::uint64_t r, std::uint64_t p, std::uint64_t x,
                        const std::vector<std::uint64_t>& adj,
                        std::vector<std::uint64_t>& out, std::size_t cap) {
  if (out.size() >= cap) return;
  if (p == 0 && x == 0) {
    if (r != 0) out.push_back(r);
    return;
  }
  // Pivot on the vertex covering most of p.
  int pivot = -1;
  int best = -1;
  std::uint64_t px = p | x;
  for (std::uint64_t s = px; s;) {
    const int v = std::countr_zero(s);
    s &= s - 1;
    const int deg = std::popcount(p & adj[v]);
    if (deg > best) {
      best = deg;
      pivot = v;
    }
  }
  std::uint64_t candidates = p & ~adj[pivot];
  for (std::uint64_t s = candidates; s;) {
    const int v = std::countr_zero(s);
    s &= s - 1;
    const std::uint64_t bit = 1ULL << v;
    max_cliques(r | bit, p & adj[v], x & adj[v], adj, out, cap);
    p &= ~bit;
    x |= bit;
  }
}

inline std::string index_list(std::uint64_t mask) {
  std::string s = "{";
  bool first = true;
  for (std::uint64_t m = mask; m;) {
    const int v = std::countr_zero(m);
    m &= m - 1;
    if (!first) s += ",";
    s += std::to_string(v);
    first = false;
  }
  return s + "}";
}

}  // namespace detail

// Validates a candidate witness by direct substitution: every block PSD
// within feas_tol and every constraint satisfied within feas_tol.
inline bool validate_witness(const std::vector<ComplexMatrix>& blocks,
                             const std::vector<AffineConstraint>& constraints,
                             double feas_tol, double* margin_out = nullptr,
                             double* residual_out = nullptr) {
  double margin = std::numeric_limits<double>::infinity();
  for (const ComplexMatrix& w : blocks) {
    margin = std::min(margin, psd_margin(w));
  }
  double residual = 0.0;
  for (const AffineConstraint& c : constraints) {
    double v = -c.target;
    for (std::size_t b = 0; b < blocks.size(); ++b) {
      v += (c.coeff[b] * blocks[b]).trace().real();
    }
    const double viol =
        (c.rel == AffineConstraint::Rel::Eq) ? std::abs(v) : std::max(-v, 0.0);
    residual = std::max(residual, viol);
  }
  if (margin_out) *margin_out = margin;
  if (residual_out) *residual_out = residual;
  return margin >= -feas_tol && residual <= feas_tol;
}

namespace detail {

// One feasibility pass at a fixed interior shift.  The problem is solved in
// the translated variable Y = X - shift*I (per block); constraint targets
// shrink by shift * sum of coefficient traces, which keeps the shift vector
// inside the row space of the constraint matrix.  Consequences used below:
// the least-squares residual of the affine system is the same as for the
// plain problem, the determined-coordinate set is the same, and determined
// values translate back by adding shift*I -- so Infeasible certificates
// produced here are certificates for the plain (shift = 0) problem too.
inline FeasibilityOutcome affine_psd_pass(const AffinePSDProblem& input,
                                          const SolveOptions& opt,
                                          double shift) {
  // Desugar inequalities: tr(CX) >= b becomes tr(CX) - s = b with a fresh
  // 1x1 PSD slack block s.
  AffinePSDProblem prob;
  prob.block_dims = input.block_dims;
  prob.constraints = input.constraints;
  const std::size_t original_blocks = input.block_dims.size();
  for (auto& c : prob.constraints) {
    if (c.coeff.size() != original_blocks) {
      throw ShapeMismatchError(
          "affine_psd_feasibility: constraint coefficient count");
    }
    for (std::size_t b = 0; b < original_blocks; ++b) {
      if (c.coeff[b].rows() != input.block_dims[b] ||
          c.coeff[b].cols() != input.block_dims[b]) {
        throw ShapeMismatchError(
            "affine_psd_feasibility: coefficient shape for block " +
            std::to_string(b));
      }
      if (hermiticity_defect(c.coeff[b]) > tol::hermitian_reject) {
        throw NonHermitianError(
            "affine_psd_feasibility: non-Hermitian coefficient");
      }
    }
  }
  std::size_t num_slacks = 0;
  for (auto& c : prob.constraints) {
    if (c.rel == AffineConstraint::Rel::Ge) ++num_slacks;
  }
  if (num_slacks > 0) {
    std::size_t slack_block = original_blocks;
    for (auto& c : prob.constraints) {
      if (c.rel == AffineConstraint::Rel::Ge) {
        prob.block_dims.push_back(1);
        ++slack_block;
      }
    }
    slack_block = original_blocks;
    for (auto& c : prob.constraints) {
      for (std::size_t b = original_blocks; b < prob.block_dims.size(); ++b) {
        c.coeff.push_back(ComplexMatrix::Zero(1, 1));
      }
      if (c.rel == AffineConstraint::Rel::Ge) {
        c.coeff[slack_block](0, 0) = -1.0;
        c.rel = AffineConstraint::Rel::Eq;
        ++slack_block;
      }
    }
  }
  if (shift > 0.0) {
    for (auto& c : prob.constraints) {
      double trace_sum = 0.0;
      for (const ComplexMatrix& coeff : c.coeff) {
        trace_sum += coeff.trace().real();
      }
      c.target -= shift * trace_sum;
    }
  }

  const BlockLayout lay(prob.block_dims);
  const int K = lay.total;
  const int m = static_cast<int>(prob.constraints.size());

  // Coordinates of shift*I on every block; added back whenever iterates are
  // interpreted in the original variable X.
  RealVector shift_coords = RealVector::Zero(K);
  if (shift > 0.0) {
    for (std::size_t blk = 0; blk < prob.block_dims.size(); ++blk) {
      for (int i = 0; i < prob.block_dims[blk]; ++i) {
        shift_coords(lay.offsets[blk] + diag_coord(prob.block_dims[blk], i)) =
            shift;
      }
    }
  }

  FeasibilityOutcome out;

  auto finish_feasible = [&](const RealVector& coords) -> bool {
    const RealVector unshifted = coords + shift_coords;
    std::vector<ComplexMatrix> blocks = coords_to_blocks(unshifted, lay);
    double margin = 0.0, residual = 0.0;
    // Independent re-validation against the *original* constraints.
    std::vector<ComplexMatrix> original(blocks.begin(),
                                        blocks.begin() + original_blocks);
    if (!validate_witness(original, input.constraints, opt.feas_tol, &margin,
                          &residual)) {
      return false;
    }
    out.status = FeasStatus::Feasible;
    out.witness = std::move(original);
    out.margin = margin;
    out.residual = residual;
    return true;
  };

  if (m == 0) {
    RealVector zero = RealVector::Zero(K);
    finish_feasible(zero);
    out.note = "no constraints";
    return out;
  }

  // Assemble the real linear system A x = b.
  RealMatrix A = RealMatrix::Zero(m, K);
  RealVector b(m);
  {
    RealVector row(K);
    for (int c = 0; c < m; ++c) {
      int off = 0;
      for (std::size_t blk = 0; blk < prob.block_dims.size(); ++blk) {
        detail::herm_to_coords(prob.constraints[c].coeff[blk],
                               row.data() + off);
        off += detail::herm_coord_count(prob.block_dims[blk]);
      }
      A.row(c) = row;
      b(c) = prob.constraints[c].target;
    }
  }

  Eigen::CompleteOrthogonalDecomposition<RealMatrix> cod(A);
  RealVector x0 = cod.solve(b);
  const double b_scale = std::max(1.0, b.cwiseAbs().maxCoeff());
  const double lin_residual = (A * x0 - b).cwiseAbs().maxCoeff();
  if (lin_residual > 1e-9 * b_scale) {
    out.status = FeasStatus::Infeasible;
    out.residual = lin_residual;
    std::ostringstream note;
    note << "affine constraint system inconsistent (least-squares residual "
         << lin_residual << ")";
    out.note = note.str();
    return out;
  }

  // Which coordinates take the same value in every solution of A x = b?
  Eigen::FullPivLU<RealMatrix> lu(A);
  const RealMatrix kernel = lu.kernel();
  std::vector<bool> determined(K, true);
  bool fully_determined = true;
  if (kernel.cols() > 0 && kernel.cwiseAbs().maxCoeff() > 0.0) {
    for (int c = 0; c < kernel.cols(); ++c) {
      const double nrm = kernel.col(c).norm();
      if (nrm < 1e-14) continue;
      for (int i = 0; i < K; ++i) {
        if (std::abs(kernel(i, c)) / nrm > 1e-9) determined[i] = false;
      }
    }
  }
  for (int i = 0; i < K; ++i) fully_determined = fully_determined && determined[i];

  // Certificate scan: maximal determined principal submatrices, per block,
  // evaluated in the original variable.
  const RealVector x0_plain = x0 + shift_coords;
  for (std::size_t blk = 0; blk < prob.block_dims.size(); ++blk) {
    const int k = prob.block_dims[blk];
    if (k > 64) continue;
    const int off = lay.offsets[blk];
    std::uint64_t verts = 0;
    for (int i = 0; i < k; ++i) {
      if (determined[off + detail::diag_coord(k, i)]) verts |= 1ULL << i;
    }
    if (verts == 0) continue;
    std::vector<std::uint64_t> adj(k, 0);
    for (int i = 0; i < k; ++i) {
      if (!(verts >> i & 1)) continue;
      for (int j = i + 1; j < k; ++j) {
        if (!(verts >> j & 1)) continue;
        const auto [re, im] = detail::offdiag_coords(k, i, j);
        if (determined[off + re] && determined[off + im]) {
          adj[i] |= 1ULL << j;
          adj[j] |= 1ULL << i;
        }
      }
    }
    std::vector<std::uint64_t> cliques;
    detail::max_cliques(0, verts, 0, adj, cliques, 5000);
    const ComplexMatrix block0 =
        detail::coords_to_herm(x0_plain.data() + off, k);
    for (std::uint64_t clique : cliques) {
      std::vector<int> idx;
      for (std::uint64_t s = clique; s;) {
        idx.push_back(std::countr_zero(s));
        s &= s - 1;
      }
      ComplexMatrix sub(idx.size(), idx.size());
      for (std::size_t a = 0; a < idx.size(); ++a) {
        for (std::size_t c = 0; c < idx.size(); ++c) {
          sub(a, c) = block0(idx[a], idx[c]);
        }
      }
      const double lam = psd_margin(sub);
      if (lam < -10.0 * opt.feas_tol) {
        out.status = FeasStatus::Infeasible;
        out.margin = lam;
        out.residual = lin_residual;
        std::ostringstream note;
        note << "determined principal submatrix " << detail::index_list(clique)
             << " of block " << blk << " has eigenvalue " << lam;
        out.note = note.str();
        return out;
      }
    }
  }

  if (fully_determined) {
    // The solution of the affine system is unique; its PSD margin decides.
    if (finish_feasible(x0)) {
      out.note = "fully determined by constraints";
      return out;
    }
    std::vector<ComplexMatrix> blocks = detail::coords_to_blocks(x0_plain, lay);
    double margin = std::numeric_limits<double>::infinity();
    for (const auto& w : blocks) margin = std::min(margin, psd_margin(w));
    out.status = (margin < -10.0 * opt.feas_tol) ? FeasStatus::Infeasible
                                                 : FeasStatus::Indeterminate;
    out.margin = margin;
    out.residual = lin_residual;
    out.note = (out.status == FeasStatus::Infeasible)
                   ? "fully determined by constraints, not PSD"
                   : "fully determined by constraints, margin in tolerance band";
    return out;
  }

  // Dykstra alternating projections between the PSD cone and the affine set.
  RealVector x = x0;
  if (!input.initial.empty()) {
    if (input.initial.size() != original_blocks) {
      throw ShapeMismatchError("affine_psd_feasibility: initial block count");
    }
    RealVector init = RealVector::Zero(K);
    for (std::size_t blk = 0; blk < original_blocks; ++blk) {
      detail::herm_to_coords(input.initial[blk], init.data() + lay.offsets[blk]);
    }
    init -= shift_coords;
    x = init - cod.solve(RealVector(A * init - b));
  }
  RealVector p = RealVector::Zero(K);
  RealVector q = RealVector::Zero(K);
  RealVector y(K), z(K), x_new(K);

  double best_residual = std::numeric_limits<double>::infinity();
  double window_best = best_residual;
  for (long iter = 1; iter <= opt.max_iterations; ++iter) {
    out.iterations = iter;
    y = x + p;
    detail::project_psd(y, lay);
    p = x + p - y;

    const double aff_res_y = (A * y - b).cwiseAbs().maxCoeff();
    best_residual = std::min(best_residual, aff_res_y);
    if (aff_res_y <= opt.feas_tol && finish_feasible(y)) {
      return out;
    }

    z = y + q;
    x_new = z - cod.solve(RealVector(A * z - b));
    q = z - x_new;

    if (iter % 16 == 0) {
      // The affine-side iterate satisfies the constraints; check its cone
      // distance directly now and then.
      std::vector<ComplexMatrix> blocks = detail::coords_to_blocks(x_new, lay);
      double margin = std::numeric_limits<double>::infinity();
      for (const auto& w : blocks) margin = std::min(margin, psd_margin(w));
      if (margin >= -opt.feas_tol && finish_feasible(x_new)) {
        return out;
      }
    }

    const double movement = (x_new - x).norm();
    x = x_new;
    if (movement < opt.move_tol) {
      out.status = FeasStatus::Indeterminate;
      out.residual = best_residual;
      out.note = "iteration stalled (movement below move_tol)";
      return out;
    }
    if (opt.stall_window > 0 && iter % opt.stall_window == 0) {
      if (best_residual > 10.0 * opt.feas_tol &&
          best_residual > (1.0 - opt.stall_improvement) * window_best) {
        out.status = FeasStatus::Indeterminate;
        out.residual = best_residual;
        out.note = "no residual progress over stall window";
        return out;
      }
      window_best = best_residual;
    }
  }
  out.status = FeasStatus::Indeterminate;
  out.residual = best_residual;
  out.note = "iteration budget exhausted";
  return out;
}

}  // namespace detail

// Decides feasibility of { X block-diagonal PSD : affine constraints } by
// alternating projections with Dykstra corrections between the PSD cone and
// the affine subspace.  Infeasible is only reported with a certificate:
// either the affine system itself has no solution (positive least-squares
// residual), or some principal submatrix whose entries are uniquely
// determined by the constraints fails to be PSD by a clear margin.
//
// When opt.interior_shift > 0 an inflated pass runs first, looking for a
// witness that clears the PSD cone by that margin; if it can neither find
// one nor certify infeasibility, the plain problem decides.
inline FeasibilityOutcome affine_psd_feasibility(const AffinePSDProblem& input,
                                                 const SolveOptions& opt =
                                                     SolveOptions{}) {
  if (opt.interior_shift > 0.0) {
    FeasibilityOutcome inflated =
        detail::affine_psd_pass(input, opt, opt.interior_shift);
    if (inflated.status != FeasStatus::Indeterminate) return inflated;
  }
  return detail::affine_psd_pass(input, opt, 0.0);
}

// ---------------------------------------------------------------------------
// PSD matrix completion.
// ---------------------------------------------------------------------------

// A Hermitian matrix with some entries fixed.  Fixing (i,j) also fixes
// (j,i) to the conjugate; fixed diagonal entries must be real.
class PartialHermitian {
 public:
  explicit PartialHermitian(int n)
      : n_(n),
        values_(ComplexMatrix::Zero(n, n)),
        fixed_(Eigen::Matrix<bool, Eigen::Dynamic, Eigen::Dynamic>::Constant(
            n, n, false)) {
    if (n < 1) throw DimensionMismatchError("PartialHermitian: n must be >= 1");
  }

  static PartialHermitian all_fixed(const ComplexMatrix& m) {
    detail::require_hermitian(m, "PartialHermitian::all_fixed");
    PartialHermitian p(static_cast<int>(m.rows()));
    for (int i = 0; i < p.n_; ++i) {
      for (int j = i; j < p.n_; ++j) p.fix(i, j, m(i, j));
    }
    return p;
  }

  void fix(int i, int j, Complex value) {
    if (i < 0 || j < 0 || i >= n_ || j >= n_) {
      throw DimensionMismatchError("PartialHermitian::fix: index out of range");
    }
    if (i == j) {
      if (std::abs(value.imag()) > tol::zero_overlap) {
        throw NonHermitianError(
            "PartialHermitian::fix: complex diagonal entry");
      }
      value = Complex(value.real(), 0.0);
    }
    values_(i, j) = value;
    values_(j, i) = std::conj(value);
    fixed_(i, j) = fixed_(j, i) = true;
  }

  int size() const { return n_; }
  bool is_fixed(int i, int j) const { return fixed_(i, j); }
  Complex value(int i, int j) const { return values_(i, j); }

  bool fully_fixed() const {
    for (int i = 0; i < n_; ++i) {
      for (int j = i; j < n_; ++j) {
        if (!fixed_(i, j)) return false;
      }
    }
    return true;
  }

  const ComplexMatrix& known_values() const { return values_; }

 private:
  int n_;
  ComplexMatrix values_;
  Eigen::Matrix<bool, Eigen::Dynamic, Eigen::Dynamic> fixed_;
};

// Does a PSD matrix with the given fixed entries exist?  Feasible witnesses
// match the fixed entries exactly.
inline FeasibilityOutcome psd_complete(const PartialHermitian& part,
                                       const SolveOptions& opt =
                                           SolveOptions{}) {
  const int n = part.size();
  FeasibilityOutcome out;

  auto banded_status = [&](double margin) {
    if (margin >= -opt.feas_tol) return FeasStatus::Feasible;
    if (margin < -10.0 * opt.feas_tol) return FeasStatus::Infeasible;
    return FeasStatus::Indeterminate;
  };

  if (part.fully_fixed()) {
    const ComplexMatrix m = part.known_values();
    double margin;
    if (n == 2) {
      // Closed form for the 2x2 case.
      const double a = m(0, 0).real();
      const double d = m(1, 1).real();
      const double h = 0.5 * (a - d);
      margin = 0.5 * (a + d) - std::sqrt(h * h + std::norm(m(0, 1)));
    } else {
      margin = psd_margin(m);
    }
    out.margin = margin;
    out.residual = 0.0;
    out.status = banded_status(margin);
    switch (out.status) {
      case FeasStatus::Feasible:
        out.witness = {m};
        out.note = "fully fixed";
        break;
      case FeasStatus::Infeasible:
        out.note = "fully fixed matrix has eigenvalue " +
                   std::to_string(margin);
        break;
      default:
        out.note = "fully fixed matrix margin in tolerance band";
    }
    return out;
  }

  AffinePSDProblem prob;
  prob.block_dims = {n};
  for (int i = 0; i < n; ++i) {
    for (int j = i; j < n; ++j) {
      if (!part.is_fixed(i, j)) continue;
      const Complex v = part.value(i, j);
      if (i == j) {
        AffineConstraint& c = prob.new_constraint(v.real());
        c.coeff[0](i, i) = 1.0;
      } else {
        AffineConstraint& cre = prob.new_constraint(v.real());
        cre.coeff[0](i, j) = 0.5;
        cre.coeff[0](j, i) = 0.5;
        AffineConstraint& cim = prob.new_constraint(v.imag());
        cim.coeff[0](i, j) = Complex(0.0, 0.5);
        cim.coeff[0](j, i) = Complex(0.0, -0.5);
      }
    }
  }
  prob.initial = {part.known_values()};

  out = affine_psd_feasibility(prob, opt);
  if (out.status != FeasStatus::Feasible) return out;

  // Pin the fixed entries exactly and re-validate the margin.
  ComplexMatrix w = out.witness[0];
  for (int i = 0; i < n; ++i) {
    for (int j = 0; j < n; ++j) {
      if (part.is_fixed(i, j)) w(i, j) = part.value(i, j);
    }
  }
  const double margin = psd_margin(w);
  if (margin < -opt.feas_tol) {
    out.status = FeasStatus::Indeterminate;
    out.witness.clear();
    out.margin = margin;
    out.note = "witness margin degraded after pinning fixed entries";
    return out;
  }
  out.witness = {std::move(w)};
  out.margin = margin;
  return out;
}

// ---------------------------------------------------------------------------
// Hadamard-sum feasibility (multi-outcome Gram condition).
// ---------------------------------------------------------------------------

enum class MultiProbMode { Exact, Subnormalized };

// Row i gives the outcome distribution for source state i.  Rows must be
// nonnegative with sums at most 1; in exact mode the sums must equal 1.
class ProbabilityMatrix {
 public:
  explicit ProbabilityMatrix(RealMatrix p) : p_(std::move(p)) {
    if (p_.rows() < 1 || p_.cols() < 1) {
      throw BadProbabilityMatrixError("ProbabilityMatrix: empty matrix");
    }
    for (Eigen::Index i = 0; i < p_.rows(); ++i) {
      double sum = 0.0;
      for (Eigen::Index j = 0; j < p_.cols(); ++j) {
        if (p_(i, j) < -1e-12 || p_(i, j) > 1.0 + 1e-12) {
          throw BadProbabilityMatrixError(
              "ProbabilityMatrix: entry out of [0,1]");
        }
        p_(i, j) = std::clamp(p_(i, j), 0.0, 1.0);
        sum += p_(i, j);
      }
      if (sum > 1.0 + 1e-9) {
        throw BadProbabilityMatrixError("ProbabilityMatrix: row " +
                                        std::to_string(i) + " sums to " +
                                        std::to_string(sum));
      }
    }
  }

  int n() const { return static_cast<int>(p_.rows()); }
  int outcomes() const { return static_cast<int>(p_.cols()); }
  double operator()(int i, int j) const { return p_(i, j); }
  const RealMatrix& matrix() const { return p_; }

  double row_sum(int i) const { return p_.row(i).sum(); }
  // Probability of the failure outcome for source i.
  double failure(int i) const {
    return std::clamp(1.0 - row_sum(i), 0.0, 1.0);
  }

  bool rows_exact() const {
    for (int i = 0; i < n(); ++i) {
      if (std::abs(row_sum(i) - 1.0) > 1e-9) return false;
    }
    return true;
  }

  void require_exact() const {
    if (!rows_exact()) {
      throw BadProbabilityMatrixError(
          "ProbabilityMatrix: exact mode requires unit row sums");
    }
  }

 private:
  RealMatrix p_;
};

// Feasibility of G_A = sum_j Pi^j o G_B^j with diag(Pi^j) = P(.,j) and all
// Pi^j PSD.  Subnormalized mode asks instead for
// G_A - sum_j Pi^j o G_B^j PSD, realized with an explicit slack block that
// is returned as the *last* witness entry (it plays the role of the
// failure-outcome Gram data).
inline FeasibilityOutcome hadamard_sum_feasibility(
    const GramMatrix& g_a, const std::vector<GramMatrix>& targets,
    const ProbabilityMatrix& p, MultiProbMode mode,
    const SolveOptions& opt = SolveOptions{}) {
  const int n = g_a.size();
  const int m = static_cast<int>(targets.size());
  if (m < 1) throw SizeMismatchError("hadamard_sum_feasibility: no targets");
  for (const GramMatrix& g : targets) {
    if (g.size() != n) {
      throw SizeMismatchError("hadamard_sum_feasibility: target Gram size");
    }
  }
  if (p.n() != n || p.outcomes() != m) {
    throw BadProbabilityMatrixError(
        "hadamard_sum_feasibility: probability matrix is " +
        std::to_string(p.n()) + "x" + std::to_string(p.outcomes()) +
        ", expected " + std::to_string(n) + "x" + std::to_string(m));
  }
  if (mode == MultiProbMode::Exact) p.require_exact();

  const bool slack = (mode == MultiProbMode::Subnormalized);
  const int blocks = m + (slack ? 1 : 0);

  AffinePSDProblem prob;
  prob.block_dims.assign(blocks, n);

  // diag(Pi^j) = P(., j)
  for (int j = 0; j < m; ++j) {
    for (int i = 0; i < n; ++i) {
      AffineConstraint& c = prob.new_constraint(p(i, j));
      c.coeff[j](i, i) = 1.0;
    }
  }
  if (slack) {
    // sum_j Pi^j_ii + S_ii = 1 pins the slack diagonal to the failure
    // probabilities.
    for (int i = 0; i < n; ++i) {
      AffineConstraint& c = prob.new_constraint(1.0);
      for (int j = 0; j < m; ++j) c.coeff[j](i, i) = 1.0;
      c.coeff[m](i, i) = 1.0;
    }
  }
  // Off-diagonal reconstruction, real and imaginary parts separately.
  for (int i = 0; i < n; ++i) {
    for (int k = i + 1; k < n; ++k) {
      const Complex a = g_a(i, k);
      AffineConstraint& cre = prob.new_constraint(a.real());
      AffineConstraint& cim = prob.new_constraint(a.imag());
      for (int j = 0; j <= (slack ? m : m - 1); ++j) {
        const Complex g = (j < m) ? targets[j](i, k) : Complex(1.0, 0.0);
        // Re(g X_ik) = g_r Re X_ik - g_i Im X_ik, and similarly for Im.
        cre.coeff[j](i, k) += 0.5 * Complex(g.real(), -g.imag());
        cre.coeff[j](k, i) += 0.5 * Complex(g.real(), g.imag());
        cim.coeff[j](i, k) += 0.5 * Complex(g.imag(), g.real());
        cim.coeff[j](k, i) += 0.5 * Complex(g.imag(), -g.real());
      }
    }
  }

  // Warm start: diagonal probability blocks.
  prob.initial.reserve(blocks);
  for (int j = 0; j < m; ++j) {
    ComplexMatrix d = ComplexMatrix::Zero(n, n);
    for (int i = 0; i < n; ++i) d(i, i) = p(i, j);
    prob.initial.push_back(std::move(d));
  }
  if (slack) {
    ComplexMatrix d = ComplexMatrix::Zero(n, n);
    for (int i = 0; i < n; ++i) d(i, i) = p.failure(i);
    prob.initial.push_back(std::move(d));
  }

  FeasibilityOutcome out = affine_psd_feasibility(prob, opt);
  if (out.status != FeasStatus::Feasible) return out;

  // Pin the probability diagonals exactly, then re-validate.
  for (int j = 0; j < m; ++j) {
    for (int i = 0; i < n; ++i) out.witness[j](i, i) = p(i, j);
  }
  if (slack) {
    for (int i = 0; i < n; ++i) out.witness[m](i, i) = p.failure(i);
  }
  double margin = std::numeric_limits<double>::infinity();
  for (const ComplexMatrix& w : out.witness) {
    margin = std::min(margin, psd_margin(w));
  }
  ComplexMatrix recon = ComplexMatrix::Zero(n, n);
  for (int j = 0; j < m; ++j) {
    recon += out.witness[j].cwiseProduct(targets[j].matrix());
  }
  double residual;
  if (slack) {
    recon += out.witness[m];
    residual = (g_a.matrix() - recon).cwiseAbs().maxCoeff();
  } else {
    residual = (g_a.matrix() - recon).cwiseAbs().maxCoeff();
  }
  if (margin < -opt.feas_tol || residual > opt.feas_tol) {
    out.status = FeasStatus::Indeterminate;
    out.witness.clear();
    out.margin = margin;
    out.residual = residual;
    out.note = "witness degraded after pinning probability diagonal";
    return out;
  }
  out.margin = margin;
  out.residual = residual;
  if (slack) out.note = "witness blocks: outcome factors then failure slack";
  return out;
}

}  // namespace statemorph
