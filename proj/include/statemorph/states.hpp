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
#include <optional>
#include <queue>
#include <string>
#include <utility>
#include <vector>

#include "statemorph/matrix.hpp"

namespace statemorph {

// A normalized pure state.  The stored amplitudes are renormalized exactly
// on construction; inputs that are not unit vectors to begin with (beyond
// 1e-8) are rejected rather than silently rescaled.
class Ket {
 public:
  explicit Ket(ComplexVector amplitudes) {
    if (amplitudes.size() == 0) {
      throw DimensionMismatchError("Ket: empty amplitude vector");
    }
    const double nrm = amplitudes.norm();
    if (std::abs(nrm - 1.0) > 1e-8) {
      throw DimensionMismatchError("Ket: norm " + std::to_string(nrm) +
                                   " is not 1");
    }
    v_ = amplitudes / nrm;
  }

  // Normalizes an arbitrary nonzero vector.
  static Ket normalized(const ComplexVector& v) {
    const double nrm = v.norm();
    if (nrm < 1e-12) {
      throw DimensionMismatchError("Ket::normalized: zero vector");
    }
    return Ket(ComplexVector(v / nrm));
  }

  static Ket basis(int dim, int index) {
    ComplexVector v = ComplexVector::Zero(dim);
    v(index) = 1.0;
    return Ket(std::move(v));
  }

  int dim() const { return static_cast<int>(v_.size()); }
  const ComplexVector& amplitudes() const { return v_; }
  Complex overlap(const Ket& other) const { return v_.dot(other.v_); }
  ComplexMatrix projector() const { return v_ * v_.adjoint(); }

 private:
  ComplexVector v_;
};

inline Ket tensor(const Ket& a, const Ket& b) {
  ComplexVector out(a.dim() * b.dim());
  for (int i = 0; i < a.dim(); ++i) {
    out.segment(i * b.dim(), b.dim()) = a.amplitudes()(i) * b.amplitudes();
  }
  return Ket(std::move(out));
}

// A density matrix: Hermitian, PSD, unit trace.  The representation is
// symmetrized and trace-normalized after validation.
class DensityMatrix {
 public:
  explicit DensityMatrix(ComplexMatrix m) {
    detail::require_square(m, "DensityMatrix");
    const double defect = hermiticity_defect(m);
    if (defect > tol::hermitian_reject) {
      throw NonHermitianError("DensityMatrix: asymmetry " +
                              std::to_string(defect));
    }
    m = 0.5 * (m + m.adjoint());
    const HermitianEig eg = eigh(m);
    if (eg.values(0) < -tol::psd_accept * spectral_scale(eg.values)) {
      throw NotPSDError("DensityMatrix: eigenvalue " +
                        std::to_string(eg.values(0)));
    }
    const double tr = m.trace().real();
    if (std::abs(tr - 1.0) > 1e-9) {
      throw Error("DensityMatrix: trace " + std::to_string(tr) + " is not 1");
    }
    m_ = m / tr;
  }

  static DensityMatrix from_ket(const Ket& k) {
    return DensityMatrix(k.projector());
  }

  int dim() const { return static_cast<int>(m_.rows()); }
  const ComplexMatrix& matrix() const { return m_; }
  double purity() const { return (m_ * m_).trace().real(); }
  bool is_pure() const { return purity() >= 1.0 - tol::purity_gap; }

  // The dominant eigenvector; only meaningful when is_pure().
  Ket dominant_ket() const {
    const HermitianEig eg = eigh(m_);
    return Ket::normalized(eg.vectors.col(eg.vectors.cols() - 1));
  }

 private:
  ComplexMatrix m_;
};

// An ordered family of states on a common Hilbert space.  Pure members keep
// their ket representation alongside the projector.
class StateSet {
 public:
  explicit StateSet(int dim) : dim_(dim) {
    if (dim < 1) throw DimensionMismatchError("StateSet: dim must be >= 1");
  }

  static StateSet from_kets(const std::vector<Ket>& kets) {
    if (kets.empty()) throw SizeMismatchError("StateSet: empty ket list");
    StateSet s(kets[0].dim());
    for (const Ket& k : kets) s.add(k);
    return s;
  }

  static StateSet from_densities(const std::vector<DensityMatrix>& rhos) {
    if (rhos.empty()) throw SizeMismatchError("StateSet: empty state list");
    StateSet s(rhos[0].dim());
    for (const DensityMatrix& r : rhos) s.add(r);
    return s;
  }

  void add(const Ket& k) {
    if (k.dim() != dim_) {
      throw DimensionMismatchError("StateSet: ket dim " +
                                   std::to_string(k.dim()) + " != " +
                                   std::to_string(dim_));
    }
    members_.push_back(Member{DensityMatrix::from_ket(k), k});
  }

  void add(const DensityMatrix& rho) {
    if (rho.dim() != dim_) {
      throw DimensionMismatchError("StateSet: state dim " +
                                   std::to_string(rho.dim()) + " != " +
                                   std::to_string(dim_));
    }
    // Purity detection: a projector handed in as a matrix still gets a ket.
    if (rho.is_pure()) {
      members_.push_back(Member{rho, rho.dominant_ket()});
    } else {
      members_.push_back(Member{rho, std::nullopt});
    }
  }

  int dim() const { return dim_; }
  int size() const { return static_cast<int>(members_.size()); }

  bool is_pure(int i) const { return members_.at(i).ket.has_value(); }
  bool all_pure() const {
    for (const Member& m : members_) {
      if (!m.ket.has_value()) return false;
    }
    return true;
  }

  const DensityMatrix& density(int i) const { return members_.at(i).rho; }

  const Ket& ket(int i) const {
    const Member& m = members_.at(i);
    if (!m.ket.has_value()) {
      throw MixedMemberError("StateSet: member " + std::to_string(i) +
                             " is mixed");
    }
    return *m.ket;
  }

  std::vector<Ket> kets() const {
    std::vector<Ket> out;
    out.reserve(members_.size());
    for (int i = 0; i < size(); ++i) out.push_back(ket(i));
    return out;
  }

  StateSet permuted(const std::vector<int>& perm) const {
    if (static_cast<int>(perm.size()) != size()) {
      throw SizeMismatchError("StateSet::permuted: permutation size");
    }
    StateSet out(dim_);
    std::vector<bool> seen(perm.size(), false);
    for (int p : perm) {
      if (p < 0 || p >= size() || seen[p]) {
        throw SizeMismatchError("StateSet::permuted: not a permutation");
      }
      seen[p] = true;
      out.members_.push_back(members_[p]);
    }
    return out;
  }

 private:
  struct Member {
    DensityMatrix rho;
    std::optional<Ket> ket;
  };

  StateSet() = default;

  int dim_ = 0;
  std::vector<Member> members_;
};

// Gram matrix of a state family: unit diagonal, Hermitian, PSD.  The stored
// matrix has its diagonal pinned to exactly 1.
class GramMatrix {
 public:
  explicit GramMatrix(ComplexMatrix g) {
    detail::require_square(g, "GramMatrix");
    const double defect = hermiticity_defect(g);
    if (defect > tol::hermitian_reject) {
      throw NonHermitianError("GramMatrix: asymmetry " +
                              std::to_string(defect));
    }
    g = 0.5 * (g + g.adjoint());
    for (Eigen::Index i = 0; i < g.rows(); ++i) {
      if (std::abs(g(i, i) - Complex(1.0, 0.0)) > 1e-8) {
        throw Error("GramMatrix: diagonal entry " + std::to_string(i) +
                    " is not 1");
      }
      g(i, i) = 1.0;
    }
    const HermitianEig eg = eigh(g);
    if (eg.values(0) < -tol::psd_accept * spectral_scale(eg.values)) {
      throw NotPSDError("GramMatrix: eigenvalue " +
                        std::to_string(eg.values(0)));
    }
    g_ = std::move(g);
    min_eigenvalue_ = eg.values(0);
  }

  int size() const { return static_cast<int>(g_.rows()); }
  const ComplexMatrix& matrix() const { return g_; }
  Complex operator()(int i, int j) const { return g_(i, j); }
  double min_eigenvalue() const { return min_eigenvalue_; }

 private:
  ComplexMatrix g_;
  double min_eigenvalue_ = 0.0;
};

// Per-state phases theta_i, normalized so theta_0 = 0.
struct PhaseVector {
  RealVector theta;

  Complex relative(int i, int j) const {
    return std::polar(1.0, theta(i) - theta(j));
  }
};

inline GramMatrix gram_from_kets(const std::vector<Ket>& kets) {
  const int n = static_cast<int>(kets.size());
  if (n == 0) throw SizeMismatchError("gram_from_kets: empty family");
  ComplexMatrix g(n, n);
  for (int i = 0; i < n; ++i) {
    for (int j = 0; j < n; ++j) {
      g(i, j) = kets[i].overlap(kets[j]);
    }
  }
  return GramMatrix(std::move(g));
}

inline GramMatrix gram_from_states(const StateSet& s) {
  return gram_from_kets(s.kets());
}

namespace detail {
// Columns of C with C^dag C = G, rank-truncated.  G must be PSD; columns
// are scaled so that |c_i|^2 = G_ii.
inline ComplexMatrix gram_factor(const ComplexMatrix& g,
                                 double rank_tol = 1e-12) {
  const HermitianEig eg = eigh(g);
  const int n = static_cast<int>(g.rows());
  std::vector<int> keep;
  const double cutoff = rank_tol * spectral_scale(eg.values);
  for (int k = 0; k < n; ++k) {
    if (eg.values(k) > cutoff) keep.push_back(k);
  }
  if (keep.empty()) keep.push_back(n - 1);  // all-zero G: rank-1 zero factor
  const int r = static_cast<int>(keep.size());
  ComplexMatrix c(r, n);
  for (int row = 0; row < r; ++row) {
    const int k = keep[row];
    const double s = std::sqrt(std::max(eg.values(k), 0.0));
    c.row(row) = s * eg.vectors.col(k).adjoint();
  }
  return c;
}
}  // namespace detail

// A family of kets in dimension rank(G) whose Gram matrix is G.
inline std::vector<Ket> kets_from_gram(const GramMatrix& g) {
  const ComplexMatrix c = detail::gram_factor(g.matrix());
  std::vector<Ket> kets;
  kets.reserve(g.size());
  for (int i = 0; i < g.size(); ++i) {
    kets.push_back(Ket::normalized(c.col(i)));
  }
  return kets;
}

// Phase-canonical Gram matrix of a family of pure states given as density
// matrices alpha_i: modulus r_ij = sqrt(tr(alpha_i alpha_j)), phase
// theta_ij = arg tr(alpha_1 alpha_i alpha_j).  The result does not depend
// on the phase conventions of any ket representation, but requires every
// state to be non-orthogonal to the first one.
inline GramMatrix canonical_gram(const StateSet& states) {
  const int n = states.size();
  if (!states.all_pure()) {
    throw MixedMemberError("canonical_gram: all members must be pure");
  }
  std::vector<ComplexMatrix> alpha;
  alpha.reserve(n);
  for (int i = 0; i < n; ++i) alpha.push_back(states.density(i).matrix());
  for (int i = 1; i < n; ++i) {
    const double t = (alpha[0] * alpha[i]).trace().real();
    if (t < tol::zero_overlap) {
      throw OrthogonalPairError("canonical_gram: state " + std::to_string(i) +
                                " is orthogonal to state 0");
    }
  }
  ComplexMatrix g(n, n);
  for (int i = 0; i < n; ++i) {
    g(i, i) = 1.0;
    for (int j = i + 1; j < n; ++j) {
      const double p = std::max((alpha[i] * alpha[j]).trace().real(), 0.0);
      const double r = std::sqrt(p);
      Complex entry(0.0, 0.0);
      if (r > tol::zero_overlap) {
        const Complex t = (alpha[0] * alpha[i] * alpha[j]).trace();
        const double mag = std::abs(t);
        entry = (mag > 0.0) ? r * (t / mag) : Complex(r, 0.0);
      }
      g(i, j) = entry;
      g(j, i) = std::conj(entry);
    }
  }
  return GramMatrix(std::move(g));
}

// Decides whether g2 == K o g for a rank-one phase matrix
// K_ij = exp(i(theta_i - theta_j)); returns the phases when it does.
// Phases are propagated over a maximum spanning forest of the nonzero
// pattern (strongest overlaps first) and every entry is then verified.
inline std::optional<PhaseVector> gram_equivalent(const GramMatrix& g,
                                                  const GramMatrix& g2) {
  const int n = g.size();
  if (g2.size() != n) {
    throw SizeMismatchError("gram_equivalent: sizes differ");
  }
  for (int i = 0; i < n; ++i) {
    for (int j = 0; j < n; ++j) {
      if (std::abs(std::abs(g(i, j)) - std::abs(g2(i, j))) > 1e-8) {
        return std::nullopt;
      }
    }
  }
  // Kruskal-style maximum spanning forest on edges with both entries nonzero.
  struct Edge {
    double w;
    int i, j;
  };
  std::vector<Edge> edges;
  for (int i = 0; i < n; ++i) {
    for (int j = i + 1; j < n; ++j) {
      const double w = std::min(std::abs(g(i, j)), std::abs(g2(i, j)));
      if (w > tol::zero_overlap) edges.push_back(Edge{w, i, j});
    }
  }
  std::sort(edges.begin(), edges.end(),
            [](const Edge& a, const Edge& b) { return a.w > b.w; });
  std::vector<int> parent(n);
  for (int i = 0; i < n; ++i) parent[i] = i;
  auto find = [&parent](int x) {
    while (parent[x] != x) x = parent[x] = parent[parent[x]];
    return x;
  };
  std::vector<std::vector<std::pair<int, Complex>>> adj(n);
  for (const Edge& e : edges) {
    const int a = find(e.i);
    const int b = find(e.j);
    if (a == b) continue;
    parent[a] = b;
    // g2_ij = g_ij * exp(i(theta_i - theta_j))
    const Complex ratio = g2(e.i, e.j) / g(e.i, e.j);
    adj[e.i].push_back({e.j, ratio});
    adj[e.j].push_back({e.i, std::conj(ratio)});
  }
  RealVector theta = RealVector::Zero(n);
  std::vector<bool> visited(n, false);
  for (int root = 0; root < n; ++root) {
    if (visited[root]) continue;
    visited[root] = true;
    theta(root) = 0.0;
    std::queue<int> q;
    q.push(root);
    while (!q.empty()) {
      const int u = q.front();
      q.pop();
      for (const auto& [v, ratio] : adj[u]) {
        if (visited[v]) continue;
        visited[v] = true;
        // ratio = exp(i(theta_u - theta_v))
        theta(v) = theta(u) - std::arg(ratio);
        q.push(v);
      }
    }
  }
  for (int i = 0; i < n; ++i) {
    for (int j = 0; j < n; ++j) {
      const Complex predicted =
          g(i, j) * std::polar(1.0, theta(i) - theta(j));
      if (std::abs(predicted - g2(i, j)) > 1e-8) return std::nullopt;
    }
  }
  theta.array() -= theta(0);
  return PhaseVector{std::move(theta)};
}

// Phases theta with <a_i|a_j> = exp(i(theta_i - theta_j)) <b_i|b_j> for all
// pairs, i.e. the families are related by a unitary after re-phasing.
inline std::optional<PhaseVector> unitary_equivalence(const StateSet& a,
                                                      const StateSet& b) {
  if (a.size() != b.size()) {
    throw SizeMismatchError("unitary_equivalence: sizes differ");
  }
  if (!a.all_pure() || !b.all_pure()) {
    throw MixedMemberError("unitary_equivalence: all members must be pure");
  }
  return gram_equivalent(gram_from_states(b), gram_from_states(a));
}

// Spectral decomposition into weighted pure states, eigenvalues descending;
// weights below `cutoff` are dropped.
inline std::vector<std::pair<double, Ket>> eigendecompose_to_pure(
    const DensityMatrix& rho, double cutoff = 1e-10) {
  const HermitianEig eg = eigh(rho.matrix());
  std::vector<std::pair<double, Ket>> out;
  for (Eigen::Index k = eg.values.size() - 1; k >= 0; --k) {
    if (eg.values(k) > cutoff) {
      out.push_back({eg.values(k), Ket::normalized(eg.vectors.col(k))});
    }
  }
  return out;
}

}  // namespace statemorph
