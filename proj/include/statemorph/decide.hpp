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

#include <limits>
#include <optional>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "statemorph/channels.hpp"
#include "statemorph/feasibility.hpp"
#include "statemorph/states.hpp"

namespace statemorph {

enum class Verdict { Feasible, Infeasible, Indeterminate };

inline const char* to_string(Verdict v) {
  switch (v) {
    case Verdict::Feasible: return "feasible";
    case Verdict::Infeasible: return "infeasible";
    default: return "indeterminate";
  }
}

inline Verdict to_verdict(FeasStatus s) {
  switch (s) {
    case FeasStatus::Feasible: return Verdict::Feasible;
    case FeasStatus::Infeasible: return Verdict::Infeasible;
    default: return Verdict::Indeterminate;
  }
}

// Outcome of a decision procedure.  `margin` quantifies the distance to the
// feasibility boundary in the metric of the method that decided (smallest
// witness eigenvalue, fidelity gap, ...); verdicts with |margin| below
// tol::boundary_band are flagged as boundary cases.  Infeasible verdicts
// always carry something concrete: a violating pair, a violating parameter,
// or a certificate note.
struct Decision {
  Verdict verdict = Verdict::Indeterminate;
  std::string method;
  double margin = std::numeric_limits<double>::quiet_NaN();
  double residual = std::numeric_limits<double>::quiet_NaN();
  bool boundary = false;

  std::optional<ComplexMatrix> witness_matrix;
  std::optional<std::vector<ComplexMatrix>> witness_blocks;
  std::optional<Instrument> instrument;
  std::optional<PhaseVector> phase_witness;
  std::optional<std::pair<int, int>> violating_pair;
  std::optional<double> violating_t;
  std::vector<std::string> notes;
};

namespace detail {
inline void flag_boundary(Decision& d) {
  if (std::isfinite(d.margin) && std::abs(d.margin) < tol::boundary_band) {
    d.boundary = true;
    d.notes.push_back("boundary case: |margin| < 1e-6");
  }
}

inline void require_same_size(const StateSet& a, const StateSet& b,
                              const char* who) {
  if (a.size() != b.size()) {
    throw SizeMismatchError(std::string(who) + ": " + std::to_string(a.size()) +
                            " sources vs " + std::to_string(b.size()) +
                            " targets");
  }
}
}  // namespace detail

// ---------------------------------------------------------------------------
// Fidelity-based necessary condition: any channel taking rho_i to sigma_i
// must weakly increase every pairwise fidelity.  A violated pair certifies
// infeasibility; otherwise nothing is decided.
// ---------------------------------------------------------------------------
inline Decision fidelity_necessary(const StateSet& a, const StateSet& b) {
  detail::require_same_size(a, b, "fidelity_necessary");
  Decision d;
  d.method = "fidelity-necessary";
  double worst = std::numeric_limits<double>::infinity();
  std::pair<int, int> worst_pair{0, 0};
  for (int i = 0; i < a.size(); ++i) {
    for (int j = i + 1; j < a.size(); ++j) {
      const double fs = fidelity(a.density(i).matrix(), a.density(j).matrix());
      const double ft = fidelity(b.density(i).matrix(), b.density(j).matrix());
      const double gap = ft - fs;
      if (gap < worst) {
        worst = gap;
        worst_pair = {i, j};
      }
    }
  }
  if (a.size() < 2) worst = std::numeric_limits<double>::infinity();
  d.margin = worst;
  if (worst < -1e-9) {
    d.verdict = Verdict::Infeasible;
    d.violating_pair = worst_pair;
    std::ostringstream note;
    note << "pair (" << worst_pair.first << "," << worst_pair.second
         << ") loses fidelity by " << -worst;
    d.notes.push_back(note.str());
  } else {
    d.verdict = Verdict::Indeterminate;
    d.notes.push_back("no fidelity violation; condition is only necessary");
  }
  detail::flag_boundary(d);
  return d;
}

// ---------------------------------------------------------------------------
// Pure source pair, arbitrary target pair: feasible exactly when the target
// fidelity weakly exceeds the source overlap.  Never Indeterminate.
// ---------------------------------------------------------------------------
inline Decision check_pure_pair(const StateSet& a, const StateSet& b) {
  detail::require_same_size(a, b, "check_pure_pair");
  if (a.size() != 2) {
    throw SizeMismatchError("check_pure_pair: exactly two states required");
  }
  if (!a.all_pure()) {
    throw SourceNotPureError("check_pure_pair: sources must be pure");
  }
  Decision d;
  d.method = "fidelity-pair";
  const double fs = std::abs(a.ket(0).overlap(a.ket(1)));
  const double ft = fidelity(b.density(0).matrix(), b.density(1).matrix());
  d.margin = ft - fs;
  if (d.margin >= -1e-9) {
    d.verdict = Verdict::Feasible;
  } else {
    d.verdict = Verdict::Infeasible;
    d.violating_pair = {0, 1};
    std::ostringstream note;
    note << "target fidelity " << ft << " below source overlap " << fs;
    d.notes.push_back(note.str());
  }
  detail::flag_boundary(d);
  return d;
}

// ---------------------------------------------------------------------------
// Pure-to-pure via the Gram-Hadamard criterion: feasible iff G_A = M o G_B
// for a PSD M with unit diagonal, i.e. iff the entrywise quotient has a PSD
// completion.  Wherever G_B vanishes, G_A must vanish as well.
// ---------------------------------------------------------------------------
inline Decision check_pure_to_pure_kets(const std::vector<Ket>& a_kets,
                                        const std::vector<Ket>& b_kets,
                                        const SolveOptions& opt =
                                            SolveOptions{}) {
  const int n = static_cast<int>(a_kets.size());
  if (n == 0 || static_cast<int>(b_kets.size()) != n) {
    throw SizeMismatchError("check_pure_to_pure: family sizes differ");
  }
  Decision d;
  d.method = "gram-hadamard";
  const GramMatrix ga = gram_from_kets(a_kets);
  const GramMatrix gb = gram_from_kets(b_kets);

  PartialHermitian m(n);
  for (int i = 0; i < n; ++i) m.fix(i, i, 1.0);
  for (int i = 0; i < n; ++i) {
    for (int j = i + 1; j < n; ++j) {
      const Complex bij = gb(i, j);
      if (std::abs(bij) > tol::zero_overlap) {
        m.fix(i, j, ga(i, j) / bij);
      } else if (std::abs(ga(i, j)) > 1e-9) {
        // The targets are orthogonal here but the sources are not: no
        // Hadamard factorization can exist.
        d.verdict = Verdict::Infeasible;
        d.margin = -std::abs(ga(i, j));
        d.violating_pair = {i, j};
        std::ostringstream note;
        note << "target overlap (" << i << "," << j
             << ") vanishes while source overlap has modulus "
             << std::abs(ga(i, j));
        d.notes.push_back(note.str());
        detail::flag_boundary(d);
        return d;
      }
      // Both overlaps vanish: the witness entry is free.
    }
  }

  const FeasibilityOutcome out = psd_complete(m, opt);
  d.verdict = to_verdict(out.status);
  d.margin = out.margin;
  d.residual = out.residual;
  if (!out.note.empty()) d.notes.push_back(out.note);
  if (out.status == FeasStatus::Feasible) {
    d.witness_matrix = out.witness[0];
  }
  detail::flag_boundary(d);
  return d;
}

inline Decision check_pure_to_pure(const StateSet& a, const StateSet& b,
                                   const SolveOptions& opt = SolveOptions{}) {
  detail::require_same_size(a, b, "check_pure_to_pure");
  if (!a.all_pure()) {
    throw SourceNotPureError("check_pure_to_pure: sources must be pure");
  }
  if (!b.all_pure()) {
    throw TargetNotPureError("check_pure_to_pure: targets must be pure");
  }
  return check_pure_to_pure_kets(a.kets(), b.kets(), opt);
}

// ---------------------------------------------------------------------------
// Qubit pair: exact decision through the trace-norm condition
// ||sigma_1 - t sigma_2||_1 <= ||rho_1 - t rho_2||_1 for all t >= 0, which
// is sufficient as well as necessary for a single qubit pair.
// ---------------------------------------------------------------------------
namespace detail {

// det(x1 - t x2) for 2x2 Hermitian inputs is an exact real quadratic.
struct Quadratic {
  double c0 = 0.0, c1 = 0.0, c2 = 0.0;
  double operator()(double t) const { return c0 + t * (c1 + t * c2); }
};

inline Quadratic det_pencil(const ComplexMatrix& x1, const ComplexMatrix& x2) {
  Quadratic q;
  q.c0 = x1.determinant().real();
  q.c1 = -(x1.trace() * x2.trace() - (x1 * x2).trace()).real();
  q.c2 = x2.determinant().real();
  return q;
}

struct TInterval {
  double lo = 0.0;
  double hi = 0.0;
  bool unbounded = false;
};

// Maximal open intervals of [0, inf) where q < 0.
inline std::vector<TInterval> negative_intervals(const Quadratic& q) {
  constexpr double eps = 1e-15;
  std::vector<TInterval> out;
  if (std::abs(q.c2) < eps) {
    if (std::abs(q.c1) < eps) {
      if (q.c0 < -eps) out.push_back({0.0, 0.0, true});
      return out;
    }
    const double root = -q.c0 / q.c1;
    if (q.c1 < 0.0) {
      out.push_back({std::max(root, 0.0), 0.0, true});
    } else if (root > 0.0) {
      out.push_back({0.0, root, false});
    }
    return out;
  }
  const double disc = q.c1 * q.c1 - 4.0 * q.c0 * q.c2;
  if (q.c2 > 0.0) {
    if (disc <= 0.0) return out;
    const double s = std::sqrt(disc);
    const double r1 = (-q.c1 - s) / (2.0 * q.c2);
    const double r2 = (-q.c1 + s) / (2.0 * q.c2);
    if (r2 - r1 < 1e-14 || r2 <= 0.0) return out;
    out.push_back({std::max(r1, 0.0), r2, false});
    return out;
  }
  // Downward parabola: negative outside the root interval.
  if (disc <= 0.0) {
    out.push_back({0.0, 0.0, true});
    return out;
  }
  const double s = std::sqrt(disc);
  const double r1 = (-q.c1 + s) / (2.0 * q.c2);  // smaller root (c2 < 0)
  const double r2 = (-q.c1 - s) / (2.0 * q.c2);
  if (r1 > 0.0) out.push_back({0.0, r1, false});
  out.push_back({std::max(r2, 0.0), 0.0, true});
  return out;
}

struct SupPoint {
  double value = -std::numeric_limits<double>::infinity();
  double at = 0.0;
  bool diverges = false;
};

// Supremum of q over the closure of the interval.
inline SupPoint sup_over(const Quadratic& q, const TInterval& iv) {
  constexpr double eps = 1e-15;
  SupPoint best;
  auto consider = [&](double t) {
    const double v = q(t);
    if (v > best.value) {
      best.value = v;
      best.at = t;
    }
  };
  consider(iv.lo);
  if (!iv.unbounded) {
    consider(iv.hi);
  } else {
    if (q.c2 > eps || (std::abs(q.c2) <= eps && q.c1 > eps)) {
      best.value = std::numeric_limits<double>::infinity();
      best.diverges = true;
    } else if (std::abs(q.c2) <= eps && std::abs(q.c1) <= eps) {
      consider(iv.lo + 1.0);  // constant tail
    }
  }
  if (std::abs(q.c2) > eps && q.c2 < 0.0) {
    const double tv = -q.c1 / (2.0 * q.c2);
    if (tv > iv.lo && (iv.unbounded || tv < iv.hi)) consider(tv);
  }
  return best;
}

// A point strictly inside the interval where ds < 0 and q > 0; used to
// report a concrete violating parameter.
inline double locate_violation(const Quadratic& ds, const Quadratic& q,
                               const TInterval& iv, double hint) {
  auto good = [&](double t) { return ds(t) < 0.0 && q(t) > 0.0; };
  if (good(hint)) return hint;
  if (!iv.unbounded) {
    for (int k = 1; k < 1024; ++k) {
      const double t = iv.lo + (iv.hi - iv.lo) * k / 1024.0;
      if (good(t)) return t;
    }
  } else {
    double step = 0.5;
    for (int k = 0; k < 80; ++k) {
      const double t = iv.lo + step;
      if (good(t)) return t;
      step *= 1.6;
    }
  }
  return hint;
}

}  // namespace detail

inline Decision check_qubit_pair(const DensityMatrix& rho1,
                                 const DensityMatrix& rho2,
                                 const DensityMatrix& sigma1,
                                 const DensityMatrix& sigma2) {
  if (rho1.dim() != 2 || rho2.dim() != 2 || sigma1.dim() != 2 ||
      sigma2.dim() != 2) {
    throw WrongDimensionError("check_qubit_pair: all states must be qubits");
  }
  Decision d;
  d.method = "alberti-uhlmann";

  const detail::Quadratic dr =
      detail::det_pencil(rho1.matrix(), rho2.matrix());
  const detail::Quadratic ds =
      detail::det_pencil(sigma1.matrix(), sigma2.matrix());
  // Violation at t  <=>  ds(t) < 0 and q(t) := dr(t) - ds(t) > 0.
  const detail::Quadratic q{dr.c0 - ds.c0, dr.c1 - ds.c1, dr.c2 - ds.c2};

  const std::vector<detail::TInterval> bad = detail::negative_intervals(ds);
  if (bad.empty()) {
    // The target pencil never has a negative determinant, so the condition
    // holds trivially; the margin is the distance of ds from turning
    // negative somewhere on [0, inf).
    double min_ds = ds(0.0);
    if (ds.c2 > 1e-15) {
      const double tv = -ds.c1 / (2.0 * ds.c2);
      if (tv > 0.0) min_ds = std::min(min_ds, ds(tv));
    }
    d.verdict = Verdict::Feasible;
    d.margin = std::max(min_ds, 0.0);
  } else {
    detail::SupPoint worst;
    const detail::TInterval* worst_iv = &bad[0];
    for (const detail::TInterval& iv : bad) {
      const detail::SupPoint s = detail::sup_over(q, iv);
      if (s.value > worst.value) {
        worst = s;
        worst_iv = &iv;
      }
    }
    d.margin = std::isinf(worst.value)
                   ? -std::numeric_limits<double>::infinity()
                   : -worst.value;
    if (worst.value <= 0.0) {
      d.verdict = Verdict::Feasible;
    } else {
      d.verdict = Verdict::Infeasible;
      const double t_bad =
          detail::locate_violation(ds, q, *worst_iv,
                                   worst.diverges ? worst_iv->lo + 1.0
                                                  : worst.at);
      d.violating_t = t_bad;
      std::ostringstream note;
      note << "trace-norm condition fails at t = " << t_bad;
      d.notes.push_back(note.str());
    }
  }

  // Grid cross-check on t = u / (1 - u), u in [0, 1): computed through the
  // generic trace norm, independently of the quadratic analysis.
  double grid_worst = -std::numeric_limits<double>::infinity();
  double grid_worst_t = 0.0;
  for (int i = 0; i < 1000; ++i) {
    const double u = i / 1000.0;
    const double t = u / (1.0 - u);
    const double diff =
        trace_norm(sigma1.matrix() - t * sigma2.matrix()) -
        trace_norm(rho1.matrix() - t * rho2.matrix());
    const double scaled = diff / (1.0 + t);
    if (scaled > grid_worst) {
      grid_worst = scaled;
      grid_worst_t = t;
    }
  }
  if (d.verdict == Verdict::Feasible && grid_worst > 1e-9) {
    std::ostringstream note;
    note << "grid-conflict: exact analysis feasible but grid finds relative "
            "violation "
         << grid_worst << " at t = " << grid_worst_t;
    d.notes.push_back(note.str());
  }
  if (d.verdict == Verdict::Infeasible && d.violating_t) {
    const double t = *d.violating_t;
    const double diff = trace_norm(sigma1.matrix() - t * sigma2.matrix()) -
                        trace_norm(rho1.matrix() - t * rho2.matrix());
    if (diff < -1e-12 * (1.0 + t)) {
      d.notes.push_back(
          "grid-conflict: reported violating t does not violate the "
          "trace-norm condition directly");
    }
  }
  detail::flag_boundary(d);
  return d;
}

inline Decision check_qubit_pair(const StateSet& a, const StateSet& b) {
  detail::require_same_size(a, b, "check_qubit_pair");
  if (a.size() != 2) {
    throw SizeMismatchError("check_qubit_pair: exactly two states required");
  }
  if (a.dim() != 2 || b.dim() != 2) {
    throw WrongDimensionError("check_qubit_pair: qubit states required");
  }
  return check_qubit_pair(a.density(0), a.density(1), b.density(0),
                          b.density(1));
}

// ---------------------------------------------------------------------------
// Minimum-error discrimination probability for two states with priors.
// ---------------------------------------------------------------------------
inline double helstrom(double p1, const DensityMatrix& tau1, double p2,
                       const DensityMatrix& tau2) {
  if (p1 < 0.0 || p1 > 1.0 || p2 < 0.0 || p2 > 1.0 ||
      std::abs(p1 + p2 - 1.0) > 1e-12) {
    throw BadPriorsError("helstrom: priors must lie in [0,1] and sum to 1");
  }
  if (tau1.dim() != tau2.dim()) {
    throw DimensionMismatchError("helstrom: state dimensions differ");
  }
  const double dist = trace_norm(p1 * tau1.matrix() - p2 * tau2.matrix());
  return std::clamp(0.5 * (1.0 - dist), 0.0, 0.5);
}

// ---------------------------------------------------------------------------
// Multi-outcome probabilistic transformations of pure families.
// ---------------------------------------------------------------------------
inline Decision check_multiprob(const StateSet& a,
                                const std::vector<StateSet>& target_families,
                                const ProbabilityMatrix& p, MultiProbMode mode,
                                const SolveOptions& opt = SolveOptions{}) {
  if (!a.all_pure()) {
    throw SourceNotPureError("check_multiprob: sources must be pure");
  }
  if (target_families.empty()) {
    throw SizeMismatchError("check_multiprob: no target families");
  }
  std::vector<GramMatrix> grams;
  grams.reserve(target_families.size());
  for (const StateSet& fam : target_families) {
    if (fam.size() != a.size()) {
      throw SizeMismatchError("check_multiprob: family sizes differ");
    }
    if (!fam.all_pure()) {
      throw TargetNotPureError("check_multiprob: targets must be pure");
    }
    grams.push_back(gram_from_states(fam));
  }
  const FeasibilityOutcome out =
      hadamard_sum_feasibility(gram_from_states(a), grams, p, mode, opt);
  Decision d;
  d.method = "multiprob-gram";
  d.verdict = to_verdict(out.status);
  d.margin = out.margin;
  d.residual = out.residual;
  if (!out.note.empty()) d.notes.push_back(out.note);
  if (out.status == FeasStatus::Feasible) d.witness_blocks = out.witness;
  detail::flag_boundary(d);
  return d;
}

// ---------------------------------------------------------------------------
// Mixed sources, pure targets: a channel sends rho_i to the pure beta_i
// exactly when it sends every pure state in the support of rho_i to beta_i,
// so the problem reduces to a pure-to-pure instance on the spectral
// decompositions (any decompositions give the same answer).
// ---------------------------------------------------------------------------
struct MixedToPureExpansion {
  std::vector<Ket> sources;
  std::vector<Ket> targets;
  std::vector<int> origin;  // expanded index -> original source index
};

inline MixedToPureExpansion expand_mixed_to_pure(const StateSet& a,
                                                 const StateSet& b) {
  detail::require_same_size(a, b, "check_mixed_to_pure");
  if (!b.all_pure()) {
    throw TargetNotPureError("check_mixed_to_pure: targets must be pure");
  }
  MixedToPureExpansion ex;
  for (int i = 0; i < a.size(); ++i) {
    if (a.is_pure(i)) {
      ex.sources.push_back(a.ket(i));
      ex.targets.push_back(b.ket(i));
      ex.origin.push_back(i);
      continue;
    }
    for (const auto& [weight, ket] : eigendecompose_to_pure(a.density(i))) {
      (void)weight;  // only the support matters for a pure target
      ex.sources.push_back(ket);
      ex.targets.push_back(b.ket(i));
      ex.origin.push_back(i);
    }
  }
  return ex;
}

inline Decision check_mixed_to_pure(const StateSet& a, const StateSet& b,
                                    const SolveOptions& opt = SolveOptions{}) {
  const MixedToPureExpansion ex = expand_mixed_to_pure(a, b);
  const std::vector<Ket>& expanded_sources = ex.sources;
  const std::vector<Ket>& expanded_targets = ex.targets;
  const std::vector<int>& origin = ex.origin;
  Decision d = check_pure_to_pure_kets(expanded_sources, expanded_targets, opt);
  d.method = "mixed-to-pure";
  if (d.violating_pair) {
    const auto [ei, ej] = *d.violating_pair;
    std::ostringstream note;
    note << "expanded pair (" << ei << "," << ej << ") comes from sources ("
         << origin[ei] << "," << origin[ej] << ")";
    d.notes.push_back(note.str());
    d.violating_pair = {origin[ei], origin[ej]};
  }
  std::ostringstream note;
  note << "expanded to " << expanded_sources.size() << " pure sources";
  d.notes.push_back(note.str());
  return d;
}

// ---------------------------------------------------------------------------
// General Choi-matrix feasibility oracle: does a completely positive trace
// preserving map with T(rho_i) = sigma_i exist?  Decided through PSD
// feasibility of the Choi matrix under the affine trace-preservation and
// image constraints.
//
// Two facial-reduction steps make the search space as small as possible and
// restore a strictly feasible interior whenever one exists:
//   1. Output compression.  Any feasible map can be rerouted through
//      V = span of the target supports (project onto V and dump the lost
//      weight on a state inside V), so the output dimension shrinks to
//      dim V without changing feasibility.
//   2. Forced kernel.  <q| T(rho_s) |q> = 0 whenever q is orthogonal to the
//      support of sigma_s; complete positivity then forces every vector
//      conj(x) (x) q, x in supp(rho_s), into the kernel of the Choi matrix.
//      The variable is restricted to the orthocomplement of those vectors.
// Both steps are exact equivalences, so verdicts and certificates carry
// over; a Feasible witness is expanded back to the full d_in*d_out space.
// ---------------------------------------------------------------------------
inline Decision choi_oracle(const StateSet& a, const StateSet& b,
                            const SolveOptions& opt = SolveOptions{}) {
  detail::require_same_size(a, b, "choi_oracle");
  const int din = a.dim();
  const int dout = b.dim();
  const double rank_tol = 1e-10;

  Decision d;
  d.method = "choi";

  // Step 1: orthonormal basis W of span of the target supports.
  ComplexMatrix target_sum = ComplexMatrix::Zero(dout, dout);
  for (int s = 0; s < b.size(); ++s) target_sum += b.density(s).matrix();
  const HermitianEig vsp = eigh(target_sum);
  const double vscale = spectral_scale(vsp.values);
  int rv = 0;
  for (Eigen::Index k = 0; k < vsp.values.size(); ++k) {
    if (vsp.values(k) > rank_tol * vscale) ++rv;
  }
  const ComplexMatrix w = vsp.vectors.rightCols(rv);  // dout x rv
  const int djc = din * rv;

  std::vector<ComplexMatrix> sigma_c;  // compressed targets, rv x rv
  for (int s = 0; s < b.size(); ++s) {
    sigma_c.push_back(w.adjoint() * b.density(s).matrix() * w);
  }

  // Step 2: vectors forced into the kernel of the compressed Choi matrix.
  std::vector<ComplexVector> forced;
  for (int s = 0; s < a.size(); ++s) {
    const HermitianEig se = eigh(sigma_c[s]);
    const double sscale = spectral_scale(se.values);
    std::vector<Eigen::Index> null_dirs;
    for (Eigen::Index k = 0; k < se.values.size(); ++k) {
      if (se.values(k) <= rank_tol * sscale) null_dirs.push_back(k);
    }
    if (null_dirs.empty()) continue;
    const HermitianEig re = eigh(a.density(s).matrix());
    const double rscale = spectral_scale(re.values);
    for (Eigen::Index x = 0; x < re.values.size(); ++x) {
      if (re.values(x) <= rank_tol * rscale) continue;
      for (Eigen::Index q : null_dirs) {
        ComplexVector v(djc);
        for (int i = 0; i < din; ++i) {
          for (int al = 0; al < rv; ++al) {
            v(i * rv + al) = std::conj(re.vectors(i, x)) * se.vectors(al, q);
          }
        }
        forced.push_back(std::move(v));
      }
    }
  }

  // Orthonormal basis U of the orthocomplement of the forced vectors.
  ComplexMatrix u = ComplexMatrix::Identity(djc, djc);
  int r = djc;
  if (!forced.empty()) {
    ComplexMatrix proj = ComplexMatrix::Zero(djc, djc);
    for (const ComplexVector& v : forced) {
      proj += v * v.adjoint() / v.squaredNorm();
    }
    const HermitianEig pe = eigh(proj);
    r = 0;
    for (Eigen::Index k = 0; k < pe.values.size(); ++k) {
      if (pe.values(k) < 0.5) ++r;
    }
    if (r == 0) {
      // The only PSD matrix with the forced kernel is zero, which cannot be
      // trace preserving.
      d.verdict = Verdict::Infeasible;
      d.margin = -1.0;
      d.notes.push_back(
          "pure-image constraints force the Choi matrix to vanish");
      return d;
    }
    u = pe.vectors.leftCols(r);  // djc x r, eigenvalues ~0 first
  }

  AffinePSDProblem prob;
  prob.block_dims = {r};

  auto add_functional = [&prob, &u](const ComplexMatrix& c, Complex target,
                                    bool imag_too) {
    const ComplexMatrix cre_full = 0.5 * (c + c.adjoint());
    const ComplexMatrix cre = u.adjoint() * cre_full * u;
    // Rows annihilated by the reduction are trivially satisfied.
    if (cre.cwiseAbs().maxCoeff() > 1e-12 || std::abs(target.real()) > 1e-12) {
      AffineConstraint& con = prob.new_constraint(target.real());
      con.coeff[0] = cre;
    }
    if (imag_too) {
      const ComplexMatrix cim_full = Complex(0.0, 0.5) * (c.adjoint() - c);
      const ComplexMatrix cim = u.adjoint() * cim_full * u;
      if (cim.cwiseAbs().maxCoeff() > 1e-12 ||
          std::abs(target.imag()) > 1e-12) {
        AffineConstraint& con = prob.new_constraint(target.imag());
        con.coeff[0] = cim;
      }
    }
  };

  // Trace preservation: Tr_out J = I (in the compressed output space).
  for (int i = 0; i < din; ++i) {
    for (int j = i; j < din; ++j) {
      ComplexMatrix c = ComplexMatrix::Zero(djc, djc);
      for (int out = 0; out < rv; ++out) {
        c(j * rv + out, i * rv + out) = 1.0;
      }
      add_functional(c, (i == j) ? Complex(1.0, 0.0) : Complex(0.0, 0.0),
                     i != j);
    }
  }
  // Images: <x| T(rho_s) |y> = sigma_s(x, y) on the compressed output.
  for (int s = 0; s < a.size(); ++s) {
    const ComplexMatrix& rho = a.density(s).matrix();
    for (int oa = 0; oa < rv; ++oa) {
      for (int ob = oa; ob < rv; ++ob) {
        ComplexMatrix c = ComplexMatrix::Zero(djc, djc);
        for (int i = 0; i < din; ++i) {
          for (int j = 0; j < din; ++j) {
            c(j * rv + ob, i * rv + oa) = rho(i, j);
          }
        }
        add_functional(c, sigma_c[s](oa, ob), oa != ob);
      }
    }
  }

  // Warm start: the trace-and-replace map onto the average target is
  // trace preserving and often close in constraint space.
  ComplexMatrix avg = ComplexMatrix::Zero(rv, rv);
  for (const ComplexMatrix& sc : sigma_c) avg += sc;
  avg /= static_cast<double>(b.size());
  prob.initial = {u.adjoint() *
                  kron(ComplexMatrix::Identity(din, din), avg) * u};

  const FeasibilityOutcome out = affine_psd_feasibility(prob, opt);
  d.verdict = to_verdict(out.status);
  d.margin = out.margin;
  d.residual = out.residual;
  if (!out.note.empty()) d.notes.push_back(out.note);
  if (r < din * dout) {
    std::ostringstream note;
    note << "facial reduction: " << r << " of " << din * dout
         << " Choi dimensions kept";
    d.notes.push_back(note.str());
  }
  if (out.status == FeasStatus::Feasible) {
    // Expand back to the full space and re-validate independently.
    const ComplexMatrix iw = kron(ComplexMatrix::Identity(din, din), w);
    const ComplexMatrix j_full =
        iw * (u * out.witness[0] * u.adjoint()) * iw.adjoint();
    double defect = 0.0;
    ComplexMatrix tr_out = ComplexMatrix::Zero(din, din);
    for (int i = 0; i < din; ++i) {
      for (int j = 0; j < din; ++j) {
        Complex sum = 0.0;
        for (int o = 0; o < dout; ++o) sum += j_full(i * dout + o, j * dout + o);
        tr_out(i, j) = sum;
      }
    }
    defect = (tr_out - ComplexMatrix::Identity(din, din)).cwiseAbs().maxCoeff();
    for (int s = 0; s < a.size(); ++s) {
      const ComplexMatrix& rho = a.density(s).matrix();
      ComplexMatrix img = ComplexMatrix::Zero(dout, dout);
      for (int oa = 0; oa < dout; ++oa) {
        for (int ob = 0; ob < dout; ++ob) {
          Complex sum = 0.0;
          for (int i = 0; i < din; ++i) {
            for (int j = 0; j < din; ++j) {
              sum += rho(i, j) * j_full(i * dout + oa, j * dout + ob);
            }
          }
          img(oa, ob) = sum;
        }
      }
      defect = std::max(
          defect, (img - b.density(s).matrix()).cwiseAbs().maxCoeff());
    }
    if (defect > 10.0 * opt.feas_tol) {
      d.verdict = Verdict::Indeterminate;
      std::ostringstream note;
      note << "expanded witness defect " << defect;
      d.notes.push_back(note.str());
    } else {
      d.witness_matrix = j_full;
    }
  }
  detail::flag_boundary(d);
  return d;
}

// ---------------------------------------------------------------------------
// Pure sources to arbitrary (possibly mixed) targets, decided through the
// Choi oracle; a feasible verdict is converted into an explicit instrument
// whose outcome decompositions realize the targets.
// ---------------------------------------------------------------------------
inline Decision check_pure_to_mixed(const StateSet& a, const StateSet& b,
                                    const SolveOptions& opt = SolveOptions{}) {
  detail::require_same_size(a, b, "check_pure_to_mixed");
  if (!a.all_pure()) {
    throw SourceNotPureError("check_pure_to_mixed: sources must be pure");
  }
  Decision d = choi_oracle(a, b, opt);
  d.method = "pure-to-mixed-choi";
  if (d.verdict != Verdict::Feasible) return d;
  try {
    const ChoiMatrix choi(*d.witness_matrix, a.dim(), b.dim(),
                          10.0 * opt.feas_tol);
    ChoiInstrument extraction = instrument_from_choi(a, b, choi);
    d.instrument = std::move(extraction.instrument);
    std::ostringstream note;
    note << "instrument with " << d.instrument->num_branches()
         << " outcomes realizes the targets as pure-state mixtures";
    d.notes.push_back(note.str());
  } catch (const Error& e) {
    d.verdict = Verdict::Indeterminate;
    d.notes.push_back(std::string("witness degraded: ") + e.what());
  }
  return d;
}

// ---------------------------------------------------------------------------
// Mutual transformability of two pure families (B compared against A
// re-indexed by `perm`): feasible both ways forces the families to be
// related by a re-phasing and a unitary, and the recovered phases are the
// witness.
// ---------------------------------------------------------------------------
inline Decision mutual_check(const StateSet& a, const StateSet& b,
                             const std::vector<int>& perm,
                             const SolveOptions& opt = SolveOptions{}) {
  detail::require_same_size(a, b, "mutual_check");
  if (!a.all_pure() || !b.all_pure()) {
    throw MixedMemberError("mutual_check: both families must be pure");
  }
  const StateSet a_perm = a.permuted(perm);
  Decision forward = check_pure_to_pure(a, b, opt);
  Decision backward = check_pure_to_pure(b, a_perm, opt);

  Decision d;
  d.method = "unitary-equivalence";
  d.margin = std::min(forward.margin, backward.margin);
  if (forward.verdict == Verdict::Infeasible ||
      backward.verdict == Verdict::Infeasible) {
    d.verdict = Verdict::Infeasible;
    const Decision& bad =
        (forward.verdict == Verdict::Infeasible) ? forward : backward;
    d.margin = bad.margin;
    d.violating_pair = bad.violating_pair;
    d.notes.push_back(forward.verdict == Verdict::Infeasible
                          ? "forward direction infeasible"
                          : "backward direction infeasible");
    for (const std::string& n : bad.notes) d.notes.push_back(n);
  } else if (forward.verdict == Verdict::Feasible &&
             backward.verdict == Verdict::Feasible) {
    // Feasibility both ways makes the families unitarily equivalent up to
    // phases; recover them.
    std::optional<PhaseVector> phases = unitary_equivalence(a, b);
    if (phases) {
      d.verdict = Verdict::Feasible;
      d.phase_witness = std::move(*phases);
      d.notes.push_back("families are unitarily equivalent up to phases");
    } else {
      d.verdict = Verdict::Indeterminate;
      d.notes.push_back(
          "both directions feasible but phase recovery failed at tolerance");
    }
  } else {
    d.verdict = Verdict::Indeterminate;
    d.notes.push_back("at least one direction indeterminate");
  }
  detail::flag_boundary(d);
  return d;
}

inline Decision mutual_check(const StateSet& a, const StateSet& b,
                             const SolveOptions& opt = SolveOptions{}) {
  std::vector<int> identity(a.size());
  for (int i = 0; i < a.size(); ++i) identity[i] = i;
  return mutual_check(a, b, identity, opt);
}

// ---------------------------------------------------------------------------
// Gauge-independence probe on a feasible pure-to-pure instance (requires a
// target Gram matrix without zero entries).
// ---------------------------------------------------------------------------
inline UniquenessReport uniqueness_probe(const StateSet& a, const StateSet& b,
                                         const SolveOptions& opt =
                                             SolveOptions{}) {
  detail::require_same_size(a, b, "uniqueness_probe");
  if (!a.all_pure() || !b.all_pure()) {
    throw MixedMemberError("uniqueness_probe: both families must be pure");
  }
  const Decision d = check_pure_to_pure(a, b, opt);
  if (d.verdict != Verdict::Feasible) {
    throw WitnessInconsistentError(
        "uniqueness_probe: instance is not certified feasible");
  }
  return uniqueness_probe_with_witness(a.kets(), b.kets(), *d.witness_matrix);
}

}  // namespace statemorph
