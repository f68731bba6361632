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

#include <ostream>
#include <string>
#include <vector>

#include "statemorph/decide.hpp"
#include "statemorph/io.hpp"
#include "statemorph/random.hpp"

namespace statemorph {

// Deterministic instance generators shared by the self-test command and the
// test suites.  Everything is a pure function of the Prng state.
namespace gen {

inline StateSet random_pure_set(Prng& rng, int dim, int n) {
  StateSet s(dim);
  for (int i = 0; i < n; ++i) s.add(Ket(rng.random_ket(dim)));
  return s;
}

inline StateSet random_mixed_set(Prng& rng, int dim, int n, int rank = 0) {
  StateSet s(dim);
  for (int i = 0; i < n; ++i) s.add(DensityMatrix(rng.random_density(dim, rank)));
  return s;
}

// A random channel with the given environment size, as Kraus operators cut
// from a Haar-ish random isometry.
inline KrausChannel random_channel(Prng& rng, int din, int dout, int env) {
  const ComplexMatrix g = rng.gaussian_matrix(dout * env, din);
  Eigen::HouseholderQR<ComplexMatrix> qr(g);
  const ComplexMatrix q = qr.householderQ() * ComplexMatrix::Identity(dout * env, din);
  std::vector<ComplexMatrix> ops;
  for (int e = 0; e < env; ++e) {
    ComplexMatrix a(dout, din);
    for (int out = 0; out < dout; ++out) a.row(out) = q.row(out * env + e);
    ops.push_back(std::move(a));
  }
  return KrausChannel(din, dout, std::move(ops));
}

// A pure-to-pure instance that is feasible by construction: the source Gram
// matrix is the Hadamard product of the target Gram matrix with a random
// ket Gram matrix, which is itself the certifying witness.
struct FeasiblePureInstance {
  StateSet sources;
  StateSet targets;
  ComplexMatrix planted_witness;
};

inline FeasiblePureInstance feasible_pure_instance(Prng& rng, int target_dim,
                                                   int n, int witness_rank = 2) {
  const StateSet targets = random_pure_set(rng, target_dim, n);
  const GramMatrix gb = gram_from_states(targets);
  std::vector<Ket> phis;
  for (int i = 0; i < n; ++i) phis.push_back(Ket(rng.random_ket(witness_rank)));
  const GramMatrix phi = gram_from_kets(phis);
  const GramMatrix ga(hadamard(phi.matrix(), gb.matrix()));
  return {StateSet::from_kets(kets_from_gram(ga)), targets, phi.matrix()};
}

// A multi-outcome instance that is feasible with a strictly positive
// definite witness, so alternating projections converge quickly: each block
// Pi^j = D_j Phi_j D_j is built from a full-rank random ket Gram matrix
// Phi_j and D_j = diag(sqrt of the outcome probabilities), and the source
// Gram matrix is assembled as sum_j Pi^j o G_B^j (+ slack block in the
// subnormalized case).
struct FeasibleMultiprobInstance {
  StateSet sources;                        // pure, dimension n
  std::vector<std::vector<Ket>> families;  // per-outcome pure targets
  RealMatrix probabilities;                // n x m
  std::vector<ComplexMatrix> planted_blocks;  // m blocks (+ slack when sub)
  bool subnormalized = false;
};

inline FeasibleMultiprobInstance feasible_multiprob_instance(
    Prng& rng, int target_dim, int n, int m, bool subnormalized) {
  const double row_total = subnormalized ? 0.8 : 1.0;
  RealMatrix p(n, m);
  for (int i = 0; i < n; ++i) {
    double sum = 0.0;
    for (int j = 0; j < m; ++j) {
      p(i, j) = 0.2 + rng.uniform();
      sum += p(i, j);
    }
    for (int j = 0; j < m; ++j) p(i, j) *= row_total / sum;
  }

  auto positive_block = [&rng, n](const RealVector& diag) {
    std::vector<Ket> xs;
    for (int i = 0; i < n; ++i) xs.push_back(Ket(rng.random_ket(n)));
    ComplexMatrix block = gram_from_kets(xs).matrix();
    for (int i = 0; i < n; ++i) {
      for (int k = 0; k < n; ++k) {
        block(i, k) *= std::sqrt(diag(i) * diag(k));
      }
    }
    return block;
  };

  std::vector<std::vector<Ket>> families;
  std::vector<ComplexMatrix> blocks;
  ComplexMatrix ga = ComplexMatrix::Zero(n, n);
  for (int j = 0; j < m; ++j) {
    std::vector<Ket> fam;
    for (int i = 0; i < n; ++i) fam.push_back(Ket(rng.random_ket(target_dim)));
    const ComplexMatrix gb = gram_from_kets(fam).matrix();
    const ComplexMatrix block = positive_block(p.col(j));
    ga += hadamard(block, gb);
    families.push_back(std::move(fam));
    blocks.push_back(block);
  }
  if (subnormalized) {
    RealVector failure(n);
    for (int i = 0; i < n; ++i) failure(i) = 1.0 - p.row(i).sum();
    const ComplexMatrix slack = positive_block(failure);
    ga += slack;
    blocks.push_back(slack);
  }
  return {StateSet::from_kets(kets_from_gram(GramMatrix(ga))),
          std::move(families), std::move(p), std::move(blocks), subnormalized};
}

}  // namespace gen

// ---------------------------------------------------------------------------
// Deterministic self-test: fixed seed, fixed iteration order, no timing, so
// two runs with the same arguments emit byte-identical reports.
// ---------------------------------------------------------------------------
namespace detail {
class SelftestReport {
 public:
  explicit SelftestReport(std::ostream& os) : os_(os) {}

  void line(const std::string& text) { os_ << text << '\n'; }

  void suite(const std::string& name, int cases, int failures,
             const std::string& extra = "") {
    os_ << "suite=" << name << " cases=" << cases << " failures=" << failures;
    if (!extra.empty()) os_ << ' ' << extra;
    os_ << " status=" << (failures == 0 ? "ok" : "FAIL") << '\n';
    ++suites_;
    failures_ += failures;
  }

  int finish() {
    os_ << "selftest suites=" << suites_ << " failures=" << failures_
        << " overall=" << (failures_ == 0 ? "ok" : "FAIL") << '\n';
    return failures_ == 0 ? 0 : 1;
  }

 private:
  std::ostream& os_;
  int suites_ = 0;
  int failures_ = 0;
};
}  // namespace detail

// Runs the built-in consistency suites.  `instances` scales how many random
// cases each suite draws.  Returns 0 when everything passed.
inline int run_selftest(std::ostream& os, std::uint64_t seed, int instances) {
  detail::SelftestReport report(os);
  os << "statemorph selftest seed=" << seed << " instances=" << instances
     << '\n';

  // Suite 1: the Gram-Hadamard criterion and the general Choi oracle must
  // agree on random pure-to-pure instances whenever both commit to a
  // decisive verdict away from the boundary.
  {
    Prng rng = Prng(seed).substream(1);
    int cases = 0, failures = 0, agreements = 0, indeterminate = 0, skipped = 0;
    for (int k = 0; k < instances; ++k) {
      const int dim = 2 + static_cast<int>(rng.below(2));
      const int n = 2 + static_cast<int>(rng.below(2));
      const StateSet a = gen::random_pure_set(rng, dim, n);
      const StateSet b = gen::random_pure_set(rng, dim, n);
      const Decision lhs = check_pure_to_pure(a, b);
      const Decision rhs = choi_oracle(a, b);
      ++cases;
      if (lhs.verdict == Verdict::Indeterminate ||
          rhs.verdict == Verdict::Indeterminate) {
        ++indeterminate;
        continue;
      }
      if (lhs.boundary || rhs.boundary) {
        ++skipped;
        continue;
      }
      if (lhs.verdict == rhs.verdict) {
        ++agreements;
      } else {
        ++failures;
        os << "  disagree case=" << k << " gram=" << to_string(lhs.verdict)
           << " choi=" << to_string(rhs.verdict)
           << " gram_margin=" << format_number(lhs.margin)
           << " choi_margin=" << format_number(rhs.margin) << '\n';
      }
    }
    std::ostringstream extra;
    extra << "agree=" << agreements << " indeterminate=" << indeterminate
          << " boundary=" << skipped;
    report.suite("oracle-agreement", cases, failures, extra.str());
  }

  // Suite 2: the exact qubit-pair decision against the Choi oracle.
  {
    Prng rng = Prng(seed).substream(2);
    int cases = 0, failures = 0, indeterminate = 0, skipped = 0;
    for (int k = 0; k < instances; ++k) {
      const StateSet a = gen::random_mixed_set(rng, 2, 2);
      const StateSet b = gen::random_mixed_set(rng, 2, 2);
      const Decision lhs = check_qubit_pair(a, b);
      const Decision rhs = choi_oracle(a, b);
      ++cases;
      if (rhs.verdict == Verdict::Indeterminate) {
        ++indeterminate;
        continue;
      }
      if (lhs.boundary || rhs.boundary) {
        ++skipped;
        continue;
      }
      if (lhs.verdict != rhs.verdict) {
        ++failures;
        os << "  disagree case=" << k << " exact=" << to_string(lhs.verdict)
           << " choi=" << to_string(rhs.verdict)
           << " exact_margin=" << format_number(lhs.margin) << '\n';
      }
    }
    std::ostringstream extra;
    extra << "indeterminate=" << indeterminate << " boundary=" << skipped;
    report.suite("qubit-pair", cases, failures, extra.str());
  }

  // Suite 3: feasible-by-construction instances must check out feasible and
  // the constructed channel must reproduce the targets.
  {
    Prng rng = Prng(seed).substream(3);
    int cases = 0, failures = 0;
    double worst_error = 0.0;
    for (int k = 0; k < instances; ++k) {
      const int dim = 2 + static_cast<int>(rng.below(3));
      const int n = 2 + static_cast<int>(rng.below(2));
      const gen::FeasiblePureInstance inst =
          gen::feasible_pure_instance(rng, dim, n);
      ++cases;
      const Decision d = check_pure_to_pure(inst.sources, inst.targets);
      if (d.verdict != Verdict::Feasible) {
        ++failures;
        os << "  construct case=" << k
           << " planted instance not feasible: " << to_string(d.verdict)
           << '\n';
        continue;
      }
      const IsometryWitness w = isometry_from_gram_witness(
          inst.sources.kets(), inst.targets.kets(), *d.witness_matrix);
      const KrausChannel ch = channel_from_isometry(w);
      const ChannelVerification v =
          verify_channel(ch, inst.sources, inst.targets);
      worst_error = std::max(worst_error, v.max_state_error);
      if (!v.pass) {
        ++failures;
        os << "  construct case=" << k << " verification error="
           << format_number(v.max_state_error) << '\n';
      }
    }
    std::ostringstream extra;
    extra << "max_error=" << format_number(worst_error);
    report.suite("construct-verify", cases, failures, extra.str());
  }

  // Suite 4: representation round trips (Kraus <-> Choi, Gram <-> kets).
  {
    Prng rng = Prng(seed).substream(4);
    int cases = 0, failures = 0;
    double worst = 0.0;
    for (int k = 0; k < instances; ++k) {
      const int din = 2 + static_cast<int>(rng.below(2));
      const int dout = 2 + static_cast<int>(rng.below(2));
      const KrausChannel ch = gen::random_channel(rng, din, dout, 2);
      const ChoiMatrix choi = ch.choi();
      const KrausChannel back = kraus_from_choi(choi);
      double defect = frobenius(back.choi().matrix() - choi.matrix());
      const StateSet probe = gen::random_pure_set(rng, din, 3);
      const GramMatrix g = gram_from_states(probe);
      const GramMatrix g2 = gram_from_kets(kets_from_gram(g));
      defect = std::max(defect, frobenius(g.matrix() - g2.matrix()));
      worst = std::max(worst, defect);
      ++cases;
      if (defect > 1e-7) {
        ++failures;
        os << "  roundtrip case=" << k << " defect=" << format_number(defect)
           << '\n';
      }
    }
    std::ostringstream extra;
    extra << "max_defect=" << format_number(worst);
    report.suite("roundtrip", cases, failures, extra.str());
  }

  // Suite 5: data-processing monotonicity — pushing a pair of states
  // through any channel may only increase fidelity and shrink trace
  // distance.
  {
    Prng rng = Prng(seed).substream(5);
    int cases = 0, failures = 0;
    for (int k = 0; k < instances; ++k) {
      const int din = 2 + static_cast<int>(rng.below(2));
      const int dout = 2 + static_cast<int>(rng.below(2));
      const KrausChannel ch = gen::random_channel(rng, din, dout, 2);
      const ComplexMatrix r1 = rng.random_density(din);
      const ComplexMatrix r2 = rng.random_density(din);
      const double f_before = fidelity(r1, r2);
      const double f_after = fidelity(ch.apply_raw(r1), ch.apply_raw(r2));
      const double d_before = trace_norm(r1 - r2);
      const double d_after = trace_norm(ch.apply_raw(r1) - ch.apply_raw(r2));
      ++cases;
      if (f_after < f_before - 1e-9 || d_after > d_before + 1e-9) {
        ++failures;
        os << "  monotone case=" << k
           << " fidelity " << format_number(f_before) << " -> "
           << format_number(f_after) << " trace-dist "
           << format_number(d_before) << " -> " << format_number(d_after)
           << '\n';
      }
    }
    report.suite("monotonicity", cases, failures);
  }

  return report.finish();
}

}  // namespace statemorph
