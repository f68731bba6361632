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

#include <numbers>

#include <catch2/catch_amalgamated.hpp>

#include "statemorph/channels.hpp"
#include "statemorph/selftest.hpp"

using namespace statemorph;

namespace {
Ket plus_state() {
  ComplexVector v(2);
  v << 1.0 / std::numbers::sqrt2, 1.0 / std::numbers::sqrt2;
  return Ket(v);
}

KrausChannel identity_channel(int d) {
  return KrausChannel(d, d, {ComplexMatrix::Identity(d, d)});
}

// Fully depolarizing qubit channel: rho -> I/2.
KrausChannel depolarize2() {
  ComplexMatrix x(2, 2), y(2, 2), z(2, 2);
  x << 0, 1, 1, 0;
  y << 0, Complex(0, -1), Complex(0, 1), 0;
  z << 1, 0, 0, -1;
  std::vector<ComplexMatrix> ops = {0.5 * ComplexMatrix::Identity(2, 2),
                                    0.5 * x, 0.5 * y, 0.5 * z};
  return KrausChannel(2, 2, std::move(ops));
}
}  // namespace

TEST_CASE("Kraus completeness validation") {
  CHECK_NOTHROW(identity_channel(3));
  std::vector<ComplexMatrix> short_ops = {0.5 * ComplexMatrix::Identity(2, 2)};
  CHECK_THROWS_AS(KrausChannel(2, 2, short_ops), NotTracePreservingError);
  const KrausChannel lax = KrausChannel::unchecked(2, 2, short_ops);
  CHECK(lax.completeness_residual() > 0.5);
  CHECK_THROWS_AS(KrausChannel(2, 2, {ComplexMatrix::Identity(3, 3)}),
                  DimensionMismatchError);
}

TEST_CASE("channel application") {
  Prng rng(71);
  const ComplexMatrix rho = rng.random_density(2);
  CHECK(frobenius(identity_channel(2).apply_raw(rho) - rho) < 1e-14);
  const ComplexMatrix out = depolarize2().apply_raw(rho);
  CHECK(frobenius(out - 0.5 * ComplexMatrix::Identity(2, 2)) < 1e-12);
  const DensityMatrix dm = depolarize2().apply(DensityMatrix(rho));
  CHECK(std::abs(dm.matrix()(0, 0).real() - 0.5) < 1e-12);
  CHECK(frobenius(apply_channel(depolarize2(), rho) - out) < 1e-14);
  CHECK_THROWS_AS(identity_channel(2).apply_raw(ComplexMatrix::Identity(3, 3)),
                  DimensionMismatchError);
}

TEST_CASE("Choi matrix of the identity channel") {
  const ChoiMatrix j = identity_channel(2).choi();
  // J = |Omega><Omega| with Omega = (1,0,0,1) in the (in, out) layout.
  ComplexVector omega(4);
  omega << 1, 0, 0, 1;
  CHECK(frobenius(j.matrix() - omega * omega.adjoint()) < 1e-12);
  CHECK(std::abs(j.matrix().trace().real() - 2.0) < 1e-12);
  CHECK(j.trace_preservation_residual() < 1e-12);
}

TEST_CASE("Choi matrix of the depolarizing channel is I/2") {
  const ChoiMatrix j = depolarize2().choi();
  CHECK(frobenius(j.matrix() - 0.5 * ComplexMatrix::Identity(4, 4)) < 1e-12);
}

TEST_CASE("Choi validation") {
  CHECK_THROWS_AS(ChoiMatrix(ComplexMatrix::Identity(3, 3), 2, 2),
                  DimensionMismatchError);
  CHECK_THROWS_AS(ChoiMatrix(2.0 * ComplexMatrix::Identity(4, 4), 2, 2),
                  NotTracePreservingError);
  ComplexMatrix indefinite = ComplexMatrix::Identity(4, 4) / 2.0;
  indefinite(0, 3) = indefinite(3, 0) = 2.0;
  CHECK_THROWS_AS(ChoiMatrix(indefinite, 2, 2), NotPSDError);
  // A mildly trace-violating matrix passes with a loose tp_tol.
  ComplexMatrix loose = ComplexMatrix::Identity(4, 4) / 2.0;
  loose(0, 0) += 1e-7;
  CHECK_THROWS_AS(ChoiMatrix(loose, 2, 2), NotTracePreservingError);
  CHECK_NOTHROW(ChoiMatrix(loose, 2, 2, 1e-5));
}

TEST_CASE("Choi application matches Kraus application") {
  Prng rng(73);
  for (int trial = 0; trial < 10; ++trial) {
    const KrausChannel ch = gen::random_channel(rng, 2, 3, 2);
    const ChoiMatrix j = ch.choi();
    const ComplexMatrix rho = rng.random_density(2);
    CHECK(frobenius(j.apply_raw(rho) - ch.apply_raw(rho)) < 1e-12);
    CHECK(j.trace_preservation_residual() < 1e-12);
  }
}

TEST_CASE("kraus_from_choi round trip") {
  Prng rng(79);
  for (int trial = 0; trial < 10; ++trial) {
    const int din = 2 + static_cast<int>(rng.below(2));
    const int dout = 2 + static_cast<int>(rng.below(2));
    const KrausChannel ch = gen::random_channel(rng, din, dout, 3);
    const KrausChannel back = kraus_from_choi(ch.choi());
    CHECK(back.completeness_residual() < 1e-12);
    CHECK(frobenius(back.choi().matrix() - ch.choi().matrix()) < 1e-7);
    const ComplexMatrix rho = rng.random_density(din);
    CHECK(frobenius(back.apply_raw(rho) - ch.apply_raw(rho)) < 1e-9);
  }
}

TEST_CASE("instrument basics: measurement in the computational basis") {
  std::vector<OutcomeBranch> branches;
  branches.push_back({1, {Ket::basis(2, 0).projector()}});
  branches.push_back({2, {Ket::basis(2, 1).projector()}});
  const Instrument inst(2, 2, branches);
  CHECK(inst.num_branches() == 2);
  CHECK(inst.completeness_residual() < 1e-14);
  const ComplexMatrix plus = plus_state().projector();
  CHECK(std::abs(inst.branch_probability(0, plus) - 0.5) < 1e-12);
  CHECK(std::abs(inst.branch_probability(1, plus) - 0.5) < 1e-12);
  // The total channel dephases.
  const ComplexMatrix total = inst.total_channel().apply_raw(plus);
  CHECK(std::abs(total(0, 1)) < 1e-14);
  CHECK(std::abs(total(0, 0).real() - 0.5) < 1e-14);

  // Incomplete branch sets are rejected.
  std::vector<OutcomeBranch> half = {{1, {Ket::basis(2, 0).projector()}}};
  CHECK_THROWS_AS(Instrument(2, 2, half), NotTracePreservingError);
}

TEST_CASE("isometry witness construction for pure families") {
  // {|0>, |+>} -> {|0>, |0>}: witness M must have M01 = <0|+> / 1.
  const std::vector<Ket> sources = {Ket::basis(2, 0), plus_state()};
  const std::vector<Ket> targets = {Ket::basis(2, 0), Ket::basis(2, 0)};
  ComplexMatrix m(2, 2);
  const double r = 1.0 / std::numbers::sqrt2;
  m << 1.0, r, r, 1.0;
  const IsometryWitness w = isometry_from_gram_witness(sources, targets, m);
  CHECK(w.isometry_defect < 1e-10);
  const KrausChannel ch = channel_from_isometry(w);
  const ChannelVerification v =
      verify_channel(ch, StateSet::from_kets(sources),
                     StateSet::from_kets(targets));
  CHECK(v.pass);
  CHECK(v.max_state_error < 1e-8);
  CHECK(v.completeness_residual <= 1e-8);
}

TEST_CASE("isometry witness rejects inconsistent gram data") {
  const std::vector<Ket> sources = {Ket::basis(2, 0), plus_state()};
  const std::vector<Ket> targets = {Ket::basis(2, 0), Ket::basis(2, 0)};
  ComplexMatrix wrong(2, 2);
  wrong << 1.0, 0.3, 0.3, 1.0;  // 0.3 != <0|+>
  CHECK_THROWS_AS(isometry_from_gram_witness(sources, targets, wrong),
                  WitnessInconsistentError);
}

TEST_CASE("planted feasible instances construct and verify") {
  Prng rng(83);
  for (int trial = 0; trial < 20; ++trial) {
    const int dim = 2 + static_cast<int>(rng.below(3));
    const int n = 2 + static_cast<int>(rng.below(3));
    const gen::FeasiblePureInstance inst =
        gen::feasible_pure_instance(rng, dim, n);
    const IsometryWitness w = isometry_from_gram_witness(
        inst.sources.kets(), inst.targets.kets(), inst.planted_witness);
    const KrausChannel ch = channel_from_isometry(w);
    const ChannelVerification v = verify_channel(ch, inst.sources, inst.targets);
    CHECK(v.pass);
    CHECK(v.completeness_residual <= 1e-8);
  }
}

TEST_CASE("constructed channels never lower fidelity between probes") {
  Prng rng(89);
  const gen::FeasiblePureInstance inst = gen::feasible_pure_instance(rng, 3, 3);
  const IsometryWitness w = isometry_from_gram_witness(
      inst.sources.kets(), inst.targets.kets(), inst.planted_witness);
  const KrausChannel ch = channel_from_isometry(w);
  for (int k = 0; k < 100; ++k) {
    const ComplexMatrix r1 = rng.random_density(ch.dim_in());
    const ComplexMatrix r2 = rng.random_density(ch.dim_in());
    CHECK(fidelity(ch.apply_raw(r1), ch.apply_raw(r2)) >=
          fidelity(r1, r2) - 1e-7);
  }
}

TEST_CASE("pure pair channel reaches mixed targets exactly") {
  Prng rng(101);
  int constructed = 0;
  for (int trial = 0; trial < 40; ++trial) {
    const int da = 2 + static_cast<int>(rng.below(3));
    const int db = 2 + static_cast<int>(rng.below(3));
    const Ket a1{rng.random_ket(da)}, a2{rng.random_ket(da)};
    const ComplexMatrix b1 = rng.random_density(db);
    const ComplexMatrix b2 = rng.random_density(db);
    // Only clearly feasible draws: target fidelity above the source overlap.
    if (fidelity(b1, b2) < std::abs(a1.overlap(a2)) + 1e-3) continue;
    const KrausChannel ch = channel_from_pure_pair(a1, a2, b1, b2);
    CHECK(ch.completeness_residual() <= 1e-10);
    CHECK(trace_norm(ch.apply_raw(a1.projector()) - b1) < 1e-8);
    CHECK(trace_norm(ch.apply_raw(a2.projector()) - b2) < 1e-8);
    ++constructed;
  }
  REQUIRE(constructed >= 10);
}

TEST_CASE("pure pair channel at the fidelity boundary") {
  // Unitarily rotated pure targets make the fidelity equal the overlap, the
  // extreme case the construction must still handle.
  Prng rng(103);
  for (int trial = 0; trial < 10; ++trial) {
    const int d = 2 + trial % 3;
    const Ket a1{rng.random_ket(d)}, a2{rng.random_ket(d)};
    const ComplexMatrix u = rng.random_unitary(d);
    const ComplexMatrix b1 = u * a1.projector() * u.adjoint();
    const ComplexMatrix b2 = u * a2.projector() * u.adjoint();
    const KrausChannel ch = channel_from_pure_pair(a1, a2, b1, b2);
    CHECK(ch.completeness_residual() <= 1e-8);
    CHECK(trace_norm(ch.apply_raw(a1.projector()) - b1) < 1e-6);
    CHECK(trace_norm(ch.apply_raw(a2.projector()) - b2) < 1e-6);
  }
}

TEST_CASE("pure pair channel with orthogonal targets") {
  const Ket a1 = Ket::basis(2, 0), a2 = Ket::basis(2, 1);
  const ComplexMatrix b1 = Ket::basis(3, 0).projector();
  const ComplexMatrix b2 = Ket::basis(3, 2).projector();
  const KrausChannel ch = channel_from_pure_pair(a1, a2, b1, b2);
  CHECK(ch.completeness_residual() <= 1e-10);
  CHECK(trace_norm(ch.apply_raw(a1.projector()) - b1) < 1e-10);
  CHECK(trace_norm(ch.apply_raw(a2.projector()) - b2) < 1e-10);
}

TEST_CASE("pure pair channel rejects infeasible pairs") {
  const Ket a1 = Ket::basis(2, 0);
  const Ket a2 = plus_state();
  const ComplexMatrix b1 = Ket::basis(2, 0).projector();
  const ComplexMatrix b2 = Ket::basis(2, 1).projector();
  CHECK_THROWS_AS(channel_from_pure_pair(a1, a2, b1, b2),
                  WitnessInconsistentError);
}

TEST_CASE("instrument from a multi-outcome witness") {
  Prng rng(97);
  // Plant a two-outcome instrument via a random isometry C^2 -> C^2 (x) C^2.
  const int n = 3;
  std::vector<Ket> sources;
  for (int i = 0; i < n; ++i) sources.push_back(Ket(rng.random_ket(2)));
  const ComplexMatrix iso = rng.random_unitary(4).leftCols(2);
  std::vector<std::vector<Ket>> fams(2);
  RealMatrix pm(n, 2);
  for (int i = 0; i < n; ++i) {
    const ComplexVector lifted = iso * sources[i].amplitudes();
    for (int j = 0; j < 2; ++j) {
      ComplexVector branch(2);
      branch << lifted(j), lifted(2 + j);
      pm(i, j) = branch.squaredNorm();
      fams[j].push_back(Ket::normalized(branch));
    }
  }
  const ProbabilityMatrix p(pm);
  // Outcome gram factors: Pi^j(i,k) = <A_j a_i | A_j a_k> / <b_i|b_k>
  // realized directly as the planted rank data.
  std::vector<ComplexMatrix> blocks;
  for (int j = 0; j < 2; ++j) {
    ComplexMatrix pi(n, n);
    for (int i = 0; i < n; ++i) {
      for (int k = 0; k < n; ++k) {
        pi(i, k) = std::sqrt(pm(i, j) * pm(k, j));
      }
    }
    blocks.push_back(pi);
  }
  const Instrument inst =
      instrument_from_witness(sources, fams, p, blocks);
  const ChannelVerification v =
      verify_channel(inst, StateSet::from_kets(sources), fams, p);
  CHECK(v.pass);
  CHECK(v.max_probability_error < 1e-7);
  CHECK(v.max_post_state_error < 1e-6);
}

TEST_CASE("instrument witness with failure slack branch") {
  // Unambiguous discrimination at p = 0.05: sources overlap 0.9, orthogonal
  // targets; slack block is the failure-outcome gram data.
  ComplexVector a2v(2);
  a2v << 0.9, std::sqrt(1.0 - 0.81);
  const std::vector<Ket> sources = {Ket::basis(2, 0), Ket(a2v)};
  const std::vector<std::vector<Ket>> fams = {
      {Ket::basis(2, 0), Ket::basis(2, 1)}};
  RealMatrix pm(2, 1);
  pm << 0.05, 0.05;
  const ProbabilityMatrix p(pm);
  const auto out = hadamard_sum_feasibility(
      gram_from_kets(sources), {gram_from_kets(fams[0])}, p,
      MultiProbMode::Subnormalized);
  REQUIRE(out.status == FeasStatus::Feasible);
  REQUIRE(out.witness.size() == 2);
  const Instrument inst =
      instrument_from_witness(sources, fams, p, out.witness);
  // The failure branch carries label 0 and probability 0.95 on each source.
  bool saw_failure = false;
  for (int b = 0; b < inst.num_branches(); ++b) {
    if (inst.branches()[b].label != 0) continue;
    saw_failure = true;
    for (const Ket& s : sources) {
      CHECK(std::abs(inst.branch_probability(b, s.projector()) - 0.95) < 1e-6);
    }
  }
  CHECK(saw_failure);
  const ChannelVerification v =
      verify_channel(inst, StateSet::from_kets(sources), fams, p);
  CHECK(v.pass);
}

TEST_CASE("instrument extraction from a Choi matrix") {
  Prng rng(101);
  const KrausChannel planted = gen::random_channel(rng, 2, 3, 2);
  StateSet sources(2);
  sources.add(Ket::basis(2, 0));
  sources.add(Ket(rng.random_ket(2)));
  StateSet targets(3);
  for (int i = 0; i < sources.size(); ++i) {
    targets.add(DensityMatrix(planted.apply_raw(
        sources.ket(i).projector())));
  }
  const ChoiInstrument got =
      instrument_from_choi(sources, targets, planted.choi());
  // Branch outputs mix back to the targets with the stated weights.
  REQUIRE(static_cast<int>(got.decompositions.size()) == sources.size());
  for (int i = 0; i < sources.size(); ++i) {
    ComplexMatrix mix = ComplexMatrix::Zero(3, 3);
    double total = 0.0;
    for (const auto& [w, k] : got.decompositions[i]) {
      mix += w * k.projector();
      total += w;
    }
    CHECK(std::abs(total - 1.0) < 1e-9);
    CHECK(frobenius(mix - targets.density(i).matrix()) < 1e-6);
  }
  const ChannelVerification v =
      verify_channel(got.instrument, sources, targets);
  CHECK(v.pass);

  // A Choi matrix that does not actually map the sources to the targets is
  // rejected.
  StateSet wrong(3);
  wrong.add(DensityMatrix(ComplexMatrix::Identity(3, 3) / 3.0));
  wrong.add(DensityMatrix(ComplexMatrix::Identity(3, 3) / 3.0));
  CHECK_THROWS_AS(instrument_from_choi(sources, wrong, planted.choi()),
                  WitnessInconsistentError);
}

TEST_CASE("verify_channel flags mismatches") {
  const StateSet a = StateSet::from_kets({Ket::basis(2, 0), plus_state()});
  const StateSet b = StateSet::from_kets({Ket::basis(2, 0), Ket::basis(2, 1)});
  const ChannelVerification v = verify_channel(identity_channel(2), a, b);
  CHECK_FALSE(v.pass);
  CHECK(v.max_state_error > 0.5);
}

TEST_CASE("uniqueness probe is gauge independent on zero-free targets") {
  Prng rng(103);
  for (int trial = 0; trial < 5; ++trial) {
    const gen::FeasiblePureInstance inst =
        gen::feasible_pure_instance(rng, 2, 3);
    bool zero_free = true;
    const ComplexMatrix gb = gram_from_states(inst.targets).matrix();
    for (int i = 0; i < 3 && zero_free; ++i) {
      for (int j = 0; j < 3; ++j) {
        if (i != j && std::abs(gb(i, j)) < 1e-3) zero_free = false;
      }
    }
    if (!zero_free) continue;
    const UniquenessReport rep = uniqueness_probe_with_witness(
        inst.sources.kets(), inst.targets.kets(), inst.planted_witness);
    CHECK(rep.pass);
    CHECK(rep.max_difference <= 1e-7);
    CHECK(rep.span_dim >= 1);
  }
}

TEST_CASE("uniqueness probe rejects orthogonal targets") {
  const std::vector<Ket> sources = {Ket::basis(2, 0), plus_state()};
  const std::vector<Ket> targets = {Ket::basis(2, 0), Ket::basis(2, 1)};
  CHECK_THROWS_AS(
      uniqueness_probe_with_witness(sources, targets,
                                    ComplexMatrix::Identity(2, 2)),
      OrthogonalTargetsError);
}
