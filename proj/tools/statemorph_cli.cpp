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

// Command line front end.
//
// Exit codes: 0 feasible / success, 1 infeasible, 2 indeterminate,
// 3 bad input, 4 internal inconsistency (e.g. a witness that fails
// re-verification).

#include <chrono>
#include <cstdint>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "statemorph/statemorph.hpp"

namespace {

using namespace statemorph;

constexpr int kExitFeasible = 0;
constexpr int kExitInfeasible = 1;
constexpr int kExitIndeterminate = 2;
constexpr int kExitBadInput = 3;
constexpr int kExitInternal = 4;

int verdict_exit(Verdict v) {
  switch (v) {
    case Verdict::Feasible: return kExitFeasible;
    case Verdict::Infeasible: return kExitInfeasible;
    default: return kExitIndeterminate;
  }
}

double elapsed_ms(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double, std::milli>(
             std::chrono::steady_clock::now() - t0)
      .count();
}

void emit(const JsonValue& report, const std::string& out_path) {
  const std::string text = report.dump();
  std::cout << text;
  if (!out_path.empty()) write_text_file(out_path, text);
}

Decision dispatch_check(const std::string& method, const StateSet& a,
                        const StateSet& b) {
  if (method == "pure") return check_pure_to_pure(a, b);
  if (method == "pure-pair") return check_pure_pair(a, b);
  if (method == "qubit-pair") return check_qubit_pair(a, b);
  if (method == "mixed-to-pure") return check_mixed_to_pure(a, b);
  if (method == "pure-to-mixed") return check_pure_to_mixed(a, b);
  if (method == "choi") return choi_oracle(a, b);
  if (method == "fidelity") return fidelity_necessary(a, b);
  if (method == "mutual") return mutual_check(a, b);
  if (method != "auto") {
    throw ParseError("unknown method \"" + method + "\"");
  }
  // Prefer exact special cases, then criteria with witnesses, then the
  // general oracle.
  if (a.size() == 2 && a.all_pure() && !b.all_pure()) return check_pure_pair(a, b);
  if (a.size() == 2 && a.dim() == 2 && b.dim() == 2 && !a.all_pure()) {
    return check_qubit_pair(a, b);
  }
  if (a.all_pure() && b.all_pure()) return check_pure_to_pure(a, b);
  if (b.all_pure()) return check_mixed_to_pure(a, b);
  if (a.all_pure()) return check_pure_to_mixed(a, b);
  if (a.size() == 2 && a.dim() == 2 && b.dim() == 2) {
    return check_qubit_pair(a, b);
  }
  return choi_oracle(a, b);
}

// Try to turn a feasible decision into an explicit channel or instrument.
// Returns nothing when the decision carries no usable witness.
struct Construction {
  std::optional<KrausChannel> channel;
  std::optional<Instrument> instrument;
  ChannelVerification verification;
};

std::optional<Construction> construct_from_decision(const Decision& d,
                                                    const StateSet& a,
                                                    const StateSet& b,
                                                    double tolerance) {
  Construction c;
  if (d.instrument) {
    c.instrument = *d.instrument;
    c.channel = d.instrument->total_channel();
    c.verification = verify_channel(*c.channel, a, b, tolerance);
    return c;
  }
  if (!d.witness_matrix && a.size() == 2 && a.all_pure()) {
    // A feasible pure pair has an exact closed-form construction; no witness
    // from the decision is needed.
    c.channel = channel_from_pure_pair(a.ket(0), a.ket(1),
                                       b.density(0).matrix(),
                                       b.density(1).matrix());
    c.verification = verify_channel(*c.channel, a, b, tolerance);
    return c;
  }
  if (!d.witness_matrix) return std::nullopt;
  if (d.method == "gram-hadamard") {
    const IsometryWitness w =
        isometry_from_gram_witness(a.kets(), b.kets(), *d.witness_matrix);
    c.channel = channel_from_isometry(w);
  } else if (d.method == "mixed-to-pure") {
    const MixedToPureExpansion ex = expand_mixed_to_pure(a, b);
    const IsometryWitness w =
        isometry_from_gram_witness(ex.sources, ex.targets, *d.witness_matrix);
    c.channel = channel_from_isometry(w);
  } else if (d.method == "choi" || d.method == "pure-to-mixed-choi") {
    const ChoiMatrix choi(*d.witness_matrix, a.dim(), b.dim(), 1e-6);
    c.channel = kraus_from_choi(choi);
  } else {
    return std::nullopt;
  }
  c.verification = verify_channel(*c.channel, a, b, tolerance);
  return c;
}

int cmd_check(const std::string& sources_path, const std::string& targets_path,
              const std::string& method, double tolerance, bool verify,
              const std::string& out_path) {
  const auto t0 = std::chrono::steady_clock::now();
  const StateSet a = load_state_set(sources_path);
  const StateSet b = load_state_set(targets_path);
  const Decision d = dispatch_check(method, a, b);

  JsonValue report = JsonValue::object();
  report.set("command", JsonValue::str("check"));
  report.set("sources", JsonValue::str(sources_path));
  report.set("targets", JsonValue::str(targets_path));
  JsonValue decision = decision_to_json(d);
  bool verify_failed = false;
  if (verify) {
    // Cross-check the decision against the general oracle; a decisive
    // disagreement away from the boundary is an internal error.  A feasible
    // verdict with a constructive witness is additionally re-verified by
    // building the channel.
    if (d.method != "choi" && d.method != "pure-to-mixed-choi") {
      const Decision oracle = choi_oracle(a, b);
      decision.set("oracle_crosscheck", decision_to_json(oracle));
      if (d.verdict != Verdict::Indeterminate &&
          oracle.verdict != Verdict::Indeterminate && !d.boundary &&
          !oracle.boundary && d.verdict != oracle.verdict) {
        verify_failed = true;
      }
    }
    if (d.verdict == Verdict::Feasible) {
      try {
        const std::optional<Construction> c =
            construct_from_decision(d, a, b, tolerance);
        if (c) {
          decision.set("verification", verification_to_json(c->verification));
          verify_failed = verify_failed || !c->verification.pass;
        } else {
          decision.set("verification",
                       JsonValue::str("no constructive witness"));
        }
      } catch (const Error& e) {
        decision.set("verification",
                     JsonValue::str(std::string("failed: ") + e.what()));
        verify_failed = true;
      }
    }
  }
  report.set("decision", std::move(decision));
  report.set("wall_time_ms", JsonValue::number(elapsed_ms(t0)));
  emit(report, out_path);
  if (verify_failed) return kExitInternal;
  return verdict_exit(d.verdict);
}

int cmd_construct(const std::string& sources_path,
                  const std::string& targets_path, const std::string& method,
                  double tolerance, const std::string& out_path) {
  const auto t0 = std::chrono::steady_clock::now();
  const StateSet a = load_state_set(sources_path);
  const StateSet b = load_state_set(targets_path);
  Decision d = dispatch_check(method, a, b);
  // The pair criteria decide but do not produce a witness; fall back to the
  // constructive oracle when they say feasible.  Two pure sources are exempt:
  // construct_from_decision handles them in closed form.
  if (d.verdict == Verdict::Feasible && !d.witness_matrix && !d.instrument &&
      !(a.size() == 2 && a.all_pure())) {
    if (a.all_pure()) {
      Decision viaChoi = check_pure_to_mixed(a, b);
      if (viaChoi.verdict == Verdict::Feasible) d = std::move(viaChoi);
    } else {
      Decision viaChoi = choi_oracle(a, b);
      if (viaChoi.verdict == Verdict::Feasible) d = std::move(viaChoi);
    }
  }

  JsonValue report = JsonValue::object();
  report.set("command", JsonValue::str("construct"));
  report.set("decision", decision_to_json(d));
  if (d.verdict != Verdict::Feasible) {
    report.set("wall_time_ms", JsonValue::number(elapsed_ms(t0)));
    emit(report, "");
    return verdict_exit(d.verdict);
  }

  std::optional<Construction> c;
  try {
    c = construct_from_decision(d, a, b, tolerance);
  } catch (const Error& e) {
    report.set("error", JsonValue::str(e.what()));
    report.set("wall_time_ms", JsonValue::number(elapsed_ms(t0)));
    emit(report, "");
    return kExitInternal;
  }
  if (!c) {
    report.set("error", JsonValue::str("feasible but no constructive witness"));
    report.set("wall_time_ms", JsonValue::number(elapsed_ms(t0)));
    emit(report, "");
    return kExitInternal;
  }
  JsonValue artifact = c->instrument ? instrument_to_json(*c->instrument)
                                     : channel_to_json(*c->channel);
  if (!out_path.empty()) write_text_file(out_path, artifact.dump());
  report.set("witness", std::move(artifact));
  report.set("verification", verification_to_json(c->verification));
  report.set("wall_time_ms", JsonValue::number(elapsed_ms(t0)));
  emit(report, "");
  return c->verification.pass ? kExitFeasible : kExitInternal;
}

int cmd_gram(const std::string& states_path, bool canonical,
             const std::string& out_path) {
  const StateSet s = load_state_set(states_path);
  const GramMatrix g = canonical ? canonical_gram(s) : gram_from_states(s);
  JsonValue report = JsonValue::object();
  report.set("command", JsonValue::str("gram"));
  report.set("canonical", JsonValue::boolean(canonical));
  report.set("size", JsonValue::integer(g.size()));
  report.set("min_eigenvalue", JsonValue::number(g.min_eigenvalue()));
  report.set("matrix", matrix_to_json(g.matrix()));
  emit(report, out_path);
  return kExitFeasible;
}

int cmd_multiprob(const std::string& sources_path,
                  const std::vector<std::string>& family_paths,
                  const std::string& probs_path, const std::string& mode_name,
                  double tolerance, bool construct,
                  const std::string& out_path) {
  const StateSet a = load_state_set(sources_path);
  std::vector<StateSet> families;
  for (const std::string& p : family_paths) families.push_back(load_state_set(p));
  const ProbabilityMatrix p = parse_probability_matrix(load_json(probs_path));
  MultiProbMode mode;
  if (mode_name == "exact") {
    mode = MultiProbMode::Exact;
  } else if (mode_name == "subnorm") {
    mode = MultiProbMode::Subnormalized;
  } else {
    throw ParseError("unknown mode \"" + mode_name + "\"");
  }
  const Decision d = check_multiprob(a, families, p, mode);

  JsonValue report = JsonValue::object();
  report.set("command", JsonValue::str("multiprob"));
  report.set("mode", JsonValue::str(mode_name));
  JsonValue decision = decision_to_json(d);
  bool verify_failed = false;
  if (construct && d.verdict == Verdict::Feasible && d.witness_blocks) {
    try {
      std::vector<std::vector<Ket>> fam_kets;
      for (const StateSet& f : families) fam_kets.push_back(f.kets());
      const Instrument inst = instrument_from_witness(a.kets(), fam_kets, p,
                                                      *d.witness_blocks);
      const ChannelVerification v = verify_channel(inst, a, fam_kets, p, tolerance);
      report.set("witness", instrument_to_json(inst));
      decision.set("verification", verification_to_json(v));
      verify_failed = !v.pass;
    } catch (const Error& e) {
      decision.set("verification",
                   JsonValue::str(std::string("failed: ") + e.what()));
      verify_failed = true;
    }
  }
  report.set("decision", std::move(decision));
  emit(report, out_path);
  if (verify_failed) return kExitInternal;
  return verdict_exit(d.verdict);
}

int cmd_helstrom(const std::string& states_path, std::vector<double> priors,
                 const std::string& out_path) {
  const StateSet s = load_state_set(states_path);
  if (s.size() != 2) throw ParseError("helstrom needs exactly two states");
  if (priors.empty()) priors = {0.5, 0.5};
  if (priors.size() != 2) throw ParseError("helstrom needs two priors");
  const double bound = helstrom(priors[0], s.density(0), priors[1], s.density(1));
  JsonValue report = JsonValue::object();
  report.set("command", JsonValue::str("helstrom"));
  JsonValue pj = JsonValue::array();
  pj.push(JsonValue::number(priors[0]));
  pj.push(JsonValue::number(priors[1]));
  report.set("priors", std::move(pj));
  report.set("error_probability", JsonValue::number(bound));
  report.set("success_probability", JsonValue::number(1.0 - bound));
  emit(report, out_path);
  return kExitFeasible;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Feasibility analysis and construction of quantum channels "
               "mapping one family of states to another"};
  app.require_subcommand(1);

  std::string sources_path, targets_path, states_path, probs_path, out_path;
  std::string method = "auto";
  std::string mode_name = "exact";
  std::vector<std::string> family_paths;
  std::vector<double> priors;
  double tolerance = 1e-6;
  bool verify = false;
  bool canonical = false;
  bool construct_witness = false;
  std::uint64_t seed = 1;
  int instances = 20;

  CLI::App* check = app.add_subcommand("check", "Decide feasibility");
  check->add_option("--sources", sources_path)->required();
  check->add_option("--targets", targets_path)->required();
  check->add_option("--method", method)
      ->check(CLI::IsMember({"auto", "pure", "pure-pair", "qubit-pair",
                             "mixed-to-pure", "pure-to-mixed", "choi",
                             "fidelity", "mutual"}));
  check->add_option("--tol", tolerance);
  check->add_flag("--verify", verify,
                  "re-verify a feasible verdict by explicit construction");
  check->add_option("--out", out_path);

  CLI::App* construct = app.add_subcommand(
      "construct", "Build and verify an explicit channel or instrument");
  construct->add_option("--sources", sources_path)->required();
  construct->add_option("--targets", targets_path)->required();
  construct->add_option("--method", method)
      ->check(CLI::IsMember({"auto", "pure", "mixed-to-pure", "pure-to-mixed",
                             "choi"}));
  construct->add_option("--tol", tolerance);
  construct->add_option("--out", out_path, "write the channel JSON here");

  CLI::App* gram = app.add_subcommand("gram", "Print a Gram matrix");
  gram->add_option("--states", states_path)->required();
  gram->add_flag("--canonical", canonical,
                 "phase-canonical form (pure states only)");
  gram->add_option("--out", out_path);

  CLI::App* multiprob = app.add_subcommand(
      "multiprob", "Probabilistic multi-outcome transformation feasibility");
  multiprob->add_option("--sources", sources_path)->required();
  multiprob->add_option("--targets", family_paths)->required();
  multiprob->add_option("--probs", probs_path)->required();
  multiprob->add_option("--mode", mode_name)
      ->check(CLI::IsMember({"exact", "subnorm"}));
  multiprob->add_option("--tol", tolerance);
  multiprob->add_flag("--construct", construct_witness,
                      "also build and verify the instrument");
  multiprob->add_option("--out", out_path);

  CLI::App* hel = app.add_subcommand(
      "helstrom", "Minimum-error discrimination probability for two states");
  hel->add_option("--states", states_path)->required();
  hel->add_option("--priors", priors)->expected(2);
  hel->add_option("--out", out_path);

  CLI::App* selftest = app.add_subcommand(
      "selftest", "Run deterministic internal consistency suites");
  selftest->add_option("--seed", seed);
  selftest->add_option("--instances", instances)->check(CLI::NonNegativeNumber);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : kExitBadInput;
  }

  try {
    if (check->parsed()) {
      return cmd_check(sources_path, targets_path, method, tolerance, verify,
                       out_path);
    }
    if (construct->parsed()) {
      return cmd_construct(sources_path, targets_path, method, tolerance,
                           out_path);
    }
    if (gram->parsed()) return cmd_gram(states_path, canonical, out_path);
    if (multiprob->parsed()) {
      return cmd_multiprob(sources_path, family_paths, probs_path, mode_name,
                           tolerance, construct_witness, out_path);
    }
    if (hel->parsed()) return cmd_helstrom(states_path, priors, out_path);
    if (selftest->parsed()) {
      const int rc = run_selftest(std::cout, seed, instances);
      return rc == 0 ? kExitFeasible : kExitInternal;
    }
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitBadInput;
  } catch (const std::exception& e) {
    std::cerr << "internal error: " << e.what() << '\n';
    return kExitInternal;
  }
  return kExitBadInput;
}
