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

#include <sys/wait.h>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <string>

#include <catch2/catch_amalgamated.hpp>

#include "statemorph/statemorph.hpp"

using namespace statemorph;

namespace {

struct CliResult {
  int exit_code = -1;
  std::string out;
};

// Runs the CLI binary (stderr dropped) and captures stdout + exit status.
CliResult run_cli(const std::string& args) {
  const std::string cmd =
      std::string(STATEMORPH_CLI_PATH) + " " + args + " 2>/dev/null";
  FILE* pipe = ::popen(cmd.c_str(), "r");
  REQUIRE(pipe != nullptr);
  CliResult r;
  char buf[4096];
  size_t got;
  while ((got = std::fread(buf, 1, sizeof buf, pipe)) > 0) {
    r.out.append(buf, got);
  }
  const int status = ::pclose(pipe);
  r.exit_code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
  return r;
}

const std::filesystem::path& work_dir() {
  static const std::filesystem::path dir = [] {
    std::filesystem::path d =
        std::filesystem::temp_directory_path() / "statemorph-cli-tests";
    std::filesystem::create_directories(d);
    return d;
  }();
  return dir;
}

std::string write_input(const std::string& name, const std::string& text) {
  const std::filesystem::path p = work_dir() / name;
  std::ofstream(p) << text;
  return p.string();
}

std::string slurp(const std::string& path) {
  std::ifstream in(path);
  REQUIRE(in.good());
  std::ostringstream os;
  os << in.rdbuf();
  return os.str();
}

const char* kZeroPlus = R"({"states": [
  {"amplitudes": [1, 0]},
  {"amplitudes": [0.7071067811865476, 0.7071067811865476]}
]})";

const char* kZeroZero = R"({"states": [
  {"amplitudes": [1, 0]},
  {"amplitudes": [1, 0]}
]})";

const char* kBasisPair = R"({"states": [
  {"amplitudes": [1, 0]},
  {"amplitudes": [0, 1]}
]})";

const char* kMixedTargets = R"({"states": [
  {"kind": "mixed", "data": [[[0.6, 0], [0, 0]], [[0, 0], [0.4, 0]]]},
  {"kind": "mixed", "data": [[[0.5, 0], [0, 0]], [[0, 0], [0.5, 0]]]}
]})";

}  // namespace

TEST_CASE("number formatting") {
  CHECK(format_number(0.0) == "0");
  CHECK(format_number(1.5) == "1.5");
  CHECK(format_number(-2.0) == "-2");
  CHECK(format_number(0.14644660940672624) == "0.146446609407");
  CHECK(format_number(1e-5) == "1.00000000000e-05");
  CHECK(format_number(2.5e6) == "2.50000000000e+06");
  CHECK(format_number(std::numeric_limits<double>::quiet_NaN()) == "\"nan\"");
  CHECK(format_number(std::numeric_limits<double>::infinity()) == "\"inf\"");
  CHECK(format_number(-std::numeric_limits<double>::infinity()) ==
        "\"-inf\"");
}

TEST_CASE("json writer layout") {
  JsonValue o = JsonValue::object();
  o.set("name", JsonValue::str("x\"y"));
  JsonValue vals = JsonValue::array();
  vals.push(JsonValue::integer(1));
  vals.push(JsonValue::number(2.5));
  vals.push(JsonValue::boolean(false));
  o.set("vals", std::move(vals));
  JsonValue nested = JsonValue::object();
  nested.set("flag", JsonValue::boolean(true));
  nested.set("none", JsonValue::null());
  o.set("nested", std::move(nested));
  JsonValue rows = JsonValue::array();
  JsonValue row = JsonValue::array();
  row.push(JsonValue::integer(3));
  rows.push(std::move(row));
  o.set("rows", std::move(rows));

  const std::string want =
      "{\n"
      "  \"name\": \"x\\\"y\",\n"
      "  \"vals\": [1, 2.5, false],\n"
      "  \"nested\": {\n"
      "    \"flag\": true,\n"
      "    \"none\": null\n"
      "  },\n"
      "  \"rows\": [\n"
      "    [3]\n"
      "  ]\n"
      "}\n";
  CHECK(o.dump() == want);
  CHECK(JsonValue::object().dump() == "{}\n");
  CHECK(JsonValue::array().dump() == "[]\n");
}

TEST_CASE("state set json round trip") {
  Prng rng(307);
  StateSet s(2);
  s.add(Ket(rng.random_ket(2)));
  s.add(DensityMatrix(rng.random_density(2)));
  const std::string text = state_set_to_json(s).dump();
  const StateSet back = parse_state_set(nlohmann::json::parse(text));
  REQUIRE(back.size() == 2);
  CHECK(back.is_pure(0));
  CHECK_FALSE(back.is_pure(1));
  for (int i = 0; i < 2; ++i) {
    CHECK(frobenius(back.density(i).matrix() - s.density(i).matrix()) < 1e-12);
  }
}

TEST_CASE("state parsing variants and dimension inference") {
  // A 2x2 density matrix must spell its entries as [re, im] pairs: a bare
  // two-number row is indistinguishable from a single complex amplitude.
  const auto j = nlohmann::json::parse(R"({"states": [
    {"kind": "mixed", "data": [[[0.5, 0], [0, 0]], [[0, 0], [0.5, 0]]]},
    {"data": [[0.7071067811865476, 0], [0, 0.7071067811865476]]},
    {"amplitudes": [[0, 0.7071067811865476], [0.7071067811865476, 0]]}
  ]})");
  const StateSet s = parse_state_set(j);
  CHECK(s.dim() == 2);
  CHECK_FALSE(s.is_pure(0));
  CHECK(s.is_pure(1));  // pairs of numbers parse as complex amplitudes
  CHECK(s.is_pure(2));
  CHECK(std::abs(s.ket(2).amplitudes()(0) -
                 Complex(0.0, 0.7071067811865476)) < 1e-12);
}

TEST_CASE("channel and instrument json round trips") {
  Prng rng(311);
  const KrausChannel ch = gen::random_channel(rng, 2, 3, 2);
  const KrausChannel ch2 =
      parse_channel(nlohmann::json::parse(channel_to_json(ch).dump()));
  const ComplexMatrix rho = rng.random_density(2);
  CHECK(frobenius(ch2.apply_raw(rho) - ch.apply_raw(rho)) < 1e-12);

  std::vector<OutcomeBranch> branches;
  branches.push_back({1, {Ket::basis(2, 0).projector()}});
  branches.push_back({0, {Ket::basis(2, 1).projector()}});
  const Instrument inst(2, 2, branches);
  const Instrument inst2 =
      parse_instrument(nlohmann::json::parse(instrument_to_json(inst).dump()));
  REQUIRE(inst2.num_branches() == 2);
  CHECK(inst2.branches()[0].label == 1);
  CHECK(inst2.branches()[1].label == 0);
  CHECK(frobenius(inst2.apply_branch_raw(0, rho) -
                  inst.apply_branch_raw(0, rho)) < 1e-12);
}

TEST_CASE("parse errors") {
  CHECK_THROWS_AS(load_json("/nonexistent/statemorph.json"), ParseError);
  CHECK_THROWS_AS(parse_state_set(nlohmann::json::parse("{}")), ParseError);
  CHECK_THROWS_AS(
      parse_state_set(nlohmann::json::parse(
          R"({"states": [{"kind": "sparse", "data": [1, 0]}]})")),
      ParseError);
  CHECK_THROWS_AS(parse_probability_matrix(
                      nlohmann::json::parse(R"({"matrix": [[0.5], [0.5, 0.5]]})")),
                  ParseError);
  CHECK_THROWS_AS(parse_channel(nlohmann::json::parse(R"({"dim_in": 2})")),
                  ParseError);
}

TEST_CASE("decision serialization carries the verdict and the witness") {
  const StateSet a = parse_state_set(nlohmann::json::parse(kZeroPlus));
  const StateSet b = parse_state_set(nlohmann::json::parse(kBasisPair));
  const Decision d = check_pure_to_pure(a, b);
  const std::string text = decision_to_json(d).dump();
  CHECK(text.find("\"verdict\": \"infeasible\"") != std::string::npos);
  CHECK(text.find("\"method\": \"gram-hadamard\"") != std::string::npos);
  CHECK(text.find("\"violating_pair\": [0, 1]") != std::string::npos);
}

TEST_CASE("cli check decides and reports") {
  const std::string src = write_input("src.json", kZeroPlus);
  const std::string tgt_ok = write_input("tgt_ok.json", kZeroZero);
  const std::string tgt_bad = write_input("tgt_bad.json", kBasisPair);

  const CliResult ok =
      run_cli("check --sources " + src + " --targets " + tgt_ok);
  CHECK(ok.exit_code == 0);
  CHECK(ok.out.find("\"verdict\": \"feasible\"") != std::string::npos);
  CHECK(ok.out.find("\"command\": \"check\"") != std::string::npos);
  CHECK(ok.out.find("\"wall_time_ms\"") != std::string::npos);

  const CliResult bad =
      run_cli("check --sources " + src + " --targets " + tgt_bad);
  CHECK(bad.exit_code == 1);
  CHECK(bad.out.find("\"verdict\": \"infeasible\"") != std::string::npos);
}

TEST_CASE("cli check --verify cross-checks with the oracle") {
  const std::string src = write_input("vsrc.json", kZeroPlus);
  const std::string tgt = write_input("vtgt.json", kZeroZero);
  const std::string report_path = (work_dir() / "vreport.json").string();
  const CliResult r = run_cli("check --verify --sources " + src +
                              " --targets " + tgt + " --out " + report_path);
  CHECK(r.exit_code == 0);
  CHECK(r.out.find("\"oracle_crosscheck\"") != std::string::npos);
  CHECK(r.out.find("\"verification\"") != std::string::npos);
  CHECK(r.out.find("\"pass\": true") != std::string::npos);
  // The report file mirrors stdout.
  CHECK(slurp(report_path) == r.out);
}

TEST_CASE("cli construct writes a working channel artifact") {
  const std::string src = write_input("csrc.json", kZeroPlus);
  const std::string tgt = write_input("ctgt.json", kZeroZero);
  const std::string artifact = (work_dir() / "channel.json").string();
  const CliResult r = run_cli("construct --sources " + src + " --targets " +
                              tgt + " --out " + artifact);
  REQUIRE(r.exit_code == 0);
  // Re-verify the artifact fully independently of the CLI process.
  const KrausChannel ch = parse_channel(load_json(artifact));
  const StateSet a = parse_state_set(nlohmann::json::parse(kZeroPlus));
  const StateSet b = parse_state_set(nlohmann::json::parse(kZeroZero));
  const ChannelVerification v = verify_channel(ch, a, b);
  CHECK(v.pass);
}

TEST_CASE("cli construct handles a pure pair with mixed targets") {
  const std::string src = write_input("msrc.json", kZeroPlus);
  const std::string tgt = write_input("mtgt.json", kMixedTargets);
  const std::string artifact = (work_dir() / "mixed_channel.json").string();
  const CliResult r = run_cli("construct --sources " + src + " --targets " +
                              tgt + " --out " + artifact);
  REQUIRE(r.exit_code == 0);
  const KrausChannel ch = parse_channel(load_json(artifact));
  const StateSet a = parse_state_set(nlohmann::json::parse(kZeroPlus));
  const StateSet b = parse_state_set(nlohmann::json::parse(kMixedTargets));
  const ChannelVerification v = verify_channel(ch, a, b);
  CHECK(v.pass);
  CHECK(v.max_state_error < 1e-8);
}

TEST_CASE("cli construct reports infeasible instances without artifacts") {
  const std::string src = write_input("isrc.json", kZeroPlus);
  const std::string tgt = write_input("itgt.json", kBasisPair);
  const CliResult r = run_cli("construct --sources " + src + " --targets " + tgt);
  CHECK(r.exit_code == 1);
  CHECK(r.out.find("\"witness\"") == std::string::npos);
}

TEST_CASE("cli gram matches the library") {
  const std::string src = write_input("gsrc.json", kZeroPlus);
  const CliResult r = run_cli("gram --states " + src);
  REQUIRE(r.exit_code == 0);
  const auto parsed = nlohmann::json::parse(r.out);
  const ComplexMatrix m = detail::matrix_from_json(parsed.at("matrix"));
  const StateSet a = parse_state_set(nlohmann::json::parse(kZeroPlus));
  CHECK(frobenius(m - gram_from_states(a).matrix()) < 1e-12);
  CHECK(parsed.at("size").get<int>() == 2);

  // Canonical form de-phases; orthogonal pairs cannot be canonicalized.
  const CliResult canon = run_cli("gram --canonical --states " + src);
  CHECK(canon.exit_code == 0);
  const std::string ortho = write_input("gortho.json", kBasisPair);
  CHECK(run_cli("gram --canonical --states " + ortho).exit_code == 3);
}

TEST_CASE("cli helstrom prints the discrimination bound") {
  const std::string pair = write_input("hpair.json", kZeroPlus);
  const CliResult r = run_cli("helstrom --states " + pair);
  CHECK(r.exit_code == 0);
  CHECK(r.out.find("\"error_probability\": 0.146446609407") !=
        std::string::npos);
  CHECK(r.out.find("\"success_probability\": 0.853553390593") !=
        std::string::npos);

  const std::string same = write_input("hsame.json", kZeroZero);
  const CliResult skewed =
      run_cli("helstrom --states " + same + " --priors 0.3 0.7");
  CHECK(skewed.exit_code == 0);
  CHECK(skewed.out.find("\"error_probability\": 0.3") != std::string::npos);
}

TEST_CASE("cli multiprob decides and constructs instruments") {
  const std::string src = write_input("msrc.json", R"({"states": [
    {"amplitudes": [1, 0]},
    {"amplitudes": [0.9, 0.4358898943540674]}
  ]})");
  const std::string fam = write_input("mfam.json", kBasisPair);
  const std::string p_ok =
      write_input("mp_ok.json", R"({"matrix": [[0.05], [0.05]]})");
  const std::string p_bad =
      write_input("mp_bad.json", R"({"matrix": [[0.2], [0.2]]})");

  const CliResult ok =
      run_cli("multiprob --construct --sources " + src + " --targets " + fam +
              " --probs " + p_ok + " --mode subnorm");
  CHECK(ok.exit_code == 0);
  CHECK(ok.out.find("\"instrument\"") != std::string::npos);
  CHECK(ok.out.find("\"pass\": true") != std::string::npos);

  const CliResult bad = run_cli("multiprob --sources " + src + " --targets " +
                                fam + " --probs " + p_bad + " --mode subnorm");
  CHECK(bad.exit_code == 1);
}

TEST_CASE("cli selftest output is deterministic") {
  const CliResult a = run_cli("selftest --seed 7 --instances 5");
  const CliResult b = run_cli("selftest --seed 7 --instances 5");
  CHECK(a.exit_code == 0);
  CHECK(a.out == b.out);
  CHECK(a.out.find("seed=7") != std::string::npos);
  CHECK(a.out.find("overall=ok") != std::string::npos);

  const CliResult none = run_cli("selftest --instances 0");
  CHECK(none.exit_code == 0);
}

TEST_CASE("cli rejects bad inputs with exit code 3") {
  CHECK(run_cli("check --sources /nope.json --targets /nope.json").exit_code ==
        3);
  const std::string junk = write_input("junk.json", "{not json");
  const std::string src = write_input("bsrc.json", kZeroPlus);
  CHECK(run_cli("check --sources " + junk + " --targets " + src).exit_code ==
        3);
  CHECK(run_cli("check --sources " + src + " --targets " + src +
                " --method bogus")
            .exit_code == 3);
  CHECK(run_cli("frobnicate").exit_code == 3);
}
