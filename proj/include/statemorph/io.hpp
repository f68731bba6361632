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

#include <cstdio>
#include <fstream>
#include <memory>
#include <ostream>
#include <sstream>
#include <string>
#include <utility>
#include <variant>
#include <vector>

#include <json.hpp>

#include "statemorph/channels.hpp"
#include "statemorph/decide.hpp"
#include "statemorph/states.hpp"

namespace statemorph {

// ---------------------------------------------------------------------------
// Deterministic JSON output.  Numbers are printed with a fixed policy (12
// significant digits, lowercase scientific notation outside [1e-4, 1e6)) so
// that identical inputs always produce byte-identical reports.
// ---------------------------------------------------------------------------
inline std::string format_number(double x) {
  if (std::isnan(x)) return "\"nan\"";
  if (std::isinf(x)) return x > 0 ? "\"inf\"" : "\"-inf\"";
  if (x == 0.0) return "0";
  char buf[64];
  const double ax = std::abs(x);
  if (ax < 1e-4 || ax >= 1e6) {
    std::snprintf(buf, sizeof buf, "%.11e", x);
  } else {
    std::snprintf(buf, sizeof buf, "%.12g", x);
  }
  return buf;
}

class JsonValue {
 public:
  using Array = std::vector<JsonValue>;
  using Object = std::vector<std::pair<std::string, JsonValue>>;

  JsonValue() : data_(nullptr) {}

  static JsonValue null() { return JsonValue(); }
  static JsonValue boolean(bool b) { return JsonValue(Payload(b)); }
  static JsonValue number(double x) { return JsonValue(Payload(x)); }
  static JsonValue integer(long long i) { return JsonValue(Payload(i)); }
  static JsonValue str(std::string s) { return JsonValue(Payload(std::move(s))); }
  static JsonValue array() { return JsonValue(Payload(Array{})); }
  static JsonValue object() { return JsonValue(Payload(Object{})); }

  JsonValue& push(JsonValue v) {
    std::get<Array>(data_).push_back(std::move(v));
    return *this;
  }
  JsonValue& set(std::string key, JsonValue v) {
    std::get<Object>(data_).emplace_back(std::move(key), std::move(v));
    return *this;
  }

  void write(std::ostream& os, int indent = 0) const {
    constexpr int step = 2;
    if (std::holds_alternative<std::nullptr_t>(data_)) {
      os << "null";
    } else if (const bool* b = std::get_if<bool>(&data_)) {
      os << (*b ? "true" : "false");
    } else if (const long long* i = std::get_if<long long>(&data_)) {
      os << *i;
    } else if (const double* x = std::get_if<double>(&data_)) {
      os << format_number(*x);
    } else if (const std::string* s = std::get_if<std::string>(&data_)) {
      write_escaped(os, *s);
    } else if (const Array* a = std::get_if<Array>(&data_)) {
      if (a->empty()) {
        os << "[]";
        return;
      }
      const bool flat = is_flat_array(*a);
      os << '[';
      for (size_t k = 0; k < a->size(); ++k) {
        if (k) os << (flat ? ", " : ",");
        if (!flat) {
          os << '\n' << std::string(indent + step, ' ');
        }
        (*a)[k].write(os, indent + step);
      }
      if (!flat) os << '\n' << std::string(indent, ' ');
      os << ']';
    } else {
      const Object& o = std::get<Object>(data_);
      if (o.empty()) {
        os << "{}";
        return;
      }
      os << '{';
      for (size_t k = 0; k < o.size(); ++k) {
        if (k) os << ',';
        os << '\n' << std::string(indent + step, ' ');
        write_escaped(os, o[k].first);
        os << ": ";
        o[k].second.write(os, indent + step);
      }
      os << '\n' << std::string(indent, ' ') << '}';
    }
  }

  std::string dump() const {
    std::ostringstream os;
    write(os);
    os << '\n';
    return os.str();
  }

 private:
  using Payload = std::variant<std::nullptr_t, bool, long long, double,
                               std::string, Array, Object>;
  explicit JsonValue(Payload p) : data_(std::move(p)) {}

  static bool is_flat_array(const Array& a) {
    for (const JsonValue& v : a) {
      if (std::holds_alternative<Array>(v.data_) ||
          std::holds_alternative<Object>(v.data_)) {
        return false;
      }
    }
    return true;
  }

  static void write_escaped(std::ostream& os, const std::string& s) {
    os << '"';
    for (char c : s) {
      switch (c) {
        case '"': os << "\\\""; break;
        case '\\': os << "\\\\"; break;
        case '\n': os << "\\n"; break;
        case '\t': os << "\\t"; break;
        default:
          if (static_cast<unsigned char>(c) < 0x20) {
            char buf[8];
            std::snprintf(buf, sizeof buf, "\\u%04x", c);
            os << buf;
          } else {
            os << c;
          }
      }
    }
    os << '"';
  }

  Payload data_;
};

inline JsonValue complex_to_json(Complex z) {
  JsonValue v = JsonValue::array();
  v.push(JsonValue::number(z.real()));
  v.push(JsonValue::number(z.imag()));
  return v;
}

inline JsonValue vector_to_json(const ComplexVector& v) {
  JsonValue out = JsonValue::array();
  for (Eigen::Index i = 0; i < v.size(); ++i) out.push(complex_to_json(v(i)));
  return out;
}

inline JsonValue matrix_to_json(const ComplexMatrix& m) {
  JsonValue out = JsonValue::array();
  for (Eigen::Index i = 0; i < m.rows(); ++i) {
    JsonValue row = JsonValue::array();
    for (Eigen::Index j = 0; j < m.cols(); ++j) row.push(complex_to_json(m(i, j)));
    out.push(std::move(row));
  }
  return out;
}

inline JsonValue real_matrix_to_json(const RealMatrix& m) {
  JsonValue out = JsonValue::array();
  for (Eigen::Index i = 0; i < m.rows(); ++i) {
    JsonValue row = JsonValue::array();
    for (Eigen::Index j = 0; j < m.cols(); ++j) row.push(JsonValue::number(m(i, j)));
    out.push(std::move(row));
  }
  return out;
}

inline JsonValue state_set_to_json(const StateSet& s) {
  JsonValue out = JsonValue::object();
  out.set("dim", JsonValue::integer(s.dim()));
  JsonValue states = JsonValue::array();
  for (int i = 0; i < s.size(); ++i) {
    JsonValue st = JsonValue::object();
    if (s.is_pure(i)) {
      st.set("kind", JsonValue::str("pure"));
      st.set("amplitudes", vector_to_json(s.ket(i).amplitudes()));
    } else {
      st.set("kind", JsonValue::str("mixed"));
      st.set("matrix", matrix_to_json(s.density(i).matrix()));
    }
    states.push(std::move(st));
  }
  out.set("states", std::move(states));
  return out;
}

inline JsonValue channel_to_json(const KrausChannel& ch) {
  JsonValue out = JsonValue::object();
  out.set("type", JsonValue::str("channel"));
  out.set("dim_in", JsonValue::integer(ch.dim_in()));
  out.set("dim_out", JsonValue::integer(ch.dim_out()));
  JsonValue ops = JsonValue::array();
  for (const ComplexMatrix& a : ch.kraus_operators()) ops.push(matrix_to_json(a));
  out.set("kraus", std::move(ops));
  return out;
}

inline JsonValue instrument_to_json(const Instrument& inst) {
  JsonValue out = JsonValue::object();
  out.set("type", JsonValue::str("instrument"));
  out.set("dim_in", JsonValue::integer(inst.dim_in()));
  out.set("dim_out", JsonValue::integer(inst.dim_out()));
  JsonValue branches = JsonValue::array();
  for (const OutcomeBranch& br : inst.branches()) {
    JsonValue b = JsonValue::object();
    b.set("label", JsonValue::integer(br.label));
    JsonValue ops = JsonValue::array();
    for (const ComplexMatrix& a : br.ops) ops.push(matrix_to_json(a));
    b.set("ops", std::move(ops));
    branches.push(std::move(b));
  }
  out.set("branches", std::move(branches));
  return out;
}

inline JsonValue decision_to_json(const Decision& d) {
  JsonValue out = JsonValue::object();
  out.set("verdict", JsonValue::str(to_string(d.verdict)));
  out.set("method", JsonValue::str(d.method));
  out.set("margin", JsonValue::number(d.margin));
  out.set("residual", JsonValue::number(d.residual));
  out.set("boundary", JsonValue::boolean(d.boundary));
  if (d.violating_pair) {
    JsonValue p = JsonValue::array();
    p.push(JsonValue::integer(d.violating_pair->first));
    p.push(JsonValue::integer(d.violating_pair->second));
    out.set("violating_pair", std::move(p));
  }
  if (d.violating_t) out.set("violating_t", JsonValue::number(*d.violating_t));
  if (d.witness_matrix) out.set("witness", matrix_to_json(*d.witness_matrix));
  if (d.witness_blocks) {
    JsonValue blocks = JsonValue::array();
    for (const ComplexMatrix& b : *d.witness_blocks) blocks.push(matrix_to_json(b));
    out.set("witness_blocks", std::move(blocks));
  }
  if (d.phase_witness) {
    JsonValue th = JsonValue::array();
    for (Eigen::Index i = 0; i < d.phase_witness->theta.size(); ++i) {
      th.push(JsonValue::number(d.phase_witness->theta(i)));
    }
    out.set("phases", std::move(th));
  }
  if (!d.notes.empty()) {
    JsonValue notes = JsonValue::array();
    for (const std::string& n : d.notes) notes.push(JsonValue::str(n));
    out.set("notes", std::move(notes));
  }
  return out;
}

inline JsonValue verification_to_json(const ChannelVerification& v) {
  JsonValue out = JsonValue::object();
  out.set("pass", JsonValue::boolean(v.pass));
  out.set("tolerance", JsonValue::number(v.tolerance));
  out.set("max_state_error", JsonValue::number(v.max_state_error));
  out.set("completeness_residual", JsonValue::number(v.completeness_residual));
  if (v.probability_errors.size() != 0) {
    out.set("max_probability_error", JsonValue::number(v.max_probability_error));
    out.set("max_post_state_error", JsonValue::number(v.max_post_state_error));
  }
  JsonValue errs = JsonValue::array();
  for (double e : v.state_errors) errs.push(JsonValue::number(e));
  out.set("state_errors", std::move(errs));
  return out;
}

// ---------------------------------------------------------------------------
// Input parsing (nlohmann::json).  Complex entries are either plain numbers
// or [re, im] pairs; matrices are row-major arrays of rows.
// ---------------------------------------------------------------------------
namespace detail {
inline Complex complex_from_json(const nlohmann::json& j) {
  if (j.is_number()) return Complex(j.get<double>(), 0.0);
  if (j.is_array() && j.size() == 2 && j[0].is_number() && j[1].is_number()) {
    return Complex(j[0].get<double>(), j[1].get<double>());
  }
  throw ParseError("expected a number or an [re, im] pair");
}

inline ComplexVector vector_from_json(const nlohmann::json& j) {
  if (!j.is_array()) throw ParseError("expected an array of amplitudes");
  ComplexVector v(j.size());
  for (size_t i = 0; i < j.size(); ++i) v(static_cast<Eigen::Index>(i)) = complex_from_json(j[i]);
  return v;
}

inline ComplexMatrix matrix_from_json(const nlohmann::json& j) {
  if (!j.is_array() || j.empty()) throw ParseError("expected an array of rows");
  const size_t rows = j.size();
  const size_t cols = j[0].is_array() && !(j[0].size() == 2 && j[0][0].is_number())
                          ? j[0].size()
                          : 0;
  if (cols == 0) throw ParseError("expected an array of rows");
  ComplexMatrix m(rows, cols);
  for (size_t i = 0; i < rows; ++i) {
    if (!j[i].is_array() || j[i].size() != cols) {
      throw ParseError("ragged matrix rows");
    }
    for (size_t k = 0; k < cols; ++k) {
      m(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(k)) =
          complex_from_json(j[i][k]);
    }
  }
  return m;
}
}  // namespace detail

inline nlohmann::json load_json(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ParseError("cannot open " + path);
  try {
    return nlohmann::json::parse(in);
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(path + ": " + e.what());
  }
}

inline StateSet parse_state_set(const nlohmann::json& j) {
  try {
    if (!j.contains("states") || !j["states"].is_array() || j["states"].empty()) {
      throw ParseError("state set needs a non-empty \"states\" array");
    }
    int dim = j.value("dim", 0);
    // Infer the dimension from the first state when absent.
    const nlohmann::json& first = j["states"][0];
    if (dim == 0) {
      const nlohmann::json& data = first.contains("amplitudes")
                                       ? first["amplitudes"]
                                       : first.contains("matrix")
                                             ? first["matrix"]
                                             : first["data"];
      dim = static_cast<int>(data.size());
    }
    StateSet set(dim);
    for (const nlohmann::json& st : j["states"]) {
      std::string kind = st.value("kind", "");
      const nlohmann::json* data = nullptr;
      if (st.contains("amplitudes")) {
        data = &st["amplitudes"];
        if (kind.empty()) kind = "pure";
      } else if (st.contains("matrix")) {
        data = &st["matrix"];
        if (kind.empty()) kind = "mixed";
      } else if (st.contains("data")) {
        data = &st["data"];
        if (kind.empty()) {
          kind = (*data)[0].is_array() && !((*data)[0].size() == 2 &&
                                            (*data)[0][0].is_number())
                     ? "mixed"
                     : "pure";
        }
      } else {
        throw ParseError("state needs \"amplitudes\", \"matrix\" or \"data\"");
      }
      if (kind == "pure") {
        set.add(Ket(detail::vector_from_json(*data)));
      } else if (kind == "mixed") {
        set.add(DensityMatrix(detail::matrix_from_json(*data)));
      } else {
        throw ParseError("unknown state kind \"" + kind + "\"");
      }
    }
    return set;
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(std::string("bad state set: ") + e.what());
  }
}

inline StateSet load_state_set(const std::string& path) {
  return parse_state_set(load_json(path));
}

inline ProbabilityMatrix parse_probability_matrix(const nlohmann::json& j) {
  try {
    const nlohmann::json& m = j.contains("matrix") ? j["matrix"] : j;
    if (!m.is_array() || m.empty() || !m[0].is_array()) {
      throw ParseError("probability matrix must be an array of rows");
    }
    RealMatrix p(m.size(), m[0].size());
    for (size_t i = 0; i < m.size(); ++i) {
      if (m[i].size() != m[0].size()) throw ParseError("ragged probability rows");
      for (size_t k = 0; k < m[i].size(); ++k) {
        p(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(k)) =
            m[i][k].get<double>();
      }
    }
    return ProbabilityMatrix(p);
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(std::string("bad probability matrix: ") + e.what());
  }
}

inline KrausChannel parse_channel(const nlohmann::json& j) {
  try {
    const int din = j.at("dim_in").get<int>();
    const int dout = j.at("dim_out").get<int>();
    std::vector<ComplexMatrix> ops;
    for (const nlohmann::json& op : j.at("kraus")) {
      ops.push_back(detail::matrix_from_json(op));
    }
    return KrausChannel(din, dout, std::move(ops));
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(std::string("bad channel: ") + e.what());
  }
}

inline Instrument parse_instrument(const nlohmann::json& j) {
  try {
    const int din = j.at("dim_in").get<int>();
    const int dout = j.at("dim_out").get<int>();
    std::vector<OutcomeBranch> branches;
    for (const nlohmann::json& b : j.at("branches")) {
      OutcomeBranch br;
      br.label = b.at("label").get<int>();
      for (const nlohmann::json& op : b.at("ops")) {
        br.ops.push_back(detail::matrix_from_json(op));
      }
      branches.push_back(std::move(br));
    }
    return Instrument(din, dout, std::move(branches));
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(std::string("bad instrument: ") + e.what());
  }
}

inline void write_text_file(const std::string& path, const std::string& text) {
  std::ofstream out(path);
  if (!out) throw ParseError("cannot write " + path);
  out << text;
}

}  // namespace statemorph
