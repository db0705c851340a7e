// File formats: JSON for models, moments and inference results; a JSON
// header line followed by text records for trajectories, samples and
// population snapshots.
#pragma once

#include "isinglab/core.hpp"
#include "isinglab/data.hpp"
#include "isinglab/model.hpp"
#include "isinglab/popgen.hpp"
#include "isinglab/result.hpp"
#include "isinglab/stats.hpp"

#include <json.hpp>

#include <charconv>
#include <fstream>
#include <istream>
#include <ostream>
#include <sstream>
#include <string>
#include <vector>

namespace isinglab {

using nlohmann::json;

inline json to_json(const Vector& v) { return std::vector<double>(v.data(), v.data() + v.size()); }

inline json to_json(const Matrix& m) {
  json rows = json::array();
  for (Eigen::Index i = 0; i < m.rows(); ++i) {
    std::vector<double> r(m.cols());
    for (Eigen::Index j = 0; j < m.cols(); ++j) r[j] = m(i, j);
    rows.push_back(r);
  }
  return rows;
}

inline Vector vector_from_json(const json& j) {
  auto v = j.get<std::vector<double>>();
  return Eigen::Map<Vector>(v.data(), static_cast<Eigen::Index>(v.size()));
}

inline Matrix matrix_from_json(const json& j) {
  require(j.is_array(), "matrix: expected an array of rows");
  const auto n = static_cast<Eigen::Index>(j.size());
  Eigen::Index cols = n == 0 ? 0 : static_cast<Eigen::Index>(j[0].size());
  Matrix m(n, cols);
  for (Eigen::Index i = 0; i < n; ++i) {
    require(static_cast<Eigen::Index>(j[i].size()) == cols, "matrix: ragged rows");
    for (Eigen::Index c = 0; c < cols; ++c) m(i, c) = j[i][c].get<double>();
  }
  return m;
}

// Wraps nlohmann parse/type errors as ParameterError.
template <typename F>
auto parse_guard(const std::string& what, F&& f) -> decltype(f()) {
  try {
    return f();
  } catch (const json::exception& e) {
    throw ParameterError(what + ": " + e.what());
  }
}

inline std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ParameterError("cannot open '" + path + "'");
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

inline void write_file(const std::string& path, const std::string& content) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw ParameterError("cannot write '" + path + "'");
  out << content;
  if (!out) throw ParameterError("write failed for '" + path + "'");
}

inline void write_json_file(const std::string& path, const json& j) {
  write_file(path, j.dump(2) + "\n");
}

inline json read_json_file(const std::string& path) {
  const std::string text = read_file(path);
  return parse_guard("'" + path + "'", [&] { return json::parse(text); });
}

// ---- CouplingModel -------------------------------------------------------

inline json model_to_json(const CouplingModel& m) {
  return {{"format", "isinglab-model"}, {"L", m.L}, {"theta", to_json(m.theta)},
          {"J", to_json(m.J)}, {"self_allowed", m.self_allowed}, {"meta", m.meta}};
}

inline CouplingModel model_from_json(const json& j) {
  return parse_guard("model", [&] {
    CouplingModel m;
    m.L = j.at("L").get<int>();
    m.theta = vector_from_json(j.at("theta"));
    m.J = matrix_from_json(j.at("J"));
    m.self_allowed = j.value("self_allowed", false);
    m.meta = j.value("meta", json::object());
    m.validate();
    return m;
  });
}

// ---- InferenceResult -----------------------------------------------------

inline json result_to_json(const InferenceResult& r) {
  return {{"format", "isinglab-result"}, {"method", r.method}, {"L", r.L()},
          {"theta", to_json(r.theta)}, {"J", to_json(r.J)},
          {"hyperparams", r.hyperparams}, {"diagnostics", r.diagnostics}};
}

inline InferenceResult result_from_json(const json& j) {
  return parse_guard("result", [&] {
    InferenceResult r;
    r.method = j.at("method").get<std::string>();
    r.theta = vector_from_json(j.at("theta"));
    r.J = matrix_from_json(j.at("J"));
    r.hyperparams = j.value("hyperparams", json::object());
    r.diagnostics = j.value("diagnostics", json::object());
    require(r.J.rows() == r.J.cols() && r.theta.size() == r.J.rows(), "result: shape mismatch");
    return r;
  });
}

// Either a model file or a result file, as (theta, J).
inline std::pair<Vector, Matrix> couplings_from_json(const json& j) {
  if (j.value("format", std::string()) == "isinglab-result") {
    auto r = result_from_json(j);
    return {r.theta, r.J};
  }
  auto m = model_from_json(j);
  return {m.theta, m.J};
}

// ---- MomentSet -----------------------------------------------------------

inline json moments_to_json(const MomentSet& m) {
  json lags = m.lags;
  json C = json::array();
  for (const auto& c : m.C_lags) C.push_back(to_json(c));
  json j = {{"format", "isinglab-moments"}, {"L", m.L}, {"m", to_json(m.m)},
            {"c0", to_json(m.c0)}, {"lags", lags}, {"C_lags", C}, {"gamma", m.gamma},
            {"weight", m.weight}, {"source", m.source},
            {"derivative_method", m.derivative_method}};
  j["dC0"] = m.has_derivative() ? to_json(m.dC0) : json(nullptr);
  return j;
}

inline MomentSet moments_from_json(const json& j) {
  return parse_guard("moments", [&] {
    MomentSet m;
    m.L = j.at("L").get<int>();
    m.m = vector_from_json(j.at("m"));
    m.c0 = matrix_from_json(j.at("c0"));
    m.lags = j.value("lags", std::vector<double>{});
    if (j.contains("C_lags"))
      for (const auto& c : j.at("C_lags")) m.C_lags.push_back(matrix_from_json(c));
    if (j.contains("dC0") && !j.at("dC0").is_null()) m.dC0 = matrix_from_json(j.at("dC0"));
    m.gamma = j.value("gamma", 1.0);
    m.weight = j.value("weight", 0.0);
    m.source = j.value("source", std::string("samples"));
    m.derivative_method = j.value("derivative_method", std::string());
    require(m.m.size() == m.L && m.c0.rows() == m.L && m.c0.cols() == m.L,
            "moments: shape mismatch");
    require(m.gamma > 0.0, "moments: gamma must be positive");
    return m;
  });
}

// ---- Trajectory ----------------------------------------------------------

inline void write_trajectory(std::ostream& os, const SpinTrajectory& t) {
  json h = {{"format", "isinglab-trajectory"}, {"L", t.L}, {"gamma", t.gamma},
            {"t_end", t.t_end}, {"scheme", t.scheme}, {"seed", t.seed},
            {"initial", spins_to_string(t.initial)}, {"events", t.events.size()}};
  os << h.dump() << '\n';
  char buf[64];
  for (const auto& e : t.events) {
    const int n = std::snprintf(buf, sizeof(buf), "%.17g,%d\n", e.t, e.spin);
    os.write(buf, n);
  }
}

inline SpinTrajectory read_trajectory(std::istream& is) {
  std::string line;
  if (!std::getline(is, line)) throw ParameterError("trajectory: empty file");
  json h = parse_guard("trajectory header", [&] { return json::parse(line); });
  SpinTrajectory t;
  parse_guard("trajectory header", [&] {
    t.L = h.at("L").get<int>();
    t.gamma = h.at("gamma").get<double>();
    t.t_end = h.at("t_end").get<double>();
    t.scheme = h.value("scheme", std::string("gillespie"));
    t.seed = h.value("seed", std::uint64_t{0});
    t.initial = spins_from_string(h.at("initial").get<std::string>());
    if (h.contains("events")) t.events.reserve(h.at("events").get<std::size_t>());
    return 0;
  });
  std::size_t lineno = 1;
  while (std::getline(is, line)) {
    ++lineno;
    if (line.empty()) continue;
    const char* b = line.data();
    const char* e = b + line.size();
    FlipEvent ev;
    auto r1 = std::from_chars(b, e, ev.t);
    if (r1.ec != std::errc() || r1.ptr == e || *r1.ptr != ',')
      throw ParameterError("trajectory: malformed line " + std::to_string(lineno));
    const char* p = r1.ptr + 1;
    auto r2 = std::from_chars(p, e, ev.spin);
    if (r2.ec != std::errc() || (r2.ptr != e && *r2.ptr != '\r'))
      throw ParameterError("trajectory: malformed line " + std::to_string(lineno));
    t.events.push_back(ev);
  }
  t.validate();
  return t;
}

// ---- Samples -------------------------------------------------------------

// Header {"L","rows","weighted"}; each row a ±1 string, followed by
// ",weight" when weighted.
inline void write_samples(std::ostream& os, const SampleTable& s, const json& meta = json::object()) {
  json h = {{"format", "isinglab-samples"}, {"L", s.L}, {"rows", s.rows()},
            {"weighted", s.weighted()}, {"meta", meta}};
  os << h.dump() << '\n';
  std::string row(s.L, '-');
  for (std::size_t r = 0; r < s.rows(); ++r) {
    for (int i = 0; i < s.L; ++i) row[i] = s.at(r, i) > 0 ? '+' : '-';
    os << row;
    if (s.weighted()) os << ',' << fmt17(s.weight(r));
    os << '\n';
  }
}

inline SampleTable read_samples(std::istream& is) {
  std::string line;
  if (!std::getline(is, line)) throw ParameterError("samples: empty file");
  json h = parse_guard("samples header", [&] { return json::parse(line); });
  const int L = parse_guard("samples header", [&] { return h.at("L").get<int>(); });
  const bool weighted = h.value("weighted", false);
  SampleTable s(L);
  std::size_t lineno = 1;
  while (std::getline(is, line)) {
    ++lineno;
    if (line.empty() || line == "\r") continue;
    const auto comma = line.find(',');
    SpinVector row = spins_from_string(std::string_view(line).substr(0, comma));
    if (static_cast<int>(row.size()) != L)
      throw ParameterError("samples: wrong row length on line " + std::to_string(lineno));
    if (weighted) {
      double w = 0.0;
      if (comma == std::string::npos ||
          std::from_chars(line.data() + comma + 1, line.data() + line.size(), w).ec != std::errc())
        throw ParameterError("samples: missing weight on line " + std::to_string(lineno));
      s.add_row(row, w);
    } else {
      s.add_row(row);
    }
  }
  return s;
}

// ---- Population snapshots ------------------------------------------------

inline json evolution_to_json(const EvolutionParams& e) {
  return {{"L", e.L}, {"N_pop", e.N_pop}, {"mu", e.mu}, {"r", e.r}, {"rho", e.rho},
          {"T", e.T}, {"record_every", e.record_every}, {"seed", e.seed}};
}

inline EvolutionParams evolution_from_json(const json& j) {
  return parse_guard("evolution params", [&] {
    EvolutionParams e;
    e.L = j.at("L").get<int>();
    e.N_pop = j.at("N_pop").get<int>();
    e.mu = j.at("mu").get<double>();
    e.r = j.at("r").get<double>();
    e.rho = j.at("rho").get<double>();
    e.T = j.at("T").get<int>();
    e.record_every = j.at("record_every").get<int>();
    e.seed = j.at("seed").get<std::uint64_t>();
    e.validate();
    return e;
  });
}

inline json fitness_to_json(const FitnessParams& f) {
  return {{"format", "isinglab-fitness"}, {"F0", f.F0}, {"f", to_json(f.f)},
          {"fmat", to_json(f.fmat)}, {"sigma", f.sigma}};
}

inline FitnessParams fitness_from_json(const json& j) {
  return parse_guard("fitness", [&] {
    FitnessParams f;
    f.F0 = j.value("F0", 0.0);
    f.f = vector_from_json(j.at("f"));
    f.fmat = matrix_from_json(j.at("fmat"));
    f.sigma = j.value("sigma", 0.0);
    f.validate();
    return f;
  });
}

// Header {"evolution", "snapshots"}; per snapshot a line "generation g"
// followed by N_pop ±1 strings.
inline void write_snapshots(std::ostream& os, const std::vector<PopulationSnapshot>& snaps,
                            const EvolutionParams& evo) {
  json h = {{"format", "isinglab-snapshots"}, {"evolution", evolution_to_json(evo)},
            {"snapshots", snaps.size()}};
  os << h.dump() << '\n';
  std::string row;
  for (const auto& s : snaps) {
    os << "generation " << s.generation << '\n';
    row.assign(s.genomes.L, '-');
    for (std::size_t r = 0; r < s.genomes.rows(); ++r) {
      for (int i = 0; i < s.genomes.L; ++i) row[i] = s.genomes.at(r, i) > 0 ? '+' : '-';
      os << row << '\n';
    }
  }
}

inline std::vector<PopulationSnapshot> read_snapshots(std::istream& is, EvolutionParams& evo) {
  std::string line;
  if (!std::getline(is, line)) throw ParameterError("snapshots: empty file");
  json h = parse_guard("snapshots header", [&] { return json::parse(line); });
  evo = evolution_from_json(h.at("evolution"));
  std::vector<PopulationSnapshot> out;
  while (std::getline(is, line)) {
    if (line.empty()) continue;
    if (line.rfind("generation ", 0) == 0) {
      PopulationSnapshot s;
      s.generation = std::stoi(line.substr(11));
      s.genomes = SampleTable(evo.L);
      out.push_back(std::move(s));
      continue;
    }
    if (out.empty()) throw ParameterError("snapshots: genome before any generation line");
    SpinVector row = spins_from_string(line);
    if (static_cast<int>(row.size()) != evo.L) throw ParameterError("snapshots: wrong genome length");
    out.back().genomes.add_row(row);
  }
  return out;
}

}  // namespace isinglab
