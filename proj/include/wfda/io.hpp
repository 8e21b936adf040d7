#pragma once

// Long-format CSV datasets and JSON encodings of weights, fitted models,
// selection results and simulation summaries.

#include <charconv>
#include <fstream>
#include <iomanip>
#include <map>
#include <ostream>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "wfda/errors.hpp"
#include "wfda/fpca.hpp"
#include "wfda/measure_select.hpp"
#include "wfda/numerics.hpp"
#include "wfda/simgen.hpp"
#include "wfda/wflm.hpp"

namespace wfda {

using json = nlohmann::json;

// ---------------------------------------------------------------------------
// CSV

namespace detail {

inline std::string trim(std::string s) {
  const auto issp = [](unsigned char c) { return c == ' ' || c == '\t' || c == '\r' || c == '\n'; };
  while (!s.empty() && issp(static_cast<unsigned char>(s.back()))) s.pop_back();
  std::size_t i = 0;
  while (i < s.size() && issp(static_cast<unsigned char>(s[i]))) ++i;
  return s.substr(i);
}

inline std::vector<std::string> split_csv(const std::string& line) {
  std::vector<std::string> out;
  std::string cur;
  std::istringstream is(line);
  while (std::getline(is, cur, ',')) out.push_back(trim(cur));
  if (!line.empty() && line.back() == ',') out.emplace_back();
  return out;
}

inline std::string where(const std::string& source, std::size_t line) {
  return source + ":" + std::to_string(line) + ": ";
}

inline double parse_number(const std::string& field, const std::string& source, std::size_t line,
                           const std::string& column) {
  double v = 0.0;
  const char* first = field.data();
  const char* last = field.data() + field.size();
  if (!field.empty() && *first == '+') ++first;
  auto [ptr, ec] = std::from_chars(first, last, v);
  if (field.empty() || ec != std::errc() || ptr != last || !std::isfinite(v))
    throw ParseError(where(source, line) + "column '" + column + "' is not a finite number: '" + field + "'");
  return v;
}

struct CsvTable {
  std::vector<std::string> header;
  std::vector<std::pair<std::size_t, std::vector<std::string>>> rows;  // (line number, fields)
};

inline CsvTable read_csv(std::istream& in, const std::string& source) {
  CsvTable t;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (trim(line).empty()) continue;
    auto fields = split_csv(line);
    if (t.header.empty()) {
      if (lineno == 1 && !fields.empty() && fields[0].rfind("\xEF\xBB\xBF", 0) == 0) fields[0].erase(0, 3);
      t.header = std::move(fields);
      continue;
    }
    if (fields.size() != t.header.size())
      throw ParseError(where(source, lineno) + "expected " + std::to_string(t.header.size()) + " fields, found " +
                       std::to_string(fields.size()));
    t.rows.emplace_back(lineno, std::move(fields));
  }
  if (t.header.empty()) throw ParseError(source + ": empty file (missing header)");
  return t;
}

inline std::size_t column(const CsvTable& t, const std::string& name, const std::string& source) {
  for (std::size_t i = 0; i < t.header.size(); ++i)
    if (t.header[i] == name) return i;
  throw ParseError(source + ":1: missing column '" + name + "'");
}

inline std::string fmt17(double v) {
  std::ostringstream os;
  os << std::setprecision(17) << v;
  return os.str();
}

}  // namespace detail

/// Curves from a `subject_id,time,value` table. Subjects keep their order of
/// first appearance; times are sorted per subject.
inline FunctionalDataset read_dataset(std::istream& in, const std::string& source = "<input>") {
  const auto t = detail::read_csv(in, source);
  const std::size_t c_id = detail::column(t, "subject_id", source);
  const std::size_t c_t = detail::column(t, "time", source);
  const std::size_t c_v = detail::column(t, "value", source);

  FunctionalDataset data;
  std::map<std::string, std::size_t> index;
  std::map<std::pair<std::string, double>, std::size_t> seen;
  for (const auto& [lineno, f] : t.rows) {
    const std::string& id = f[c_id];
    if (id.empty()) throw ParseError(detail::where(source, lineno) + "empty subject_id");
    const double time = detail::parse_number(f[c_t], source, lineno, "time");
    const double value = detail::parse_number(f[c_v], source, lineno, "value");
    auto [it, fresh] = seen.emplace(std::make_pair(id, time), lineno);
    if (!fresh)
      throw ParseError(detail::where(source, lineno) + "duplicate observation for subject '" + id + "' at time " +
                       f[c_t] + " (first on line " + std::to_string(it->second) + ")");
    auto [pos, added] = index.emplace(id, data.samples.size());
    if (added) data.samples.push_back(FunctionalSample{id, {}, {}});
    auto& s = data.samples[pos->second];
    s.times.push_back(time);
    s.values.push_back(value);
  }
  if (data.samples.empty()) throw ParseError(source + ": no observations");
  for (auto& s : data.samples) {
    std::vector<std::size_t> order(s.times.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
    std::sort(order.begin(), order.end(), [&s](std::size_t a, std::size_t b) { return s.times[a] < s.times[b]; });
    FunctionalSample sorted{s.subject_id, {}, {}};
    for (auto i : order) {
      sorted.times.push_back(s.times[i]);
      sorted.values.push_back(s.values[i]);
    }
    s = std::move(sorted);
  }
  double lo = data.samples[0].times.front(), hi = data.samples[0].times.back();
  for (const auto& s : data.samples) {
    lo = std::min(lo, s.times.front());
    hi = std::max(hi, s.times.back());
  }
  data.domain = lo < hi ? Domain::bounded(lo, hi) : Domain::bounded(lo, lo + 1.0);
  return data;
}

/// Joins a `subject_id,y` table onto the curves.
inline void read_responses(std::istream& in, FunctionalDataset& data, const std::string& source = "<responses>") {
  const auto t = detail::read_csv(in, source);
  const std::size_t c_id = detail::column(t, "subject_id", source);
  const std::size_t c_y = detail::column(t, "y", source);
  std::map<std::string, std::size_t> pos;
  for (std::size_t i = 0; i < data.samples.size(); ++i) pos[data.samples[i].subject_id] = i;
  std::vector<double> y(data.samples.size(), 0.0);
  std::vector<bool> have(data.samples.size(), false);
  for (const auto& [lineno, f] : t.rows) {
    auto it = pos.find(f[c_id]);
    if (it == pos.end())
      throw ParseError(detail::where(source, lineno) + "response for subject '" + f[c_id] + "' which has no curve");
    if (have[it->second])
      throw ParseError(detail::where(source, lineno) + "duplicate response for subject '" + f[c_id] + "'");
    y[it->second] = detail::parse_number(f[c_y], source, lineno, "y");
    have[it->second] = true;
  }
  for (std::size_t i = 0; i < have.size(); ++i)
    if (!have[i]) throw ParseError(source + ": no response for subject '" + data.samples[i].subject_id + "'");
  data.responses = std::move(y);
}

inline std::ifstream open_input(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ParseError("cannot open '" + path + "'");
  return in;
}

inline FunctionalDataset parse_dataset(const std::string& path, const std::string& responses_path = "") {
  auto in = open_input(path);
  FunctionalDataset data = read_dataset(in, path);
  if (!responses_path.empty()) {
    auto rin = open_input(responses_path);
    read_responses(rin, data, responses_path);
  }
  return data;
}

inline void write_dataset(std::ostream& out, const FunctionalDataset& data) {
  out << "subject_id,time,value\n";
  for (const auto& s : data.samples)
    for (std::size_t j = 0; j < s.times.size(); ++j)
      out << s.subject_id << ',' << detail::fmt17(s.times[j]) << ',' << detail::fmt17(s.values[j]) << '\n';
}

inline void write_responses(std::ostream& out, const FunctionalDataset& data) {
  const auto& y = require_responses(data);
  out << "subject_id,y\n";
  for (std::size_t i = 0; i < data.size(); ++i) out << data.samples[i].subject_id << ',' << detail::fmt17(y[i]) << '\n';
}

// ---------------------------------------------------------------------------
// JSON

inline json to_json(const WeightSpec& spec) {
  return std::visit(
      [](const auto& w) -> json {
        using T = std::decay_t<decltype(w)>;
        if constexpr (std::is_same_v<T, UniformWeight>) {
          return {{"type", "uniform"}};
        } else if constexpr (std::is_same_v<T, StepWeight>) {
          return {{"type", "step"}, {"breaks", w.breaks}, {"levels", w.levels}};
        } else if constexpr (std::is_same_v<T, ExponentialWeight>) {
          json j{{"type", "exponential"}, {"rate", w.rate}};
          if (w.origin != 0.0) j["origin"] = w.origin;
          return j;
        } else {
          json j{{"type", "halfnormal"}, {"scale", w.scale}};
          if (w.origin != 0.0) j["origin"] = w.origin;
          return j;
        }
      },
      spec);
}

inline WeightSpec weight_from_json(const json& j) {
  try {
    const std::string type = j.at("type").get<std::string>();
    WeightSpec w;
    if (type == "uniform") {
      w = UniformWeight{};
    } else if (type == "step") {
      w = StepWeight{j.at("breaks").get<std::vector<double>>(), j.at("levels").get<std::vector<double>>()};
    } else if (type == "exponential") {
      w = ExponentialWeight{j.at("rate").get<double>(), j.value("origin", 0.0)};
    } else if (type == "halfnormal") {
      w = HalfNormalWeight{j.at("scale").get<double>(), j.value("origin", 0.0)};
    } else {
      throw ParseError("unknown weight type '" + type + "'");
    }
    validate(w);
    return w;
  } catch (const json::exception& e) {
    throw ParseError(std::string("malformed weight JSON: ") + e.what());
  }
}

inline json to_json(const Domain& d) {
  if (d.is_bounded()) return {{"kind", "bounded"}, {"a", d.a}, {"b", d.b}};
  return {{"kind", "unbounded"}, {"a", d.a}};
}

inline Domain domain_from_json(const json& j) {
  const std::string kind = j.at("kind").get<std::string>();
  if (kind == "bounded") return Domain::bounded(j.at("a").get<double>(), j.at("b").get<double>());
  if (kind == "unbounded") return Domain::unbounded_right(j.at("a").get<double>());
  throw ParseError("unknown domain kind '" + kind + "'");
}

namespace detail {

inline json rows_to_json(const Matrix& m) {
  json out = json::array();
  for (Eigen::Index r = 0; r < m.rows(); ++r) out.push_back(std::vector<double>(m.row(r).begin(), m.row(r).end()));
  return out;
}

inline std::vector<double> to_std(const Vector& v) { return std::vector<double>(v.data(), v.data() + v.size()); }

inline Matrix rows_from_json(const json& j, Eigen::Index cols) {
  Matrix m(static_cast<Eigen::Index>(j.size()), cols);
  for (std::size_t r = 0; r < j.size(); ++r) {
    const auto row = j[r].get<std::vector<double>>();
    if (static_cast<Eigen::Index>(row.size()) != cols) throw ParseError("model table row has the wrong length");
    m.row(static_cast<Eigen::Index>(r)) = as_vector(row).transpose();
  }
  return m;
}

}  // namespace detail

inline json to_json(const WflmModel& m) {
  const Eigensystem& e = m.eig;
  return {
      {"mu_Y", m.mu_Y},
      {"M", m.M},
      {"beta_k", detail::to_std(m.beta_k)},
      {"sigma_kY", detail::to_std(m.sigma_kY)},
      {"eigenvalues", detail::to_std(e.eigenvalues)},
      {"domain", to_json(e.grid().domain)},
      {"grid", detail::to_std(e.grid().points)},
      {"phi_Z", detail::rows_to_json(e.phi_Z)},
      {"phi_w", detail::rows_to_json(e.phi_w)},
      {"mean", detail::to_std(e.mean.values)},
      {"weight", to_json(e.weight)},
      {"density", detail::to_std(e.density)},
      {"measure", e.measure},
      {"composite", e.composite},
      {"beta_w_values", detail::to_std(m.beta_w_values)},
      {"beta_values", detail::to_std(m.beta_values)},
      {"total_variance", e.total_variance},
      {"noise_var", e.noise_var},
  };
}

inline WflmModel model_from_json(const json& j) {
  try {
    WflmModel m;
    const Domain dom = domain_from_json(j.at("domain"));
    WorkingGrid grid = grid_from_points(dom, as_vector(j.at("grid").get<std::vector<double>>()));
    const Eigen::Index G = grid.size();
    Eigensystem& e = m.eig;
    e.eigenvalues = as_vector(j.at("eigenvalues").get<std::vector<double>>());
    e.phi_Z = detail::rows_from_json(j.at("phi_Z"), G);
    e.phi_w = detail::rows_from_json(j.at("phi_w"), G);
    if (e.phi_Z.rows() != e.eigenvalues.size() || e.phi_w.rows() != e.eigenvalues.size())
      throw ParseError("model eigenfunction tables do not match the eigenvalues");
    const Vector mean = as_vector(j.at("mean").get<std::vector<double>>());
    const Vector density = as_vector(j.at("density").get<std::vector<double>>());
    if (mean.size() != G || density.size() != G) throw ParseError("model mean/density do not match the grid");
    e.mean = MeanFunction{grid, mean, std::nullopt};
    e.weight = weight_from_json(j.at("weight"));
    e.density = density;
    e.measure = j.value("measure", describe(e.weight));
    e.composite = j.value("composite", false);
    e.total_variance = j.value("total_variance", 0.0);
    e.noise_var = j.value("noise_var", 0.0);
    m.mu_Y = j.at("mu_Y").get<double>();
    m.M = j.at("M").get<Eigen::Index>();
    m.beta_k = as_vector(j.at("beta_k").get<std::vector<double>>());
    m.sigma_kY = as_vector(j.at("sigma_kY").get<std::vector<double>>());
    if (m.M < 0 || m.M > e.components() || m.beta_k.size() != m.M || m.sigma_kY.size() != m.M)
      throw ParseError("model coefficient vectors do not match M");
    m.beta_w_values = e.phi_Z.topRows(m.M).transpose() * m.beta_k;
    m.beta_values = e.phi_w.topRows(m.M).transpose() * m.beta_k;
    return m;
  } catch (const json::exception& ex) {
    throw ParseError(std::string("malformed model JSON: ") + ex.what());
  }
}

inline json to_json(const SelectionResult& r) {
  json trace = json::array();
  for (const auto& e : r.trace) trace.push_back({{"weight", to_json(e.weight)}, {"score", e.score}, {"accepted", e.accepted}});
  json j{{"weight", to_json(r.weight)}, {"M", r.M},         {"lambda1", r.lambda1}, {"lambda2", r.lambda2},
         {"score", r.score},            {"loocvs", r.loocvs}, {"trace", trace}};
  if (r.parameter) j["parameter"] = *r.parameter;
  return j;
}

inline json to_json(const SimResult& r) {
  const SimConfig& c = r.config;
  json cfg{{"scenario", to_string(c.scenario)},
           {"n", c.n},
           {"N", c.N ? json(*c.N) : json("5-10")},
           {"sigma", c.measurement_sd()},
           {"response_noise_sd", c.response_noise_sd},
           {"seed", c.seed},
           {"runs", c.runs},
           {"test_size", c.test_size}};
  json methods = json::array();
  for (const auto& m : r.methods)
    methods.push_back({{"method", m.method}, {"AMSPE", m.amspe}, {"sd", m.sd}, {"median", m.median}, {"mspe", m.mspe}});
  return {{"config", cfg}, {"methods", methods}};
}

/// One row per (method, run): scenario,method,n,N,sigma,run,mspe.
inline void write_sim_csv(std::ostream& out, const SimResult& r) {
  const SimConfig& c = r.config;
  out << "scenario,method,n,N,sigma,run,mspe\n";
  for (const auto& m : r.methods)
    for (std::size_t q = 0; q < m.mspe.size(); ++q)
      out << to_string(c.scenario) << ',' << m.method << ',' << c.n << ',' << (c.N ? std::to_string(*c.N) : "5-10")
          << ',' << detail::fmt17(c.measurement_sd()) << ',' << q << ',' << detail::fmt17(m.mspe[q]) << '\n';
}

// ---------------------------------------------------------------------------
// Command-line value syntax

/// `uniform`, `step:FILE.json`, `exp:RATE` or `halfnorm:SCALE`.
inline WeightSpec parse_weight_arg(const std::string& s) {
  auto number = [&s](const std::string& v) {
    double x = 0.0;
    auto [ptr, ec] = std::from_chars(v.data(), v.data() + v.size(), x);
    if (v.empty() || ec != std::errc() || ptr != v.data() + v.size()) throw ConfigError("bad number in weight '" + s + "'");
    return x;
  };
  if (s == "uniform") return UniformWeight{};
  const auto colon = s.find(':');
  if (colon == std::string::npos) throw ConfigError("unrecognised weight '" + s + "'");
  const std::string kind = s.substr(0, colon), arg = s.substr(colon + 1);
  if (kind == "exp") return make_parametric(ParametricFamily::Exponential, number(arg));
  if (kind == "halfnorm") return make_parametric(ParametricFamily::HalfNormal, number(arg));
  if (kind == "step") {
    auto in = open_input(arg);
    json j;
    try {
      in >> j;
    } catch (const json::exception& e) {
      throw ParseError("'" + arg + "' is not valid JSON: " + e.what());
    }
    WeightSpec w = weight_from_json(j);
    if (!is_step(w)) throw ConfigError("'" + arg + "' does not hold a step weight");
    return w;
  }
  throw ConfigError("unrecognised weight '" + s + "'");
}

/// `bounded:a,b` or `unbounded:a`.
inline Domain parse_domain_arg(const std::string& s) {
  const auto colon = s.find(':');
  if (colon == std::string::npos) throw ConfigError("unrecognised domain '" + s + "'");
  const std::string kind = s.substr(0, colon), arg = s.substr(colon + 1);
  auto number = [&s](const std::string& raw) {
    const std::string v = detail::trim(raw);
    double x = 0.0;
    auto [ptr, ec] = std::from_chars(v.data(), v.data() + v.size(), x);
    if (v.empty() || ec != std::errc() || ptr != v.data() + v.size()) throw ConfigError("bad number in domain '" + s + "'");
    return x;
  };
  if (kind == "bounded") {
    const auto comma = arg.find(',');
    if (comma == std::string::npos) throw ConfigError("bounded domain needs 'bounded:a,b'");
    return Domain::bounded(number(arg.substr(0, comma)), number(arg.substr(comma + 1)));
  }
  if (kind == "unbounded") return Domain::unbounded_right(number(arg));
  throw ConfigError("unrecognised domain '" + s + "'");
}

}  // namespace wfda
