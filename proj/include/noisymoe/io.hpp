#pragma once

// CSV tables and the versioned JSON model document.

#include "noisymoe/baselines.hpp"
#include "noisymoe/common.hpp"
#include "noisymoe/moe.hpp"
#include "noisymoe/simbench.hpp"

#include <json.hpp>

#include <charconv>
#include <fstream>
#include <istream>
#include <ostream>
#include <sstream>
#include <variant>

namespace noisymoe {

// ---------------------------------------------------------------------------
// CSV
// ---------------------------------------------------------------------------

struct CsvTable {
  std::vector<std::string> header;
  Matrix values;

  Index column(const std::string& name) const {
    for (std::size_t j = 0; j < header.size(); ++j)
      if (header[j] == name) return static_cast<Index>(j);
    return -1;
  }
};

namespace detail {

inline std::string trim(std::string s) {
  auto issp = [](unsigned char c) { return c == ' ' || c == '\t' || c == '\r' || c == '\n'; };
  while (!s.empty() && issp(static_cast<unsigned char>(s.back()))) s.pop_back();
  std::size_t i = 0;
  while (i < s.size() && issp(static_cast<unsigned char>(s[i]))) ++i;
  s.erase(0, i);
  if (s.size() >= 2 && s.front() == '"' && s.back() == '"') s = s.substr(1, s.size() - 2);
  return s;
}

inline std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> cells;
  std::string cur;
  bool quoted = false;
  for (char c : line) {
    if (c == '"') quoted = !quoted;
    if (c == ',' && !quoted) {
      cells.push_back(trim(cur));
      cur.clear();
    } else {
      cur.push_back(c);
    }
  }
  cells.push_back(trim(cur));
  return cells;
}

inline double parse_cell(const std::string& s, std::size_t row, std::size_t col, const std::string& source) {
  double v = 0.0;
  const char* b = s.data();
  const char* e = b + s.size();
  if (!s.empty() && *b == '+') ++b;
  auto [ptr, ec] = std::from_chars(b, e, v);
  if (s.empty() || ec != std::errc() || ptr != e || !std::isfinite(v))
    throw Error(ErrorCode::parse_error, source + ": row " + std::to_string(row) + ", column " +
                                            std::to_string(col + 1) + ": '" + s + "' is not a finite number");
  return v;
}

}  // namespace detail

/// Header row followed by numeric rows; rows are 1-based in error messages
/// counting the header as row 1.
inline CsvTable read_csv(std::istream& in, const std::string& source = "csv") {
  CsvTable t;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (lineno == 1 && line.size() >= 3 && static_cast<unsigned char>(line[0]) == 0xEF) line.erase(0, 3);
    if (detail::trim(line).empty()) continue;
    t.header = detail::split_csv_line(line);
    break;
  }
  require(!t.header.empty(), ErrorCode::parse_error, source + ": missing header row");
  std::vector<std::vector<double>> rows;
  while (std::getline(in, line)) {
    ++lineno;
    if (detail::trim(line).empty()) continue;
    auto cells = detail::split_csv_line(line);
    require(cells.size() == t.header.size(), ErrorCode::parse_error,
            source + ": row " + std::to_string(lineno) + " has " + std::to_string(cells.size()) +
                " cells, expected " + std::to_string(t.header.size()));
    std::vector<double> r(cells.size());
    for (std::size_t j = 0; j < cells.size(); ++j) r[j] = detail::parse_cell(cells[j], lineno, j, source);
    rows.push_back(std::move(r));
  }
  t.values.resize(static_cast<Index>(rows.size()), static_cast<Index>(t.header.size()));
  for (std::size_t i = 0; i < rows.size(); ++i)
    for (std::size_t j = 0; j < rows[i].size(); ++j)
      t.values(static_cast<Index>(i), static_cast<Index>(j)) = rows[i][j];
  return t;
}

inline CsvTable read_csv_file(const std::string& path) {
  std::ifstream in(path);
  require(static_cast<bool>(in), ErrorCode::parse_error, "cannot open '" + path + "'");
  return read_csv(in, path);
}

/// Full-precision (17 significant digit) writer.
inline void write_csv(std::ostream& os, const std::vector<std::string>& header, const Eigen::Ref<const Matrix>& v) {
  for (std::size_t j = 0; j < header.size(); ++j) os << (j ? "," : "") << header[j];
  os << '\n';
  for (Index i = 0; i < v.rows(); ++i) {
    for (Index j = 0; j < v.cols(); ++j) os << (j ? "," : "") << format_double(v(i, j));
    os << '\n';
  }
}

inline void write_csv_file(const std::string& path, const std::vector<std::string>& header,
                           const Eigen::Ref<const Matrix>& v) {
  std::ofstream out(path);
  require(static_cast<bool>(out), ErrorCode::parse_error, "cannot write '" + path + "'");
  write_csv(out, header, v);
}

// ---------------------------------------------------------------------------
// Model document (schema "noisymoe.model", version 1)
// ---------------------------------------------------------------------------

inline constexpr const char* kModelSchema = "noisymoe.model";
inline constexpr int kModelVersion = 1;

using json = nlohmann::json;

namespace detail {

inline json to_json(const Vector& v) { return json(std::vector<double>(v.data(), v.data() + v.size())); }

inline json to_json(const Matrix& m) {
  json rows = json::array();
  for (Index i = 0; i < m.rows(); ++i) {
    Vector r = m.row(i).transpose();
    rows.push_back(to_json(r));
  }
  return rows;
}

inline Vector vector_from(const json& j) {
  auto v = j.get<std::vector<double>>();
  return Eigen::Map<Vector>(v.data(), static_cast<Index>(v.size()));
}

inline Matrix matrix_from(const json& j) {
  Matrix m(static_cast<Index>(j.size()), j.empty() ? 0 : static_cast<Index>(j.at(0).size()));
  for (std::size_t i = 0; i < j.size(); ++i) {
    Vector r = vector_from(j.at(i));
    require(r.size() == m.cols(), ErrorCode::schema_mismatch, "model: ragged matrix");
    m.row(static_cast<Index>(i)) = r.transpose();
  }
  return m;
}

inline json gmm_to_json(const GmmModel& g) {
  json covs = json::array(), means = json::array();
  for (const auto& m : g.means) means.push_back(to_json(m));
  for (const auto& c : g.covariances) covs.push_back(to_json(c));
  return {{"k", g.k}, {"weights", to_json(g.weights)}, {"means", means}, {"covariances", covs},
          {"log_likelihood", g.log_likelihood}, {"objective", g.objective}};
}

inline GmmModel gmm_from_json(const json& j) {
  GmmModel g;
  g.k = j.at("k").get<Index>();
  g.weights = vector_from(j.at("weights"));
  for (const auto& m : j.at("means")) g.means.push_back(vector_from(m));
  for (const auto& c : j.at("covariances")) g.covariances.push_back(matrix_from(c));
  g.log_likelihood = j.value("log_likelihood", 0.0);
  g.objective = j.value("objective", 0.0);
  require(g.weights.size() == g.k && static_cast<Index>(g.means.size()) == g.k &&
              static_cast<Index>(g.covariances.size()) == g.k,
          ErrorCode::schema_mismatch, "model: gmm component counts disagree");
  return g;
}

inline json experts_to_json(const std::vector<ExpertModel>& experts) {
  json out = json::array();
  for (const auto& e : experts)
    out.push_back({{"beta0", e.beta0}, {"beta", to_json(e.beta)}, {"error_family", to_string(e.error_family)},
                   {"sigma", e.sigma}});
  return out;
}

inline std::vector<ExpertModel> experts_from_json(const json& j) {
  std::vector<ExpertModel> out;
  for (const auto& e : j)
    out.push_back(ExpertModel{e.at("beta0").get<double>(), vector_from(e.at("beta")),
                              parse_error_family(e.value("error_family", std::string("gaussian"))),
                              e.at("sigma").get<double>()});
  return out;
}

inline json counts_to_json(const std::vector<Index>& v) { return json(v); }

}  // namespace detail

/// A fitted model of any of the four estimators.
using AnyModel = std::variant<NoisyMoeModel, MoessModel, MoeModel>;

struct ModelDocument {
  Method method = Method::noisyss;
  std::vector<std::string> covariates;
  std::string response = "y";
  AnyModel model;
};

inline json to_json(const ModelDocument& doc) {
  json body;
  if (const auto* m = std::get_if<NoisyMoeModel>(&doc.model)) {
    const auto& d = m->diagnostics;
    std::vector<std::string> status;
    for (auto s : d.status) status.push_back(to_string(s));
    body = {{"gmm", detail::gmm_to_json(m->gmm)},
            {"experts", detail::experts_to_json(m->experts)},
            {"transition", detail::to_json(m->transition.pi)},
            {"alpha", m->alpha_used},
            {"diagnostics",
             {{"labeled_counts", d.labeled_counts},
              {"retained_counts", d.retained_counts},
              {"cluster_status", status},
              {"lts_objective", d.lts_objective},
              {"sigma_floor", d.sigma_floor},
              {"screened_out", d.screened_out},
              {"eg_iterations", d.eg_trace.empty() ? 0 : d.eg_trace.size() - 1},
              {"eg_objective_initial", d.eg_trace.empty() ? 0.0 : d.eg_trace.front()},
              {"eg_objective_final", d.eg_trace.empty() ? 0.0 : d.eg_trace.back()}}}};
  } else if (const auto* s = std::get_if<MoessModel>(&doc.model)) {
    std::vector<std::string> status;
    for (auto st : s->status) status.push_back(to_string(st));
    body = {{"gmm", detail::gmm_to_json(s->gmm)},
            {"experts", detail::experts_to_json(s->experts)},
            {"diagnostics", {{"labeled_counts", s->labeled_counts}, {"cluster_status", status}}}};
  } else {
    const auto& e = std::get<MoeModel>(doc.model);
    body = {{"gate_kind", to_string(e.gate_kind)},
            {"gate_params", detail::to_json(e.gate_params)},
            {"experts", detail::experts_to_json(e.experts)},
            {"log_likelihood", e.log_likelihood}};
  }
  // nlohmann prints doubles with round-trip precision.
  return {{"schema", kModelSchema},     {"version", kModelVersion}, {"method", to_string(doc.method)},
          {"covariates", doc.covariates}, {"response", doc.response}, {"model", body}};
}

inline ModelDocument model_from_json(const json& j) {
  require(j.is_object() && j.value("schema", std::string()) == kModelSchema, ErrorCode::schema_mismatch,
          "not a noisymoe model document");
  int version = j.at("version").get<int>();
  if (version > kModelVersion)
    throw Error(ErrorCode::model_version_mismatch, "model schema version " + std::to_string(version) +
                                                       " is newer than supported version " +
                                                       std::to_string(kModelVersion));
  require(version >= 1, ErrorCode::model_version_mismatch, "invalid model schema version");
  ModelDocument doc;
  doc.method = parse_method(j.at("method").get<std::string>());
  doc.covariates = j.at("covariates").get<std::vector<std::string>>();
  doc.response = j.value("response", std::string("y"));
  const json& b = j.at("model");
  switch (doc.method) {
    case Method::noisyss: {
      NoisyMoeModel m;
      m.gmm = detail::gmm_from_json(b.at("gmm"));
      m.experts = detail::experts_from_json(b.at("experts"));
      m.transition.pi = detail::matrix_from(b.at("transition"));
      m.alpha_used = b.at("alpha").get<double>();
      if (b.contains("diagnostics")) {
        const auto& d = b.at("diagnostics");
        m.diagnostics.labeled_counts = d.value("labeled_counts", std::vector<Index>{});
        m.diagnostics.retained_counts = d.value("retained_counts", std::vector<Index>{});
        m.diagnostics.sigma_floor = d.value("sigma_floor", 0.0);
      }
      require(static_cast<Index>(m.experts.size()) == m.gmm.k && m.transition.pi.rows() == m.gmm.k &&
                  m.transition.pi.cols() == m.gmm.k,
              ErrorCode::schema_mismatch, "model: component counts disagree");
      doc.model = std::move(m);
      break;
    }
    case Method::moess: {
      MoessModel m;
      m.gmm = detail::gmm_from_json(b.at("gmm"));
      m.experts = detail::experts_from_json(b.at("experts"));
      require(static_cast<Index>(m.experts.size()) == m.gmm.k, ErrorCode::schema_mismatch,
              "model: component counts disagree");
      doc.model = std::move(m);
      break;
    }
    case Method::moeline:
    case Method::moequad: {
      MoeModel m;
      m.gate_kind = b.at("gate_kind").get<std::string>() == "linear" ? GateKind::linear : GateKind::quadratic;
      m.gate_params = detail::matrix_from(b.at("gate_params"));
      m.experts = detail::experts_from_json(b.at("experts"));
      m.log_likelihood = b.value("log_likelihood", 0.0);
      require(m.gate_params.rows() == m.k(), ErrorCode::schema_mismatch, "model: gate rows disagree");
      doc.model = std::move(m);
      break;
    }
  }
  return doc;
}

inline void save_model(const std::string& path, const ModelDocument& doc) {
  std::ofstream out(path);
  require(static_cast<bool>(out), ErrorCode::parse_error, "cannot write '" + path + "'");
  out << to_json(doc).dump(2) << '\n';
}

inline ModelDocument load_model(const std::string& path) {
  std::ifstream in(path);
  require(static_cast<bool>(in), ErrorCode::parse_error, "cannot open '" + path + "'");
  json j;
  try {
    j = json::parse(in);
  } catch (const json::exception& e) {
    throw Error(ErrorCode::parse_error, path + ": " + e.what());
  }
  try {
    return model_from_json(j);
  } catch (const json::exception& e) {
    throw Error(ErrorCode::schema_mismatch, path + ": " + e.what());
  }
}

inline Vector predict(const ModelDocument& doc, const Eigen::Ref<const Matrix>& x) {
  return std::visit(
      [&](const auto& m) -> Vector {
        using T = std::decay_t<decltype(m)>;
        if constexpr (std::is_same_v<T, NoisyMoeModel>)
          return predict(m, x);
        else if constexpr (std::is_same_v<T, MoessModel>)
          return predict_moess(m, x);
        else
          return predict_moe(m, x);
      },
      doc.model);
}

}  // namespace noisymoe
