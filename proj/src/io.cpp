#include "phreg/io.hpp"

#include "phreg/error.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <istream>
#include <ostream>
#include <sstream>

namespace phreg {

using nlohmann::ordered_json;

namespace {

std::string trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return std::string(s.substr(b, e - b + 1));
}

std::vector<std::string> split(std::string_view line) {
  std::vector<std::string> out;
  std::size_t start = 0;
  while (true) {
    const auto pos = line.find(',', start);
    out.push_back(trim(line.substr(start, pos == std::string_view::npos ? std::string_view::npos : pos - start)));
    if (pos == std::string_view::npos) break;
    start = pos + 1;
  }
  return out;
}

double parse_number(const std::string& cell, std::string_view source, std::size_t line, const std::string& column) {
  double v = 0.0;
  const char* first = cell.data();
  const char* last = cell.data() + cell.size();
  if (!cell.empty() && *first == '+') ++first;
  const auto res = std::from_chars(first, last, v);
  if (cell.empty() || res.ec != std::errc() || res.ptr != last)
    throw InputError(std::string(source) + ": line " + std::to_string(line) + ", column '" + column +
                     "': cannot parse '" + cell + "' as a number");
  return v;
}

ordered_json vector_json(const Vector& v) { return std::vector<double>(v.data(), v.data() + v.size()); }

Vector json_vector(const ordered_json& j) {
  const auto vals = j.get<std::vector<double>>();
  return Eigen::Map<const Vector>(vals.data(), static_cast<Eigen::Index>(vals.size()));
}

template <class T>
T require(const ordered_json& j, const char* key) {
  if (!j.contains(key)) throw InputError(std::string("model document: missing field '") + key + "'");
  try {
    return j.at(key).get<T>();
  } catch (const nlohmann::json::exception& e) {
    throw InputError(std::string("model document: field '") + key + "' has the wrong type");
  }
}

}  // namespace

// ---------------------------------------------------------------------------
// CSV

std::size_t CsvTable::column(std::string_view name) const {
  const auto it = std::find(header.begin(), header.end(), name);
  if (it == header.end()) throw InputError("missing column '" + std::string(name) + "'");
  return static_cast<std::size_t>(it - header.begin());
}

Vector CsvTable::values(std::string_view name) const {
  const std::size_t c = column(name);
  Vector out(static_cast<Eigen::Index>(rows.size()));
  for (std::size_t i = 0; i < rows.size(); ++i) out(static_cast<Eigen::Index>(i)) = rows[i][c];
  return out;
}

CsvTable read_csv(std::istream& in, std::string_view source) {
  CsvTable table;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (lineno == 1 && line.size() >= 3 && line.compare(0, 3, "\xEF\xBB\xBF") == 0) line.erase(0, 3);
    if (trim(line).empty()) continue;
    auto cells = split(line);
    if (table.header.empty()) {
      for (auto& c : cells) {
        if (c.size() >= 2 && c.front() == '"' && c.back() == '"') c = c.substr(1, c.size() - 2);
        if (c.empty()) throw InputError(std::string(source) + ": empty column name in header");
      }
      table.header = std::move(cells);
      continue;
    }
    if (cells.size() != table.header.size())
      throw InputError(std::string(source) + ": line " + std::to_string(lineno) + " has " +
                       std::to_string(cells.size()) + " fields, expected " + std::to_string(table.header.size()));
    std::vector<double> row(cells.size());
    for (std::size_t c = 0; c < cells.size(); ++c) row[c] = parse_number(cells[c], source, lineno, table.header[c]);
    table.rows.push_back(std::move(row));
  }
  if (table.header.empty()) throw InputError(std::string(source) + ": missing header row");
  return table;
}

CsvTable read_csv_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw InputError("cannot open '" + path + "'");
  return read_csv(in, path);
}

void write_csv(std::ostream& out, const CsvTable& table) {
  const auto old = out.precision(17);
  for (std::size_t c = 0; c < table.header.size(); ++c) out << (c ? "," : "") << table.header[c];
  out << '\n';
  for (const auto& row : table.rows) {
    for (std::size_t c = 0; c < row.size(); ++c) out << (c ? "," : "") << row[c];
    out << '\n';
  }
  out.precision(old);
}

Dataset dataset_from_table(const CsvTable& table, std::string_view response,
                           const std::vector<std::string>& covariates) {
  Dataset data;
  data.y = table.values(response);
  data.X.resize(data.y.size(), static_cast<Eigen::Index>(covariates.size()));
  for (std::size_t j = 0; j < covariates.size(); ++j) data.X.col(static_cast<Eigen::Index>(j)) = table.values(covariates[j]);
  data.names = covariates;
  if (data.y.size() == 0) throw InputError("no data rows");
  for (Eigen::Index i = 0; i < data.y.size(); ++i) {
    if (!std::isfinite(data.y(i)) || !(data.y(i) > 0.0))
      throw InputError("column '" + std::string(response) + "', data row " + std::to_string(i + 1) +
                       ": response must be a positive finite number");
  }
  for (std::size_t j = 0; j < covariates.size(); ++j)
    for (Eigen::Index i = 0; i < data.y.size(); ++i)
      if (!std::isfinite(data.X(i, static_cast<Eigen::Index>(j))))
        throw InputError("column '" + covariates[j] + "', data row " + std::to_string(i + 1) + ": value is not finite");
  return data;
}

// ---------------------------------------------------------------------------
// Model document

ordered_json to_json(const ModelDocument& doc) {
  const RegressionModel& m = doc.model;
  if (m.link.kind() == Link::Kind::Custom) throw UnsupportedError("custom links cannot be serialized");
  ordered_json j;
  j["schema"] = kModelSchema;
  j["structure"] = to_string(m.law.structure().kind);
  j["p"] = m.law.phases();
  j["pi"] = vector_json(m.law.pi());
  ordered_json rows = ordered_json::array();
  for (Eigen::Index r = 0; r < m.law.T().rows(); ++r) rows.push_back(vector_json(m.law.T().row(r).transpose()));
  j["T"] = rows;
  j["transform"] = {{"family", to_string(m.transform.family())}, {"theta", m.transform.parameter()}};
  j["link"] = m.link.name();
  j["response"] = doc.response;
  j["covariates"] = doc.covariates;
  j["beta"] = vector_json(m.beta);
  if (doc.fit) {
    const FitMetadata& f = *doc.fit;
    j["fit"] = {{"n", f.n},       {"loglik", f.loglik},         {"df", f.df},
                {"aic", f.aic},   {"bic", f.bic},               {"iterations", f.iterations},
                {"converged", f.converged}, {"seed", f.seed}};
  }
  return j;
}

ModelDocument model_from_json(const ordered_json& j) {
  if (!j.is_object()) throw InputError("model document: expected a JSON object");
  const auto schema = require<std::string>(j, "schema");
  if (schema != kModelSchema)
    throw InputError("model document: schema '" + schema + "' is not supported (expected '" +
                     std::string(kModelSchema) + "')");
  try {
    MarkovStructure structure{parse_structure_kind(require<std::string>(j, "structure")), require<int>(j, "p")};
    const Vector pi = json_vector(j.at("pi"));
    const auto rows = j.at("T");
    Matrix T(static_cast<Eigen::Index>(rows.size()), static_cast<Eigen::Index>(rows.size()));
    for (std::size_t r = 0; r < rows.size(); ++r) {
      const Vector row = json_vector(rows[r]);
      if (row.size() != T.cols()) throw InputError("model document: T is not square");
      T.row(static_cast<Eigen::Index>(r)) = row.transpose();
    }
    const auto& tj = j.at("transform");
    const TransformFamily family = parse_transform_family(tj.at("family").get<std::string>());
    const Transform tr = family == TransformFamily::Identity ? Transform() : Transform(family, tj.at("theta").get<double>());
    const Vector beta = json_vector(j.at("beta"));
    auto covariates = require<std::vector<std::string>>(j, "covariates");
    if (static_cast<Eigen::Index>(covariates.size()) != beta.size())
      throw InputError("model document: beta and covariates differ in length");
    ModelDocument doc{RegressionModel{PhaseTypeLaw(pi, T, structure), tr, beta, parse_link(require<std::string>(j, "link"))},
                      std::move(covariates), require<std::string>(j, "response"), std::nullopt};
    if (j.contains("fit")) {
      const auto& f = j.at("fit");
      doc.fit = FitMetadata{f.at("n").get<std::size_t>(), f.at("loglik").get<double>(), f.at("df").get<int>(),
                            f.at("aic").get<double>(), f.at("bic").get<double>(), f.at("iterations").get<int>(),
                            f.at("converged").get<bool>(), f.at("seed").get<std::uint64_t>()};
    }
    return doc;
  } catch (const InputError&) {
    throw;
  } catch (const nlohmann::json::exception& e) {
    throw InputError(std::string("model document: ") + e.what());
  } catch (const std::exception& e) {
    throw InputError(std::string("model document: invalid model: ") + e.what());
  }
}

std::string serialize(const ModelDocument& doc) { return to_json(doc).dump(2) + "\n"; }

ModelDocument parse_model(std::string_view text) {
  ordered_json j;
  try {
    j = ordered_json::parse(text);
  } catch (const nlohmann::json::parse_error& e) {
    throw InputError(std::string("model document: ") + e.what());
  }
  return model_from_json(j);
}

void save_model(const std::string& path, const ModelDocument& doc) {
  std::ofstream out(path);
  if (!out) throw InputError("cannot write '" + path + "'");
  out << serialize(doc);
}

ModelDocument load_model(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw InputError("cannot open model file '" + path + "'");
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_model(ss.str());
}

// ---------------------------------------------------------------------------
// Reports

ordered_json to_json(const FitReport& r) {
  return {{"n", r.n},           {"loglik", r.loglik},     {"df", r.df},
          {"aic", r.aic},       {"bic", r.bic},           {"iterations", r.iterations},
          {"converged", r.converged}, {"seed", r.seed},   {"inner_fallbacks", r.inner_fallbacks},
          {"trace", r.trace}};
}

ordered_json to_json(const InferenceReport& r) {
  ordered_json coefs = ordered_json::array();
  for (std::size_t j = 0; j < r.names.size(); ++j) {
    const auto c = static_cast<Eigen::Index>(j);
    coefs.push_back({{"name", r.names[j]},
                     {"estimate", r.estimates(c)},
                     {"se", r.standard_errors(c)},
                     {"ci_lower", r.ci_lower(c)},
                     {"ci_upper", r.ci_upper(c)},
                     {"p_value", r.p_values(c)}});
  }
  return {{"fisher_source", to_string(r.source)},
          {"coefficients", coefs},
          {"loglik", r.loglik},
          {"df", r.df},
          {"aic", r.aic},
          {"bic", r.bic},
          {"n", r.n},
          {"warnings", r.warnings}};
}

ordered_json to_json(const std::vector<StudyRow>& rows) {
  ordered_json out = ordered_json::array();
  for (const auto& r : rows) {
    ordered_json row = {{"model", to_string(r.model)}, {"ok", r.ok}};
    if (!r.ok) {
      row["error"] = r.error;
    } else {
      row["loglik"] = r.loglik;
      row["df"] = r.df;
      row["aic"] = r.aic;
      row["bic"] = r.bic;
      row["iterations"] = r.iterations;
      row["converged"] = r.converged;
      ordered_json coefs = ordered_json::array();
      for (std::size_t j = 0; j < r.names.size(); ++j) {
        const auto c = static_cast<Eigen::Index>(j);
        coefs.push_back({{"name", r.names[j]},
                         {"estimate", r.estimates(c)},
                         {"se", r.standard_errors(c)},
                         {"p_value", r.p_values(c)}});
      }
      row["coefficients"] = coefs;
    }
    out.push_back(row);
  }
  return {{"schema", "phreg-study/1"}, {"rows", out}};
}

}  // namespace phreg
