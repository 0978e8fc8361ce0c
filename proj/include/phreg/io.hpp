#pragma once

// CSV tables and the JSON model document.

#include "phreg/inference.hpp"
#include "phreg/regression.hpp"
#include "phreg/simstudy.hpp"

#include <json.hpp>

#include <cstdint>
#include <iosfwd>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace phreg {

// Malformed input file: bad CSV, missing column, wrong schema. Maps to exit code 2.
class InputError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Header row plus numeric rows; ',' separator, '.' decimal.
struct CsvTable {
  std::vector<std::string> header;
  std::vector<std::vector<double>> rows;

  std::size_t column(std::string_view name) const;  // InputError when absent
  Vector values(std::string_view name) const;
};

CsvTable read_csv(std::istream& in, std::string_view source = "input");
CsvTable read_csv_file(const std::string& path);
void write_csv(std::ostream& out, const CsvTable& table);

// Builds a dataset from named columns; every response must be positive.
Dataset dataset_from_table(const CsvTable& table, std::string_view response, const std::vector<std::string>& covariates);

inline constexpr std::string_view kModelSchema = "phreg-model/1";

struct FitMetadata {
  std::size_t n = 0;
  double loglik = 0.0;
  int df = 0;
  double aic = 0.0;
  double bic = 0.0;
  int iterations = 0;
  bool converged = false;
  std::uint64_t seed = 0;
};

struct ModelDocument {
  RegressionModel model;
  std::vector<std::string> covariates;
  std::string response = "y";
  std::optional<FitMetadata> fit;
};

nlohmann::ordered_json to_json(const ModelDocument& doc);
// Validates the schema tag and the embedded law; throws InputError on mismatch.
ModelDocument model_from_json(const nlohmann::ordered_json& j);

std::string serialize(const ModelDocument& doc);
ModelDocument parse_model(std::string_view text);
void save_model(const std::string& path, const ModelDocument& doc);
ModelDocument load_model(const std::string& path);

nlohmann::ordered_json to_json(const FitReport& report);
nlohmann::ordered_json to_json(const InferenceReport& report);
nlohmann::ordered_json to_json(const std::vector<StudyRow>& rows);

}  // namespace phreg
