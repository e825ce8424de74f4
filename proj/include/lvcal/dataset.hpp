#pragma once

#include <filesystem>
#include <map>
#include <string>

#include "json.hpp"
#include "lvcal/calibrators.hpp"
#include "lvcal/metrics.hpp"
#include "lvcal/synth.hpp"

namespace lvcal {

using Json = nlohmann::json;

inline constexpr const char* kSchemaVersion = "1.0";

/// Sorted keys, 17 significant digits, one key per line. Integers stay
/// integers. Throws InvalidArgument on non-finite numbers.
std::string canonical_dump(const Json& j);

/// JSON-pointer path of every object key and array element -> 1-based line.
std::map<std::string, int> json_line_index(const std::string& text);

/// Parsed document plus enough context for located diagnostics.
struct Document {
  Json json;
  std::string source;
  std::map<std::string, int> lines;
};

/// Throws SchemaViolation on malformed JSON.
Document parse_document(const std::string& text, const std::string& source);
/// Throws IoError.
Document load_document(const std::filesystem::path& path);
std::string read_text(const std::filesystem::path& path);
void write_text(const std::filesystem::path& path, const std::string& text);

Json to_json(const Pose& pose);
Json to_json(const ScenarioSpec& spec);
Json to_json(const Scenario& scenario);
Json dataset_json(const Scenario& scenario);

/// All fields optional; absent ones keep their defaults.
ScenarioSpec spec_from_json(const Document& doc);
/// Full dataset document: schema_version plus scenario. Submaps are rebuilt
/// from the stored trajectories and observations.
Scenario dataset_from_json(const Document& doc);

void write_dataset(const Scenario& scenario, const std::filesystem::path& path);
Scenario read_dataset(const std::filesystem::path& path);

/// result.json payload; `config` is echoed verbatim.
Json result_json(const CalibrationResult& result, const ExtrinsicPrior& prior, const Json& config);

struct StoredResult {
  CalibrationResult result;
  ExtrinsicPrior prior;
  Json config;
};
StoredResult result_from_json(const Document& doc);

Json disparity_stats_json(const DisparityReport& report);

}  // namespace lvcal
