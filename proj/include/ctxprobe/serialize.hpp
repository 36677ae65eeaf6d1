#pragma once

// JSON/CSV encodings for model bundles, metric blocks and pipeline reports.

#include <filesystem>
#include <string>
#include <string_view>

#include <json.hpp>

#include "ctxprobe/metrics.hpp"
#include "ctxprobe/ocsvm.hpp"
#include "ctxprobe/pipeline.hpp"

namespace ctxprobe {

/// One JSON document per model; every real is written with 17 significant
/// digits so that model_from_json(model_to_json(m)) == m.
std::string model_to_json(const OcsvmModel& model);
/// Throws FormatError on malformed documents or models that break invariants.
OcsvmModel model_from_json(std::string_view text);

/// Six metrics plus tp/fp/fn/tn.
nlohmann::ordered_json metrics_to_json(const EvaluationMetrics& metrics);

/// Machine-readable report; reals at full round-trip precision.
std::string report_to_json(const PipelineReport& report);
/// One row per processed layer, reals with 6 decimals.
std::string report_to_csv(const PipelineReport& report);
/// Reads "best_layer" from a report produced by report_to_json.
std::size_t best_layer_from_report(const std::filesystem::path& path);

/// Writes `contents` to `path` verbatim; throws IoError on failure.
void write_text_file(const std::filesystem::path& path, std::string_view contents);
std::string read_text_file(const std::filesystem::path& path);

}  // namespace ctxprobe
