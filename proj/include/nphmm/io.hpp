#pragma once

#include <filesystem>
#include <iosfwd>
#include <string>
#include <variant>

#include <json.hpp>

#include "nphmm/diagnostics.hpp"
#include "nphmm/em.hpp"
#include "nphmm/simeval.hpp"

namespace nphmm {

inline constexpr const char* kModelSchema = "nphmm-model";
inline constexpr int kModelVersion = 1;

nlohmann::json model_to_json(const HmmModel& model);
/// Rebuilds and re-validates a model; malformed documents throw ParseError,
/// invalid parameters InvalidModel.
HmmModel model_from_json(const nlohmann::json& doc);

HmmModel read_model(const std::filesystem::path& path);
nlohmann::json read_json(const std::filesystem::path& path);

/// One observation per line; fields split on commas, semicolons or
/// whitespace. A first line that does not parse as numbers is a header;
/// blank lines and lines starting with '#' are skipped.
ObservationSequence read_observations(const std::filesystem::path& path, ObservationKind kind);
ObservationSequence parse_observations(std::istream& in, ObservationKind kind, const std::string& source);
std::string format_observations(const ObservationSequence& obs);

/// Labels are 1-based on disk and 0-based in memory.
StatePath read_states(const std::filesystem::path& path);
StatePath parse_states(std::istream& in, const std::string& source);
std::string format_states(const StatePath& path);

nlohmann::json fit_report_to_json(const FitReport& report, const FitOptions& opts);
nlohmann::json diagnostics_to_json(const IdentifiabilityReport& report);

/// Accepts {"regions": [{"state", "length"}], "distributions": [[p0, p1, ...]]}
/// or {"preset": "desk"}.
RegionScheme scheme_from_json(const nlohmann::json& doc);

/// A region scheme (as above) or {"model": <model object or file>, "n": N}.
std::variant<RegionScheme, SimulationModel> simulation_from_json(const nlohmann::json& doc,
                                                                 const std::filesystem::path& base_dir);

/// Fit settings keyed like the fit command's flags (emission, lambda, alpha,
/// components, component_family, kernel, bandwidth, inner_iters,
/// anchor_stride, max_iter, tol, starts, init_smoothing). Unknown keys throw.
FitOptions fit_options_from_json(const nlohmann::json& doc, const std::vector<std::string>& extra_keys = {});

/// Model files named in the config resolve relative to `base_dir`.
BenchmarkConfig benchmark_from_json(const nlohmann::json& doc, const std::filesystem::path& base_dir);

/// Writes through a sibling temporary file and renames it into place.
void write_file_atomic(const std::filesystem::path& path, const std::string& contents);

}  // namespace nphmm
