#pragma once

// File formats: trace CSV, versioned JSON artifacts and the binary policy table.

#include <filesystem>
#include <iosfwd>
#include <string>

#include <json.hpp>

#include "aqsense/environment.hpp"
#include "aqsense/location.hpp"
#include "aqsense/power_multi.hpp"
#include "aqsense/power_single.hpp"
#include "aqsense/schedule.hpp"

namespace aqsense {

using Json = nlohmann::json;

inline constexpr int kSchemaVersion = 1;

/// Header `t,location,value`. Throws ParseError with the 1-based line number.
TraceSet read_traces_csv(std::istream& in);
TraceSet read_traces_csv(const std::filesystem::path& path);
void write_traces_csv(std::ostream& out, const TraceSet& traces);
void write_traces_csv(const std::filesystem::path& path, const TraceSet& traces);

Json load_json(const std::filesystem::path& path);
/// Pretty-printed with a trailing newline.
void save_json(const std::filesystem::path& path, const Json& j);

/// Throws ParseError unless j carries a supported schema_version.
void check_schema(const Json& j, const std::string& what);

Json to_json(const EnvironmentModel& env);
EnvironmentModel environment_from_json(const Json& j);

Json to_json(const InferenceParams& params);
InferenceParams params_from_json(const Json& j);

Json to_json(const PlanningConfig& cfg);
PlanningConfig planning_from_json(const Json& j);

Json to_json(const TrainConfig& tc);
/// Missing fields keep their defaults.
TrainConfig train_config_from_json(const Json& j, TrainConfig base = {});

Json to_json(const GAConfig& cfg);
GAConfig ga_config_from_json(const Json& j, GAConfig base = {});

/// Rows of phi as "0101..." strings plus the deployment list.
Json to_json(const Schedule& s);
Schedule schedule_from_json(const Json& j);
/// One row per location: location,deployed,phi_0,...,phi_T.
void write_schedule_csv(std::ostream& out, const Schedule& s);

Json to_json(const QNetwork& q);
QNetwork qnetwork_from_json(const Json& j);

Json to_json(const Gene& g);
Gene gene_from_json(const Json& j);
Json to_json(const GenePool& pool);
GenePool gene_pool_from_json(const Json& j);

/// Little-endian binary: magic, version, T, E, delta_T, |Y|, values, actions.
void save_policy(const std::filesystem::path& path, const PolicyTable& policy);
PolicyTable load_policy(const std::filesystem::path& path);

}  // namespace aqsense
