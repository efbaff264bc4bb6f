#pragma once

#include <filesystem>
#include <iosfwd>

#include <json.hpp>

#include "opal/trajectory.hpp"

namespace opal {

// Line-delimited JSON: one header record, then one record per trajectory.
// Doubles are written in shortest round-trip form, so load(save(d)) == d
// bit for bit.
void write_dataset(const OfflineDataset& dataset, std::ostream& out);
OfflineDataset read_dataset(std::istream& in);

void save_dataset(const OfflineDataset& dataset, const std::filesystem::path& path);
OfflineDataset load_dataset(const std::filesystem::path& path);

nlohmann::json to_json(const Trajectory& traj);
Trajectory trajectory_from_json(const nlohmann::json& j);

nlohmann::json to_json(const Snippet& snippet);
Snippet snippet_from_json(const nlohmann::json& j);

nlohmann::json to_json(const PreferenceRecord& record);
PreferenceRecord record_from_json(const nlohmann::json& j);

const char* to_string(Preference p);
const char* to_string(LabelerKind k);

}  // namespace opal
