#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "compcate/core/types.hpp"

namespace compcate {

using OrderedJson = nlohmann::ordered_json;

// JSONL unit record:
//   {unit_id, nodes:[{id,class,depth,x}], edges:[[p,c]], y_components?, y_unit?}
OrderedJson unit_to_json(const StructuredUnit& unit);
StructuredUnit unit_from_json(const nlohmann::json& record);

// "data/units.jsonl" + ".meta.json" -> "data/units.meta.json"
std::filesystem::path sidecar_path(const std::filesystem::path& jsonl, const std::string& suffix);

// Provenance embedded in every artifact written by the pipeline.
struct ArtifactStamp {
  std::string tool_version;
  std::string config_hash;
  std::uint64_t seed = 0;

  OrderedJson to_json() const;
  static ArtifactStamp from_json(const nlohmann::json& j);
};

ArtifactStamp make_stamp(const std::string& config_hash, std::uint64_t seed);

// Writes units as JSONL plus a "<stem>.meta.json" sidecar carrying dataset
// info, the stamp, and a content hash of the JSONL bytes.
void write_dataset(const std::filesystem::path& jsonl, const Dataset& dataset,
                   const ArtifactStamp& stamp);
Dataset read_dataset(const std::filesystem::path& jsonl);

std::string dataset_jsonl_text(const Dataset& dataset);
std::string content_hash(const Dataset& dataset);

OrderedJson info_to_json(const DatasetInfo& info);
DatasetInfo info_from_json(const nlohmann::json& j);

std::string read_text(const std::filesystem::path& path);
// Writes through a temporary file and renames into place.
void write_text(const std::filesystem::path& path, const std::string& text);

}  // namespace compcate
