#pragma once

#include <array>
#include <cstdint>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

#include "compcate/core/types.hpp"

namespace compcate::fabsim {

enum class Archetype : int {
  kMaterialProcessing = 0,
  kMaterialJoining = 1,
  kElectronicsProcessing = 2,
  kAssembly = 3,
};
inline constexpr int kArchetypeCount = 4;

enum class RawItem : int { kFastener = 0, kElectronicComponent = 1, kRawMaterial = 2, kMisc = 3 };
inline constexpr int kRawItemCount = 4;

std::string_view to_string(Archetype a);
// Largest number of upstream stations an archetype accepts.
int max_parents(Archetype a);
// Raw items consumed (one unit each) per attempt.
const std::vector<RawItem>& raw_items_used(Archetype a);
double base_time_of(Archetype a);

struct Station {
  NodeId id = 0;
  Archetype archetype = Archetype::kAssembly;
  double base_time = 1.0;
  double complexity = 1.0;
};

struct Layout {
  int layout_id = 0;
  std::vector<Station> stations;
  std::vector<Edge> edges;  // upstream -> downstream
  InteractionGraph graph() const;
};

inline constexpr int kLayoutCount = 50;

struct LayoutConfig {
  int min_depth = 3;
  int max_depth = 10;
  int max_stations = 12;
};

// Deterministic per (layout_id, seed); sink is always an Assembly station.
Layout build_layout(int layout_id, std::uint64_t seed, const LayoutConfig& config = {});
nlohmann::ordered_json to_json(const Layout& layout);

struct SkillLaw {
  double mean = 0.8;
  double sd = 0.1;
};

struct WorkerPoolConfig {
  int size = 5;
  SkillLaw skill;
};

struct SimParams {
  WorkerPoolConfig pools[2] = {{5, {0.8, 0.1}}, {15, {0.5, 0.15}}};
  double scrap_coef = 0.1;
  double rework_coef = 0.2;
  // A reworked attempt takes (1 + rework_extra) times as long.
  double rework_extra = 0.5;
  // When set, every worker has exactly this skill.
  double fixed_skill = 0.0;
};

// Per-station raw inventory: inventory[s][item].
using Inventory = std::vector<std::array<int, kRawItemCount>>;

struct SimRun {
  const Layout* layout = nullptr;
  int demand = 0;
  Inventory inventory;
  int arm = 0;
  std::uint64_t seed = 0;
  SimParams params;
};

struct StationStats {
  int good = 0;
  int scrapped = 0;
  int reworked = 0;
  int attempts = 0;
  // Parts taken from each upstream station, aligned with graph parents.
  std::vector<int> consumed;
  double busy_time = 0.0;
  double finish_time = 0.0;
};

struct SimResult {
  std::vector<StationStats> stations;  // aligned with layout.stations
  int total_parts = 0;
  double total_time = 0.0;
  double parts_per_time() const { return total_time > 0.0 ? total_parts / total_time : 0.0; }
};

// Strictly sequential event-queue run. Scrap/rework draws come from
// per-station streams that do not depend on the arm, so two arms of the same
// run share them.
SimResult simulate_run(const SimRun& run);

std::vector<double> draw_worker_skills(const WorkerPoolConfig& pool, std::uint64_t seed, int arm);

struct FabsimConfig {
  int n_units = 10000;
  std::uint64_t seed = 0;
  int n_layouts = kLayoutCount;
  LayoutConfig layout;
  int demand_min = 5;
  int demand_max = 1000;
  double margin_min = 0.9;
  double margin_max = 1.3;
  SimParams params;

  void validate() const;
};

nlohmann::ordered_json to_json(const FabsimConfig& config);
FabsimConfig fabsim_config_from_json(const nlohmann::json& j);

inline constexpr int kStationFeatures = 10;

// Unit-level auxiliary outcomes that are not part of the JSONL record.
struct AuxOutcomes {
  std::int64_t unit_id = 0;
  int layout_id = 0;
  int demand = 0;
  double total_time[2] = {0.0, 0.0};
  double parts_per_time[2] = {0.0, 0.0};
};

struct ManufacturingData {
  Dataset dataset;
  std::vector<AuxOutcomes> aux;
};

ManufacturingData generate_manufacturing_dataset(const FabsimConfig& config);

}  // namespace compcate::fabsim
