#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

#include <nlohmann/json.hpp>

#include "compcate/core/types.hpp"

namespace compcate::bias {

enum class ScoreKind { kCovariateSum, kTreeDepth };

struct BiasPolicy {
  ScoreKind kind = ScoreKind::kTreeDepth;
  double alpha = 0.0;
  double clamp_low = 0.01;
  double clamp_high = 0.99;

  void validate() const;
};

nlohmann::ordered_json to_json(const BiasPolicy& policy);
BiasPolicy bias_policy_from_json(const nlohmann::json& j);
ScoreKind parse_score_kind(const std::string& name);

double biasing_score(const StructuredUnit& unit, ScoreKind kind);

// Median and interquartile range of the biasing score over a dataset.
struct ScoreStats {
  double center = 0.0;
  double scale = 1.0;
  // IQR was zero and the scale fell back to 1.
  bool degenerate = false;
};

ScoreStats score_stats(std::span<const StructuredUnit> units, ScoreKind kind);

// clamp(logistic(alpha * (score - center) / scale), low, high)
double propensity_score(const StructuredUnit& unit, const BiasPolicy& policy,
                        const ScoreStats& stats);

// Held-aside counterfactual information for one unit.
struct TruthRecord {
  std::int64_t unit_id = 0;
  int t = 0;
  double propensity = 0.5;
  PotentialOutcomes unit;
  std::vector<PotentialOutcomes> components;  // aligned with graph nodes; may be empty
  double effect() const { return unit.effect(); }
};

struct ObservationalSplit {
  Dataset factual;
  std::vector<TruthRecord> truth;
  ScoreStats stats;
};

ObservationalSplit sample_observational(const Dataset& experimental, const BiasPolicy& policy,
                                        std::uint64_t seed);

// Inverse of sample_observational's split.
Dataset reconstruct_experimental(const Dataset& factual, std::span<const TruthRecord> truth);

nlohmann::ordered_json truth_to_json(const TruthRecord& record, const InteractionGraph& graph);
TruthRecord truth_from_json(const nlohmann::json& j, const InteractionGraph* graph);

// "<stem>.truth.jsonl" beside the factual dataset.
std::filesystem::path truth_path(const std::filesystem::path& factual_jsonl);
void write_truth(const std::filesystem::path& factual_jsonl, const Dataset& factual,
                 std::span<const TruthRecord> truth);
// Component truths are restored when `factual` is supplied.
std::vector<TruthRecord> read_truth(const std::filesystem::path& factual_jsonl,
                                    const Dataset* factual = nullptr);

}  // namespace compcate::bias
