#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "compcate/core/types.hpp"

namespace compcate::eval {

// Mean of (estimate - truth)^2. Throws DataError on empty or mismatched input.
double pehe(std::span<const double> estimates, std::span<const double> truths);

// 1 - SS_res / SS_tot. Throws DataError for fewer than two samples and
// NumericError when the truths are constant.
double r2_score(std::span<const double> estimates, std::span<const double> truths);

enum class SplitKind { kWid, kDepth, kCombos };

struct SplitSpec {
  SplitKind kind = SplitKind::kWid;
  // Depth mode: train on depth <= k. Combos mode: train on class sets of size 2..k.
  int k = 0;
  // Depth mode: test units have exactly this depth; 0 picks the deepest unit.
  int eval_depth = 0;
  // Share of the train side for WID, and for units eligible for both sides.
  double train_fraction = 0.8;

  void validate() const;
  std::string label() const;
};

nlohmann::ordered_json to_json(const SplitSpec& spec);
SplitSpec split_spec_from_json(const nlohmann::json& j);

// Unit indices into the source dataset; disjoint, each side sorted.
struct SplitIndices {
  std::vector<std::size_t> train;
  std::vector<std::size_t> test;
};

// Structure-based partition. Units eligible for both sides (for example when
// k reaches the maximum depth) are divided by train_fraction with `seed`.
// Throws DataError when either side is empty.
SplitIndices split_compgen(const Dataset& dataset, const SplitSpec& spec, std::uint64_t seed);

Dataset subset(const Dataset& dataset, std::span<const std::size_t> indices);

}  // namespace compcate::eval
