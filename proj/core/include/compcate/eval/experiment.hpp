#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <limits>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "compcate/bias/bias.hpp"
#include "compcate/estimators/estimator.hpp"
#include "compcate/eval/eval.hpp"
#include "compcate/learner/train_config.hpp"

namespace compcate::eval {

struct ExperimentConfig {
  std::vector<estimators::EstimatorSpec> estimators;
  // Bias strengths applied to an experimental dataset. Empty when the dataset
  // is already factual, in which case its truth records must be supplied.
  std::vector<double> alphas;
  bias::ScoreKind bias_kind = bias::ScoreKind::kTreeDepth;
  SplitSpec split;
  // Training-set budgets; 0 uses the whole train side.
  std::vector<std::size_t> n_train = {0};
  std::vector<std::uint64_t> seeds = {0, 1, 2, 3, 4};
  // Caps the number of scored test units; 0 scores all of them.
  std::size_t test_limit = 0;
  learner::TrainConfig train;
  int mc_samples = 1000;
  estimators::CompositionalOptions compositional;

  void validate() const;
};

nlohmann::ordered_json to_json(const ExperimentConfig& config);
ExperimentConfig experiment_config_from_json(const nlohmann::json& j);

struct ExperimentData {
  Dataset dataset;
  // Aligned with dataset.units; required when the dataset is factual.
  std::vector<bias::TruthRecord> truth;
};

// Reads a JSONL dataset. Factual datasets also load their truth sidecar and
// fail with DataError when it is missing.
ExperimentData load_experiment_data(const std::filesystem::path& jsonl);

struct ResultRow {
  std::string estimator;
  std::string access_case;
  std::string split;
  std::optional<double> alpha;
  std::size_t n_train = 0;
  std::uint64_t seed = 0;
  std::size_t n_test = 0;
  double pehe = std::numeric_limits<double>::quiet_NaN();
  double r2 = std::numeric_limits<double>::quiet_NaN();
  // "ok" or "error:<kind>: <message>".
  std::string status = "ok";
  double runtime_seconds = 0.0;

  bool ok() const { return status == "ok"; }
  // Identifies the sweep cell: estimator, case, split, alpha, n_train, seed.
  std::string key() const;
};

struct ResultTable {
  std::vector<ResultRow> rows;

  // One row per cell, no runtimes, so reruns are byte-identical.
  std::string csv() const;
  // key,runtime_seconds
  std::string timing_csv() const;
  static ResultTable from_csv(const std::string& text);
};

std::string result_csv_header();
std::string result_csv_line(const ResultRow& row);

struct RunOptions {
  int jobs = 1;
  // When set, rows are appended as they finish and rows already recorded
  // with status ok are reused. The file is rewritten in cell order at the
  // end, next to "<stem>.timing.csv" and "<stem>.manifest.json".
  std::optional<std::filesystem::path> results_csv;
};

// Cartesian sweep over (estimator, alpha, n_train, seed). Datasets are biased
// once per (alpha, seed) and shared by every estimator; a failing cell becomes
// an error row and the sweep continues.
ResultTable run_experiment(const ExperimentConfig& config, const ExperimentData& data,
                           const RunOptions& options = {});

nlohmann::ordered_json results_manifest(const ExperimentConfig& config, const ExperimentData& data,
                                        const ResultTable& table);

std::filesystem::path timing_path(const std::filesystem::path& results_csv);
std::filesystem::path manifest_path(const std::filesystem::path& results_csv);

}  // namespace compcate::eval
