#pragma once

#include <filesystem>
#include <optional>
#include <span>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

#include "compcate/core/types.hpp"
#include "compcate/core/unitary.hpp"
#include "compcate/estimators/compositional.hpp"
#include "compcate/learner/regressor.hpp"
#include "compcate/learner/train.hpp"

namespace compcate::estimators {

enum class UnitaryVariant { kS, kT, kX };

std::string_view to_string(UnitaryVariant variant);
UnitaryVariant parse_unitary_variant(std::string_view name);

// Logistic regression on standardized features.
struct LogisticModel {
  std::vector<double> shift;
  std::vector<double> scale;
  std::vector<double> weights;
  double bias = 0.0;

  double predict(std::span<const double> x) const;
  nlohmann::ordered_json to_json() const;
  static LogisticModel from_json(const nlohmann::json& j);
};

// Full-batch Adam from zero weights on the mean log-loss with a small ridge
// penalty. Targets must be 0 or 1.
LogisticModel fit_logistic(const learner::RegressionData& data, std::size_t steps = 500,
                           double learning_rate = 0.05, double ridge = 1e-4);

struct UnitaryModel {
  UnitarySchema schema;
  UnitaryVariant variant = UnitaryVariant::kS;
  // S: one regressor on [features, t]. T and X: index = arm.
  std::vector<learner::GaussianRegressor> outcome;
  // X: effect regressors fitted on control (0) and treated (1) imputed effects.
  std::vector<learner::GaussianRegressor> effect;
  std::optional<LogisticModel> propensity;
  // Replaces the fitted propensity in the X-learner blend when set.
  std::optional<double> fixed_propensity;
  learner::TrainConfig train_config;
};

// S or T learner; the X learner goes through fit_xlearner.
UnitaryModel fit_unitary(const Dataset& factual, UnitaryVariant variant,
                         const UnitarySchema& schema, const learner::TrainConfig& config);
UnitaryModel fit_xlearner(const Dataset& factual, const UnitarySchema& schema,
                          const learner::TrainConfig& config);

CateEstimate infer_cate_unitary(const UnitaryModel& model, const StructuredUnit& unit);

nlohmann::ordered_json manifest_json(const UnitaryModel& model);
void save_unitary(const UnitaryModel& model, const std::filesystem::path& dir);
UnitaryModel load_unitary(const std::filesystem::path& dir);

}  // namespace compcate::estimators
