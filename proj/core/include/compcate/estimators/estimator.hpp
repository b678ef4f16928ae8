#pragma once

#include <filesystem>
#include <span>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

#include "compcate/estimators/compositional.hpp"
#include "compcate/estimators/unitary_learners.hpp"

namespace compcate::estimators {

enum class EstimatorFamily { kCompositional, kUnitary };

struct EstimatorSpec {
  EstimatorFamily family = EstimatorFamily::kCompositional;
  AccessCase access = AccessCase::kXY;
  UnitaryVariant variant = UnitaryVariant::kS;

  // "compositional" or the unitary learner name.
  std::string name() const;
  // Access case for compositional estimators, "-" otherwise.
  std::string case_name() const;
};

// `name` is "compositional", "s_learner", "t_learner" or "x_learner"; the
// access case only applies to the compositional family.
EstimatorSpec parse_estimator(std::string_view name, std::string_view access = "xy");

class FittedEstimator {
 public:
  explicit FittedEstimator(CompositionalModel model) : model_(std::move(model)) {}
  explicit FittedEstimator(UnitaryModel model) : model_(std::move(model)) {}

  const CompositionalModel* compositional() const { return std::get_if<CompositionalModel>(&model_); }
  const UnitaryModel* unitary() const { return std::get_if<UnitaryModel>(&model_); }

  // Coverage is checked before any unit is processed.
  std::vector<CateEstimate> estimate(std::span<const StructuredUnit> units,
                                     const InferenceOptions& options = {}, int jobs = 1) const;

  nlohmann::ordered_json manifest() const;
  void save(const std::filesystem::path& dir) const;
  static FittedEstimator load(const std::filesystem::path& dir);

 private:
  std::variant<CompositionalModel, UnitaryModel> model_;
};

FittedEstimator fit_estimator(const EstimatorSpec& spec, const Dataset& factual,
                              const learner::TrainConfig& config,
                              const CompositionalOptions& options = {});

// unit_id,tau,y0,y1,mc_stderr with round-trip precision.
std::string estimates_csv(std::span<const CateEstimate> estimates);

}  // namespace compcate::estimators
