#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

#include "compcate/core/types.hpp"
#include "compcate/core/unitary.hpp"
#include "compcate/learner/regressor.hpp"
#include "compcate/learner/train_config.hpp"

namespace compcate::estimators {

// Which component-level columns the compositional estimator may read.
enum class AccessCase {
  kXY,      // component covariates and outcomes
  kYOnly,   // component outcomes; covariates reach a component through a learned map
  kXOnly,   // component covariates; only the unit outcome supervises training
  kNeither  // structure plus unit covariates only
};

std::string_view to_string(AccessCase access);
AccessCase parse_access_case(std::string_view name);

constexpr bool uses_component_outcomes(AccessCase a) {
  return a == AccessCase::kXY || a == AccessCase::kYOnly;
}
constexpr bool uses_component_covariates(AccessCase a) {
  return a == AccessCase::kXY || a == AccessCase::kXOnly;
}

struct CateEstimate {
  std::int64_t unit_id = 0;
  double tau = 0.0;
  double y0 = 0.0;
  double y1 = 0.0;
  std::optional<double> mc_stderr;
};

// Everything a component model may condition on for one node.
struct ComponentQuery {
  ClassId cls;
  std::span<const double> covariates;
  // Flattened unit representation; empty unless the model asked for it.
  std::span<const double> unit_features;
  // Outcomes of the node's parents, ascending parent id.
  std::span<const double> parent_values;
  int t = 0;
};

// Per-class outcome distribution used by the inference routines. Trained
// models and oracle plug-ins both implement it.
class ComponentOutcomeModel {
 public:
  virtual ~ComponentOutcomeModel() = default;
  virtual learner::GaussianPrediction predict(const ComponentQuery& query) const = 0;
  virtual bool covers(ClassId cls) const = 0;
  virtual CompositionKind composition() const = 0;
  // False when every variance is zero, so one path determines the estimate.
  virtual bool stochastic() const = 0;
  virtual bool needs_unit_features() const { return false; }
  virtual std::vector<double> unit_features(const StructuredUnit&) const { return {}; }
};

// Throws DataError naming classes used by `units` that the model lacks.
void check_coverage(const ComponentOutcomeModel& model, std::span<const StructuredUnit> units);

struct CompositionalOptions {
  // Width of the learned covariate map when component covariates are hidden.
  std::size_t representation_dim = 4;
  // Worker threads for per-class fitting.
  int jobs = 1;
};

class CompositionalModel final : public ComponentOutcomeModel {
 public:
  CompositionalModel() = default;
  CompositionalModel(AccessCase access, CompositionKind composition, const DatasetInfo& info,
                     std::size_t representation_dim);

  AccessCase access() const { return access_; }
  CompositionKind composition() const override { return composition_; }
  const UnitarySchema& schema() const { return schema_; }
  int max_in_degree() const { return max_in_degree_; }
  std::size_t representation_dim() const { return representation_dim_; }

  // Component input for the model's access case. Hierarchical and sequential
  // layouts are [features, parent slots, parent mask, t] with one slot per
  // allowed parent; parallel layouts drop the parent block.
  std::vector<double> component_input(const ComponentQuery& query) const;
  std::size_t feature_width(ClassId cls) const;
  std::size_t input_width(ClassId cls) const;

  bool covers(ClassId cls) const override;
  bool stochastic() const override;
  bool needs_unit_features() const override { return !uses_component_covariates(access_); }
  std::vector<double> unit_features(const StructuredUnit& unit) const override;
  learner::GaussianPrediction predict(const ComponentQuery& query) const override;

  const learner::GaussianRegressor& regressor(ClassId cls) const;
  learner::GaussianRegressor& regressor(ClassId cls);
  void set_regressor(ClassId cls, learner::GaussianRegressor model);
  std::vector<ClassId> trained_classes() const;

  // Regressor settings used for every class.
  learner::TrainConfig train_config;

 private:
  AccessCase access_ = AccessCase::kXY;
  CompositionKind composition_ = CompositionKind::kHierarchical;
  UnitarySchema schema_;
  int max_in_degree_ = 2;
  std::size_t representation_dim_ = 4;
  std::vector<std::optional<learner::GaussianRegressor>> per_class_;
};

// Cases XY and Y_only pool every instance of class o across units and fit
// each class independently (NLL for hierarchical/sequential, MSE for
// parallel). Cases X_only and neither train all classes jointly on the unit
// outcome through the composed mean path. Requires a factual dataset.
CompositionalModel fit_compositional(const Dataset& factual, AccessCase access,
                                     const learner::TrainConfig& config,
                                     const CompositionalOptions& options = {});

// Number of pooled training instances per class id.
std::vector<std::size_t> pooled_instance_counts(const Dataset& dataset);

// Mean squared unit-level error of the composed mean path over `units`, with
// its gradient per class (each vector sized to that class's parameters, empty
// for classes without a regressor).
double composed_loss_gradient(const CompositionalModel& model,
                              std::span<const StructuredUnit* const> units,
                              std::vector<std::vector<double>>& grads);

// Composed mean prediction for one arm (no sampling).
double composed_mean(const ComponentOutcomeModel& model, const StructuredUnit& unit, int t);

struct InferenceOptions {
  int mc_samples = 1000;
  std::uint64_t seed = 0;
  // Share each path's normal draws between the two arms.
  bool common_random_numbers = false;
};

// Monte-Carlo marginalization over intermediate outcomes along the
// processing order; the sink's predicted mean is averaged over paths.
CateEstimate infer_cate_hierarchical(const ComponentOutcomeModel& model, const StructuredUnit& unit,
                                     const InferenceOptions& options = {});

// Sum of per-instance effects.
CateEstimate infer_cate_parallel(const ComponentOutcomeModel& model, const StructuredUnit& unit);

// Dispatches on the model's composition.
CateEstimate infer_cate(const ComponentOutcomeModel& model, const StructuredUnit& unit,
                        const InferenceOptions& options = {});

nlohmann::ordered_json manifest_json(const CompositionalModel& model);

// Directory holding manifest.json plus one checkpoint per class.
void save_compositional(const CompositionalModel& model, const std::filesystem::path& dir);
CompositionalModel load_compositional(const std::filesystem::path& dir);

}  // namespace compcate::estimators
