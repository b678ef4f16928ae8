#pragma once

#include <cstdint>
#include <filesystem>
#include <limits>
#include <span>
#include <vector>

#include <nlohmann/json.hpp>

#include "compcate/core/random.hpp"
#include "compcate/core/types.hpp"

namespace compcate::dgp {

enum class CovariateLawKind { kGaussian, kUniform };

// Gaussian: N(mean, scale^2). Uniform: U[mean - scale, mean + scale].
struct CovariateLaw {
  CovariateLawKind kind = CovariateLawKind::kGaussian;
  std::vector<double> mean;
  std::vector<double> scale;

  std::vector<double> sample(Rng& rng) const;
};

// Expected outcome under one arm:
//   intercept + sum_f sum_p coef[f][p-1] * s_f^p + parent_coef * mean(parents)
// where s_f = clamp((x_f - center_f) / scale_f, -clip, clip).
struct ArmFunction {
  double intercept = 0.0;
  std::vector<std::vector<double>> coef;  // [feature][power - 1]
  double parent_coef = 0.0;
};

struct ComponentClass {
  ClassId id;
  int arity = 1;
  CovariateLaw law;
  std::vector<double> center;
  std::vector<double> scale;
  double clip = 3.0;
  ArmFunction arm[2];
  double noise_sd[2] = {0.0, 0.0};

  double mean_outcome(std::span<const double> x, std::span<const double> parent_values,
                      int t) const;
};

// mean_outcome + noise_sd[t] * noise_draw.
double ground_truth_outcome(const ComponentClass& cls, std::span<const double> x,
                            std::span<const double> parent_values, int t, double noise_draw);

enum class StructureMode { kFixed, kVariable, kCombination };

struct DgpConfig {
  int num_classes = 10;
  int arity = 1;
  CompositionKind composition = CompositionKind::kHierarchical;
  int n_units = 1000;
  std::uint64_t seed = 0;

  StructureMode structure = StructureMode::kVariable;
  int min_depth = 4;
  int max_depth = 10;
  // Nodes added beside the spine of a binary tree, drawn uniformly in
  // [0, max_extra_nodes]. Ignored for sequential chains.
  int max_extra_nodes = 10;
  int max_in_degree = 2;

  // Combination mode: number of distinct classes per unit, uniform in range.
  int combo_min = 2;
  int combo_max = 10;

  int degree = 3;
  CovariateLawKind covariate_law = CovariateLawKind::kGaussian;
  double noise_sd_min = 0.1;
  double noise_sd_max = 0.1;

  void validate() const;
};

nlohmann::ordered_json to_json(const DgpConfig& config);
DgpConfig dgp_config_from_json(const nlohmann::json& j);

// Class functions drawn once per seed.
std::vector<ComponentClass> sample_classes(const DgpConfig& config);

// Tree over ids 0..n-1 with classes assigned. Throws ConfigError when the
// requested combination cannot fit in the node budget.
InteractionGraph sample_tree(const DgpConfig& config, Rng& rng);

// Evaluates both arms along the processing order with one noise draw per node
// shared across arms. Covariates must already be set.
void fill_potential_outcomes(StructuredUnit& unit, std::span<const ComponentClass> classes,
                             CompositionKind composition, Rng& noise_rng);

Dataset generate_experimental_dataset(const DgpConfig& config,
                                      std::span<const ComponentClass> classes);
Dataset generate_experimental_dataset(const DgpConfig& config);

// Noise-free unit effect implied by the class means.
double oracle_effect(const StructuredUnit& unit, std::span<const ComponentClass> classes,
                     CompositionKind composition);

nlohmann::ordered_json to_json(const ComponentClass& cls);
ComponentClass component_class_from_json(const nlohmann::json& j);

// "<stem>.classes.json": class functions plus the generating config.
void write_class_sidecar(const std::filesystem::path& jsonl, const DgpConfig& config,
                         std::span<const ComponentClass> classes);
std::vector<ComponentClass> read_class_sidecar(const std::filesystem::path& jsonl);

}  // namespace compcate::dgp
