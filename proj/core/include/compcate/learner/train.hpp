#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "compcate/learner/regressor.hpp"
#include "compcate/learner/train_config.hpp"

namespace compcate::learner {

class Adam {
 public:
  Adam() = default;
  Adam(std::size_t parameter_count, const TrainConfig& config);

  void step(std::span<double> params, std::span<const double> grads, double learning_rate);

 private:
  std::vector<double> m_;
  std::vector<double> v_;
  double beta1_ = 0.9;
  double beta2_ = 0.999;
  double epsilon_ = 1e-8;
  std::size_t t_ = 0;
};

// Row-major design matrix plus targets.
struct RegressionData {
  std::size_t input_size = 0;
  std::vector<double> inputs;
  std::vector<double> targets;

  std::size_t size() const { return targets.size(); }
  std::span<const double> row(std::size_t r) const {
    return std::span<const double>(inputs).subspan(r * input_size, input_size);
  }
  void add(std::span<const double> x, double y);
};

struct ArchitectureOptions {
  std::size_t projected_inputs = 0;
  std::size_t projection_dim = 0;
  // Overrides TrainConfig::hidden_width when non-zero.
  std::size_t hidden_width = 0;
};

RegressorSpec make_spec(std::size_t input_size, const TrainConfig& config, LossKind loss,
                        const ArchitectureOptions& arch = {});

// Mini-batch Adam on the given loss. Fully determined by config.seed. Throws
// NumericError when the loss becomes non-finite.
GaussianRegressor train_regressor(const RegressionData& data, const TrainConfig& config,
                                  LossKind loss, const ArchitectureOptions& arch = {},
                                  std::vector<double>* epoch_losses = nullptr);

}  // namespace compcate::learner
