#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <vector>

#include <nlohmann/json.hpp>

#include "compcate/learner/dense_net.hpp"
#include "compcate/learner/train_config.hpp"

namespace compcate::learner {

inline constexpr double kVarianceFloor = 1e-6;

enum class LossKind { kNll, kMse };

struct GaussianPrediction {
  double mean = 0.0;
  double variance = kVarianceFloor;
};

struct RegressorSpec {
  std::size_t input_size = 1;
  std::vector<std::size_t> hidden;  // empty: linear model
  bool variance_head = true;
  // The leading `projected_inputs` raw features pass through a learned affine
  // map to `projection_dim` features before reaching both heads.
  std::size_t projected_inputs = 0;
  std::size_t projection_dim = 0;

  std::size_t net_input_size() const {
    return input_size - projected_inputs + (projected_inputs > 0 ? projection_dim : 0);
  }
};

// Half log-likelihood form: 0.5*log(2*pi*variance) + (target-mean)^2/(2*variance).
// Throws NumericError for non-positive variance.
double nll_loss(double mean, double variance, double target);

// Mean and variance regressor with independent parameters for each head.
// Inputs are standardized with stored constants; outputs are mapped back as
//   mean     = out_shift + out_scale * f(x)
//   variance = out_scale^2 * softplus(g(x)) + kVarianceFloor
class GaussianRegressor {
 public:
  struct Workspace {
    std::vector<double> standardized;
    std::vector<double> net_input;
    Activations projection;
    Activations mean;
    Activations variance;
    std::vector<double> d_net_input;
    std::vector<double> d_standardized;
    std::vector<double> scratch;
    double raw_mean = 0.0;
    double raw_variance = 0.0;
  };

  GaussianRegressor() = default;
  explicit GaussianRegressor(RegressorSpec spec);

  const RegressorSpec& spec() const { return spec_; }
  std::size_t input_size() const { return spec_.input_size; }
  bool has_variance_head() const { return spec_.variance_head; }

  std::size_t parameter_count() const { return params_.size(); }
  std::span<double> parameters() { return params_; }
  std::span<const double> parameters() const { return params_; }

  void initialize(std::uint64_t seed);

  void set_input_normalization(std::vector<double> shift, std::vector<double> scale);
  void set_output_normalization(double shift, double scale);
  // Per-feature standardization and target standardization from data.
  // `inputs` is row-major with input_size columns.
  void fit_normalization(std::span<const double> inputs, std::span<const double> targets);
  const std::vector<double>& input_shift() const { return in_shift_; }
  const std::vector<double>& input_scale() const { return in_scale_; }
  double output_shift() const { return out_shift_; }
  double output_scale() const { return out_scale_; }

  GaussianPrediction predict(std::span<const double> input) const;
  GaussianPrediction predict(std::span<const double> input, Workspace& ws) const;

  // Forward pass of the mean head only; keeps the tape in `ws` for
  // backward_mean.
  double forward_mean(std::span<const double> input, Workspace& ws) const;
  // Back-propagates d(loss)/d(mean) through the mean path (projection
  // included). Accumulates into `grads`; writes d(loss)/d(raw input) into
  // `dinput` when it is non-empty.
  void backward_mean(Workspace& ws, double dmean, std::span<double> grads,
                     std::span<double> dinput) const;

  // Adds weight * d(loss)/d(params) for one sample and returns the loss.
  double accumulate_gradient(std::span<const double> input, double target, LossKind loss,
                             double weight, std::span<double> grads, Workspace& ws) const;

  nlohmann::ordered_json to_json() const;
  static GaussianRegressor from_json(const nlohmann::json& j);

  std::optional<TrainConfig> trained_with;

 private:
  std::span<double> projection_params(std::span<double> all) const;
  std::span<const double> projection_params(std::span<const double> all) const;
  std::span<const double> mean_params(std::span<const double> all) const;
  std::span<double> mean_params(std::span<double> all) const;
  std::span<const double> variance_params(std::span<const double> all) const;
  std::span<double> variance_params(std::span<double> all) const;

  void prepare_input(std::span<const double> input, Workspace& ws) const;
  void backward_net_input(Workspace& ws, std::span<double> grads, std::span<double> dinput) const;

  RegressorSpec spec_;
  DenseNet projection_;
  DenseNet mean_net_;
  DenseNet variance_net_;
  std::vector<double> params_;
  std::vector<double> in_shift_;
  std::vector<double> in_scale_;
  double out_shift_ = 0.0;
  double out_scale_ = 1.0;
};

// Mean loss over a batch.
double batch_loss(const GaussianRegressor& model, std::span<const double> inputs,
                  std::span<const double> targets, LossKind loss);

// Gradient of the mean batch loss with respect to every parameter.
std::vector<double> backprop_gradients(const GaussianRegressor& model,
                                       std::span<const double> inputs,
                                       std::span<const double> targets, LossKind loss);

}  // namespace compcate::learner
