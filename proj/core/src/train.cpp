#include "compcate/learner/train.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <numeric>

#include "compcate/core/error.hpp"
#include "compcate/core/random.hpp"

namespace compcate::learner {

void TrainConfig::validate() const {
  if (!(learning_rate > 0.0) || !std::isfinite(learning_rate)) {
    throw ConfigError("learning rate must be positive", "train.learning_rate");
  }
  if (epochs < 1) throw ConfigError("epochs must be at least 1", "train.epochs");
  if (batch_size < 1) throw ConfigError("batch size must be at least 1", "train.batch_size");
  if (cosine_floor < 0.0 || cosine_floor > 1.0) {
    throw ConfigError("cosine floor must lie in [0, 1]", "train.cosine_floor");
  }
  if (!(adam_beta1 >= 0.0 && adam_beta1 < 1.0) || !(adam_beta2 >= 0.0 && adam_beta2 < 1.0)) {
    throw ConfigError("Adam moment constants must lie in [0, 1)", "train.adam_beta1");
  }
}

double TrainConfig::learning_rate_at(std::size_t epoch) const {
  if (!cosine_schedule || epochs <= 1) return learning_rate;
  const double progress = static_cast<double>(epoch) / static_cast<double>(epochs - 1);
  const double floor = learning_rate * cosine_floor;
  return floor + 0.5 * (learning_rate - floor) * (1.0 + std::cos(std::numbers::pi * progress));
}

std::size_t TrainConfig::hidden_width_for(std::size_t input_size) const {
  return hidden_width > 0 ? hidden_width : std::max<std::size_t>(2 * input_size, 8);
}

nlohmann::ordered_json to_json(const TrainConfig& c) {
  nlohmann::ordered_json j = nlohmann::ordered_json::object();
  j["learning_rate"] = c.learning_rate;
  j["batch_size"] = c.batch_size;
  j["epochs"] = c.epochs;
  j["hidden_layers"] = c.hidden_layers;
  j["hidden_width"] = c.hidden_width;
  j["seed"] = c.seed;
  j["cosine_schedule"] = c.cosine_schedule;
  j["cosine_floor"] = c.cosine_floor;
  j["adam_beta1"] = c.adam_beta1;
  j["adam_beta2"] = c.adam_beta2;
  j["adam_epsilon"] = c.adam_epsilon;
  return j;
}

TrainConfig train_config_from_json(const nlohmann::json& j) {
  TrainConfig c;
  c.learning_rate = j.value("learning_rate", c.learning_rate);
  c.batch_size = j.value("batch_size", c.batch_size);
  c.epochs = j.value("epochs", c.epochs);
  c.hidden_layers = j.value("hidden_layers", c.hidden_layers);
  c.hidden_width = j.value("hidden_width", c.hidden_width);
  c.seed = j.value("seed", c.seed);
  c.cosine_schedule = j.value("cosine_schedule", c.cosine_schedule);
  c.cosine_floor = j.value("cosine_floor", c.cosine_floor);
  c.adam_beta1 = j.value("adam_beta1", c.adam_beta1);
  c.adam_beta2 = j.value("adam_beta2", c.adam_beta2);
  c.adam_epsilon = j.value("adam_epsilon", c.adam_epsilon);
  return c;
}

Adam::Adam(std::size_t parameter_count, const TrainConfig& config)
    : m_(parameter_count, 0.0),
      v_(parameter_count, 0.0),
      beta1_(config.adam_beta1),
      beta2_(config.adam_beta2),
      epsilon_(config.adam_epsilon) {}

void Adam::step(std::span<double> params, std::span<const double> grads, double learning_rate) {
  ++t_;
  const double c1 = 1.0 - std::pow(beta1_, static_cast<double>(t_));
  const double c2 = 1.0 - std::pow(beta2_, static_cast<double>(t_));
  for (std::size_t i = 0; i < params.size(); ++i) {
    const double g = grads[i];
    m_[i] = beta1_ * m_[i] + (1.0 - beta1_) * g;
    v_[i] = beta2_ * v_[i] + (1.0 - beta2_) * g * g;
    params[i] -= learning_rate * (m_[i] / c1) / (std::sqrt(v_[i] / c2) + epsilon_);
  }
}

void RegressionData::add(std::span<const double> x, double y) {
  if (input_size == 0) input_size = x.size();
  if (x.size() != input_size) throw DataError("RegressionData: inconsistent input arity");
  inputs.insert(inputs.end(), x.begin(), x.end());
  targets.push_back(y);
}

RegressorSpec make_spec(std::size_t input_size, const TrainConfig& config, LossKind loss,
                        const ArchitectureOptions& arch) {
  RegressorSpec spec;
  spec.input_size = input_size;
  spec.variance_head = loss == LossKind::kNll;
  spec.projected_inputs = arch.projected_inputs;
  spec.projection_dim = arch.projection_dim;
  const std::size_t width =
      arch.hidden_width > 0 ? arch.hidden_width : config.hidden_width_for(spec.net_input_size());
  spec.hidden.assign(config.hidden_layers, width);
  return spec;
}

GaussianRegressor train_regressor(const RegressionData& data, const TrainConfig& config,
                                  LossKind loss, const ArchitectureOptions& arch,
                                  std::vector<double>* epoch_losses) {
  config.validate();
  if (data.size() == 0) throw DataError("train_regressor: empty dataset");

  GaussianRegressor model(make_spec(data.input_size, config, loss, arch));
  model.fit_normalization(data.inputs, data.targets);
  model.initialize(derive_seed(config.seed, "init"));
  model.trained_with = config;

  Rng shuffle_rng(derive_seed(config.seed, "shuffle"));
  Adam adam(model.parameter_count(), config);
  std::vector<double> grads(model.parameter_count());
  std::vector<std::size_t> order(data.size());
  std::iota(order.begin(), order.end(), 0);
  GaussianRegressor::Workspace ws;

  for (std::size_t epoch = 0; epoch < config.epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), shuffle_rng);
    const double lr = config.learning_rate_at(epoch);
    double epoch_loss = 0.0;
    for (std::size_t start = 0; start < order.size(); start += config.batch_size) {
      const std::size_t end = std::min(order.size(), start + config.batch_size);
      const double weight = 1.0 / static_cast<double>(end - start);
      std::fill(grads.begin(), grads.end(), 0.0);
      for (std::size_t k = start; k < end; ++k) {
        const std::size_t r = order[k];
        epoch_loss += model.accumulate_gradient(data.row(r), data.targets[r], loss, weight, grads, ws);
      }
      adam.step(model.parameters(), grads, lr);
    }
    epoch_loss /= static_cast<double>(order.size());
    if (!std::isfinite(epoch_loss)) {
      throw NumericError("training loss became non-finite at epoch " + std::to_string(epoch));
    }
    if (epoch_losses) epoch_losses->push_back(epoch_loss);
  }
  return model;
}

}  // namespace compcate::learner
