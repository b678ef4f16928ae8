#pragma once

#include <cstddef>
#include <cstdint>

#include <nlohmann/json.hpp>

namespace compcate::learner {

struct TrainConfig {
  double learning_rate = 0.01;
  std::size_t batch_size = 64;
  std::size_t epochs = 40;
  std::size_t hidden_layers = 2;
  // 0 selects the "twice the input width" rule, never narrower than 8.
  std::size_t hidden_width = 0;
  std::uint64_t seed = 0;
  // Cosine decay from learning_rate to learning_rate * cosine_floor over the
  // run. Off unless a dataset needs it.
  bool cosine_schedule = false;
  double cosine_floor = 0.01;
  double adam_beta1 = 0.9;
  double adam_beta2 = 0.999;
  double adam_epsilon = 1e-8;

  // Throws ConfigError naming the offending field.
  void validate() const;
  double learning_rate_at(std::size_t epoch) const;
  std::size_t hidden_width_for(std::size_t input_size) const;
};

nlohmann::ordered_json to_json(const TrainConfig& config);
TrainConfig train_config_from_json(const nlohmann::json& j);

}  // namespace compcate::learner
