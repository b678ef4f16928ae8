#include "compcate/learner/regressor.hpp"

#include <cmath>
#include <numbers>

#include "compcate/core/error.hpp"

namespace compcate::learner {
namespace {

double softplus(double v) { return std::max(v, 0.0) + std::log1p(std::exp(-std::abs(v))); }
double sigmoid(double v) {
  if (v >= 0.0) return 1.0 / (1.0 + std::exp(-v));
  const double e = std::exp(v);
  return e / (1.0 + e);
}

std::vector<std::size_t> net_sizes(std::size_t in, const std::vector<std::size_t>& hidden,
                                   std::size_t out) {
  std::vector<std::size_t> sizes{in};
  sizes.insert(sizes.end(), hidden.begin(), hidden.end());
  sizes.push_back(out);
  return sizes;
}

}  // namespace

double nll_loss(double mean, double variance, double target) {
  if (!(variance > 0.0)) throw NumericError("nll_loss: variance must be positive");
  const double r = target - mean;
  return 0.5 * std::log(2.0 * std::numbers::pi * variance) + r * r / (2.0 * variance);
}

GaussianRegressor::GaussianRegressor(RegressorSpec spec) : spec_(std::move(spec)) {
  if (spec_.input_size == 0) throw ConfigError("regressor input size must be positive");
  if (spec_.projected_inputs > spec_.input_size) {
    throw ConfigError("projected inputs exceed the input size");
  }
  if (spec_.projected_inputs > 0 && spec_.projection_dim == 0) {
    throw ConfigError("projection_dim must be positive when inputs are projected");
  }
  std::size_t count = 0;
  if (spec_.projected_inputs > 0) {
    projection_ = DenseNet({spec_.projected_inputs, spec_.projection_dim});
    count += projection_.parameter_count();
  }
  mean_net_ = DenseNet(net_sizes(spec_.net_input_size(), spec_.hidden, 1));
  count += mean_net_.parameter_count();
  if (spec_.variance_head) {
    variance_net_ = DenseNet(net_sizes(spec_.net_input_size(), spec_.hidden, 1));
    count += variance_net_.parameter_count();
  }
  params_.assign(count, 0.0);
  in_shift_.assign(spec_.input_size, 0.0);
  in_scale_.assign(spec_.input_size, 1.0);
}

std::span<double> GaussianRegressor::projection_params(std::span<double> all) const {
  return all.subspan(0, spec_.projected_inputs > 0 ? projection_.parameter_count() : 0);
}
std::span<const double> GaussianRegressor::projection_params(std::span<const double> all) const {
  return all.subspan(0, spec_.projected_inputs > 0 ? projection_.parameter_count() : 0);
}
std::span<double> GaussianRegressor::mean_params(std::span<double> all) const {
  return all.subspan(projection_params(all).size(), mean_net_.parameter_count());
}
std::span<const double> GaussianRegressor::mean_params(std::span<const double> all) const {
  return all.subspan(projection_params(all).size(), mean_net_.parameter_count());
}
std::span<double> GaussianRegressor::variance_params(std::span<double> all) const {
  if (!spec_.variance_head) return {};
  return all.subspan(projection_params(all).size() + mean_net_.parameter_count());
}
std::span<const double> GaussianRegressor::variance_params(std::span<const double> all) const {
  if (!spec_.variance_head) return {};
  return all.subspan(projection_params(all).size() + mean_net_.parameter_count());
}

void GaussianRegressor::initialize(std::uint64_t seed) {
  Rng rng(seed);
  std::span<double> all(params_);
  if (spec_.projected_inputs > 0) projection_.initialize(projection_params(all), rng);
  mean_net_.initialize(mean_params(all), rng);
  if (spec_.variance_head) variance_net_.initialize(variance_params(all), rng);
}

void GaussianRegressor::set_input_normalization(std::vector<double> shift,
                                                std::vector<double> scale) {
  if (shift.size() != spec_.input_size || scale.size() != spec_.input_size) {
    throw DataError("input normalization arity mismatch");
  }
  for (double s : scale) {
    if (!(s > 0.0) || !std::isfinite(s)) throw NumericError("input scale must be positive");
  }
  in_shift_ = std::move(shift);
  in_scale_ = std::move(scale);
}

void GaussianRegressor::set_output_normalization(double shift, double scale) {
  if (!(scale > 0.0) || !std::isfinite(scale) || !std::isfinite(shift)) {
    throw NumericError("output scale must be positive and finite");
  }
  out_shift_ = shift;
  out_scale_ = scale;
}

void GaussianRegressor::fit_normalization(std::span<const double> inputs,
                                          std::span<const double> targets) {
  const std::size_t d = spec_.input_size;
  const std::size_t n = targets.size();
  if (n == 0 || inputs.size() != n * d) throw DataError("fit_normalization: shape mismatch");
  std::vector<double> mean(d, 0.0), var(d, 0.0);
  for (std::size_t r = 0; r < n; ++r) {
    for (std::size_t c = 0; c < d; ++c) mean[c] += inputs[r * d + c];
  }
  for (double& m : mean) m /= static_cast<double>(n);
  for (std::size_t r = 0; r < n; ++r) {
    for (std::size_t c = 0; c < d; ++c) {
      const double e = inputs[r * d + c] - mean[c];
      var[c] += e * e;
    }
  }
  std::vector<double> scale(d, 1.0);
  for (std::size_t c = 0; c < d; ++c) {
    const double sd = std::sqrt(var[c] / static_cast<double>(n));
    scale[c] = sd > 1e-12 ? sd : 1.0;
  }
  set_input_normalization(std::move(mean), std::move(scale));

  double ymean = 0.0;
  for (double y : targets) ymean += y;
  ymean /= static_cast<double>(n);
  double yvar = 0.0;
  for (double y : targets) yvar += (y - ymean) * (y - ymean);
  const double ysd = std::sqrt(yvar / static_cast<double>(n));
  set_output_normalization(ymean, ysd > 1e-12 ? ysd : 1.0);
}

void GaussianRegressor::prepare_input(std::span<const double> input, Workspace& ws) const {
  if (input.size() != spec_.input_size) {
    throw DataError("regressor expects " + std::to_string(spec_.input_size) + " inputs, got " +
                    std::to_string(input.size()));
  }
  ws.standardized.resize(spec_.input_size);
  for (std::size_t i = 0; i < spec_.input_size; ++i) {
    ws.standardized[i] = (input[i] - in_shift_[i]) / in_scale_[i];
  }
  if (spec_.projected_inputs == 0) {
    ws.net_input = ws.standardized;
    return;
  }
  std::span<const double> prefix(ws.standardized.data(), spec_.projected_inputs);
  projection_.forward(projection_params(std::span<const double>(params_)), prefix, ws.projection);
  const auto& projected = ws.projection.values.back();
  ws.net_input.assign(projected.begin(), projected.end());
  ws.net_input.insert(ws.net_input.end(), ws.standardized.begin() + spec_.projected_inputs,
                      ws.standardized.end());
}

GaussianPrediction GaussianRegressor::predict(std::span<const double> input) const {
  Workspace ws;
  return predict(input, ws);
}

GaussianPrediction GaussianRegressor::predict(std::span<const double> input,
                                              Workspace& ws) const {
  prepare_input(input, ws);
  std::span<const double> all(params_);
  mean_net_.forward(mean_params(all), ws.net_input, ws.mean);
  ws.raw_mean = ws.mean.values.back()[0];
  GaussianPrediction out;
  out.mean = out_shift_ + out_scale_ * ws.raw_mean;
  if (spec_.variance_head) {
    variance_net_.forward(variance_params(all), ws.net_input, ws.variance);
    ws.raw_variance = ws.variance.values.back()[0];
    out.variance = out_scale_ * out_scale_ * softplus(ws.raw_variance) + kVarianceFloor;
  } else {
    out.variance = kVarianceFloor;
  }
  return out;
}

double GaussianRegressor::forward_mean(std::span<const double> input, Workspace& ws) const {
  prepare_input(input, ws);
  mean_net_.forward(mean_params(std::span<const double>(params_)), ws.net_input, ws.mean);
  ws.raw_mean = ws.mean.values.back()[0];
  return out_shift_ + out_scale_ * ws.raw_mean;
}

void GaussianRegressor::backward_net_input(Workspace& ws, std::span<double> grads,
                                           std::span<double> dinput) const {
  const std::size_t p = spec_.projected_inputs;
  ws.d_standardized.assign(spec_.input_size, 0.0);
  if (p > 0) {
    const std::size_t k = spec_.projection_dim;
    std::span<const double> dproj(ws.d_net_input.data(), k);
    std::span<double> dprefix(ws.d_standardized.data(), p);
    projection_.backward(projection_params(std::span<const double>(params_)), ws.projection, dproj,
                         projection_params(grads), dprefix);
    for (std::size_t i = p; i < spec_.input_size; ++i) {
      ws.d_standardized[i] = ws.d_net_input[k + (i - p)];
    }
  } else {
    ws.d_standardized = ws.d_net_input;
  }
  if (!dinput.empty()) {
    for (std::size_t i = 0; i < spec_.input_size; ++i) {
      dinput[i] = ws.d_standardized[i] / in_scale_[i];
    }
  }
}

void GaussianRegressor::backward_mean(Workspace& ws, double dmean, std::span<double> grads,
                                      std::span<double> dinput) const {
  const double draw = dmean * out_scale_;
  ws.d_net_input.assign(spec_.net_input_size(), 0.0);
  mean_net_.backward(mean_params(std::span<const double>(params_)), ws.mean,
                     std::span<const double>(&draw, 1), mean_params(grads), ws.d_net_input);
  if (spec_.projected_inputs > 0 || !dinput.empty()) backward_net_input(ws, grads, dinput);
}

double GaussianRegressor::accumulate_gradient(std::span<const double> input, double target,
                                              LossKind loss, double weight,
                                              std::span<double> grads, Workspace& ws) const {
  const bool use_variance = loss == LossKind::kNll;
  if (use_variance && !spec_.variance_head) {
    throw ConfigError("NLL loss requires a variance head");
  }
  const GaussianPrediction pred = predict(input, ws);
  const bool need_input_grad = spec_.projected_inputs > 0;
  std::span<const double> all(params_);

  double value = 0.0;
  double d_mean_raw = 0.0;
  double d_var_raw = 0.0;
  if (use_variance) {
    value = nll_loss(pred.mean, pred.variance, target);
    const double r = target - pred.mean;
    const double dmean = -r / pred.variance;
    const double dvar = 0.5 / pred.variance - r * r / (2.0 * pred.variance * pred.variance);
    d_mean_raw = dmean * out_scale_;
    d_var_raw = dvar * out_scale_ * out_scale_ * sigmoid(ws.raw_variance);
  } else {
    const double r = pred.mean - target;
    value = r * r;
    d_mean_raw = 2.0 * r * out_scale_;
  }
  d_mean_raw *= weight;
  d_var_raw *= weight;

  if (need_input_grad) ws.d_net_input.assign(spec_.net_input_size(), 0.0);
  mean_net_.backward(mean_params(all), ws.mean, std::span<const double>(&d_mean_raw, 1),
                     mean_params(grads),
                     need_input_grad ? std::span<double>(ws.d_net_input) : std::span<double>());
  if (use_variance) {
    if (need_input_grad) ws.scratch.assign(spec_.net_input_size(), 0.0);
    variance_net_.backward(variance_params(all), ws.variance,
                           std::span<const double>(&d_var_raw, 1), variance_params(grads),
                           need_input_grad ? std::span<double>(ws.scratch) : std::span<double>());
    if (need_input_grad) {
      for (std::size_t i = 0; i < ws.scratch.size(); ++i) ws.d_net_input[i] += ws.scratch[i];
    }
  }
  if (need_input_grad) backward_net_input(ws, grads, {});
  return value;
}

nlohmann::ordered_json GaussianRegressor::to_json() const {
  nlohmann::ordered_json j = nlohmann::ordered_json::object();
  j["format"] = "compcate.regressor/1";
  nlohmann::ordered_json spec = nlohmann::ordered_json::object();
  spec["input_size"] = spec_.input_size;
  spec["hidden"] = spec_.hidden;
  spec["variance_head"] = spec_.variance_head;
  spec["projected_inputs"] = spec_.projected_inputs;
  spec["projection_dim"] = spec_.projection_dim;
  j["spec"] = std::move(spec);
  j["input_shift"] = in_shift_;
  j["input_scale"] = in_scale_;
  j["output_shift"] = out_shift_;
  j["output_scale"] = out_scale_;
  j["parameters"] = params_;
  if (trained_with) {
    j["seed"] = trained_with->seed;
    j["config"] = learner::to_json(*trained_with);
  }
  return j;
}

GaussianRegressor GaussianRegressor::from_json(const nlohmann::json& j) {
  try {
    if (j.at("format").get<std::string>() != "compcate.regressor/1") {
      throw DataError("unsupported regressor checkpoint format");
    }
    const auto& s = j.at("spec");
    RegressorSpec spec;
    spec.input_size = s.at("input_size").get<std::size_t>();
    spec.hidden = s.at("hidden").get<std::vector<std::size_t>>();
    spec.variance_head = s.at("variance_head").get<bool>();
    spec.projected_inputs = s.at("projected_inputs").get<std::size_t>();
    spec.projection_dim = s.at("projection_dim").get<std::size_t>();
    GaussianRegressor model(spec);
    auto params = j.at("parameters").get<std::vector<double>>();
    if (params.size() != model.params_.size()) {
      throw DataError("checkpoint parameter count does not match its architecture");
    }
    model.params_ = std::move(params);
    model.set_input_normalization(j.at("input_shift").get<std::vector<double>>(),
                                  j.at("input_scale").get<std::vector<double>>());
    model.set_output_normalization(j.at("output_shift").get<double>(),
                                   j.at("output_scale").get<double>());
    if (j.contains("config")) model.trained_with = train_config_from_json(j.at("config"));
    return model;
  } catch (const nlohmann::json::exception& e) {
    throw DataError(std::string("malformed regressor checkpoint: ") + e.what());
  }
}

double batch_loss(const GaussianRegressor& model, std::span<const double> inputs,
                  std::span<const double> targets, LossKind loss) {
  const std::size_t d = model.input_size();
  if (targets.empty() || inputs.size() != targets.size() * d) {
    throw DataError("batch_loss: shape mismatch");
  }
  GaussianRegressor::Workspace ws;
  double total = 0.0;
  for (std::size_t r = 0; r < targets.size(); ++r) {
    const auto pred = model.predict(inputs.subspan(r * d, d), ws);
    if (loss == LossKind::kNll) {
      total += nll_loss(pred.mean, pred.variance, targets[r]);
    } else {
      total += (pred.mean - targets[r]) * (pred.mean - targets[r]);
    }
  }
  return total / static_cast<double>(targets.size());
}

std::vector<double> backprop_gradients(const GaussianRegressor& model,
                                       std::span<const double> inputs,
                                       std::span<const double> targets, LossKind loss) {
  const std::size_t d = model.input_size();
  if (targets.empty()) throw DataError("backprop_gradients: empty batch");
  if (inputs.size() != targets.size() * d) throw DataError("backprop_gradients: shape mismatch");
  std::vector<double> grads(model.parameter_count(), 0.0);
  GaussianRegressor::Workspace ws;
  const double weight = 1.0 / static_cast<double>(targets.size());
  for (std::size_t r = 0; r < targets.size(); ++r) {
    model.accumulate_gradient(inputs.subspan(r * d, d), targets[r], loss, weight, grads, ws);
  }
  return grads;
}

}  // namespace compcate::learner
