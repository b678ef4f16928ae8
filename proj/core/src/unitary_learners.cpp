#include "compcate/estimators/unitary_learners.hpp"

#include <algorithm>
#include <cmath>

#include "compcate/core/error.hpp"
#include "compcate/core/io.hpp"
#include "compcate/core/random.hpp"

namespace compcate::estimators {

using learner::GaussianRegressor;
using learner::LossKind;
using learner::RegressionData;

std::string_view to_string(UnitaryVariant variant) {
  switch (variant) {
    case UnitaryVariant::kS: return "s_learner";
    case UnitaryVariant::kT: return "t_learner";
    case UnitaryVariant::kX: return "x_learner";
  }
  return "s_learner";
}

UnitaryVariant parse_unitary_variant(std::string_view name) {
  if (name == "s_learner") return UnitaryVariant::kS;
  if (name == "t_learner") return UnitaryVariant::kT;
  if (name == "x_learner") return UnitaryVariant::kX;
  throw ConfigError("unknown unitary learner '" + std::string(name) + "'", "estimator.name");
}

namespace {

double sigmoid(double z) {
  return z >= 0.0 ? 1.0 / (1.0 + std::exp(-z)) : std::exp(z) / (1.0 + std::exp(z));
}

}  // namespace

double LogisticModel::predict(std::span<const double> x) const {
  if (x.size() != weights.size()) throw DataError("logistic model: feature count mismatch");
  double z = bias;
  for (std::size_t i = 0; i < x.size(); ++i) z += weights[i] * (x[i] - shift[i]) / scale[i];
  return sigmoid(z);
}

nlohmann::ordered_json LogisticModel::to_json() const {
  nlohmann::ordered_json j = nlohmann::ordered_json::object();
  j["shift"] = shift;
  j["scale"] = scale;
  j["weights"] = weights;
  j["bias"] = bias;
  return j;
}

LogisticModel LogisticModel::from_json(const nlohmann::json& j) {
  LogisticModel m;
  m.shift = j.at("shift").get<std::vector<double>>();
  m.scale = j.at("scale").get<std::vector<double>>();
  m.weights = j.at("weights").get<std::vector<double>>();
  m.bias = j.at("bias").get<double>();
  if (m.shift.size() != m.weights.size() || m.scale.size() != m.weights.size()) {
    throw DataError("logistic model: inconsistent vector lengths");
  }
  return m;
}

LogisticModel fit_logistic(const RegressionData& data, std::size_t steps, double learning_rate,
                           double ridge) {
  const std::size_t n = data.size();
  const std::size_t d = data.input_size;
  if (n == 0) throw DataError("fit_logistic: empty dataset");
  for (double y : data.targets) {
    if (y != 0.0 && y != 1.0) throw DataError("fit_logistic: targets must be 0 or 1");
  }

  // Standardization constants come from a throwaway regressor's fit.
  GaussianRegressor stats(learner::RegressorSpec{d, {}, false, 0, 0});
  stats.fit_normalization(data.inputs, data.targets);
  LogisticModel m;
  m.shift = stats.input_shift();
  m.scale = stats.input_scale();
  m.weights.assign(d, 0.0);

  // params = [weights..., bias]
  std::vector<double> params(d + 1, 0.0), grads(d + 1);
  learner::TrainConfig adam_config;
  learner::Adam adam(d + 1, adam_config);
  std::vector<double> z(d);
  for (std::size_t step = 0; step < steps; ++step) {
    std::fill(grads.begin(), grads.end(), 0.0);
    for (std::size_t r = 0; r < n; ++r) {
      const auto x = data.row(r);
      double logit = params[d];
      for (std::size_t i = 0; i < d; ++i) {
        z[i] = (x[i] - m.shift[i]) / m.scale[i];
        logit += params[i] * z[i];
      }
      const double err = sigmoid(logit) - data.targets[r];
      for (std::size_t i = 0; i < d; ++i) grads[i] += err * z[i];
      grads[d] += err;
    }
    for (std::size_t i = 0; i <= d; ++i) grads[i] /= static_cast<double>(n);
    for (std::size_t i = 0; i < d; ++i) grads[i] += ridge * params[i];
    adam.step(params, grads, learning_rate);
  }
  std::copy(params.begin(), params.begin() + static_cast<std::ptrdiff_t>(d), m.weights.begin());
  m.bias = params[d];
  return m;
}

namespace {

struct ArmData {
  RegressionData arm[2];
};

void require_factual(const Dataset& factual) {
  if (factual.units.empty()) throw DataError("unitary fitting needs at least one unit");
  if (!factual.all_factual()) {
    throw DataError("unitary fitting reads factual data only; bias the dataset first");
  }
}

ArmData split_by_arm(const Dataset& factual, const UnitarySchema& schema) {
  ArmData out;
  for (const auto& unit : factual.units) {
    const int t = unit.treatment();
    out.arm[t].add(flatten_unitary(unit, schema), unit.observed_outcome());
  }
  return out;
}

learner::TrainConfig with_seed(const learner::TrainConfig& config, std::string_view stream) {
  learner::TrainConfig c = config;
  c.seed = derive_seed(config.seed, stream);
  return c;
}

double predict_mean(const GaussianRegressor& model, std::span<const double> x) {
  return model.predict(x).mean;
}

}  // namespace

UnitaryModel fit_unitary(const Dataset& factual, UnitaryVariant variant,
                         const UnitarySchema& schema, const learner::TrainConfig& config) {
  if (variant == UnitaryVariant::kX) return fit_xlearner(factual, schema, config);
  config.validate();
  require_factual(factual);
  UnitaryModel model;
  model.schema = schema;
  model.variant = variant;
  model.train_config = config;

  if (variant == UnitaryVariant::kS) {
    RegressionData data;
    for (const auto& unit : factual.units) {
      auto x = flatten_unitary(unit, schema);
      x.push_back(static_cast<double>(unit.treatment()));
      data.add(x, unit.observed_outcome());
    }
    model.outcome.push_back(learner::train_regressor(data, with_seed(config, "s"), LossKind::kMse));
    return model;
  }

  const ArmData arms = split_by_arm(factual, schema);
  for (int t : {0, 1}) {
    if (arms.arm[t].size() == 0) {
      throw DataError("T-learner: no units in arm " + std::to_string(t));
    }
  }
  model.outcome.push_back(learner::train_regressor(arms.arm[0], with_seed(config, "mu0"), LossKind::kMse));
  model.outcome.push_back(learner::train_regressor(arms.arm[1], with_seed(config, "mu1"), LossKind::kMse));
  return model;
}

UnitaryModel fit_xlearner(const Dataset& factual, const UnitarySchema& schema,
                          const learner::TrainConfig& config) {
  config.validate();
  require_factual(factual);
  const ArmData arms = split_by_arm(factual, schema);
  if (arms.arm[0].size() == 0 || arms.arm[1].size() == 0) {
    throw DataError("X-learner: propensity is degenerate, every unit is in one arm");
  }
  UnitaryModel model;
  model.schema = schema;
  model.variant = UnitaryVariant::kX;
  model.train_config = config;
  model.outcome.push_back(learner::train_regressor(arms.arm[0], with_seed(config, "mu0"), LossKind::kMse));
  model.outcome.push_back(learner::train_regressor(arms.arm[1], with_seed(config, "mu1"), LossKind::kMse));

  // Imputed effects: treated units against the control model, control units
  // against the treated model.
  RegressionData imputed[2];
  for (std::size_t r = 0; r < arms.arm[1].size(); ++r) {
    const auto x = arms.arm[1].row(r);
    imputed[1].add(x, arms.arm[1].targets[r] - predict_mean(model.outcome[0], x));
  }
  for (std::size_t r = 0; r < arms.arm[0].size(); ++r) {
    const auto x = arms.arm[0].row(r);
    imputed[0].add(x, predict_mean(model.outcome[1], x) - arms.arm[0].targets[r]);
  }
  model.effect.push_back(learner::train_regressor(imputed[0], with_seed(config, "tau0"), LossKind::kMse));
  model.effect.push_back(learner::train_regressor(imputed[1], with_seed(config, "tau1"), LossKind::kMse));

  RegressionData assignment;
  for (int t : {0, 1}) {
    for (std::size_t r = 0; r < arms.arm[t].size(); ++r) {
      assignment.add(arms.arm[t].row(r), static_cast<double>(t));
    }
  }
  model.propensity = fit_logistic(assignment);
  return model;
}

CateEstimate infer_cate_unitary(const UnitaryModel& model, const StructuredUnit& unit) {
  CateEstimate est;
  est.unit_id = unit.unit_id;
  auto x = flatten_unitary(unit, model.schema);
  switch (model.variant) {
    case UnitaryVariant::kS: {
      x.push_back(0.0);
      est.y0 = predict_mean(model.outcome.at(0), x);
      x.back() = 1.0;
      est.y1 = predict_mean(model.outcome.at(0), x);
      est.tau = est.y1 - est.y0;
      break;
    }
    case UnitaryVariant::kT: {
      est.y0 = predict_mean(model.outcome.at(0), x);
      est.y1 = predict_mean(model.outcome.at(1), x);
      est.tau = est.y1 - est.y0;
      break;
    }
    case UnitaryVariant::kX: {
      est.y0 = predict_mean(model.outcome.at(0), x);
      est.y1 = predict_mean(model.outcome.at(1), x);
      const double e = model.fixed_propensity ? *model.fixed_propensity
                                              : model.propensity.value().predict(x);
      est.tau = e * predict_mean(model.effect.at(0), x) +
                (1.0 - e) * predict_mean(model.effect.at(1), x);
      break;
    }
  }
  if (!std::isfinite(est.tau)) throw NumericError("non-finite CATE estimate");
  return est;
}

nlohmann::ordered_json manifest_json(const UnitaryModel& model) {
  nlohmann::ordered_json j = nlohmann::ordered_json::object();
  j["format"] = "compcate.model/1";
  j["family"] = "unitary";
  j["variant"] = std::string(to_string(model.variant));
  j["schema"] = {{"num_classes", model.schema.num_classes},
                 {"class_arity", model.schema.class_arity},
                 {"max_depth", model.schema.max_depth},
                 {"fingerprint", model.schema.fingerprint()}};
  j["train"] = learner::to_json(model.train_config);
  nlohmann::ordered_json files = nlohmann::ordered_json::object();
  for (std::size_t i = 0; i < model.outcome.size(); ++i) {
    files["outcome_" + std::to_string(i)] = "outcome_" + std::to_string(i) + ".json";
  }
  for (std::size_t i = 0; i < model.effect.size(); ++i) {
    files["effect_" + std::to_string(i)] = "effect_" + std::to_string(i) + ".json";
  }
  if (model.propensity) files["propensity"] = "propensity.json";
  j["files"] = std::move(files);
  if (model.fixed_propensity) j["fixed_propensity"] = *model.fixed_propensity;
  return j;
}

void save_unitary(const UnitaryModel& model, const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  for (std::size_t i = 0; i < model.outcome.size(); ++i) {
    write_text(dir / ("outcome_" + std::to_string(i) + ".json"), model.outcome[i].to_json().dump() + "\n");
  }
  for (std::size_t i = 0; i < model.effect.size(); ++i) {
    write_text(dir / ("effect_" + std::to_string(i) + ".json"), model.effect[i].to_json().dump() + "\n");
  }
  if (model.propensity) write_text(dir / "propensity.json", model.propensity->to_json().dump() + "\n");
  write_text(dir / "manifest.json", manifest_json(model).dump(2) + "\n");
}

UnitaryModel load_unitary(const std::filesystem::path& dir) {
  try {
    const auto manifest = nlohmann::json::parse(read_text(dir / "manifest.json"));
    if (manifest.at("family").get<std::string>() != "unitary") {
      throw DataError(dir.string() + " does not hold a unitary model");
    }
    UnitaryModel model;
    model.variant = parse_unitary_variant(manifest.at("variant").get<std::string>());
    const auto& schema = manifest.at("schema");
    model.schema.num_classes = schema.at("num_classes").get<int>();
    model.schema.class_arity = schema.at("class_arity").get<std::vector<int>>();
    model.schema.max_depth = schema.at("max_depth").get<int>();
    if (model.schema.fingerprint() != schema.at("fingerprint").get<std::string>()) {
      throw DataError(dir.string() + ": schema fingerprint mismatch");
    }
    model.train_config = learner::train_config_from_json(manifest.at("train"));
    const auto& files = manifest.at("files");
    auto load = [&](const std::string& key) {
      return nlohmann::json::parse(read_text(dir / files.at(key).get<std::string>()));
    };
    for (std::size_t i = 0; files.contains("outcome_" + std::to_string(i)); ++i) {
      model.outcome.push_back(GaussianRegressor::from_json(load("outcome_" + std::to_string(i))));
    }
    for (std::size_t i = 0; files.contains("effect_" + std::to_string(i)); ++i) {
      model.effect.push_back(GaussianRegressor::from_json(load("effect_" + std::to_string(i))));
    }
    if (files.contains("propensity")) model.propensity = LogisticModel::from_json(load("propensity"));
    if (manifest.contains("fixed_propensity")) {
      model.fixed_propensity = manifest.at("fixed_propensity").get<double>();
    }
    const std::size_t expected_outcomes = model.variant == UnitaryVariant::kS ? 1 : 2;
    if (model.outcome.size() != expected_outcomes ||
        (model.variant == UnitaryVariant::kX && (model.effect.size() != 2 || !model.propensity))) {
      throw DataError(dir.string() + ": sub-model set does not match variant");
    }
    return model;
  } catch (const nlohmann::json::exception& e) {
    throw DataError(dir.string() + ": malformed model bundle: " + e.what());
  }
}

}  // namespace compcate::estimators
