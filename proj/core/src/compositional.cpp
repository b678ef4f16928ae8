#include "compcate/estimators/compositional.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <set>

#include "compcate/core/error.hpp"
#include "compcate/core/io.hpp"
#include "compcate/core/parallel.hpp"
#include "compcate/core/random.hpp"
#include "compcate/learner/train.hpp"

namespace compcate::estimators {

using learner::GaussianPrediction;
using learner::GaussianRegressor;
using learner::LossKind;

std::string_view to_string(AccessCase access) {
  switch (access) {
    case AccessCase::kXY: return "xy";
    case AccessCase::kYOnly: return "y_only";
    case AccessCase::kXOnly: return "x_only";
    case AccessCase::kNeither: return "neither";
  }
  return "xy";
}

AccessCase parse_access_case(std::string_view name) {
  if (name == "xy") return AccessCase::kXY;
  if (name == "y_only") return AccessCase::kYOnly;
  if (name == "x_only") return AccessCase::kXOnly;
  if (name == "neither") return AccessCase::kNeither;
  throw ConfigError("unknown access case '" + std::string(name) + "'", "estimator.case");
}

void check_coverage(const ComponentOutcomeModel& model, std::span<const StructuredUnit> units) {
  std::set<int> missing;
  for (const auto& u : units) {
    for (const auto& node : u.graph.nodes()) {
      if (!model.covers(node.cls)) missing.insert(node.cls.value);
    }
  }
  if (missing.empty()) return;
  std::string list;
  for (int c : missing) list += (list.empty() ? "" : ",") + std::to_string(c);
  throw DataError("model has no component model for class(es) " + list +
                  " seen at inference; they were absent from training");
}

CompositionalModel::CompositionalModel(AccessCase access, CompositionKind composition,
                                       const DatasetInfo& info, std::size_t representation_dim)
    : access_(access),
      composition_(composition),
      schema_(UnitarySchema::from(info)),
      max_in_degree_(composition == CompositionKind::kParallel ? 0 : info.max_in_degree),
      representation_dim_(representation_dim),
      per_class_(static_cast<std::size_t>(info.num_classes)) {
  if (!uses_component_covariates(access) && representation_dim == 0) {
    throw ConfigError("representation width must be at least 1", "estimator.representation_dim");
  }
}

std::size_t CompositionalModel::feature_width(ClassId cls) const {
  if (!uses_component_covariates(access_)) return schema_.feature_count();
  return static_cast<std::size_t>(schema_.class_arity.at(static_cast<std::size_t>(cls.value)));
}

std::size_t CompositionalModel::input_width(ClassId cls) const {
  return feature_width(cls) + 2 * static_cast<std::size_t>(max_in_degree_) + 1;
}

std::vector<double> CompositionalModel::component_input(const ComponentQuery& q) const {
  const auto features = uses_component_covariates(access_) ? q.covariates : q.unit_features;
  if (features.size() != feature_width(q.cls)) {
    throw DataError("component input has " + std::to_string(features.size()) +
                    " features, class " + std::to_string(q.cls.value) + " expects " +
                    std::to_string(feature_width(q.cls)));
  }
  const auto slots = static_cast<std::size_t>(max_in_degree_);
  if (q.parent_values.size() > slots) {
    throw DataError("component has " + std::to_string(q.parent_values.size()) +
                    " parents, model allows " + std::to_string(slots));
  }
  std::vector<double> input(features.begin(), features.end());
  input.resize(features.size() + 2 * slots + 1, 0.0);
  for (std::size_t k = 0; k < q.parent_values.size(); ++k) {
    input[features.size() + k] = q.parent_values[k];
    input[features.size() + slots + k] = 1.0;
  }
  input.back() = static_cast<double>(q.t);
  return input;
}

bool CompositionalModel::covers(ClassId cls) const {
  return cls.value >= 0 && static_cast<std::size_t>(cls.value) < per_class_.size() &&
         per_class_[static_cast<std::size_t>(cls.value)].has_value();
}

bool CompositionalModel::stochastic() const {
  if (composition_ == CompositionKind::kParallel) return false;
  return std::any_of(per_class_.begin(), per_class_.end(), [](const auto& m) {
    return m.has_value() && m->has_variance_head();
  });
}

std::vector<double> CompositionalModel::unit_features(const StructuredUnit& unit) const {
  return flatten_unitary(unit, schema_);
}

GaussianPrediction CompositionalModel::predict(const ComponentQuery& q) const {
  thread_local GaussianRegressor::Workspace ws;
  GaussianPrediction pred = regressor(q.cls).predict(component_input(q), ws);
  if (!regressor(q.cls).has_variance_head()) pred.variance = 0.0;
  return pred;
}

const GaussianRegressor& CompositionalModel::regressor(ClassId cls) const {
  if (!covers(cls)) throw DataError("no component model for class " + std::to_string(cls.value));
  return *per_class_[static_cast<std::size_t>(cls.value)];
}

GaussianRegressor& CompositionalModel::regressor(ClassId cls) {
  if (!covers(cls)) throw DataError("no component model for class " + std::to_string(cls.value));
  return *per_class_[static_cast<std::size_t>(cls.value)];
}

void CompositionalModel::set_regressor(ClassId cls, GaussianRegressor model) {
  if (cls.value < 0 || static_cast<std::size_t>(cls.value) >= per_class_.size()) {
    throw DataError("class id " + std::to_string(cls.value) + " outside the registry");
  }
  if (model.input_size() != input_width(cls)) {
    throw DataError("regressor input width does not match class " + std::to_string(cls.value));
  }
  per_class_[static_cast<std::size_t>(cls.value)] = std::move(model);
}

std::vector<ClassId> CompositionalModel::trained_classes() const {
  std::vector<ClassId> out;
  for (std::size_t c = 0; c < per_class_.size(); ++c) {
    if (per_class_[c]) out.push_back(ClassId{static_cast<int>(c)});
  }
  return out;
}

std::vector<std::size_t> pooled_instance_counts(const Dataset& dataset) {
  std::vector<std::size_t> counts(static_cast<std::size_t>(dataset.info.num_classes), 0);
  for (const auto& u : dataset.units) {
    for (const auto& node : u.graph.nodes()) ++counts.at(static_cast<std::size_t>(node.cls.value));
  }
  return counts;
}

namespace {

std::vector<double> parent_values_of(const StructuredUnit& unit, std::size_t node,
                                     std::span<const double> values) {
  std::vector<double> out;
  for (std::size_t p : unit.graph.parents(node)) out.push_back(values[p]);
  return out;
}

// Instances are pooled by class: every occurrence of a class in any unit is
// one training sample for that class's regressor.
void fit_independent(CompositionalModel& model, const Dataset& factual,
                     const learner::TrainConfig& config, const CompositionalOptions& options) {
  const auto k = static_cast<std::size_t>(factual.info.num_classes);
  std::vector<learner::RegressionData> data(k);
  std::vector<double> observed;
  for (const auto& unit : factual.units) {
    const auto features = model.unit_features(unit);
    const int t = unit.treatment();
    observed.resize(unit.graph.size());
    for (std::size_t i = 0; i < unit.graph.size(); ++i) {
      observed[i] = factual_value(unit.component_outcomes[i]);
    }
    for (std::size_t i = 0; i < unit.graph.size(); ++i) {
      const ClassId cls = unit.graph.node(i).cls;
      const auto parents = model.composition() == CompositionKind::kParallel
                               ? std::vector<double>{}
                               : parent_values_of(unit, i, observed);
      const ComponentQuery q{cls, unit.covariates[i], features, parents, t};
      data.at(static_cast<std::size_t>(cls.value)).add(model.component_input(q), observed[i]);
    }
  }

  const LossKind loss =
      model.composition() == CompositionKind::kParallel ? LossKind::kMse : LossKind::kNll;
  learner::ArchitectureOptions arch;
  if (!uses_component_covariates(model.access())) {
    arch.projected_inputs = model.schema().feature_count();
    arch.projection_dim = model.representation_dim();
  }
  std::vector<std::optional<GaussianRegressor>> fitted(k);
  parallel_for(k, options.jobs, [&](std::size_t c) {
    if (data[c].size() == 0) return;
    learner::TrainConfig cfg = config;
    cfg.seed = derive_seed(config.seed, "class", c);
    fitted[c] = learner::train_regressor(data[c], cfg, loss, arch);
  });
  for (std::size_t c = 0; c < k; ++c) {
    if (fitted[c]) model.set_regressor(ClassId{static_cast<int>(c)}, std::move(*fitted[c]));
  }
}

// Standardization constants for joint training. Parent slots carry predicted
// intermediate outcomes, so they borrow the unit outcome's scale.
void init_joint(CompositionalModel& model, const Dataset& factual,
                const learner::TrainConfig& config) {
  const auto k = static_cast<std::size_t>(factual.info.num_classes);
  const bool parallel = model.composition() == CompositionKind::kParallel;
  std::vector<learner::RegressionData> rows(k);
  double ysum = 0.0, ysq = 0.0, nodes = 0.0;
  for (const auto& unit : factual.units) {
    const auto features = model.unit_features(unit);
    const double y = unit.observed_outcome();
    ysum += y;
    ysq += y * y;
    nodes += static_cast<double>(unit.graph.size());
    for (std::size_t i = 0; i < unit.graph.size(); ++i) {
      const ClassId cls = unit.graph.node(i).cls;
      const std::vector<double> parents(parallel ? 0 : unit.graph.parents(i).size(), 0.0);
      const ComponentQuery q{cls, unit.covariates[i], features, parents, unit.treatment()};
      rows[static_cast<std::size_t>(cls.value)].add(model.component_input(q), 0.0);
    }
  }
  const double n = static_cast<double>(factual.units.size());
  const double ymean = ysum / n;
  const double ysd = std::max(std::sqrt(std::max(ysq / n - ymean * ymean, 0.0)), 1e-6);
  const double mean_nodes = nodes / n;

  learner::ArchitectureOptions arch;
  if (!uses_component_covariates(model.access())) {
    arch.projected_inputs = model.schema().feature_count();
    arch.projection_dim = model.representation_dim();
  }
  const auto slots = static_cast<std::size_t>(model.max_in_degree());
  for (std::size_t c = 0; c < k; ++c) {
    if (rows[c].size() == 0) continue;
    const ClassId cls{static_cast<int>(c)};
    GaussianRegressor reg(learner::make_spec(rows[c].input_size, config, LossKind::kMse, arch));
    reg.fit_normalization(rows[c].inputs, rows[c].targets);
    auto shift = reg.input_shift();
    auto scale = reg.input_scale();
    const std::size_t first_slot = model.feature_width(cls);
    for (std::size_t s = 0; s < slots; ++s) {
      shift[first_slot + s] = ymean;
      scale[first_slot + s] = ysd;
    }
    reg.set_input_normalization(std::move(shift), std::move(scale));
    if (parallel) {
      reg.set_output_normalization(ymean / mean_nodes, ysd / std::sqrt(mean_nodes));
    } else {
      reg.set_output_normalization(ymean, ysd);
    }
    reg.initialize(derive_seed(config.seed, "init", c));
    reg.trained_with = config;
    model.set_regressor(cls, std::move(reg));
  }
}

void fit_joint(CompositionalModel& model, const Dataset& factual,
               const learner::TrainConfig& config) {
  init_joint(model, factual, config);
  const auto k = static_cast<std::size_t>(factual.info.num_classes);
  std::vector<learner::Adam> adam(k);
  for (ClassId cls : model.trained_classes()) {
    adam[static_cast<std::size_t>(cls.value)] =
        learner::Adam(model.regressor(cls).parameter_count(), config);
  }
  std::vector<const StructuredUnit*> order;
  for (const auto& u : factual.units) order.push_back(&u);
  Rng shuffle_rng(derive_seed(config.seed, "joint-shuffle"));
  std::vector<std::vector<double>> grads;
  std::vector<const StructuredUnit*> batch;

  for (std::size_t epoch = 0; epoch < config.epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), shuffle_rng);
    const double lr = config.learning_rate_at(epoch);
    double epoch_loss = 0.0;
    for (std::size_t start = 0; start < order.size(); start += config.batch_size) {
      const std::size_t end = std::min(order.size(), start + config.batch_size);
      batch.assign(order.begin() + static_cast<std::ptrdiff_t>(start),
                   order.begin() + static_cast<std::ptrdiff_t>(end));
      epoch_loss += composed_loss_gradient(model, batch, grads) * static_cast<double>(end - start);
      for (ClassId cls : model.trained_classes()) {
        const auto c = static_cast<std::size_t>(cls.value);
        adam[c].step(model.regressor(cls).parameters(), grads[c], lr);
      }
    }
    if (!std::isfinite(epoch_loss)) {
      throw NumericError("joint training loss became non-finite at epoch " + std::to_string(epoch));
    }
  }
}

}  // namespace

CompositionalModel fit_compositional(const Dataset& factual, AccessCase access,
                                     const learner::TrainConfig& config,
                                     const CompositionalOptions& options) {
  config.validate();
  if (factual.units.empty()) throw DataError("compositional fitting needs at least one unit");
  if (!factual.all_factual()) {
    throw DataError("compositional fitting reads factual data only; bias the dataset first");
  }
  if (uses_component_outcomes(access) && !factual.has_component_outcomes()) {
    throw DataError("access case '" + std::string(to_string(access)) +
                    "' needs component outcomes, which the dataset does not carry");
  }
  CompositionalModel model(access, factual.info.composition, factual.info,
                           options.representation_dim);
  model.train_config = config;
  if (uses_component_outcomes(access)) {
    fit_independent(model, factual, config, options);
  } else {
    fit_joint(model, factual, config);
  }
  return model;
}

double composed_loss_gradient(const CompositionalModel& model,
                              std::span<const StructuredUnit* const> units,
                              std::vector<std::vector<double>>& grads) {
  const std::size_t k = model.schema().class_arity.size();
  grads.resize(k);
  for (std::size_t c = 0; c < k; ++c) {
    const ClassId cls{static_cast<int>(c)};
    if (model.covers(cls)) {
      grads[c].assign(model.regressor(cls).parameter_count(), 0.0);
    } else {
      grads[c].clear();
    }
  }
  if (units.empty()) return 0.0;

  const bool parallel = model.composition() == CompositionKind::kParallel;
  const double weight = 1.0 / static_cast<double>(units.size());
  std::vector<GaussianRegressor::Workspace> ws;
  std::vector<double> means, dmean, dinput;
  double total = 0.0;

  for (const StructuredUnit* unit : units) {
    const auto& graph = unit->graph;
    const auto features = model.unit_features(*unit);
    const int t = unit->treatment();
    const std::size_t m = graph.size();
    if (ws.size() < m) ws.resize(m);
    means.assign(m, 0.0);
    for (std::size_t i : graph.processing_order()) {
      const ClassId cls = graph.node(i).cls;
      const auto parents = parallel ? std::vector<double>{} : parent_values_of(*unit, i, means);
      const ComponentQuery q{cls, unit->covariates[i], features, parents, t};
      means[i] = model.regressor(cls).forward_mean(model.component_input(q), ws[i]);
    }
    const double pred =
        parallel ? std::accumulate(means.begin(), means.end(), 0.0) : means[graph.sink()];
    const double r = pred - unit->observed_outcome();
    total += r * r;

    dmean.assign(m, 0.0);
    if (parallel) {
      dmean.assign(m, 2.0 * r * weight);
    } else {
      dmean[graph.sink()] = 2.0 * r * weight;
    }
    const auto& order = graph.processing_order();
    for (auto it = order.rbegin(); it != order.rend(); ++it) {
      const std::size_t i = *it;
      const ClassId cls = graph.node(i).cls;
      const auto& reg = model.regressor(cls);
      const auto& parents = graph.parents(i);
      if (parallel || parents.empty()) {
        reg.backward_mean(ws[i], dmean[i], grads[static_cast<std::size_t>(cls.value)], {});
        continue;
      }
      dinput.assign(reg.input_size(), 0.0);
      reg.backward_mean(ws[i], dmean[i], grads[static_cast<std::size_t>(cls.value)], dinput);
      const std::size_t first_slot = model.feature_width(cls);
      for (std::size_t p = 0; p < parents.size(); ++p) {
        dmean[parents[p]] += dinput[first_slot + p];
      }
    }
  }
  return total * weight;
}

namespace {

// One pass along the processing order. Non-sink outcomes are the predicted
// mean plus sd * draws[i]; the sink contributes its predicted mean.
double sample_path(const ComponentOutcomeModel& model, const StructuredUnit& unit,
                   std::span<const double> features, int t, std::span<const double> draws,
                   std::vector<double>& values) {
  const auto& graph = unit.graph;
  values.assign(graph.size(), 0.0);
  const std::size_t sink = graph.sink();
  for (std::size_t i : graph.processing_order()) {
    const auto parents = parent_values_of(unit, i, values);
    const ComponentQuery q{graph.node(i).cls, unit.covariates[i], features, parents, t};
    const GaussianPrediction pred = model.predict(q);
    if (i == sink) return pred.mean;
    const double sd = pred.variance > 0.0 ? std::sqrt(pred.variance) : 0.0;
    values[i] = pred.mean + (draws.empty() ? 0.0 : sd * draws[i]);
  }
  return values[sink];
}

double sample_variance(std::span<const double> xs, double mean) {
  double ss = 0.0;
  for (double x : xs) ss += (x - mean) * (x - mean);
  return ss / static_cast<double>(xs.size() - 1);
}

double mean_of(std::span<const double> xs) {
  return std::accumulate(xs.begin(), xs.end(), 0.0) / static_cast<double>(xs.size());
}

}  // namespace

double composed_mean(const ComponentOutcomeModel& model, const StructuredUnit& unit, int t) {
  const auto features = model.needs_unit_features() ? model.unit_features(unit)
                                                    : std::vector<double>{};
  if (model.composition() == CompositionKind::kParallel) {
    double sum = 0.0;
    for (std::size_t i = 0; i < unit.graph.size(); ++i) {
      sum += model.predict({unit.graph.node(i).cls, unit.covariates[i], features, {}, t}).mean;
    }
    return sum;
  }
  std::vector<double> values;
  return sample_path(model, unit, features, t, {}, values);
}

CateEstimate infer_cate_hierarchical(const ComponentOutcomeModel& model, const StructuredUnit& unit,
                                     const InferenceOptions& options) {
  if (options.mc_samples < 1) {
    throw ConfigError("Monte-Carlo sample count must be at least 1", "inference.mc_samples");
  }
  if (model.composition() == CompositionKind::kParallel) {
    throw UsageError("hierarchical inference needs a sequential or hierarchical model");
  }
  check_coverage(model, std::span<const StructuredUnit>(&unit, 1));
  const auto features = model.needs_unit_features() ? model.unit_features(unit)
                                                    : std::vector<double>{};
  CateEstimate est;
  est.unit_id = unit.unit_id;
  std::vector<double> values;

  if (!model.stochastic()) {
    est.y0 = sample_path(model, unit, features, 0, {}, values);
    est.y1 = sample_path(model, unit, features, 1, {}, values);
    est.tau = est.y1 - est.y0;
    est.mc_stderr = 0.0;
    return est;
  }

  const auto paths = static_cast<std::size_t>(options.mc_samples);
  const std::size_t m = unit.graph.size();
  const auto id = static_cast<std::uint64_t>(unit.unit_id);
  std::vector<double> sink[2] = {std::vector<double>(paths), std::vector<double>(paths)};
  std::vector<double> draws(m);
  std::normal_distribution<double> normal;
  if (options.common_random_numbers) {
    Rng rng = make_rng(options.seed, "mc", id);
    for (std::size_t s = 0; s < paths; ++s) {
      for (double& z : draws) z = normal(rng);
      sink[0][s] = sample_path(model, unit, features, 0, draws, values);
      sink[1][s] = sample_path(model, unit, features, 1, draws, values);
    }
  } else {
    for (int t : {0, 1}) {
      Rng rng = make_rng(options.seed, "mc", id, static_cast<std::uint64_t>(t));
      for (std::size_t s = 0; s < paths; ++s) {
        for (double& z : draws) z = normal(rng);
        sink[t][s] = sample_path(model, unit, features, t, draws, values);
      }
    }
  }
  est.y0 = mean_of(sink[0]);
  est.y1 = mean_of(sink[1]);
  est.tau = est.y1 - est.y0;
  if (paths > 1) {
    const double s = static_cast<double>(paths);
    if (options.common_random_numbers) {
      std::vector<double> diff(paths);
      for (std::size_t i = 0; i < paths; ++i) diff[i] = sink[1][i] - sink[0][i];
      est.mc_stderr = std::sqrt(sample_variance(diff, est.tau) / s);
    } else {
      est.mc_stderr =
          std::sqrt(sample_variance(sink[0], est.y0) / s + sample_variance(sink[1], est.y1) / s);
    }
  }
  return est;
}

CateEstimate infer_cate_parallel(const ComponentOutcomeModel& model, const StructuredUnit& unit) {
  if (model.composition() != CompositionKind::kParallel) {
    throw UsageError("parallel inference needs a parallel model");
  }
  check_coverage(model, std::span<const StructuredUnit>(&unit, 1));
  CateEstimate est;
  est.unit_id = unit.unit_id;
  est.y0 = composed_mean(model, unit, 0);
  est.y1 = composed_mean(model, unit, 1);
  est.tau = est.y1 - est.y0;
  return est;
}

CateEstimate infer_cate(const ComponentOutcomeModel& model, const StructuredUnit& unit,
                        const InferenceOptions& options) {
  if (model.composition() == CompositionKind::kParallel) return infer_cate_parallel(model, unit);
  return infer_cate_hierarchical(model, unit, options);
}

nlohmann::ordered_json manifest_json(const CompositionalModel& model) {
  nlohmann::ordered_json j = nlohmann::ordered_json::object();
  j["format"] = "compcate.model/1";
  j["family"] = "compositional";
  j["case"] = std::string(to_string(model.access()));
  j["composition"] = std::string(to_string(model.composition()));
  const auto& schema = model.schema();
  j["schema"] = {{"num_classes", schema.num_classes},
                 {"class_arity", schema.class_arity},
                 {"max_depth", schema.max_depth},
                 {"fingerprint", schema.fingerprint()}};
  j["max_in_degree"] = model.max_in_degree();
  j["representation_dim"] = model.representation_dim();
  j["train"] = learner::to_json(model.train_config);
  nlohmann::ordered_json classes = nlohmann::ordered_json::array();
  for (ClassId cls : model.trained_classes()) {
    classes.push_back({{"class", cls.value}, {"file", "class_" + std::to_string(cls.value) + ".json"}});
  }
  j["classes"] = std::move(classes);
  return j;
}

void save_compositional(const CompositionalModel& model, const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  const auto manifest = manifest_json(model);
  for (const auto& entry : manifest["classes"]) {
    const ClassId cls{entry["class"].get<int>()};
    write_text(dir / entry["file"].get<std::string>(), model.regressor(cls).to_json().dump() + "\n");
  }
  write_text(dir / "manifest.json", manifest.dump(2) + "\n");
}

CompositionalModel load_compositional(const std::filesystem::path& dir) {
  nlohmann::json manifest;
  try {
    manifest = nlohmann::json::parse(read_text(dir / "manifest.json"));
  } catch (const nlohmann::json::exception& e) {
    throw DataError(dir.string() + "/manifest.json: " + e.what());
  }
  try {
    if (manifest.at("family").get<std::string>() != "compositional") {
      throw DataError(dir.string() + " does not hold a compositional model");
    }
    DatasetInfo info;
    const auto& schema = manifest.at("schema");
    info.num_classes = schema.at("num_classes").get<int>();
    info.class_arity = schema.at("class_arity").get<std::vector<int>>();
    info.max_depth = schema.at("max_depth").get<int>();
    info.composition = parse_composition(manifest.at("composition").get<std::string>());
    info.max_in_degree = manifest.at("max_in_degree").get<int>();
    CompositionalModel model(parse_access_case(manifest.at("case").get<std::string>()),
                             info.composition, info,
                             manifest.at("representation_dim").get<std::size_t>());
    if (model.schema().fingerprint() != schema.at("fingerprint").get<std::string>()) {
      throw DataError(dir.string() + ": schema fingerprint mismatch");
    }
    model.train_config = learner::train_config_from_json(manifest.at("train"));
    for (const auto& entry : manifest.at("classes")) {
      const auto file = dir / entry.at("file").get<std::string>();
      const auto reg = GaussianRegressor::from_json(nlohmann::json::parse(read_text(file)));
      model.set_regressor(ClassId{entry.at("class").get<int>()}, reg);
    }
    return model;
  } catch (const nlohmann::json::exception& e) {
    throw DataError(dir.string() + ": malformed model bundle: " + e.what());
  }
}

}  // namespace compcate::estimators
