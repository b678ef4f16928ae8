#include "cli.hpp"

#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <optional>
#include <ostream>
#include <sstream>

#include <CLI11.hpp>
#include <toml.hpp>

#include "compcate/bias/bias.hpp"
#include "compcate/core/error.hpp"
#include "compcate/core/io.hpp"
#include "compcate/core/random.hpp"
#include "compcate/core/unitary.hpp"
#include "compcate/dgp/dgp.hpp"
#include "compcate/estimators/estimator.hpp"
#include "compcate/eval/eval.hpp"
#include "compcate/eval/experiment.hpp"
#include "compcate/fabsim/fabsim.hpp"
#include "compcate/learner/train_config.hpp"
#include "compcate/version.hpp"

namespace compcate::cli {

using Json = nlohmann::ordered_json;
namespace fs = std::filesystem;

namespace {

Json without_seed(Json j) {
  j.erase("seed");
  return j;
}

Json toml_to_json(const toml::node& node, const std::string& path) {
  if (const auto* table = node.as_table()) {
    Json j = Json::object();
    for (auto&& [key, value] : *table) {
      const std::string k(key.str());
      j[k] = toml_to_json(value, path.empty() ? k : path + "." + k);
    }
    return j;
  }
  if (const auto* array = node.as_array()) {
    Json j = Json::array();
    for (std::size_t i = 0; i < array->size(); ++i) {
      j.push_back(toml_to_json(*array->get(i), path + "[" + std::to_string(i) + "]"));
    }
    return j;
  }
  if (const auto* v = node.as_integer()) return v->get();
  if (const auto* v = node.as_floating_point()) return v->get();
  if (const auto* v = node.as_boolean()) return v->get();
  if (const auto* v = node.as_string()) return v->get();
  throw ConfigError("dates and times are not valid config values", path);
}

const char* type_name(const Json& j) {
  if (j.is_object()) return "a table";
  if (j.is_array()) return "an array";
  if (j.is_boolean()) return "a boolean";
  if (j.is_number_float()) return "a number";
  if (j.is_number_integer()) return "an integer";
  return "a string";
}

void check_against(const Json& value, const Json& expected, const std::string& path) {
  bool ok = false;
  if (expected.is_object()) {
    ok = value.is_object();
  } else if (expected.is_array()) {
    ok = value.is_array();
  } else if (expected.is_boolean()) {
    ok = value.is_boolean();
  } else if (expected.is_number_float()) {
    ok = value.is_number();
  } else if (expected.is_number_integer()) {
    ok = value.is_number_integer();
  } else {
    ok = value.is_string();
  }
  if (!ok) throw ConfigError(std::string("expected ") + type_name(expected), path);
  if (expected.is_number_unsigned() && value.get<std::int64_t>() < 0) {
    throw ConfigError("must be non-negative", path);
  }
  if (!expected.is_object()) return;
  for (const auto& [key, item] : value.items()) {
    const auto child = path.empty() ? key : path + "." + key;
    if (!expected.contains(key)) throw ConfigError("unknown key", child);
    check_against(item, expected.at(key), child);
  }
}

void overlay(Json& base, const Json& patch) {
  for (const auto& [key, item] : patch.items()) {
    if (base.contains(key) && base[key].is_object() && item.is_object()) {
      overlay(base[key], item);
    } else {
      base[key] = item;
    }
  }
}

std::string hash_of(const Json& j) { return hex64(fnv1a64(j.dump())); }

std::string format_double(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

// Resolved pipeline: all sections with defaults plus the root seed.
struct Pipeline {
  Json doc;
  std::uint64_t seed = 0;

  Json section(const char* name) const { return doc.at(name); }
  // The command's inputs as they were actually used, written beside outputs.
  Json resolved(const std::string& command, std::initializer_list<const char*> sections) const {
    Json j = Json::object();
    j["command"] = command;
    j["tool_version"] = kVersion;
    j["seed"] = seed;
    for (const char* s : sections) j[s] = doc.at(s);
    return j;
  }
};

std::optional<std::uint64_t> env_seed() {
  const char* raw = std::getenv("COMPCATE_SEED");
  if (raw == nullptr || *raw == '\0') return std::nullopt;
  const std::string text(raw);
  if (text.find_first_not_of("0123456789") != std::string::npos || text.size() > 20) {
    throw ConfigError("must be a non-negative integer, got '" + text + "'", "COMPCATE_SEED");
  }
  try {
    return std::stoull(text);
  } catch (const std::out_of_range&) {
    throw ConfigError("does not fit in 64 bits", "COMPCATE_SEED");
  }
}

bias::BiasPolicy bias_policy(const Json& s) {
  bias::BiasPolicy policy;
  policy.kind = bias::parse_score_kind(s.at("kind").get<std::string>());
  policy.alpha = s.at("alpha").get<double>();
  policy.clamp_low = s.at("clamp_low").get<double>();
  policy.clamp_high = s.at("clamp_high").get<double>();
  policy.validate();
  return policy;
}

// Every section is checked up front so a bad value fails before any work.
void validate_sections(const Json& doc) {
  dgp::dgp_config_from_json(doc.at("dgp")).validate();
  fabsim::fabsim_config_from_json(doc.at("fabsim")).validate();
  bias_policy(doc.at("bias"));
  eval::split_spec_from_json(doc.at("split")).validate();
  learner::train_config_from_json(doc.at("train")).validate();
  const auto& est = doc.at("estimator");
  estimators::parse_estimator(est.at("name").get<std::string>(), est.at("case").get<std::string>());
  if (est.at("representation_dim").get<std::int64_t>() < 1) {
    throw ConfigError("must be at least 1", "estimator.representation_dim");
  }
  if (doc.at("inference").at("mc_samples").get<std::int64_t>() < 1) {
    throw ConfigError("must be at least 1", "inference.mc_samples");
  }
}

// Seed precedence: --seed, then COMPCATE_SEED, then the config's seed.
Pipeline resolve(const std::string& config_path, std::optional<std::uint64_t> seed_flag) {
  Pipeline p;
  p.doc = default_config();
  if (!config_path.empty()) overlay(p.doc, load_config(config_path));
  p.seed = p.doc.at("seed").get<std::uint64_t>();
  if (auto env = env_seed()) p.seed = *env;
  if (seed_flag) p.seed = *seed_flag;
  p.doc["seed"] = p.seed;
  validate_sections(p.doc);
  return p;
}

void write_json(const fs::path& path, const Json& j) { write_text(path, j.dump(2) + "\n"); }

void warn(std::ostream& err, const std::string& message) {
  err << Json{{"warning", message}}.dump() << "\n";
}

estimators::EstimatorSpec parse_spec(const std::string& entry, const std::string& fallback_case) {
  const auto colon = entry.find(':');
  if (colon == std::string::npos) return estimators::parse_estimator(entry, fallback_case);
  return estimators::parse_estimator(entry.substr(0, colon), entry.substr(colon + 1));
}

Dataset read_factual(const fs::path& path) {
  auto ds = read_dataset(path);
  if (!ds.all_factual()) throw DataError(path.string() + " is not a factual dataset; run bias first");
  return ds;
}

Json read_manifest(const fs::path& model_dir) {
  const auto path = model_dir / "manifest.json";
  if (!fs::exists(path)) throw DataError("no model bundle at " + model_dir.string());
  try {
    return Json::parse(read_text(path));
  } catch (const nlohmann::json::exception& e) {
    throw DataError(path.string() + ": " + e.what());
  }
}

void check_schema(const Json& manifest, const Dataset& ds, const fs::path& dataset_path) {
  const auto expected = manifest.at("schema").at("fingerprint").get<std::string>();
  if (expected != UnitarySchema::from(ds.info).fingerprint()) {
    throw DataError("model schema " + expected + " does not match dataset " +
                    dataset_path.string());
  }
}

estimators::InferenceOptions inference_options(const Pipeline& p) {
  const auto s = p.section("inference");
  estimators::InferenceOptions o;
  o.mc_samples = s.at("mc_samples").get<int>();
  o.seed = derive_seed(p.seed, "mc");
  o.common_random_numbers = s.at("common_random_numbers").get<bool>();
  if (o.mc_samples < 1) throw ConfigError("must be at least 1", "inference.mc_samples");
  return o;
}


learner::TrainConfig train_config(const Pipeline& p) {
  auto tc = learner::train_config_from_json(p.section("train"));
  tc.seed = derive_seed(p.seed, "model");
  tc.validate();
  return tc;
}

estimators::CompositionalOptions compositional_options(const Pipeline& p, int jobs) {
  estimators::CompositionalOptions o;
  const auto dim = p.section("estimator").at("representation_dim").get<std::int64_t>();
  if (dim < 1) throw ConfigError("must be at least 1", "estimator.representation_dim");
  o.representation_dim = static_cast<std::size_t>(dim);
  o.jobs = jobs;
  return o;
}

struct Flags {
  std::string config;
  std::optional<std::uint64_t> seed;
  std::string out = ".";
  std::string dataset;
  std::string model;
  std::string estimator;
  std::string access;
  std::optional<double> alpha;
  int jobs = 1;
};

int cmd_generate(const Flags& f, std::ostream& out) {
  const auto p = resolve(f.config, f.seed);
  auto config = dgp::dgp_config_from_json(p.section("dgp"));
  config.seed = p.seed;
  config.validate();
  const auto classes = dgp::sample_classes(config);
  const auto ds = dgp::generate_experimental_dataset(config, classes);
  const auto path = fs::path(f.out) / "synthetic.jsonl";
  write_dataset(path, ds, make_stamp(ds.info.config_hash, p.seed));
  dgp::write_class_sidecar(path, config, classes);
  write_json(sidecar_path(path, ".config.json"), p.resolved("generate", {"dgp"}));
  out << Json{{"dataset", path.string()}, {"units", ds.units.size()}}.dump() << "\n";
  return 0;
}

int cmd_simulate(const Flags& f, std::ostream& out) {
  const auto p = resolve(f.config, f.seed);
  auto config = fabsim::fabsim_config_from_json(p.section("fabsim"));
  config.seed = p.seed;
  config.validate();
  const auto data = fabsim::generate_manufacturing_dataset(config);
  const auto path = fs::path(f.out) / "fabsim.jsonl";
  write_dataset(path, data.dataset, make_stamp(data.dataset.info.config_hash, p.seed));
  std::string aux = "unit_id,layout_id,demand,total_time_0,total_time_1,parts_per_time_0,parts_per_time_1\n";
  for (const auto& a : data.aux) {
    aux += std::to_string(a.unit_id) + "," + std::to_string(a.layout_id) + "," +
           std::to_string(a.demand) + "," + format_double(a.total_time[0]) + "," +
           format_double(a.total_time[1]) + "," + format_double(a.parts_per_time[0]) + "," +
           format_double(a.parts_per_time[1]) + "\n";
  }
  write_text(sidecar_path(path, ".aux.csv"), aux);
  write_json(sidecar_path(path, ".config.json"), p.resolved("simulate", {"fabsim"}));
  out << Json{{"dataset", path.string()}, {"units", data.dataset.units.size()}}.dump() << "\n";
  return 0;
}

int cmd_bias(const Flags& f, std::ostream& out, std::ostream& err) {
  auto p = resolve(f.config, f.seed);
  if (f.alpha) p.doc["bias"]["alpha"] = *f.alpha;
  const auto policy = bias_policy(p.section("bias"));
  const auto ds = read_dataset(f.dataset);
  if (!ds.all_experimental()) {
    throw DataError(f.dataset + " needs both potential outcomes on every unit");
  }
  const auto split = bias::sample_observational(ds, policy, derive_seed(p.seed, "bias"));
  if (split.stats.degenerate) {
    warn(err, "biasing score has zero interquartile range; scale fell back to 1");
  }
  const auto path = fs::path(f.out) / "factual.jsonl";
  write_dataset(path, split.factual, make_stamp(split.factual.info.config_hash, p.seed));
  bias::write_truth(path, split.factual, split.truth);
  write_json(sidecar_path(path, ".config.json"), p.resolved("bias", {"bias"}));

  std::size_t treated = 0;
  for (const auto& u : split.factual.units) treated += u.treatment() == 1;
  const double fraction = split.factual.units.empty()
                              ? 0.0
                              : static_cast<double>(treated) / split.factual.units.size();
  out << Json{{"dataset", path.string()}, {"units", split.factual.units.size()},
              {"treated_fraction", fraction}}.dump()
      << "\n";
  return 0;
}

int cmd_train(const Flags& f, std::ostream& out) {
  auto p = resolve(f.config, f.seed);
  if (!f.estimator.empty()) p.doc["estimator"]["name"] = f.estimator;
  if (!f.access.empty()) p.doc["estimator"]["case"] = f.access;
  const auto est = p.section("estimator");
  const auto spec =
      estimators::parse_estimator(est.at("name").get<std::string>(), est.at("case").get<std::string>());
  const auto ds = read_factual(f.dataset);
  const auto split_spec = eval::split_spec_from_json(p.section("split"));
  const auto split_seed = derive_seed(p.seed, "split");
  const auto split = eval::split_compgen(ds, split_spec, split_seed);
  const auto train = eval::subset(ds, split.train);

  const auto fitted =
      estimators::fit_estimator(spec, train, train_config(p), compositional_options(p, f.jobs));
  const fs::path dir(f.out);
  fitted.save(dir);

  const auto resolved = p.resolved("train", {"estimator", "split", "train"});
  auto manifest = read_manifest(dir);
  manifest["provenance"] = {
      {"stamp", make_stamp(hash_of(resolved), p.seed).to_json()},
      {"estimator", spec.name()},
      {"case", spec.case_name()},
      {"dataset",
       {{"content_hash", content_hash(ds)}, {"config_hash", ds.info.config_hash}, {"units", ds.units.size()}}},
      {"split", eval::to_json(split_spec)},
      {"split_seed", split_seed},
      {"train_units", split.train.size()}};
  write_json(dir / "manifest.json", manifest);
  write_json(dir / "config.json", resolved);
  out << Json{{"model", dir.string()}, {"estimator", spec.name()}, {"case", spec.case_name()},
              {"train_units", split.train.size()}}.dump()
      << "\n";
  return 0;
}

int cmd_infer(const Flags& f, std::ostream& out) {
  const auto p = resolve(f.config, f.seed);
  const fs::path model_dir(f.model);
  const auto manifest = read_manifest(model_dir);
  const auto ds = read_dataset(f.dataset);
  check_schema(manifest, ds, f.dataset);
  const auto fitted = estimators::FittedEstimator::load(model_dir);
  const auto estimates = fitted.estimate(ds.units, inference_options(p), f.jobs);
  const auto path = fs::path(f.out) / "cate.csv";
  write_text(path, estimators::estimates_csv(estimates));
  write_json(sidecar_path(path, ".config.json"), p.resolved("infer", {"inference"}));
  out << Json{{"estimates", path.string()}, {"units", estimates.size()}}.dump() << "\n";
  return 0;
}

// Scores a trained bundle on the held-out side of the split it was trained
// with. The dataset must be the one the bundle records.
int cmd_eval(const Flags& f, std::ostream& out) {
  const auto p = resolve(f.config, f.seed);
  const fs::path model_dir(f.model);
  const auto manifest = read_manifest(model_dir);
  if (!manifest.contains("provenance")) {
    throw DataError(model_dir.string() + " has no training provenance; train it with this tool");
  }
  const auto& prov = manifest.at("provenance");
  const auto data = eval::load_experiment_data(f.dataset);
  if (!data.dataset.all_factual()) throw DataError(f.dataset + " is not a factual dataset");
  const auto expected = prov.at("dataset").at("content_hash").get<std::string>();
  const auto actual = content_hash(data.dataset);
  if (expected != actual) {
    throw DataError("model was trained on dataset " + expected + " but " + f.dataset + " is " + actual);
  }
  check_schema(manifest, data.dataset, f.dataset);

  const auto split_spec = eval::split_spec_from_json(prov.at("split"));
  const auto split =
      eval::split_compgen(data.dataset, split_spec, prov.at("split_seed").get<std::uint64_t>());
  const auto test = eval::subset(data.dataset, split.test);
  const auto fitted = estimators::FittedEstimator::load(model_dir);
  const auto estimates = fitted.estimate(test.units, inference_options(p), f.jobs);

  std::vector<double> tau_hat, tau;
  for (std::size_t k = 0; k < split.test.size(); ++k) {
    tau_hat.push_back(estimates[k].tau);
    tau.push_back(data.truth[split.test[k]].effect());
  }
  eval::ResultRow row;
  row.estimator = prov.at("estimator").get<std::string>();
  row.access_case = prov.at("case").get<std::string>();
  row.split = split_spec.label();
  row.n_train = prov.at("train_units").get<std::size_t>();
  row.seed = prov.at("stamp").at("seed").get<std::uint64_t>();
  row.n_test = split.test.size();
  row.pehe = eval::pehe(tau_hat, tau);
  row.r2 = eval::r2_score(tau_hat, tau);
  eval::ResultTable table;
  table.rows.push_back(row);

  const auto path = fs::path(f.out) / "results.csv";
  write_text(path, table.csv());
  Json results = Json::object();
  results["format"] = "compcate.results/1";
  results["stamp"] = make_stamp(hash_of(p.resolved("eval", {"inference"})), p.seed).to_json();
  results["dataset"] = {{"config_hash", data.dataset.info.config_hash}, {"content_hash", actual}};
  results["model"] = prov;
  results["rows"] = Json::array({row.key()});
  write_json(eval::manifest_path(path), results);
  write_json(sidecar_path(path, ".config.json"), p.resolved("eval", {"inference"}));
  out << Json{{"results", path.string()}, {"pehe", row.pehe}, {"r2", row.r2}}.dump() << "\n";
  return 0;
}

int cmd_sweep(const Flags& f, std::ostream& out) {
  auto p = resolve(f.config, f.seed);
  auto& exp = p.doc["experiment"];
  if (!f.estimator.empty()) {
    exp["estimators"] = Json::array({f.access.empty() ? f.estimator : f.estimator + ":" + f.access});
  }
  if (f.alpha) exp["alphas"] = Json::array({*f.alpha});

  eval::ExperimentConfig config;
  const auto fallback_case = p.section("estimator").at("case").get<std::string>();
  for (const auto& e : exp.at("estimators")) {
    if (!e.is_string()) throw ConfigError("entries must be strings", "experiment.estimators");
    config.estimators.push_back(parse_spec(e.get<std::string>(), fallback_case));
  }
  try {
    config.alphas = exp.at("alphas").get<std::vector<double>>();
    config.n_train = exp.at("n_train").get<std::vector<std::size_t>>();
  } catch (const nlohmann::json::exception&) {
    throw ConfigError("alphas and n_train must be numeric arrays", "experiment");
  }
  const auto replicates = exp.at("replicates").get<std::int64_t>();
  if (replicates < 1) throw ConfigError("must be at least 1", "experiment.replicates");
  config.seeds.clear();
  for (std::int64_t r = 0; r < replicates; ++r) config.seeds.push_back(p.seed + r);
  config.test_limit = exp.at("test_limit").get<std::size_t>();
  config.bias_kind = bias::parse_score_kind(p.section("bias").at("kind").get<std::string>());
  config.split = eval::split_spec_from_json(p.section("split"));
  config.train = learner::train_config_from_json(p.section("train"));
  config.mc_samples = inference_options(p).mc_samples;
  config.compositional = compositional_options(p, 1);

  const auto data = eval::load_experiment_data(f.dataset);
  const auto path = fs::path(f.out) / "results.csv";
  const auto table = eval::run_experiment(config, data, {f.jobs, path});
  write_json(sidecar_path(path, ".config.json"),
             p.resolved("sweep", {"experiment", "estimator", "bias", "split", "train", "inference"}));
  std::size_t errors = 0;
  for (const auto& r : table.rows) errors += !r.ok();
  out << Json{{"results", path.string()}, {"rows", table.rows.size()}, {"errors", errors}}.dump()
      << "\n";
  return 0;
}

void report(std::ostream& err, const char* kind, const std::string& message,
            const std::string& path = {}) {
  Json j = {{"error", kind}, {"message", message}};
  if (!path.empty()) j["path"] = path;
  err << j.dump() << "\n";
}

}  // namespace

Json default_config() {
  Json t = Json::object();
  t["seed"] = std::uint64_t{0};
  t["dgp"] = without_seed(dgp::to_json(dgp::DgpConfig{}));
  t["fabsim"] = without_seed(fabsim::to_json(fabsim::FabsimConfig{}));
  t["bias"] = bias::to_json(bias::BiasPolicy{});
  t["split"] = eval::to_json(eval::SplitSpec{});
  t["train"] = without_seed(learner::to_json(learner::TrainConfig{}));
  t["estimator"] = {{"name", "compositional"}, {"case", "xy"}, {"representation_dim", std::uint64_t{4}}};
  t["inference"] = {{"mc_samples", 1000}, {"common_random_numbers", false}};
  t["experiment"] = {{"estimators", Json::array({"compositional:xy", "s_learner"})},
                     {"alphas", Json::array()},
                     {"n_train", Json::array({0})},
                     {"replicates", 5},
                     {"test_limit", std::uint64_t{0}}};
  return t;
}

Json load_config(const std::string& toml_path) {
  if (!fs::exists(toml_path)) throw ConfigError("config file not found", toml_path);
  Json doc;
  try {
    doc = toml_to_json(toml::parse_file(toml_path), "");
  } catch (const toml::parse_error& e) {
    std::ostringstream where;
    where << toml_path << ":" << e.source().begin.line << ":" << e.source().begin.column;
    throw ConfigError(std::string(e.description()), where.str());
  }
  check_against(doc, default_config(), "");
  return doc;
}

int run_command(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Compositional CATE estimation for structured units", "compcate"};
  app.set_version_flag("--version", std::string(kVersion));
  app.require_subcommand(1);
  Flags f;

  auto common = [&](CLI::App* sub) {
    sub->add_option("--config", f.config, "TOML pipeline config")->check(CLI::ExistingFile);
    sub->add_option("--seed", f.seed, "root seed (overrides COMPCATE_SEED and the config)");
    sub->add_option("--out", f.out, "output directory")->capture_default_str();
  };
  auto jobs = [&](CLI::App* sub) {
    sub->add_option("--jobs", f.jobs, "worker threads")->check(CLI::PositiveNumber);
  };

  auto* generate = app.add_subcommand("generate", "synthetic experimental dataset");
  common(generate);
  auto* simulate = app.add_subcommand("simulate", "manufacturing simulator dataset");
  common(simulate);
  auto* bias = app.add_subcommand("bias", "observational dataset plus truth sidecar");
  common(bias);
  bias->add_option("--dataset", f.dataset, "experimental JSONL")->required();
  bias->add_option("--alpha", f.alpha, "bias strength (overrides bias.alpha)");
  auto* train = app.add_subcommand("train", "fit an estimator into a model bundle");
  common(train);
  train->add_option("--dataset", f.dataset, "factual JSONL")->required();
  train->add_option("--estimator", f.estimator, "compositional, s_learner, t_learner, x_learner");
  train->add_option("--case", f.access, "xy, y_only, x_only, neither");
  jobs(train);
  auto* infer = app.add_subcommand("infer", "per-unit effect estimates");
  common(infer);
  infer->add_option("--model", f.model, "model bundle directory")->required();
  infer->add_option("--dataset", f.dataset, "JSONL to score")->required();
  jobs(infer);
  auto* evaluate = app.add_subcommand("eval", "score a bundle on its held-out units");
  common(evaluate);
  evaluate->add_option("--model", f.model, "model bundle directory")->required();
  evaluate->add_option("--dataset", f.dataset, "factual JSONL the bundle was trained on")->required();
  jobs(evaluate);
  auto* sweep = app.add_subcommand("sweep", "estimator x alpha x n_train x seed grid");
  common(sweep);
  sweep->add_option("--dataset", f.dataset, "experimental or factual JSONL")->required();
  sweep->add_option("--estimator", f.estimator, "run only this estimator");
  sweep->add_option("--case", f.access, "access case for --estimator");
  sweep->add_option("--alpha", f.alpha, "run only this bias strength");
  jobs(sweep);

  if (!args.empty() && !args.front().empty() && args.front().front() != '-' &&
      app.get_subcommand_no_throw(args.front()) == nullptr) {
    err << app.help();
    report(err, "usage", "unknown subcommand '" + args.front() + "'");
    return static_cast<int>(ErrorKind::kUsage);
  }
  std::vector<std::string> reversed(args.rbegin(), args.rend());
  try {
    app.parse(reversed);
  } catch (const CLI::ParseError& e) {
    if (e.get_exit_code() == 0) {
      return app.exit(e, out, err);
    }
    const auto* failing = app.get_subcommands().empty() ? &app : app.get_subcommands().front();
    err << failing->help();
    report(err, "usage", e.what());
    return static_cast<int>(ErrorKind::kUsage);
  }

  try {
    if (generate->parsed()) return cmd_generate(f, out);
    if (simulate->parsed()) return cmd_simulate(f, out);
    if (bias->parsed()) return cmd_bias(f, out, err);
    if (train->parsed()) return cmd_train(f, out);
    if (infer->parsed()) return cmd_infer(f, out);
    if (evaluate->parsed()) return cmd_eval(f, out);
    if (sweep->parsed()) return cmd_sweep(f, out);
  } catch (const Error& e) {
    report(err, error_kind_name(e.kind()), e.what(), e.path());
    return e.exit_code();
  } catch (const nlohmann::json::exception& e) {
    report(err, "data", e.what());
    return static_cast<int>(ErrorKind::kData);
  } catch (const std::exception& e) {
    report(err, "internal", e.what());
    return 1;
  }
  return static_cast<int>(ErrorKind::kUsage);
}

}  // namespace compcate::cli
