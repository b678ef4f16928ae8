#include "compcate/bias/bias.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include "compcate/core/error.hpp"
#include "compcate/core/io.hpp"
#include "compcate/core/random.hpp"

namespace compcate::bias {

void BiasPolicy::validate() const {
  if (!(alpha >= 0.0) || !std::isfinite(alpha)) {
    throw ConfigError("bias strength must be finite and >= 0", "bias.alpha");
  }
  if (!(clamp_low > 0.0 && clamp_low < clamp_high && clamp_high < 1.0)) {
    throw ConfigError("clamp bounds must satisfy 0 < low < high < 1", "bias.clamp_low");
  }
}

ScoreKind parse_score_kind(const std::string& name) {
  if (name == "covariate_sum") return ScoreKind::kCovariateSum;
  if (name == "tree_depth") return ScoreKind::kTreeDepth;
  throw ConfigError("unknown bias score '" + name + "'", "bias.kind");
}

nlohmann::ordered_json to_json(const BiasPolicy& p) {
  nlohmann::ordered_json j = nlohmann::ordered_json::object();
  j["kind"] = p.kind == ScoreKind::kCovariateSum ? "covariate_sum" : "tree_depth";
  j["alpha"] = p.alpha;
  j["clamp_low"] = p.clamp_low;
  j["clamp_high"] = p.clamp_high;
  return j;
}

BiasPolicy bias_policy_from_json(const nlohmann::json& j) {
  BiasPolicy p;
  try {
    if (j.contains("kind")) p.kind = parse_score_kind(j.at("kind").get<std::string>());
    p.alpha = j.value("alpha", p.alpha);
    p.clamp_low = j.value("clamp_low", p.clamp_low);
    p.clamp_high = j.value("clamp_high", p.clamp_high);
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("bad bias policy: ") + e.what(), "bias");
  }
  return p;
}

double biasing_score(const StructuredUnit& unit, ScoreKind kind) {
  if (kind == ScoreKind::kTreeDepth) return unit.graph.depth();
  double sum = 0.0;
  for (const auto& x : unit.covariates) {
    for (double v : x) sum += v;
  }
  return sum;
}

namespace {

// Linear interpolation between order statistics.
double quantile(const std::vector<double>& sorted, double q) {
  const double pos = q * static_cast<double>(sorted.size() - 1);
  const auto lo = static_cast<std::size_t>(std::floor(pos));
  const auto hi = std::min(lo + 1, sorted.size() - 1);
  return sorted[lo] + (pos - static_cast<double>(lo)) * (sorted[hi] - sorted[lo]);
}

}  // namespace

ScoreStats score_stats(std::span<const StructuredUnit> units, ScoreKind kind) {
  if (units.empty()) throw DataError("score_stats: empty dataset");
  std::vector<double> scores;
  scores.reserve(units.size());
  for (const auto& u : units) scores.push_back(biasing_score(u, kind));
  std::sort(scores.begin(), scores.end());
  ScoreStats stats;
  stats.center = quantile(scores, 0.5);
  const double iqr = quantile(scores, 0.75) - quantile(scores, 0.25);
  if (iqr > 0.0) {
    stats.scale = iqr;
  } else {
    stats.scale = 1.0;
    stats.degenerate = true;
  }
  return stats;
}

double propensity_score(const StructuredUnit& unit, const BiasPolicy& policy,
                        const ScoreStats& stats) {
  const double z = policy.alpha * (biasing_score(unit, policy.kind) - stats.center) / stats.scale;
  const double p = 1.0 / (1.0 + std::exp(-z));
  return std::clamp(p, policy.clamp_low, policy.clamp_high);
}

ObservationalSplit sample_observational(const Dataset& experimental, const BiasPolicy& policy,
                                        std::uint64_t seed) {
  policy.validate();
  if (!experimental.all_experimental()) {
    throw DataError("biasing needs both potential outcomes for every unit");
  }
  ObservationalSplit split;
  split.stats = score_stats(experimental.units, policy.kind);
  split.factual.info = experimental.info;
  split.factual.info.config_hash = hex64(
      fnv1a64(to_json(policy).dump() + std::to_string(seed), fnv1a64(experimental.info.config_hash)));

  for (const auto& unit : experimental.units) {
    TruthRecord truth;
    truth.unit_id = unit.unit_id;
    truth.propensity = propensity_score(unit, policy, split.stats);
    Rng rng = make_rng(seed, "treatment", static_cast<std::uint64_t>(unit.unit_id));
    truth.t = std::bernoulli_distribution(truth.propensity)(rng) ? 1 : 0;
    truth.unit = unit.potential_outcomes();

    StructuredUnit factual;
    factual.unit_id = unit.unit_id;
    factual.graph = unit.graph;
    factual.covariates = unit.covariates;
    for (const auto& o : unit.component_outcomes) {
      const auto& po = std::get<PotentialOutcomes>(o);
      truth.components.push_back(po);
      factual.component_outcomes.push_back(FactualOutcome{truth.t, po.at(truth.t)});
    }
    factual.unit_outcome = FactualOutcome{truth.t, truth.unit.at(truth.t)};
    split.factual.units.push_back(std::move(factual));
    split.truth.push_back(std::move(truth));
  }
  return split;
}

Dataset reconstruct_experimental(const Dataset& factual, std::span<const TruthRecord> truth) {
  if (factual.units.size() != truth.size()) throw DataError("truth/factual unit count mismatch");
  Dataset out;
  out.info = factual.info;
  for (std::size_t i = 0; i < truth.size(); ++i) {
    const auto& f = factual.units[i];
    if (f.unit_id != truth[i].unit_id) throw DataError("truth/factual unit ids out of step");
    StructuredUnit u;
    u.unit_id = f.unit_id;
    u.graph = f.graph;
    u.covariates = f.covariates;
    for (const auto& c : truth[i].components) u.component_outcomes.push_back(c);
    u.unit_outcome = truth[i].unit;
    out.units.push_back(std::move(u));
  }
  return out;
}

nlohmann::ordered_json truth_to_json(const TruthRecord& r, const InteractionGraph& graph) {
  nlohmann::ordered_json j = nlohmann::ordered_json::object();
  j["unit_id"] = r.unit_id;
  j["t"] = r.t;
  j["propensity"] = r.propensity;
  j["tau"] = r.effect();
  j["y_unit"] = {{"y0", r.unit.y0}, {"y1", r.unit.y1}};
  if (!r.components.empty()) {
    nlohmann::ordered_json comps = nlohmann::ordered_json::object();
    for (std::size_t i = 0; i < r.components.size(); ++i) {
      comps[std::to_string(graph.node(i).id)] = {{"y0", r.components[i].y0},
                                                 {"y1", r.components[i].y1}};
    }
    j["y_components"] = std::move(comps);
  }
  return j;
}

TruthRecord truth_from_json(const nlohmann::json& j, const InteractionGraph* graph) {
  TruthRecord r;
  try {
    r.unit_id = j.at("unit_id").get<std::int64_t>();
    r.t = j.at("t").get<int>();
    r.propensity = j.at("propensity").get<double>();
    r.unit = PotentialOutcomes{j.at("y_unit").at("y0").get<double>(),
                               j.at("y_unit").at("y1").get<double>()};
    if (graph != nullptr && j.contains("y_components")) {
      const auto& comps = j.at("y_components");
      for (const auto& node : graph->nodes()) {
        const auto& c = comps.at(std::to_string(node.id));
        r.components.push_back(PotentialOutcomes{c.at("y0").get<double>(), c.at("y1").get<double>()});
      }
    }
  } catch (const nlohmann::json::exception& e) {
    throw DataError(std::string("malformed truth record: ") + e.what());
  }
  return r;
}

std::filesystem::path truth_path(const std::filesystem::path& factual_jsonl) {
  return sidecar_path(factual_jsonl, ".truth.jsonl");
}

void write_truth(const std::filesystem::path& factual_jsonl, const Dataset& factual,
                 std::span<const TruthRecord> truth) {
  std::string text;
  for (std::size_t i = 0; i < truth.size(); ++i) {
    text += truth_to_json(truth[i], factual.units[i].graph).dump();
    text += '\n';
  }
  write_text(truth_path(factual_jsonl), text);
}

std::vector<TruthRecord> read_truth(const std::filesystem::path& factual_jsonl,
                                    const Dataset* factual) {
  const auto path = truth_path(factual_jsonl);
  if (!std::filesystem::exists(path)) throw DataError("missing truth sidecar " + path.string());
  std::istringstream in(read_text(path));
  std::vector<TruthRecord> out;
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    nlohmann::json j;
    try {
      j = nlohmann::json::parse(line);
    } catch (const nlohmann::json::exception& e) {
      throw DataError(path.string() + ": " + e.what());
    }
    const InteractionGraph* graph =
        factual != nullptr && out.size() < factual->units.size() ? &factual->units[out.size()].graph
                                                                 : nullptr;
    out.push_back(truth_from_json(j, graph));
  }
  return out;
}

}  // namespace compcate::bias
