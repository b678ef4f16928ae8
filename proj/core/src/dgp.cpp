#include "compcate/dgp/dgp.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "compcate/core/error.hpp"
#include "compcate/core/io.hpp"

namespace compcate::dgp {

std::vector<double> CovariateLaw::sample(Rng& rng) const {
  std::vector<double> x(mean.size());
  for (std::size_t f = 0; f < x.size(); ++f) {
    if (kind == CovariateLawKind::kGaussian) {
      x[f] = std::normal_distribution<double>(mean[f], scale[f])(rng);
    } else {
      x[f] = std::uniform_real_distribution<double>(mean[f] - scale[f], mean[f] + scale[f])(rng);
    }
  }
  return x;
}

double ComponentClass::mean_outcome(std::span<const double> x,
                                    std::span<const double> parent_values, int t) const {
  const ArmFunction& fn = arm[t == 0 ? 0 : 1];
  double y = fn.intercept;
  for (std::size_t f = 0; f < x.size() && f < fn.coef.size(); ++f) {
    const double s = std::clamp((x[f] - center[f]) / scale[f], -clip, clip);
    double power = 1.0;
    for (double c : fn.coef[f]) {
      power *= s;
      y += c * power;
    }
  }
  if (!parent_values.empty()) {
    const double sum = std::accumulate(parent_values.begin(), parent_values.end(), 0.0);
    y += fn.parent_coef * sum / static_cast<double>(parent_values.size());
  }
  return y;
}

double ground_truth_outcome(const ComponentClass& cls, std::span<const double> x,
                            std::span<const double> parent_values, int t, double noise_draw) {
  return cls.mean_outcome(x, parent_values, t) + cls.noise_sd[t == 0 ? 0 : 1] * noise_draw;
}

void DgpConfig::validate() const {
  if (num_classes < 1) throw ConfigError("need at least one class", "dgp.num_classes");
  if (arity < 1) throw ConfigError("arity must be positive", "dgp.arity");
  if (n_units < 1) throw ConfigError("n_units must be positive", "dgp.n_units");
  if (max_depth < 1) throw ConfigError("max_depth must be positive", "dgp.max_depth");
  if (min_depth < 1) throw ConfigError("min_depth must be positive", "dgp.min_depth");
  if (max_extra_nodes < 0) throw ConfigError("max_extra_nodes must be >= 0", "dgp.max_extra_nodes");
  if (max_in_degree < 1) throw ConfigError("max_in_degree must be positive", "dgp.max_in_degree");
  if (degree < 1 || degree > 3) throw ConfigError("degree must lie in [1, 3]", "dgp.degree");
  if (noise_sd_min < 0.0 || noise_sd_max < noise_sd_min) {
    throw ConfigError("noise range must satisfy 0 <= min <= max", "dgp.noise_sd_min");
  }
  if (structure == StructureMode::kCombination) {
    if (combo_min < 1 || combo_max < combo_min) {
      throw ConfigError("combination range must satisfy 1 <= min <= max", "dgp.combo_min");
    }
    if (combo_max > num_classes) {
      throw ConfigError("combination size exceeds the number of classes", "dgp.combo_max");
    }
  }
}

namespace {

const char* structure_name(StructureMode mode) {
  switch (mode) {
    case StructureMode::kFixed:
      return "fixed";
    case StructureMode::kVariable:
      return "variable";
    case StructureMode::kCombination:
      return "combination";
  }
  return "variable";
}

StructureMode parse_structure(const std::string& name) {
  if (name == "fixed") return StructureMode::kFixed;
  if (name == "variable") return StructureMode::kVariable;
  if (name == "combination") return StructureMode::kCombination;
  throw ConfigError("unknown structure mode '" + name + "'", "dgp.structure");
}

const char* law_name(CovariateLawKind kind) {
  return kind == CovariateLawKind::kGaussian ? "gaussian" : "uniform";
}

CovariateLawKind parse_law(const std::string& name) {
  if (name == "gaussian") return CovariateLawKind::kGaussian;
  if (name == "uniform") return CovariateLawKind::kUniform;
  throw ConfigError("unknown covariate law '" + name + "'", "dgp.covariate_law");
}

int uniform_int(Rng& rng, int lo, int hi) { return std::uniform_int_distribution<int>(lo, hi)(rng); }

// Smallest depth of an in-tree holding `nodes` nodes with in-degree <= d.
int min_depth_for(int nodes, int max_in_degree) {
  if (max_in_degree <= 1) return nodes;
  int depth = 1;
  long capacity = 1, level = 1;
  while (capacity < nodes) {
    level *= max_in_degree;
    capacity += level;
    ++depth;
  }
  return depth;
}

}  // namespace

nlohmann::ordered_json to_json(const DgpConfig& c) {
  nlohmann::ordered_json j = nlohmann::ordered_json::object();
  j["num_classes"] = c.num_classes;
  j["arity"] = c.arity;
  j["composition"] = std::string(to_string(c.composition));
  j["n_units"] = c.n_units;
  j["seed"] = c.seed;
  j["structure"] = structure_name(c.structure);
  j["min_depth"] = c.min_depth;
  j["max_depth"] = c.max_depth;
  j["max_extra_nodes"] = c.max_extra_nodes;
  j["max_in_degree"] = c.max_in_degree;
  j["combo_min"] = c.combo_min;
  j["combo_max"] = c.combo_max;
  j["degree"] = c.degree;
  j["covariate_law"] = law_name(c.covariate_law);
  j["noise_sd_min"] = c.noise_sd_min;
  j["noise_sd_max"] = c.noise_sd_max;
  return j;
}

DgpConfig dgp_config_from_json(const nlohmann::json& j) {
  DgpConfig c;
  try {
    c.num_classes = j.value("num_classes", c.num_classes);
    c.arity = j.value("arity", c.arity);
    if (j.contains("composition")) {
      c.composition = parse_composition(j.at("composition").get<std::string>());
    }
    c.n_units = j.value("n_units", c.n_units);
    c.seed = j.value("seed", c.seed);
    if (j.contains("structure")) c.structure = parse_structure(j.at("structure").get<std::string>());
    c.min_depth = j.value("min_depth", c.min_depth);
    c.max_depth = j.value("max_depth", c.max_depth);
    c.max_extra_nodes = j.value("max_extra_nodes", c.max_extra_nodes);
    c.max_in_degree = j.value("max_in_degree", c.max_in_degree);
    c.combo_min = j.value("combo_min", c.combo_min);
    c.combo_max = j.value("combo_max", c.combo_max);
    c.degree = j.value("degree", c.degree);
    if (j.contains("covariate_law")) {
      c.covariate_law = parse_law(j.at("covariate_law").get<std::string>());
    }
    c.noise_sd_min = j.value("noise_sd_min", c.noise_sd_min);
    c.noise_sd_max = j.value("noise_sd_max", c.noise_sd_max);
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("bad dgp config: ") + e.what(), "dgp");
  } catch (const DataError& e) {
    throw ConfigError(e.what(), "dgp.composition");
  }
  return c;
}

std::vector<ComponentClass> sample_classes(const DgpConfig& config) {
  config.validate();
  Rng rng = make_rng(config.seed, "classes");
  std::uniform_real_distribution<double> coef(-1.0, 1.0);
  std::uniform_real_distribution<double> mean(0.0, 3.0);
  // Scales strictly inside (0, 3].
  std::uniform_real_distribution<double> scale(0.1, 3.0);
  std::uniform_real_distribution<double> noise(config.noise_sd_min, config.noise_sd_max);

  std::vector<ComponentClass> classes;
  for (int o = 0; o < config.num_classes; ++o) {
    ComponentClass cls;
    cls.id = ClassId{o};
    cls.arity = config.arity;
    cls.law.kind = config.covariate_law;
    for (int f = 0; f < config.arity; ++f) {
      cls.law.mean.push_back(mean(rng));
      cls.law.scale.push_back(scale(rng));
    }
    cls.center = cls.law.mean;
    cls.scale = cls.law.scale;
    for (int t = 0; t < 2; ++t) {
      ArmFunction& fn = cls.arm[t];
      fn.intercept = coef(rng);
      fn.coef.assign(config.arity, std::vector<double>(config.degree));
      for (auto& row : fn.coef) {
        for (double& c : row) c = coef(rng);
      }
      fn.parent_coef = config.composition == CompositionKind::kParallel ? 0.0 : coef(rng);
      cls.noise_sd[t] = config.noise_sd_min == config.noise_sd_max ? config.noise_sd_min : noise(rng);
    }
    classes.push_back(std::move(cls));
  }
  return classes;
}

InteractionGraph sample_tree(const DgpConfig& config, Rng& rng) {
  std::vector<int> chosen;
  int depth = config.max_depth;
  int min_nodes = 1;
  const bool chain = config.composition == CompositionKind::kSequential || config.max_in_degree == 1;
  const int lo = std::min(config.min_depth, config.max_depth);

  if (config.structure == StructureMode::kVariable) {
    depth = uniform_int(rng, lo, config.max_depth);
  } else if (config.structure == StructureMode::kCombination) {
    const int c = uniform_int(rng, config.combo_min, config.combo_max);
    std::vector<int> all(config.num_classes);
    std::iota(all.begin(), all.end(), 0);
    std::shuffle(all.begin(), all.end(), rng);
    chosen.assign(all.begin(), all.begin() + c);
    min_nodes = c;
    int depth_lo = std::max(lo, chain ? c : 1);
    if (!chain) {
      // Spine of `depth` plus at most max_extra_nodes side nodes must hold c.
      depth_lo = std::max({depth_lo, c - config.max_extra_nodes,
                           min_depth_for(c, config.max_in_degree)});
    }
    if (depth_lo > config.max_depth) {
      throw ConfigError("combination of " + std::to_string(c) +
                            " classes does not fit within max_depth/max_extra_nodes",
                        "dgp.combo_max");
    }
    depth = uniform_int(rng, depth_lo, config.max_depth);
  }

  // Spine: node i feeds node i + 1; the last node is the sink.
  std::vector<int> child(depth, -1);
  std::vector<int> in_degree(depth, 0);
  for (int i = 0; i + 1 < depth; ++i) {
    child[i] = i + 1;
    in_degree[i + 1] = 1;
  }

  if (!chain) {
    int extras = uniform_int(rng, 0, config.max_extra_nodes);
    extras = std::max(extras, min_nodes - depth);
    for (int e = 0; e < extras; ++e) {
      const int n = static_cast<int>(child.size());
      // Recompute depths; a new leaf may only attach where it keeps the tree
      // within the target depth.
      // Side nodes get ids after their children, so relax to a fixpoint.
      std::vector<int> node_depth(n, 1);
      bool changed = true;
      while (changed) {
        changed = false;
        for (int i = 0; i < n; ++i) {
          if (child[i] >= 0 && node_depth[child[i]] < node_depth[i] + 1) {
            node_depth[child[i]] = node_depth[i] + 1;
            changed = true;
          }
        }
      }
      std::vector<int> candidates;
      for (int v = 0; v < n; ++v) {
        if (in_degree[v] >= config.max_in_degree) continue;
        if (in_degree[v] == 0) {
          // v becomes depth 2; walk towards the sink checking the bound.
          int d = 2, w = v, ok = 1;
          while (child[w] >= 0) {
            const int next = child[w];
            const int nd = std::max(node_depth[next], d + 1);
            if (nd > depth) {
              ok = 0;
              break;
            }
            if (nd == node_depth[next]) break;
            d = nd;
            w = next;
          }
          if (!ok || (child[v] < 0 && 2 > depth)) continue;
        }
        candidates.push_back(v);
      }
      if (candidates.empty()) break;
      const int target = candidates[uniform_int(rng, 0, static_cast<int>(candidates.size()) - 1)];
      child.push_back(target);
      in_degree.push_back(0);
      ++in_degree[target];
    }
    if (static_cast<int>(child.size()) < min_nodes) {
      throw ConfigError("could not place " + std::to_string(min_nodes) + " nodes in a tree of depth " +
                            std::to_string(depth),
                        "dgp.max_extra_nodes");
    }
  }

  const int n = static_cast<int>(child.size());
  std::vector<int> cls(n);
  if (chosen.empty()) {
    for (int& c : cls) c = uniform_int(rng, 0, config.num_classes - 1);
  } else {
    std::vector<int> slots(n);
    std::iota(slots.begin(), slots.end(), 0);
    std::shuffle(slots.begin(), slots.end(), rng);
    for (int i = 0; i < n; ++i) {
      cls[slots[i]] = i < static_cast<int>(chosen.size())
                          ? chosen[i]
                          : chosen[uniform_int(rng, 0, static_cast<int>(chosen.size()) - 1)];
    }
  }

  std::vector<GraphNode> nodes;
  std::vector<Edge> edges;
  for (int i = 0; i < n; ++i) {
    nodes.push_back({i, ClassId{cls[i]}, 1});
    if (child[i] >= 0) edges.push_back({i, child[i]});
  }
  return InteractionGraph::with_computed_depths(std::move(nodes), std::move(edges));
}

void fill_potential_outcomes(StructuredUnit& unit, std::span<const ComponentClass> classes,
                             CompositionKind composition, Rng& noise_rng) {
  const auto& graph = unit.graph;
  const std::size_t n = graph.size();
  std::vector<double> y[2] = {std::vector<double>(n), std::vector<double>(n)};
  std::normal_distribution<double> normal;
  std::vector<double> parents;
  for (std::size_t i : graph.processing_order()) {
    const double z = normal(noise_rng);
    const ComponentClass& cls = classes[graph.node(i).cls.value];
    for (int t = 0; t < 2; ++t) {
      parents.clear();
      if (composition != CompositionKind::kParallel) {
        for (std::size_t p : graph.parents(i)) parents.push_back(y[t][p]);
      }
      y[t][i] = ground_truth_outcome(cls, unit.covariates[i], parents, t, z);
    }
  }
  unit.component_outcomes.clear();
  for (std::size_t i = 0; i < n; ++i) {
    unit.component_outcomes.push_back(PotentialOutcomes{y[0][i], y[1][i]});
  }
  PotentialOutcomes total;
  if (aggregation_of(composition) == Aggregation::kAdditive) {
    total.y0 = std::accumulate(y[0].begin(), y[0].end(), 0.0);
    total.y1 = std::accumulate(y[1].begin(), y[1].end(), 0.0);
  } else {
    total = PotentialOutcomes{y[0][graph.sink()], y[1][graph.sink()]};
  }
  unit.unit_outcome = total;
}

Dataset generate_experimental_dataset(const DgpConfig& config,
                                      std::span<const ComponentClass> classes) {
  config.validate();
  if (static_cast<int>(classes.size()) != config.num_classes) {
    throw ConfigError("class library size does not match num_classes", "dgp.num_classes");
  }
  Dataset dataset;
  dataset.info.num_classes = config.num_classes;
  dataset.info.class_arity.assign(config.num_classes, config.arity);
  dataset.info.composition = config.composition;
  dataset.info.max_in_degree = config.max_in_degree;
  dataset.info.max_depth = config.max_depth;
  dataset.info.source = "dgp";
  dataset.info.seed = config.seed;
  dataset.info.config_hash = hex64(fnv1a64(to_json(config).dump()));

  dataset.units.resize(config.n_units);
  for (int u = 0; u < config.n_units; ++u) {
    Rng rng = make_rng(config.seed, "unit", static_cast<std::uint64_t>(u));
    StructuredUnit& unit = dataset.units[u];
    unit.unit_id = u;
    unit.graph = sample_tree(config, rng);
    for (const auto& node : unit.graph.nodes()) {
      unit.covariates.push_back(classes[node.cls.value].law.sample(rng));
    }
    Rng noise_rng = make_rng(config.seed, "noise", static_cast<std::uint64_t>(u));
    fill_potential_outcomes(unit, classes, config.composition, noise_rng);
  }
  return dataset;
}

Dataset generate_experimental_dataset(const DgpConfig& config) {
  const auto classes = sample_classes(config);
  return generate_experimental_dataset(config, classes);
}

double oracle_effect(const StructuredUnit& unit, std::span<const ComponentClass> classes,
                     CompositionKind composition) {
  const auto& graph = unit.graph;
  std::vector<double> y[2] = {std::vector<double>(graph.size()), std::vector<double>(graph.size())};
  std::vector<double> parents;
  for (std::size_t i : graph.processing_order()) {
    const ComponentClass& cls = classes[graph.node(i).cls.value];
    for (int t = 0; t < 2; ++t) {
      parents.clear();
      if (composition != CompositionKind::kParallel) {
        for (std::size_t p : graph.parents(i)) parents.push_back(y[t][p]);
      }
      y[t][i] = cls.mean_outcome(unit.covariates[i], parents, t);
    }
  }
  if (aggregation_of(composition) == Aggregation::kAdditive) {
    double effect = 0.0;
    for (std::size_t i = 0; i < graph.size(); ++i) effect += y[1][i] - y[0][i];
    return effect;
  }
  return y[1][graph.sink()] - y[0][graph.sink()];
}

nlohmann::ordered_json to_json(const ComponentClass& cls) {
  nlohmann::ordered_json j = nlohmann::ordered_json::object();
  j["id"] = cls.id.value;
  j["arity"] = cls.arity;
  j["law"] = {{"kind", law_name(cls.law.kind)}, {"mean", cls.law.mean}, {"scale", cls.law.scale}};
  j["center"] = cls.center;
  j["scale"] = cls.scale;
  j["clip"] = cls.clip;
  nlohmann::ordered_json arms = nlohmann::ordered_json::array();
  for (int t = 0; t < 2; ++t) {
    nlohmann::ordered_json a = nlohmann::ordered_json::object();
    a["intercept"] = cls.arm[t].intercept;
    a["coef"] = cls.arm[t].coef;
    a["parent_coef"] = cls.arm[t].parent_coef;
    a["noise_sd"] = cls.noise_sd[t];
    arms.push_back(std::move(a));
  }
  j["arms"] = std::move(arms);
  return j;
}

ComponentClass component_class_from_json(const nlohmann::json& j) {
  ComponentClass cls;
  try {
    cls.id = ClassId{j.at("id").get<int>()};
    cls.arity = j.at("arity").get<int>();
    cls.law.kind = parse_law(j.at("law").at("kind").get<std::string>());
    cls.law.mean = j.at("law").at("mean").get<std::vector<double>>();
    cls.law.scale = j.at("law").at("scale").get<std::vector<double>>();
    cls.center = j.at("center").get<std::vector<double>>();
    cls.scale = j.at("scale").get<std::vector<double>>();
    cls.clip = j.at("clip").get<double>();
    for (int t = 0; t < 2; ++t) {
      const auto& a = j.at("arms").at(t);
      cls.arm[t].intercept = a.at("intercept").get<double>();
      cls.arm[t].coef = a.at("coef").get<std::vector<std::vector<double>>>();
      cls.arm[t].parent_coef = a.at("parent_coef").get<double>();
      cls.noise_sd[t] = a.at("noise_sd").get<double>();
    }
  } catch (const nlohmann::json::exception& e) {
    throw DataError(std::string("malformed class record: ") + e.what());
  } catch (const ConfigError& e) {
    throw DataError(e.what());
  }
  return cls;
}

void write_class_sidecar(const std::filesystem::path& jsonl, const DgpConfig& config,
                         std::span<const ComponentClass> classes) {
  nlohmann::ordered_json doc = nlohmann::ordered_json::object();
  doc["format"] = "compcate.classes/1";
  doc["config"] = to_json(config);
  nlohmann::ordered_json list = nlohmann::ordered_json::array();
  for (const auto& cls : classes) list.push_back(to_json(cls));
  doc["classes"] = std::move(list);
  write_text(sidecar_path(jsonl, ".classes.json"), doc.dump(2) + "\n");
}

std::vector<ComponentClass> read_class_sidecar(const std::filesystem::path& jsonl) {
  const auto path = sidecar_path(jsonl, ".classes.json");
  nlohmann::json doc;
  try {
    doc = nlohmann::json::parse(read_text(path));
  } catch (const nlohmann::json::exception& e) {
    throw DataError(path.string() + ": " + e.what());
  }
  std::vector<ComponentClass> classes;
  for (const auto& c : doc.at("classes")) classes.push_back(component_class_from_json(c));
  return classes;
}

}  // namespace compcate::dgp
