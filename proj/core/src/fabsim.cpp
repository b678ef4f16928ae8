#include "compcate/fabsim/fabsim.hpp"

#include <algorithm>
#include <cmath>
#include <deque>
#include <queue>
#include <set>

#include "compcate/core/error.hpp"
#include "compcate/core/random.hpp"

namespace compcate::fabsim {

std::string_view to_string(Archetype a) {
  switch (a) {
    case Archetype::kMaterialProcessing:
      return "material_processing";
    case Archetype::kMaterialJoining:
      return "material_joining";
    case Archetype::kElectronicsProcessing:
      return "electronics_processing";
    case Archetype::kAssembly:
      return "assembly";
  }
  return "assembly";
}

int max_parents(Archetype a) { return a == Archetype::kMaterialProcessing ? 1 : 2; }

const std::vector<RawItem>& raw_items_used(Archetype a) {
  static const std::vector<RawItem> processing{RawItem::kRawMaterial};
  static const std::vector<RawItem> joining{RawItem::kFastener, RawItem::kRawMaterial};
  static const std::vector<RawItem> electronics{RawItem::kElectronicComponent};
  static const std::vector<RawItem> assembly{RawItem::kFastener, RawItem::kMisc};
  switch (a) {
    case Archetype::kMaterialProcessing:
      return processing;
    case Archetype::kMaterialJoining:
      return joining;
    case Archetype::kElectronicsProcessing:
      return electronics;
    case Archetype::kAssembly:
      return assembly;
  }
  return assembly;
}

double base_time_of(Archetype a) {
  constexpr double kTimes[kArchetypeCount] = {1.0, 1.5, 2.0, 2.5};
  return kTimes[static_cast<int>(a)];
}

InteractionGraph Layout::graph() const {
  std::vector<GraphNode> nodes;
  for (const auto& s : stations) nodes.push_back({s.id, ClassId{static_cast<int>(s.archetype)}, 1});
  return InteractionGraph::with_computed_depths(std::move(nodes), edges);
}

Layout build_layout(int layout_id, std::uint64_t seed, const LayoutConfig& config) {
  if (layout_id < 0 || layout_id >= kLayoutCount) {
    throw DataError("layout id " + std::to_string(layout_id) + " outside [0, " +
                    std::to_string(kLayoutCount) + ")");
  }
  Rng rng = make_rng(seed, "layout", static_cast<std::uint64_t>(layout_id));
  auto pick = [&](int lo, int hi) { return std::uniform_int_distribution<int>(lo, hi)(rng); };
  std::uniform_real_distribution<double> jitter(0.8, 1.2);
  std::uniform_real_distribution<double> complexity(1.0, 2.0);

  const int depth = pick(config.min_depth, std::min(config.max_depth, config.max_stations));
  // Spine: station i feeds station i + 1, the last one is the Assembly sink.
  std::vector<Archetype> kind(depth);
  std::vector<int> child(depth, -1);
  std::vector<int> in_degree(depth, 0);
  for (int i = 0; i < depth; ++i) {
    kind[i] = i + 1 == depth ? Archetype::kAssembly : static_cast<Archetype>(pick(0, 3));
    if (i + 1 < depth) {
      child[i] = i + 1;
      in_degree[i + 1] = 1;
    }
  }

  const int extras = pick(0, config.max_stations - depth);
  for (int e = 0; e < extras; ++e) {
    const int n = static_cast<int>(kind.size());
    std::vector<int> node_depth(n, 1);
    for (bool changed = true; changed;) {
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
      if (in_degree[v] >= max_parents(kind[v])) continue;
      if (in_degree[v] == 0) {
        // Only attach to a leaf if the layout stays within its spine depth.
        bool ok = true;
        for (int d = 2, w = v; child[w] >= 0;) {
          const int next = child[w];
          const int nd = std::max(node_depth[next], d + 1);
          if (nd > depth) {
            ok = false;
            break;
          }
          if (nd == node_depth[next]) break;
          d = nd;
          w = next;
        }
        if (!ok || (child[v] < 0 && depth < 2)) continue;
      }
      candidates.push_back(v);
    }
    if (candidates.empty()) break;
    const int target = candidates[pick(0, static_cast<int>(candidates.size()) - 1)];
    kind.push_back(static_cast<Archetype>(pick(0, 2)));
    child.push_back(target);
    in_degree.push_back(0);
    ++in_degree[target];
  }

  Layout layout;
  layout.layout_id = layout_id;
  for (int i = 0; i < static_cast<int>(kind.size()); ++i) {
    layout.stations.push_back({i, kind[i], base_time_of(kind[i]) * jitter(rng), complexity(rng)});
    if (child[i] >= 0) layout.edges.push_back({i, child[i]});
  }
  return layout;
}

nlohmann::ordered_json to_json(const Layout& layout) {
  nlohmann::ordered_json j = nlohmann::ordered_json::object();
  j["layout_id"] = layout.layout_id;
  nlohmann::ordered_json stations = nlohmann::ordered_json::array();
  for (const auto& s : layout.stations) {
    stations.push_back({{"id", s.id},
                        {"archetype", std::string(to_string(s.archetype))},
                        {"base_time", s.base_time},
                        {"complexity", s.complexity}});
  }
  j["stations"] = std::move(stations);
  nlohmann::ordered_json edges = nlohmann::ordered_json::array();
  for (const auto& e : layout.edges) edges.push_back({e.parent, e.child});
  j["edges"] = std::move(edges);
  return j;
}

std::vector<double> draw_worker_skills(const WorkerPoolConfig& pool, std::uint64_t seed, int arm) {
  Rng rng = make_rng(seed, "workers", static_cast<std::uint64_t>(arm));
  std::normal_distribution<double> law(pool.skill.mean, pool.skill.sd);
  std::vector<double> skills;
  while (static_cast<int>(skills.size()) < pool.size) {
    const double s = law(rng);
    if (s > 0.0 && s <= 1.0) skills.push_back(s);
  }
  return skills;
}

namespace {

struct Event {
  double time;
  int station;
  std::uint64_t id;
  int worker;
};

struct EventLater {
  bool operator()(const Event& a, const Event& b) const {
    if (a.time != b.time) return a.time > b.time;
    if (a.station != b.station) return a.station > b.station;
    return a.id > b.id;
  }
};

struct StationState {
  std::vector<std::size_t> parents;
  int child = -1;
  int slot_in_child = 0;
  std::vector<int> buffer;  // parts waiting from each parent
  std::array<int, kRawItemCount> stock{};
  const std::vector<RawItem>* items = nullptr;
  bool busy = false;
  bool waiting = false;
  bool pending_scrap = false;
  Rng rng;
};

}  // namespace

SimResult simulate_run(const SimRun& run) {
  if (run.layout == nullptr) throw DataError("simulate_run: no layout");
  const Layout& layout = *run.layout;
  const auto graph = layout.graph();
  const std::size_t n = graph.size();
  if (run.inventory.size() != n) throw DataError("simulate_run: inventory/station count mismatch");
  if (run.demand < 0) throw DataError("simulate_run: negative demand");

  SimResult result;
  result.stations.resize(n);
  std::vector<StationState> st(n);
  for (std::size_t i = 0; i < n; ++i) {
    st[i].parents = graph.parents(i);
    st[i].buffer.assign(st[i].parents.size(), 0);
    st[i].stock = run.inventory[i];
    st[i].items = &raw_items_used(layout.stations[i].archetype);
    st[i].rng = make_rng(run.seed, "station", static_cast<std::uint64_t>(layout.stations[i].id));
    result.stations[i].consumed.assign(st[i].parents.size(), 0);
  }
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t k = 0; k < st[i].parents.size(); ++k) {
      st[st[i].parents[k]].child = static_cast<int>(i);
      st[st[i].parents[k]].slot_in_child = static_cast<int>(k);
    }
  }

  const auto& pool = run.params.pools[run.arm == 0 ? 0 : 1];
  std::vector<double> skills = draw_worker_skills(pool, run.seed, run.arm);
  if (run.params.fixed_skill > 0.0) std::fill(skills.begin(), skills.end(), run.params.fixed_skill);
  std::deque<int> idle;
  for (int w = 0; w < static_cast<int>(skills.size()); ++w) idle.push_back(w);

  // (request time, station) keeps the wait list deterministic.
  std::set<std::pair<double, std::size_t>> ready;
  std::priority_queue<Event, std::vector<Event>, EventLater> events;
  std::uint64_t next_event = 0;
  double now = 0.0;

  auto can_attempt = [&](std::size_t s) {
    if (result.stations[s].good >= run.demand) return false;
    for (int b : st[s].buffer) {
      if (b < 1) return false;
    }
    for (RawItem item : *st[s].items) {
      if (st[s].stock[static_cast<int>(item)] < 1) return false;
    }
    return true;
  };
  auto request = [&](std::size_t s) {
    if (st[s].busy || st[s].waiting || !can_attempt(s)) return;
    st[s].waiting = true;
    ready.emplace(now, s);
  };
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  auto dispatch = [&] {
    while (!idle.empty() && !ready.empty()) {
      const std::size_t s = ready.begin()->second;
      ready.erase(ready.begin());
      st[s].waiting = false;
      if (!can_attempt(s)) continue;
      const int w = idle.front();
      idle.pop_front();
      for (std::size_t k = 0; k < st[s].buffer.size(); ++k) {
        --st[s].buffer[k];
        ++result.stations[s].consumed[k];
      }
      for (RawItem item : *st[s].items) --st[s].stock[static_cast<int>(item)];
      auto& stats = result.stations[s];
      ++stats.attempts;
      const double skill = skills[w];
      const double u_rework = unit(st[s].rng);
      const double u_scrap = unit(st[s].rng);
      double duration = layout.stations[s].base_time * layout.stations[s].complexity / skill;
      if (u_rework < run.params.rework_coef * (1.0 - skill)) {
        duration *= 1.0 + run.params.rework_extra;
        ++stats.reworked;
      }
      st[s].pending_scrap = u_scrap < run.params.scrap_coef * (1.0 - skill);
      st[s].busy = true;
      stats.busy_time += duration;
      events.push({now + duration, static_cast<int>(s), next_event++, w});
    }
  };

  for (std::size_t s = 0; s < n; ++s) request(s);
  dispatch();
  while (!events.empty()) {
    const Event ev = events.top();
    events.pop();
    now = ev.time;
    const auto s = static_cast<std::size_t>(ev.station);
    auto& stats = result.stations[s];
    st[s].busy = false;
    stats.finish_time = now;
    idle.push_back(ev.worker);
    if (st[s].pending_scrap) {
      ++stats.scrapped;
    } else {
      ++stats.good;
      if (st[s].child >= 0) {
        const auto c = static_cast<std::size_t>(st[s].child);
        ++st[c].buffer[st[s].slot_in_child];
        request(c);
      }
    }
    request(s);
    dispatch();
  }

  result.total_parts = result.stations[graph.sink()].good;
  result.total_time = now;
  return result;
}

void FabsimConfig::validate() const {
  if (n_units < 1) throw ConfigError("n_units must be positive", "fabsim.n_units");
  if (n_layouts < 1 || n_layouts > kLayoutCount) {
    throw ConfigError("n_layouts must lie in [1, 50]", "fabsim.n_layouts");
  }
  if (demand_min < 0 || demand_max < demand_min) {
    throw ConfigError("demand range must satisfy 0 <= min <= max", "fabsim.demand_min");
  }
  if (margin_min < 0.0 || margin_max < margin_min) {
    throw ConfigError("margin range must satisfy 0 <= min <= max", "fabsim.margin_min");
  }
  if (layout.min_depth < 1 || layout.max_depth < layout.min_depth ||
      layout.max_stations < layout.min_depth) {
    throw ConfigError("layout depth/station bounds are inconsistent", "fabsim.layout");
  }
  for (int t = 0; t < 2; ++t) {
    const auto& pool = params.pools[t];
    const std::string path = t == 0 ? "fabsim.arm0" : "fabsim.arm1";
    if (pool.size < 1) throw ConfigError("worker pool must be non-empty", path + ".workers");
    if (pool.skill.sd < 0.0) throw ConfigError("skill sd must be >= 0", path + ".skill_sd");
    if (pool.skill.sd == 0.0 && (pool.skill.mean <= 0.0 || pool.skill.mean > 1.0)) {
      throw ConfigError("skill must lie in (0, 1]", path + ".skill_mean");
    }
  }
  if (params.scrap_coef < 0.0 || params.scrap_coef > 1.0) {
    throw ConfigError("scrap coefficient must lie in [0, 1]", "fabsim.scrap_coef");
  }
  if (params.rework_coef < 0.0 || params.rework_coef > 1.0) {
    throw ConfigError("rework coefficient must lie in [0, 1]", "fabsim.rework_coef");
  }
}

nlohmann::ordered_json to_json(const FabsimConfig& c) {
  nlohmann::ordered_json j = nlohmann::ordered_json::object();
  j["n_units"] = c.n_units;
  j["seed"] = c.seed;
  j["n_layouts"] = c.n_layouts;
  j["min_depth"] = c.layout.min_depth;
  j["max_depth"] = c.layout.max_depth;
  j["max_stations"] = c.layout.max_stations;
  j["demand_min"] = c.demand_min;
  j["demand_max"] = c.demand_max;
  j["margin_min"] = c.margin_min;
  j["margin_max"] = c.margin_max;
  for (int t = 0; t < 2; ++t) {
    const std::string arm = t == 0 ? "arm0" : "arm1";
    j[arm] = {{"workers", c.params.pools[t].size},
              {"skill_mean", c.params.pools[t].skill.mean},
              {"skill_sd", c.params.pools[t].skill.sd}};
  }
  j["scrap_coef"] = c.params.scrap_coef;
  j["rework_coef"] = c.params.rework_coef;
  j["rework_extra"] = c.params.rework_extra;
  return j;
}

FabsimConfig fabsim_config_from_json(const nlohmann::json& j) {
  FabsimConfig c;
  try {
    c.n_units = j.value("n_units", c.n_units);
    c.seed = j.value("seed", c.seed);
    c.n_layouts = j.value("n_layouts", c.n_layouts);
    c.layout.min_depth = j.value("min_depth", c.layout.min_depth);
    c.layout.max_depth = j.value("max_depth", c.layout.max_depth);
    c.layout.max_stations = j.value("max_stations", c.layout.max_stations);
    c.demand_min = j.value("demand_min", c.demand_min);
    c.demand_max = j.value("demand_max", c.demand_max);
    c.margin_min = j.value("margin_min", c.margin_min);
    c.margin_max = j.value("margin_max", c.margin_max);
    for (int t = 0; t < 2; ++t) {
      const std::string arm = t == 0 ? "arm0" : "arm1";
      if (!j.contains(arm)) continue;
      const auto& a = j.at(arm);
      c.params.pools[t].size = a.value("workers", c.params.pools[t].size);
      c.params.pools[t].skill.mean = a.value("skill_mean", c.params.pools[t].skill.mean);
      c.params.pools[t].skill.sd = a.value("skill_sd", c.params.pools[t].skill.sd);
    }
    c.params.scrap_coef = j.value("scrap_coef", c.params.scrap_coef);
    c.params.rework_coef = j.value("rework_coef", c.params.rework_coef);
    c.params.rework_extra = j.value("rework_extra", c.params.rework_extra);
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("bad fabsim config: ") + e.what(), "fabsim");
  }
  return c;
}

namespace {

// demand, four inventory counts, base time, complexity, upstream count,
// tightest inventory-to-demand ratio, layout size.
std::vector<double> station_features(const Layout& layout, const InteractionGraph& graph,
                                     std::size_t s, int demand,
                                     const std::array<int, kRawItemCount>& stock) {
  const Station& station = layout.stations[s];
  std::vector<double> x;
  x.reserve(kStationFeatures);
  x.push_back(demand);
  for (int k = 0; k < kRawItemCount; ++k) x.push_back(stock[k]);
  x.push_back(station.base_time);
  x.push_back(station.complexity);
  x.push_back(static_cast<double>(graph.parents(s).size()));
  double ratio = 0.0;
  if (demand > 0) {
    ratio = std::numeric_limits<double>::infinity();
    for (RawItem item : raw_items_used(station.archetype)) {
      ratio = std::min(ratio, stock[static_cast<int>(item)] / static_cast<double>(demand));
    }
  }
  x.push_back(ratio);
  x.push_back(static_cast<double>(layout.stations.size()));
  return x;
}

}  // namespace

ManufacturingData generate_manufacturing_dataset(const FabsimConfig& config) {
  config.validate();
  std::vector<Layout> layouts;
  std::vector<InteractionGraph> graphs;
  for (int l = 0; l < config.n_layouts; ++l) {
    layouts.push_back(build_layout(l, config.seed, config.layout));
    graphs.push_back(layouts.back().graph());
  }

  ManufacturingData out;
  DatasetInfo& info = out.dataset.info;
  info.num_classes = kArchetypeCount;
  info.class_arity.assign(kArchetypeCount, kStationFeatures);
  info.composition = CompositionKind::kHierarchical;
  info.max_in_degree = 2;
  info.max_depth = config.layout.max_depth;
  info.source = "fabsim";
  info.seed = config.seed;
  info.config_hash = hex64(fnv1a64(to_json(config).dump()));

  out.dataset.units.resize(config.n_units);
  out.aux.resize(config.n_units);
  for (int u = 0; u < config.n_units; ++u) {
    Rng rng = make_rng(config.seed, "unit", static_cast<std::uint64_t>(u));
    const int l = std::uniform_int_distribution<int>(0, config.n_layouts - 1)(rng);
    const Layout& layout = layouts[l];
    const InteractionGraph& graph = graphs[l];
    const int demand = std::uniform_int_distribution<int>(config.demand_min, config.demand_max)(rng);

    // Per raw item: a total margin over what the consuming stations need,
    // split with random weights.
    const std::size_t n = layout.stations.size();
    Inventory inventory(n, std::array<int, kRawItemCount>{});
    std::uniform_real_distribution<double> margin(config.margin_min, config.margin_max);
    std::uniform_real_distribution<double> weight(0.8, 1.2);
    for (int k = 0; k < kRawItemCount; ++k) {
      std::vector<std::size_t> users;
      for (std::size_t s = 0; s < n; ++s) {
        for (RawItem item : raw_items_used(layout.stations[s].archetype)) {
          if (static_cast<int>(item) == k) users.push_back(s);
        }
      }
      const double total = margin(rng) * demand * static_cast<double>(users.size());
      std::vector<double> w(users.size());
      double wsum = 0.0;
      for (double& v : w) wsum += (v = weight(rng));
      for (std::size_t i = 0; i < users.size(); ++i) {
        inventory[users[i]][k] = static_cast<int>(std::floor(total * w[i] / wsum));
      }
    }

    SimRun run{&layout, demand, inventory, 0, derive_seed(config.seed, "run", u), config.params};
    const SimResult r0 = simulate_run(run);
    run.arm = 1;
    const SimResult r1 = simulate_run(run);

    StructuredUnit& unit = out.dataset.units[u];
    unit.unit_id = u;
    unit.graph = graph;
    for (std::size_t s = 0; s < n; ++s) {
      unit.covariates.push_back(station_features(layout, graph, s, demand, inventory[s]));
      unit.component_outcomes.push_back(
          PotentialOutcomes{static_cast<double>(r0.stations[s].good),
                            static_cast<double>(r1.stations[s].good)});
    }
    unit.unit_outcome = PotentialOutcomes{static_cast<double>(r0.total_parts),
                                          static_cast<double>(r1.total_parts)};
    out.aux[u] = AuxOutcomes{u, l, demand, {r0.total_time, r1.total_time},
                             {r0.parts_per_time(), r1.parts_per_time()}};
  }
  return out;
}

}  // namespace compcate::fabsim
