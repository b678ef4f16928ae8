#include "compcate/core/types.hpp"

#include <algorithm>
#include <unordered_map>

#include "compcate/core/error.hpp"

namespace compcate {

std::string_view to_string(CompositionKind kind) {
  switch (kind) {
    case CompositionKind::kParallel:
      return "parallel";
    case CompositionKind::kSequential:
      return "sequential";
    case CompositionKind::kHierarchical:
      return "hierarchical";
  }
  return "hierarchical";
}

CompositionKind parse_composition(std::string_view name) {
  if (name == "parallel") return CompositionKind::kParallel;
  if (name == "sequential") return CompositionKind::kSequential;
  if (name == "hierarchical") return CompositionKind::kHierarchical;
  throw DataError("unknown composition kind '" + std::string(name) + "'");
}

InteractionGraph::InteractionGraph(std::vector<GraphNode> nodes, std::vector<Edge> edges)
    : nodes_(std::move(nodes)), edges_(std::move(edges)) {
  analyze();
}

InteractionGraph InteractionGraph::with_computed_depths(std::vector<GraphNode> nodes,
                                                        std::vector<Edge> edges) {
  InteractionGraph graph(std::move(nodes), std::move(edges));
  if (!graph.is_well_formed()) {
    throw DataError("malformed interaction graph: " + graph.issues_.front().detail);
  }
  for (std::size_t i = 0; i < graph.nodes_.size(); ++i) {
    graph.nodes_[i].depth = graph.computed_depth_[i];
  }
  return graph;
}

std::optional<std::size_t> InteractionGraph::index_of(NodeId id) const {
  for (std::size_t i = 0; i < nodes_.size(); ++i) {
    if (nodes_[i].id == id) return i;
  }
  return std::nullopt;
}

void InteractionGraph::analyze() {
  const std::size_t n = nodes_.size();
  parents_.assign(n, {});
  children_.assign(n, {});
  order_.clear();
  computed_depth_.assign(n, 0);
  issues_.clear();

  if (n == 0) {
    issues_.push_back({"empty", "graph has no nodes"});
    return;
  }

  std::unordered_map<NodeId, std::size_t> index;
  for (std::size_t i = 0; i < n; ++i) {
    if (!index.emplace(nodes_[i].id, i).second) {
      issues_.push_back({"duplicate-id", "node id " + std::to_string(nodes_[i].id) + " repeated"});
    }
  }
  for (const Edge& e : edges_) {
    auto p = index.find(e.parent);
    auto c = index.find(e.child);
    if (p == index.end() || c == index.end()) {
      issues_.push_back({"dangling-edge", "edge " + std::to_string(e.parent) + "->" +
                                              std::to_string(e.child) + " names an unknown node"});
      continue;
    }
    if (p->second == c->second) {
      issues_.push_back({"cycle", "self loop on node " + std::to_string(e.parent)});
      continue;
    }
    parents_[c->second].push_back(p->second);
    children_[p->second].push_back(c->second);
  }
  for (auto& ps : parents_) {
    std::sort(ps.begin(), ps.end(),
              [this](std::size_t a, std::size_t b) { return nodes_[a].id < nodes_[b].id; });
  }

  std::vector<std::size_t> sinks;
  for (std::size_t i = 0; i < n; ++i) {
    if (children_[i].empty()) sinks.push_back(i);
    if (children_[i].size() > 1) {
      issues_.push_back({"multi-child", "node " + std::to_string(nodes_[i].id) +
                                            " feeds more than one child"});
    }
  }
  if (sinks.size() != 1) {
    if (sinks.empty()) {
      issues_.push_back({"cycle", "no sink node; edges form a cycle"});
    } else {
      issues_.push_back({"multi-sink", std::to_string(sinks.size()) + " sink nodes"});
    }
    return;
  }
  sink_ = sinks.front();

  // Iterative post-order from the sink, visiting parents in ascending id.
  std::vector<char> state(n, 0);  // 0 new, 1 open, 2 done
  std::vector<std::pair<std::size_t, std::size_t>> stack{{sink_, 0}};
  state[sink_] = 1;
  while (!stack.empty()) {
    auto& [node, next] = stack.back();
    if (next < parents_[node].size()) {
      std::size_t p = parents_[node][next++];
      if (state[p] == 1) {
        issues_.push_back({"cycle", "cycle through node " + std::to_string(nodes_[p].id)});
        order_.clear();
        return;
      }
      if (state[p] == 0) {
        state[p] = 1;
        stack.emplace_back(p, 0);
      }
      continue;
    }
    state[node] = 2;
    order_.push_back(node);
    stack.pop_back();
  }
  if (order_.size() != n) {
    issues_.push_back({"cycle", std::to_string(n - order_.size()) +
                                    " node(s) do not reach the sink (cycle or detached part)"});
    order_.clear();
    return;
  }
  for (std::size_t i : order_) {
    int d = 0;
    for (std::size_t p : parents_[i]) d = std::max(d, computed_depth_[p]);
    computed_depth_[i] = d + 1;
  }
}

std::size_t InteractionGraph::sink() const {
  if (!is_well_formed()) throw DataError("sink() on malformed graph");
  return sink_;
}

const std::vector<std::size_t>& InteractionGraph::processing_order() const {
  if (!is_well_formed()) {
    throw DataError("malformed interaction graph: " + issues_.front().detail);
  }
  return order_;
}

const std::vector<int>& InteractionGraph::computed_depths() const {
  if (!is_well_formed()) {
    throw DataError("malformed interaction graph: " + issues_.front().detail);
  }
  return computed_depth_;
}

int InteractionGraph::depth() const { return computed_depths()[sink()]; }

std::size_t InteractionGraph::max_in_degree() const {
  std::size_t d = 0;
  for (const auto& ps : parents_) d = std::max(d, ps.size());
  return d;
}

std::vector<NodeId> post_order(const InteractionGraph& graph) {
  std::vector<NodeId> ids;
  ids.reserve(graph.size());
  for (std::size_t i : graph.processing_order()) ids.push_back(graph.node(i).id);
  return ids;
}

double factual_value(const Outcome& outcome) {
  if (const auto* f = std::get_if<FactualOutcome>(&outcome)) return f->y;
  throw DataError("expected a factual outcome");
}

bool StructuredUnit::is_experimental() const {
  return unit_outcome && std::holds_alternative<PotentialOutcomes>(*unit_outcome);
}

bool StructuredUnit::is_factual() const {
  return unit_outcome && std::holds_alternative<FactualOutcome>(*unit_outcome);
}

int StructuredUnit::treatment() const {
  if (!is_factual()) {
    throw DataError("unit " + std::to_string(unit_id) + " carries no factual treatment");
  }
  return std::get<FactualOutcome>(*unit_outcome).t;
}

double StructuredUnit::observed_outcome() const {
  if (!is_factual()) {
    throw DataError("unit " + std::to_string(unit_id) + " carries no factual outcome");
  }
  return std::get<FactualOutcome>(*unit_outcome).y;
}

const PotentialOutcomes& StructuredUnit::potential_outcomes() const {
  if (!is_experimental()) {
    throw DataError("unit " + std::to_string(unit_id) + " carries no potential outcomes");
  }
  return std::get<PotentialOutcomes>(*unit_outcome);
}

std::vector<ClassSpec> DatasetInfo::registry() const {
  std::vector<ClassSpec> out;
  for (int o = 0; o < num_classes; ++o) {
    out.push_back({ClassId{o}, o < static_cast<int>(class_arity.size()) ? class_arity[o] : 1});
  }
  return out;
}

bool Dataset::all_experimental() const {
  return std::all_of(units.begin(), units.end(),
                     [](const StructuredUnit& u) { return u.is_experimental(); });
}

bool Dataset::all_factual() const {
  return std::all_of(units.begin(), units.end(),
                     [](const StructuredUnit& u) { return u.is_factual(); });
}

bool Dataset::has_component_outcomes() const {
  return !units.empty() && std::all_of(units.begin(), units.end(), [](const StructuredUnit& u) {
    return u.has_component_outcomes();
  });
}

}  // namespace compcate
