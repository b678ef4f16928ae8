#pragma once

#include <compare>
#include <cstddef>
#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

namespace compcate {

using NodeId = int;

// Index of one of the k reusable component classes.
struct ClassId {
  int value = 0;
  friend auto operator<=>(const ClassId&, const ClassId&) = default;
};

enum class CompositionKind { kParallel, kSequential, kHierarchical };
enum class Aggregation { kAdditive, kCumulative };

// Parallel units sum component outcomes; sequential/hierarchical units report
// the sink's cumulative outcome.
constexpr Aggregation aggregation_of(CompositionKind kind) {
  return kind == CompositionKind::kParallel ? Aggregation::kAdditive : Aggregation::kCumulative;
}

std::string_view to_string(CompositionKind kind);
CompositionKind parse_composition(std::string_view name);

struct GraphNode {
  NodeId id = 0;
  ClassId cls;
  // 1 for first-processed nodes; a node's depth is one more than its deepest
  // parent, so the sink carries the tree depth.
  int depth = 1;
};

struct Edge {
  NodeId parent = 0;
  NodeId child = 0;
  friend bool operator==(const Edge&, const Edge&) = default;
};

// Directed in-tree: edges point from parents towards the single sink.
// Construction never throws on malformed structure so that validate_unit can
// report what is wrong; structural queries (post_order, sink) require
// is_well_formed().
class InteractionGraph {
 public:
  InteractionGraph() = default;
  InteractionGraph(std::vector<GraphNode> nodes, std::vector<Edge> edges);

  // Builds a graph and overwrites node depths with the values implied by the
  // edges. Throws DataError on a malformed tree.
  static InteractionGraph with_computed_depths(std::vector<GraphNode> nodes,
                                               std::vector<Edge> edges);

  const std::vector<GraphNode>& nodes() const { return nodes_; }
  const std::vector<Edge>& edges() const { return edges_; }
  std::size_t size() const { return nodes_.size(); }
  const GraphNode& node(std::size_t index) const { return nodes_[index]; }

  std::optional<std::size_t> index_of(NodeId id) const;

  // Parent indices sorted by ascending node id.
  const std::vector<std::size_t>& parents(std::size_t index) const { return parents_[index]; }
  const std::vector<std::size_t>& children(std::size_t index) const { return children_[index]; }

  struct Issue {
    std::string kind;  // "duplicate-id", "dangling-edge", "cycle", "multi-sink", ...
    std::string detail;
  };

  bool is_well_formed() const { return issues_.empty(); }
  const std::vector<Issue>& structure_issues() const { return issues_; }

  std::size_t sink() const;
  // Node indices, parents before children, ties by ascending node id.
  const std::vector<std::size_t>& processing_order() const;
  // Depth implied by the edges (independent of the stored node depths).
  const std::vector<int>& computed_depths() const;
  int depth() const;
  std::size_t max_in_degree() const;

 private:
  void analyze();

  std::vector<GraphNode> nodes_;
  std::vector<Edge> edges_;
  std::vector<std::vector<std::size_t>> parents_;
  std::vector<std::vector<std::size_t>> children_;
  std::vector<std::size_t> order_;
  std::vector<int> computed_depth_;
  std::size_t sink_ = 0;
  std::vector<Issue> issues_;
};

// Processing order as node ids (post-order traversal from the sink, parents
// visited in ascending id). Throws DataError for malformed graphs.
std::vector<NodeId> post_order(const InteractionGraph& graph);

struct PotentialOutcomes {
  double y0 = 0.0;
  double y1 = 0.0;
  double effect() const { return y1 - y0; }
  double at(int t) const { return t == 0 ? y0 : y1; }
};

struct FactualOutcome {
  int t = 0;
  double y = 0.0;
};

using Outcome = std::variant<PotentialOutcomes, FactualOutcome>;

double factual_value(const Outcome& outcome);

struct StructuredUnit {
  std::int64_t unit_id = 0;
  InteractionGraph graph;
  // Aligned with graph.nodes().
  std::vector<std::vector<double>> covariates;
  // Empty when component outcomes are not observed, otherwise aligned.
  std::vector<Outcome> component_outcomes;
  std::optional<Outcome> unit_outcome;

  bool is_experimental() const;
  bool is_factual() const;
  bool has_component_outcomes() const { return !component_outcomes.empty(); }
  // Assigned treatment of a factual unit; throws DataError otherwise.
  int treatment() const;
  double observed_outcome() const;
  const PotentialOutcomes& potential_outcomes() const;
};

struct ClassSpec {
  ClassId id;
  int arity = 1;
};

struct DatasetInfo {
  int num_classes = 0;
  std::vector<int> class_arity;
  CompositionKind composition = CompositionKind::kHierarchical;
  int max_in_degree = 2;
  int max_depth = 10;
  std::string source;
  std::uint64_t seed = 0;
  std::string config_hash;

  std::vector<ClassSpec> registry() const;
};

struct Dataset {
  DatasetInfo info;
  std::vector<StructuredUnit> units;

  bool all_experimental() const;
  bool all_factual() const;
  bool has_component_outcomes() const;
};

}  // namespace compcate
