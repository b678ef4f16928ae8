#include "compcate/core/validate.hpp"

#include <algorithm>

namespace compcate {

bool ValidationReport::has(std::string_view kind) const {
  return std::any_of(violations.begin(), violations.end(),
                     [&](const Violation& v) { return v.kind == kind; });
}

std::string ValidationReport::summary() const {
  if (ok()) return "OK";
  std::string out;
  for (const auto& v : violations) {
    if (!out.empty()) out += "; ";
    out += v.kind + ": " + v.detail;
  }
  return out;
}

ValidationReport validate_unit(const StructuredUnit& unit, std::span<const ClassSpec> registry,
                               const ValidationLimits& limits) {
  ValidationReport report;
  const auto& graph = unit.graph;
  auto add = [&](std::string kind, std::string detail) {
    report.violations.push_back({std::move(kind), std::move(detail)});
  };

  for (const auto& issue : graph.structure_issues()) add(issue.kind, issue.detail);

  for (std::size_t i = 0; i < graph.size(); ++i) {
    const GraphNode& node = graph.node(i);
    const std::string where = "node " + std::to_string(node.id);
    auto spec = std::find_if(registry.begin(), registry.end(),
                             [&](const ClassSpec& c) { return c.id == node.cls; });
    if (spec == registry.end()) {
      add("unknown-class", where + " has class " + std::to_string(node.cls.value));
    } else if (i < unit.covariates.size() &&
               static_cast<int>(unit.covariates[i].size()) != spec->arity) {
      add("arity", where + " carries " + std::to_string(unit.covariates[i].size()) +
                       " covariates, class expects " + std::to_string(spec->arity));
    }
    if (static_cast<int>(graph.parents(i).size()) > limits.max_in_degree) {
      add("in-degree", where + " has " + std::to_string(graph.parents(i).size()) +
                           " parents (max " + std::to_string(limits.max_in_degree) + ")");
    }
  }
  if (unit.covariates.size() != graph.size()) {
    add("covariates", "expected covariates for " + std::to_string(graph.size()) +
                          " nodes, found " + std::to_string(unit.covariates.size()));
  }
  if (unit.has_component_outcomes() && unit.component_outcomes.size() != graph.size()) {
    add("outcomes", "component outcomes do not cover every node");
  }

  if (graph.is_well_formed()) {
    const auto& depths = graph.computed_depths();
    for (std::size_t i = 0; i < graph.size(); ++i) {
      if (graph.node(i).depth != depths[i]) {
        add("depth", "node " + std::to_string(graph.node(i).id) + " stores depth " +
                         std::to_string(graph.node(i).depth) + ", structure implies " +
                         std::to_string(depths[i]));
      }
    }
    if (graph.depth() > limits.max_depth) {
      add("depth", "tree depth " + std::to_string(graph.depth()) + " exceeds " +
                       std::to_string(limits.max_depth));
    }
  }
  return report;
}

}  // namespace compcate
