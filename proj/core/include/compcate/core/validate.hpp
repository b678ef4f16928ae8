#pragma once

#include <span>
#include <string>
#include <vector>

#include "compcate/core/types.hpp"

namespace compcate {

struct ValidationLimits {
  int max_in_degree = 2;
  int max_depth = 10;
};

struct Violation {
  std::string kind;  // "cycle", "multi-sink", "arity", "in-degree", "depth", ...
  std::string detail;
};

struct ValidationReport {
  std::vector<Violation> violations;

  bool ok() const { return violations.empty(); }
  bool has(std::string_view kind) const;
  std::string summary() const;
};

// Checks topology, covariate arity against the registry, in-degree and depth
// limits, stored depths, and outcome alignment. Never throws.
ValidationReport validate_unit(const StructuredUnit& unit, std::span<const ClassSpec> registry,
                               const ValidationLimits& limits = {});

}  // namespace compcate
