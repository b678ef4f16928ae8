#pragma once

#include <cstddef>
#include <string>
#include <vector>

#include "compcate/core/types.hpp"

namespace compcate {

// Fixed-size layout of the unitary representation: per-class mean covariates
// followed by per-(class, depth) instance counts.
struct UnitarySchema {
  int num_classes = 0;
  std::vector<int> class_arity;
  int max_depth = 0;

  static UnitarySchema from(const DatasetInfo& info);

  std::size_t feature_count() const;
  std::size_t class_offset(ClassId cls) const;
  std::size_t count_offset(ClassId cls, int depth) const;
  std::string fingerprint() const;
};

// Mean-aggregated class covariates (zeros when a class is absent), then counts
// N_{o,l} for depth l = 1..max_depth. Throws DataError when the unit is deeper
// than the schema allows or references an unknown class.
std::vector<double> flatten_unitary(const StructuredUnit& unit, const UnitarySchema& schema);

}  // namespace compcate
