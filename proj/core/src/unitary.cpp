#include "compcate/core/unitary.hpp"

#include <numeric>

#include "compcate/core/error.hpp"
#include "compcate/core/random.hpp"

namespace compcate {

UnitarySchema UnitarySchema::from(const DatasetInfo& info) {
  UnitarySchema schema;
  schema.num_classes = info.num_classes;
  schema.class_arity = info.class_arity;
  schema.class_arity.resize(info.num_classes, 1);
  schema.max_depth = info.max_depth;
  return schema;
}

std::size_t UnitarySchema::feature_count() const {
  const auto covariates =
      static_cast<std::size_t>(std::accumulate(class_arity.begin(), class_arity.end(), 0));
  return covariates + static_cast<std::size_t>(num_classes) * max_depth;
}

std::size_t UnitarySchema::class_offset(ClassId cls) const {
  return static_cast<std::size_t>(
      std::accumulate(class_arity.begin(), class_arity.begin() + cls.value, 0));
}

std::size_t UnitarySchema::count_offset(ClassId cls, int depth) const {
  const auto covariates =
      static_cast<std::size_t>(std::accumulate(class_arity.begin(), class_arity.end(), 0));
  return covariates + static_cast<std::size_t>(cls.value) * max_depth + (depth - 1);
}

std::string UnitarySchema::fingerprint() const {
  std::string text = "k=" + std::to_string(num_classes) + ";L=" + std::to_string(max_depth) + ";d=";
  for (int a : class_arity) text += std::to_string(a) + ",";
  return hex64(fnv1a64(text));
}

std::vector<double> flatten_unitary(const StructuredUnit& unit, const UnitarySchema& schema) {
  std::vector<double> features(schema.feature_count(), 0.0);
  std::vector<int> instances(schema.num_classes, 0);
  const auto& graph = unit.graph;
  for (std::size_t i = 0; i < graph.size(); ++i) {
    const GraphNode& node = graph.node(i);
    if (node.cls.value < 0 || node.cls.value >= schema.num_classes) {
      throw DataError("unit " + std::to_string(unit.unit_id) + ": class " +
                      std::to_string(node.cls.value) + " outside unitary schema");
    }
    if (node.depth < 1 || node.depth > schema.max_depth) {
      throw DataError("unit " + std::to_string(unit.unit_id) + ": depth " +
                      std::to_string(node.depth) + " exceeds unitary schema depth " +
                      std::to_string(schema.max_depth));
    }
    const auto arity = static_cast<std::size_t>(schema.class_arity[node.cls.value]);
    if (unit.covariates.at(i).size() != arity) {
      throw DataError("unit " + std::to_string(unit.unit_id) + ": covariate arity mismatch");
    }
    const std::size_t offset = schema.class_offset(node.cls);
    for (std::size_t f = 0; f < arity; ++f) features[offset + f] += unit.covariates[i][f];
    ++instances[node.cls.value];
    features[schema.count_offset(node.cls, node.depth)] += 1.0;
  }
  for (int o = 0; o < schema.num_classes; ++o) {
    if (instances[o] == 0) continue;
    const std::size_t offset = schema.class_offset(ClassId{o});
    for (int f = 0; f < schema.class_arity[o]; ++f) features[offset + f] /= instances[o];
  }
  return features;
}

}  // namespace compcate
