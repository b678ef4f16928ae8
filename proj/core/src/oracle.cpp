#include "compcate/estimators/oracle.hpp"

#include <algorithm>

#include "compcate/core/error.hpp"

namespace compcate::estimators {

OracleComponentModel::OracleComponentModel(std::vector<dgp::ComponentClass> classes,
                                           CompositionKind composition, bool zero_variance)
    : classes_(std::move(classes)), composition_(composition), zero_variance_(zero_variance) {}

const dgp::ComponentClass* OracleComponentModel::find(ClassId cls) const {
  const auto it = std::find_if(classes_.begin(), classes_.end(),
                               [&](const dgp::ComponentClass& c) { return c.id == cls; });
  return it == classes_.end() ? nullptr : &*it;
}

bool OracleComponentModel::covers(ClassId cls) const { return find(cls) != nullptr; }

bool OracleComponentModel::stochastic() const {
  if (zero_variance_ || composition_ == CompositionKind::kParallel) return false;
  return std::any_of(classes_.begin(), classes_.end(), [](const dgp::ComponentClass& c) {
    return c.noise_sd[0] > 0.0 || c.noise_sd[1] > 0.0;
  });
}

learner::GaussianPrediction OracleComponentModel::predict(const ComponentQuery& q) const {
  const auto* cls = find(q.cls);
  if (cls == nullptr) throw DataError("oracle has no class " + std::to_string(q.cls.value));
  const std::span<const double> parents =
      composition_ == CompositionKind::kParallel ? std::span<const double>() : q.parent_values;
  learner::GaussianPrediction pred;
  pred.mean = cls->mean_outcome(q.covariates, parents, q.t);
  const double sd = cls->noise_sd[q.t == 0 ? 0 : 1];
  pred.variance = zero_variance_ ? 0.0 : sd * sd;
  return pred;
}

}  // namespace compcate::estimators
