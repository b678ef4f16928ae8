#pragma once

#include <vector>

#include "compcate/dgp/dgp.hpp"
#include "compcate/estimators/compositional.hpp"

namespace compcate::estimators {

// Component model backed by the generating class functions: mean is the class
// mean outcome and variance is the arm's noise variance (or zero).
class OracleComponentModel final : public ComponentOutcomeModel {
 public:
  OracleComponentModel(std::vector<dgp::ComponentClass> classes, CompositionKind composition,
                       bool zero_variance = false);

  learner::GaussianPrediction predict(const ComponentQuery& query) const override;
  bool covers(ClassId cls) const override;
  CompositionKind composition() const override { return composition_; }
  bool stochastic() const override;

 private:
  const dgp::ComponentClass* find(ClassId cls) const;

  std::vector<dgp::ComponentClass> classes_;
  CompositionKind composition_;
  bool zero_variance_;
};

}  // namespace compcate::estimators
