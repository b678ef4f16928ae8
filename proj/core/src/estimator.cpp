#include "compcate/estimators/estimator.hpp"

#include <cstdio>

#include "compcate/core/error.hpp"
#include "compcate/core/io.hpp"
#include "compcate/core/parallel.hpp"

namespace compcate::estimators {

std::string EstimatorSpec::name() const {
  return family == EstimatorFamily::kCompositional ? "compositional"
                                                   : std::string(to_string(variant));
}

std::string EstimatorSpec::case_name() const {
  return family == EstimatorFamily::kCompositional ? std::string(to_string(access)) : "-";
}

EstimatorSpec parse_estimator(std::string_view name, std::string_view access) {
  EstimatorSpec spec;
  if (name == "compositional") {
    spec.family = EstimatorFamily::kCompositional;
    spec.access = parse_access_case(access);
  } else {
    spec.family = EstimatorFamily::kUnitary;
    spec.variant = parse_unitary_variant(name);
  }
  return spec;
}

std::vector<CateEstimate> FittedEstimator::estimate(std::span<const StructuredUnit> units,
                                                    const InferenceOptions& options,
                                                    int jobs) const {
  std::vector<CateEstimate> out(units.size());
  if (const auto* comp = compositional()) {
    check_coverage(*comp, units);
    parallel_for(units.size(), jobs,
                 [&](std::size_t i) { out[i] = infer_cate(*comp, units[i], options); });
  } else {
    const auto& uni = *unitary();
    parallel_for(units.size(), jobs,
                 [&](std::size_t i) { out[i] = infer_cate_unitary(uni, units[i]); });
  }
  return out;
}

nlohmann::ordered_json FittedEstimator::manifest() const {
  if (const auto* comp = compositional()) return manifest_json(*comp);
  return manifest_json(*unitary());
}

void FittedEstimator::save(const std::filesystem::path& dir) const {
  if (const auto* comp = compositional()) {
    save_compositional(*comp, dir);
  } else {
    save_unitary(*unitary(), dir);
  }
}

FittedEstimator FittedEstimator::load(const std::filesystem::path& dir) {
  if (!std::filesystem::exists(dir / "manifest.json")) {
    throw DataError("no model bundle at " + dir.string());
  }
  nlohmann::json manifest;
  try {
    manifest = nlohmann::json::parse(read_text(dir / "manifest.json"));
  } catch (const nlohmann::json::exception& e) {
    throw DataError(dir.string() + "/manifest.json: " + e.what());
  }
  if (manifest.value("family", "") == "compositional") {
    return FittedEstimator(load_compositional(dir));
  }
  return FittedEstimator(load_unitary(dir));
}

FittedEstimator fit_estimator(const EstimatorSpec& spec, const Dataset& factual,
                              const learner::TrainConfig& config,
                              const CompositionalOptions& options) {
  if (spec.family == EstimatorFamily::kCompositional) {
    return FittedEstimator(fit_compositional(factual, spec.access, config, options));
  }
  return FittedEstimator(
      fit_unitary(factual, spec.variant, UnitarySchema::from(factual.info), config));
}

std::string estimates_csv(std::span<const CateEstimate> estimates) {
  std::string out = "unit_id,tau,y0,y1,mc_stderr\n";
  char buf[160];
  for (const auto& e : estimates) {
    std::snprintf(buf, sizeof buf, "%lld,%.17g,%.17g,%.17g,", static_cast<long long>(e.unit_id),
                  e.tau, e.y0, e.y1);
    out += buf;
    if (e.mc_stderr) {
      std::snprintf(buf, sizeof buf, "%.17g", *e.mc_stderr);
      out += buf;
    }
    out += '\n';
  }
  return out;
}

}  // namespace compcate::estimators
