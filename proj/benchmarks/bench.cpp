#include <benchmark/benchmark.h>

#include <vector>

#include "compcate/dgp/dgp.hpp"
#include "compcate/estimators/compositional.hpp"
#include "compcate/estimators/oracle.hpp"
#include "compcate/fabsim/fabsim.hpp"
#include "compcate/learner/regressor.hpp"

using namespace compcate;

namespace {

// Component-model sized network: input d + 2D + 1 with D = 2.
learner::GaussianRegressor component_net(std::size_t input) {
  learner::GaussianRegressor model(
      learner::RegressorSpec{.input_size = input, .hidden = {2 * input, 2 * input}, .variance_head = true});
  model.initialize(1);
  return model;
}

void BM_RegressorForward(benchmark::State& state) {
  const auto input = static_cast<std::size_t>(state.range(0));
  const auto model = component_net(input);
  learner::GaussianRegressor::Workspace ws;
  std::vector<double> x(input, 0.3);
  for (auto _ : state) benchmark::DoNotOptimize(model.predict(x, ws));
}
BENCHMARK(BM_RegressorForward)->Arg(6)->Arg(16)->Arg(64);

void BM_RegressorForwardBackward(benchmark::State& state) {
  const auto input = static_cast<std::size_t>(state.range(0));
  const auto model = component_net(input);
  learner::GaussianRegressor::Workspace ws;
  std::vector<double> x(input, 0.3);
  std::vector<double> grads(model.parameters().size(), 0.0);
  for (auto _ : state) {
    benchmark::DoNotOptimize(
        model.accumulate_gradient(x, 1.0, learner::LossKind::kNll, 1.0, grads, ws));
  }
}
BENCHMARK(BM_RegressorForwardBackward)->Arg(6)->Arg(16)->Arg(64);

void BM_FabsimRun(benchmark::State& state) {
  const auto layout = fabsim::build_layout(3, 1);
  const int demand = static_cast<int>(state.range(0));
  fabsim::Inventory inventory(layout.stations.size(), {2 * demand, 2 * demand, 2 * demand, 2 * demand});
  fabsim::SimRun run{&layout, demand, inventory, 1, 7, {}};
  for (auto _ : state) benchmark::DoNotOptimize(fabsim::simulate_run(run).total_parts);
}
BENCHMARK(BM_FabsimRun)->Arg(100)->Arg(1000);

// Monte-Carlo marginalization over one synthetic hierarchical unit with the
// oracle component model; range(0) is the number of paths.
void BM_HierarchicalInference(benchmark::State& state) {
  dgp::DgpConfig config;
  config.n_units = 1;
  config.min_depth = config.max_depth = 8;
  config.seed = 4;
  const auto classes = dgp::sample_classes(config);
  const auto ds = dgp::generate_experimental_dataset(config, classes);
  const estimators::OracleComponentModel oracle(classes, CompositionKind::kHierarchical);
  const estimators::InferenceOptions options{static_cast<int>(state.range(0)), 3};
  for (auto _ : state) {
    benchmark::DoNotOptimize(estimators::infer_cate_hierarchical(oracle, ds.units[0], options).tau);
  }
  state.counters["nodes"] = static_cast<double>(ds.units[0].graph.size());
}
BENCHMARK(BM_HierarchicalInference)->Arg(100)->Arg(1000);

}  // namespace

BENCHMARK_MAIN();
