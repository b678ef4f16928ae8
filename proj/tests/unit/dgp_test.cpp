#include <filesystem>
#include <map>
#include <numeric>
#include <set>

#include <gtest/gtest.h>

#include "compcate/core/error.hpp"
#include "compcate/core/io.hpp"
#include "compcate/core/validate.hpp"
#include "compcate/dgp/dgp.hpp"

namespace compcate::dgp {
namespace {

// mu_t(x, p) = a_t + b_t * x + c_t * mean(p), untransformed inputs.
ComponentClass linear_class(int id, double a0, double a1, double b0, double b1, double c0 = 0.0,
                            double c1 = 0.0) {
  ComponentClass cls;
  cls.id = ClassId{id};
  cls.arity = 1;
  cls.law.mean = {0.0};
  cls.law.scale = {1.0};
  cls.center = {0.0};
  cls.scale = {1.0};
  cls.clip = std::numeric_limits<double>::infinity();
  cls.arm[0] = ArmFunction{a0, {{b0}}, c0};
  cls.arm[1] = ArmFunction{a1, {{b1}}, c1};
  return cls;
}

StructuredUnit unit_from(InteractionGraph graph, std::vector<std::vector<double>> x) {
  StructuredUnit unit;
  unit.graph = std::move(graph);
  unit.covariates = std::move(x);
  return unit;
}

TEST(GroundTruthOutcome, DirectEvaluation) {
  const auto cls = linear_class(0, 0.0, 1.0, 1.0, 1.0);  // x + t
  EXPECT_DOUBLE_EQ(ground_truth_outcome(cls, std::vector<double>{2.0}, {}, 1, 0.0), 3.0);

  const auto child = linear_class(1, 0.0, 1.0, 0.0, 0.0, 2.0, 2.0);  // 2p + t
  const double parent = ground_truth_outcome(cls, std::vector<double>{1.0}, {}, 1, 0.0);
  EXPECT_DOUBLE_EQ(ground_truth_outcome(child, std::vector<double>{0.0},
                                        std::vector<double>{parent}, 1, 0.0),
                   5.0);

  auto noisy = cls;
  noisy.noise_sd[0] = noisy.noise_sd[1] = 1.0;
  EXPECT_DOUBLE_EQ(ground_truth_outcome(noisy, std::vector<double>{2.0}, {}, 1, 0.0), 3.0);
  EXPECT_DOUBLE_EQ(ground_truth_outcome(noisy, std::vector<double>{2.0}, {}, 1, 0.5), 3.5);
}

TEST(GroundTruthOutcome, CubicPolynomialAndClip) {
  ComponentClass cls = linear_class(0, 0.5, 0.0, 0.0, 0.0);
  cls.center = {1.0};
  cls.scale = {2.0};
  cls.clip = 3.0;
  cls.arm[0].coef = {{1.0, -0.5, 0.25}};
  // s = (5 - 1) / 2 = 2
  EXPECT_DOUBLE_EQ(cls.mean_outcome(std::vector<double>{5.0}, {}, 0), 0.5 + 2.0 - 2.0 + 2.0);
  // s clipped to 3
  EXPECT_DOUBLE_EQ(cls.mean_outcome(std::vector<double>{100.0}, {}, 0),
                   0.5 + 3.0 - 4.5 + 6.75);
}

TEST(FillPotentialOutcomes, ParallelIsAdditive) {
  std::vector<ComponentClass> classes{linear_class(0, 0.0, 1.0, 1.0, 1.0),
                                      linear_class(1, 0.0, 2.0, 3.0, 3.0)};
  auto unit = unit_from(InteractionGraph::with_computed_depths(
                            {{0, ClassId{0}, 1}, {1, ClassId{1}, 1}}, {{0, 1}}),
                        {{0.7}, {-1.2}});
  Rng rng(1);
  fill_potential_outcomes(unit, classes, CompositionKind::kParallel, rng);
  EXPECT_DOUBLE_EQ(unit.potential_outcomes().effect(), 3.0);
  EXPECT_DOUBLE_EQ(oracle_effect(unit, classes, CompositionKind::kParallel), 3.0);
}

TEST(FillPotentialOutcomes, LinearChainEffectIndependentOfX) {
  std::vector<ComponentClass> classes{linear_class(0, 0.0, 1.0, 1.0, 1.0),
                                      linear_class(1, 0.0, 1.0, 0.0, 0.0, 2.0, 2.0)};
  for (double x : {-3.0, 0.0, 1.0, 42.0}) {
    auto unit = unit_from(InteractionGraph::with_computed_depths(
                              {{0, ClassId{0}, 1}, {1, ClassId{1}, 1}}, {{0, 1}}),
                          {{x}, {0.0}});
    Rng rng(2);
    fill_potential_outcomes(unit, classes, CompositionKind::kSequential, rng);
    EXPECT_DOUBLE_EQ(unit.potential_outcomes().effect(), 3.0);
  }
}

DgpConfig small_config(CompositionKind kind) {
  DgpConfig config;
  config.composition = kind;
  config.n_units = 300;
  config.seed = 99;
  return config;
}

TEST(SampleTree, DepthModes) {
  DgpConfig config;
  config.max_depth = 1;
  config.structure = StructureMode::kFixed;
  Rng rng(3);
  EXPECT_EQ(sample_tree(config, rng).size(), 1u);

  config.max_depth = 10;
  for (int i = 0; i < 200; ++i) EXPECT_EQ(sample_tree(config, rng).depth(), 10);

  config.structure = StructureMode::kVariable;
  std::map<int, int> histogram;
  for (int i = 0; i < 10000; ++i) {
    const auto tree = sample_tree(config, rng);
    ++histogram[tree.depth()];
    ASSERT_LE(tree.max_in_degree(), 2u);
  }
  std::set<int> support;
  for (const auto& [d, count] : histogram) support.insert(d);
  EXPECT_EQ(support, (std::set<int>{4, 5, 6, 7, 8, 9, 10}));
}

TEST(SampleTree, CombinationModeUsesEveryChosenClass) {
  for (auto kind : {CompositionKind::kSequential, CompositionKind::kHierarchical}) {
    DgpConfig config;
    config.composition = kind;
    config.structure = StructureMode::kCombination;
    config.combo_min = 2;
    config.combo_max = 4;
    Rng rng(4);
    for (int i = 0; i < 500; ++i) {
      const auto tree = sample_tree(config, rng);
      std::set<int> classes;
      for (const auto& node : tree.nodes()) classes.insert(node.cls.value);
      EXPECT_GE(classes.size(), 2u);
      EXPECT_LE(classes.size(), 4u);
      EXPECT_LE(tree.depth(), 10);
      if (kind == CompositionKind::kSequential) EXPECT_LE(tree.max_in_degree(), 1u);
    }
    config.combo_min = config.combo_max = 10;
    for (int i = 0; i < 100; ++i) {
      std::set<int> classes;
      const auto tree = sample_tree(config, rng);
      for (const auto& node : tree.nodes()) classes.insert(node.cls.value);
      EXPECT_EQ(classes.size(), 10u);
    }
  }
}

TEST(SampleTree, InfeasibleCombinationThrows) {
  DgpConfig config;
  config.composition = CompositionKind::kSequential;
  config.structure = StructureMode::kCombination;
  config.max_depth = 3;
  config.combo_min = config.combo_max = 5;
  Rng rng(5);
  EXPECT_THROW(sample_tree(config, rng), ConfigError);
}

TEST(GenerateExperimental, UnitsValidateAndAggregate) {
  for (auto kind : {CompositionKind::kParallel, CompositionKind::kSequential,
                    CompositionKind::kHierarchical}) {
    const auto config = small_config(kind);
    const auto classes = sample_classes(config);
    const auto dataset = generate_experimental_dataset(config, classes);
    ASSERT_EQ(dataset.units.size(), 300u);
    EXPECT_TRUE(dataset.all_experimental());
    const auto registry = dataset.info.registry();
    for (const auto& unit : dataset.units) {
      const auto report = validate_unit(unit, registry);
      ASSERT_TRUE(report.ok()) << report.summary();
      const auto& total = unit.potential_outcomes();
      if (kind == CompositionKind::kParallel) {
        double y0 = 0.0, y1 = 0.0;
        for (const auto& o : unit.component_outcomes) {
          y0 += std::get<PotentialOutcomes>(o).y0;
          y1 += std::get<PotentialOutcomes>(o).y1;
        }
        EXPECT_DOUBLE_EQ(total.y0, y0);
        EXPECT_DOUBLE_EQ(total.y1, y1);
      } else {
        const auto& sink = std::get<PotentialOutcomes>(unit.component_outcomes[unit.graph.sink()]);
        EXPECT_EQ(total.y0, sink.y0);
        EXPECT_EQ(total.y1, sink.y1);
      }
      EXPECT_LT(std::abs(total.y0), 1e3);
      EXPECT_LT(std::abs(total.y1), 1e3);
    }
  }
}

// Each component outcome is its own mean given the realized parent outcomes
// plus a noise term shared by both arms.
TEST(GenerateExperimental, MarkovGivenParents) {
  auto config = small_config(CompositionKind::kHierarchical);
  config.noise_sd_min = 0.2;
  config.noise_sd_max = 0.5;
  const auto classes = sample_classes(config);
  const auto dataset = generate_experimental_dataset(config, classes);
  for (const auto& unit : dataset.units) {
    const auto& g = unit.graph;
    for (std::size_t i = 0; i < g.size(); ++i) {
      const auto& cls = classes[g.node(i).cls.value];
      double z[2];
      for (int t = 0; t < 2; ++t) {
        std::vector<double> parents;
        for (std::size_t p : g.parents(i)) {
          parents.push_back(std::get<PotentialOutcomes>(unit.component_outcomes[p]).at(t));
        }
        const double y = std::get<PotentialOutcomes>(unit.component_outcomes[i]).at(t);
        z[t] = (y - cls.mean_outcome(unit.covariates[i], parents, t)) / cls.noise_sd[t];
      }
      EXPECT_NEAR(z[0], z[1], 1e-9);
    }
  }
}

TEST(GenerateExperimental, NoiseFreeEffectMatchesOracle) {
  for (auto kind : {CompositionKind::kParallel, CompositionKind::kHierarchical}) {
    auto config = small_config(kind);
    config.noise_sd_min = config.noise_sd_max = 0.0;
    const auto classes = sample_classes(config);
    for (const auto& unit : generate_experimental_dataset(config, classes).units) {
      EXPECT_NEAR(unit.potential_outcomes().effect(), oracle_effect(unit, classes, kind), 1e-12);
    }
  }
}

TEST(GenerateExperimental, DeterministicAndByteStable) {
  const auto config = small_config(CompositionKind::kHierarchical);
  const auto a = generate_experimental_dataset(config);
  const auto b = generate_experimental_dataset(config);
  EXPECT_EQ(dataset_jsonl_text(a), dataset_jsonl_text(b));
  auto other = config;
  other.seed = 100;
  EXPECT_NE(dataset_jsonl_text(a), dataset_jsonl_text(generate_experimental_dataset(other)));
}

TEST(ClassSidecar, RoundTripReproducesOracle) {
  const auto config = small_config(CompositionKind::kSequential);
  const auto classes = sample_classes(config);
  const auto dir = std::filesystem::temp_directory_path() / "compcate_dgp_test";
  std::filesystem::create_directories(dir);
  const auto path = dir / "units.jsonl";
  write_class_sidecar(path, config, classes);
  const auto back = read_class_sidecar(path);
  ASSERT_EQ(back.size(), classes.size());
  const auto dataset = generate_experimental_dataset(config, classes);
  for (const auto& unit : dataset.units) {
    EXPECT_EQ(oracle_effect(unit, classes, config.composition),
              oracle_effect(unit, back, config.composition));
  }
  std::filesystem::remove_all(dir);
}

TEST(DgpConfig, RejectsBadValues) {
  DgpConfig config;
  config.n_units = 0;
  try {
    config.validate();
    FAIL();
  } catch (const ConfigError& e) {
    EXPECT_EQ(e.path(), "dgp.n_units");
  }
  const auto round = dgp_config_from_json(nlohmann::json::parse(to_json(DgpConfig{}).dump()));
  EXPECT_EQ(to_json(round).dump(), to_json(DgpConfig{}).dump());
}

}  // namespace
}  // namespace compcate::dgp
