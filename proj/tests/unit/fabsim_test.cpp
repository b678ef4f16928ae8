#include <algorithm>
#include <set>

#include <gtest/gtest.h>

#include "compcate/core/error.hpp"
#include "compcate/core/io.hpp"
#include "compcate/core/random.hpp"
#include "compcate/core/validate.hpp"
#include "compcate/fabsim/fabsim.hpp"

namespace compcate::fabsim {
namespace {

Inventory ample_inventory(const Layout& layout, int per_item) {
  return Inventory(layout.stations.size(), {per_item, per_item, per_item, per_item});
}

TEST(BuildLayout, DeterministicValidAssemblySink) {
  const std::vector<ClassSpec> registry{{ClassId{0}, 1}, {ClassId{1}, 1}, {ClassId{2}, 1},
                                        {ClassId{3}, 1}};
  for (int id = 0; id < kLayoutCount; ++id) {
    const auto a = build_layout(id, 17);
    const auto b = build_layout(id, 17);
    EXPECT_EQ(to_json(a).dump(), to_json(b).dump());

    const auto graph = a.graph();
    ASSERT_TRUE(graph.is_well_formed());
    EXPECT_GE(graph.size(), 3u);
    EXPECT_LE(graph.size(), 12u);
    EXPECT_EQ(a.stations[graph.sink()].archetype, Archetype::kAssembly);
    for (std::size_t i = 0; i < graph.size(); ++i) {
      EXPECT_LE(static_cast<int>(graph.parents(i).size()), max_parents(a.stations[i].archetype));
    }
    StructuredUnit unit;
    unit.graph = graph;
    unit.covariates.assign(graph.size(), {0.0});
    const auto report = validate_unit(unit, registry);
    EXPECT_TRUE(report.ok()) << report.summary();
  }
  EXPECT_THROW(build_layout(-1, 0), DataError);
  EXPECT_THROW(build_layout(kLayoutCount, 0), DataError);
}

TEST(SimulateRun, ZeroDemandProducesNothing) {
  const auto layout = build_layout(3, 1);
  SimRun run{&layout, 0, ample_inventory(layout, 100), 0, 5, {}};
  const auto r = simulate_run(run);
  EXPECT_EQ(r.total_parts, 0);
  for (const auto& s : r.stations) {
    EXPECT_EQ(s.good, 0);
    EXPECT_EQ(s.attempts, 0);
  }
}

TEST(SimulateRun, LosslessLineMeetsDemandExactly) {
  SimParams lossless;
  lossless.scrap_coef = 0.0;
  lossless.rework_coef = 0.0;
  lossless.fixed_skill = 1.0;
  for (int id = 0; id < kLayoutCount; ++id) {
    const auto layout = build_layout(id, 2);
    for (int demand : {1, 37, 1000}) {
      for (int arm : {0, 1}) {
        SimRun run{&layout, demand, ample_inventory(layout, 2000), arm, 9, lossless};
        EXPECT_EQ(simulate_run(run).total_parts, demand);
      }
    }
  }
}

TEST(SimulateRun, InsufficientInventoryGivesZero) {
  const auto layout = build_layout(0, 3);
  SimRun run{&layout, 50, ample_inventory(layout, 0), 0, 1, {}};
  EXPECT_EQ(simulate_run(run).total_parts, 0);
}

TEST(SimulateRun, BitDeterministic) {
  const auto layout = build_layout(7, 4);
  SimRun run{&layout, 400, ample_inventory(layout, 380), 1, 11, {}};
  const auto a = simulate_run(run);
  const auto b = simulate_run(run);
  ASSERT_EQ(a.stations.size(), b.stations.size());
  EXPECT_EQ(a.total_parts, b.total_parts);
  EXPECT_EQ(a.total_time, b.total_time);
  for (std::size_t s = 0; s < a.stations.size(); ++s) {
    EXPECT_EQ(a.stations[s].good, b.stations[s].good);
    EXPECT_EQ(a.stations[s].scrapped, b.stations[s].scrapped);
    EXPECT_EQ(a.stations[s].reworked, b.stations[s].reworked);
    EXPECT_EQ(a.stations[s].finish_time, b.stations[s].finish_time);
  }
}

TEST(SimulateRun, MonotoneInDemandWithoutScrap) {
  SimParams params;
  params.scrap_coef = 0.0;
  params.rework_coef = 0.0;
  for (int id = 0; id < 10; ++id) {
    const auto layout = build_layout(id, 5);
    const auto inventory = ample_inventory(layout, 300);
    int previous = 0;
    for (int demand = 0; demand <= 500; demand += 50) {
      SimRun run{&layout, demand, inventory, 0, 3, params};
      const int total = simulate_run(run).total_parts;
      EXPECT_GE(total, previous);
      previous = total;
    }
    EXPECT_EQ(previous, 300);
  }
}

// Conservation and the Markov relation: a station's attempts are fixed by its
// own stock and what its parents delivered, unless it reached demand first.
TEST(SimulateRun, ConservationAndParentDependence) {
  Rng rng(8);
  for (int trial = 0; trial < 300; ++trial) {
    const auto layout = build_layout(trial % kLayoutCount, 6);
    const auto graph = layout.graph();
    Inventory inventory(layout.stations.size());
    for (auto& row : inventory) {
      for (int& v : row) v = std::uniform_int_distribution<int>(0, 400)(rng);
    }
    const int demand = std::uniform_int_distribution<int>(0, 300)(rng);
    SimRun run{&layout, demand, inventory, trial % 2, static_cast<std::uint64_t>(trial), {}};
    const auto r = simulate_run(run);
    for (std::size_t s = 0; s < graph.size(); ++s) {
      const auto& stats = r.stations[s];
      EXPECT_EQ(stats.good + stats.scrapped, stats.attempts);
      EXPECT_LE(stats.good, demand);
      int limit = std::numeric_limits<int>::max();
      for (RawItem item : raw_items_used(layout.stations[s].archetype)) {
        limit = std::min(limit, inventory[s][static_cast<int>(item)]);
      }
      const auto& parents = graph.parents(s);
      for (std::size_t k = 0; k < parents.size(); ++k) {
        EXPECT_LE(stats.consumed[k], r.stations[parents[k]].good);
        EXPECT_EQ(stats.consumed[k], stats.attempts);
        limit = std::min(limit, r.stations[parents[k]].good);
      }
      if (stats.good < demand) {
        EXPECT_EQ(stats.attempts, limit);
      } else {
        EXPECT_LE(stats.attempts, limit);
      }
    }
    EXPECT_GE(r.total_parts, 0);
    EXPECT_LE(r.total_parts, demand);
  }
}

TEST(WorkerSkills, TruncatedToUnitInterval) {
  for (std::uint64_t seed = 0; seed < 200; ++seed) {
    for (int arm : {0, 1}) {
      const WorkerPoolConfig pool = SimParams{}.pools[arm];
      const auto skills = draw_worker_skills(pool, seed, arm);
      EXPECT_EQ(static_cast<int>(skills.size()), arm == 0 ? 5 : 15);
      for (double s : skills) {
        EXPECT_GT(s, 0.0);
        EXPECT_LE(s, 1.0);
      }
    }
  }
}

TEST(ManufacturingDataset, BothArmsBoundedAndComponentsReused) {
  FabsimConfig config;
  config.n_units = 400;
  config.seed = 21;
  const auto data = generate_manufacturing_dataset(config);
  const auto& ds = data.dataset;
  ASSERT_EQ(ds.units.size(), 400u);
  EXPECT_TRUE(ds.all_experimental());
  const auto registry = ds.info.registry();
  std::size_t instances = 0;
  std::set<int> layouts;
  for (std::size_t u = 0; u < ds.units.size(); ++u) {
    const auto& unit = ds.units[u];
    const auto report = validate_unit(unit, registry);
    ASSERT_TRUE(report.ok()) << report.summary();
    const auto& po = unit.potential_outcomes();
    EXPECT_GE(po.y0, 0.0);
    EXPECT_GE(po.y1, 0.0);
    EXPECT_LE(po.y0, data.aux[u].demand);
    EXPECT_LE(po.y1, data.aux[u].demand);
    EXPECT_EQ(unit.covariates.front().size(), static_cast<std::size_t>(kStationFeatures));
    instances += unit.graph.size();
    layouts.insert(data.aux[u].layout_id);
  }
  EXPECT_GT(instances, 5 * ds.units.size());
  EXPECT_GT(layouts.size(), 40u);

  const auto again = generate_manufacturing_dataset(config);
  EXPECT_EQ(dataset_jsonl_text(ds), dataset_jsonl_text(again.dataset));
}

}  // namespace
}  // namespace compcate::fabsim
