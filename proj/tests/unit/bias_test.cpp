#include <algorithm>
#include <cmath>
#include <filesystem>
#include <numeric>

#include <gtest/gtest.h>

#include "compcate/bias/bias.hpp"
#include "compcate/core/error.hpp"
#include "compcate/core/io.hpp"
#include "compcate/dgp/dgp.hpp"

namespace compcate::bias {
namespace {

Dataset synthetic(int n, std::uint64_t seed = 3) {
  dgp::DgpConfig config;
  config.n_units = n;
  config.seed = seed;
  config.max_extra_nodes = 4;
  return dgp::generate_experimental_dataset(config);
}

TEST(PropensityScore, ClosedFormCases) {
  const auto ds = synthetic(200);
  const auto stats = score_stats(ds.units, ScoreKind::kCovariateSum);
  BiasPolicy zero{ScoreKind::kCovariateSum, 0.0};
  for (const auto& u : ds.units) EXPECT_EQ(propensity_score(u, zero, stats), 0.5);

  BiasPolicy strong{ScoreKind::kCovariateSum, 10.0};
  StructuredUnit far = ds.units.front();
  for (auto& x : far.covariates) x.assign(x.size(), 1e4);
  EXPECT_EQ(propensity_score(far, strong, stats), 0.99);
  for (auto& x : far.covariates) x.assign(x.size(), -1e4);
  EXPECT_EQ(propensity_score(far, strong, stats), 0.01);

  // Shift one unit's covariates so its score equals the centre exactly.
  StructuredUnit centred = ds.units.front();
  const double shift = stats.center - biasing_score(centred, ScoreKind::kCovariateSum);
  centred.covariates.front().front() += shift;
  for (double alpha : {0.5, 3.0, 10.0}) {
    BiasPolicy p{ScoreKind::kCovariateSum, alpha};
    EXPECT_NEAR(propensity_score(centred, p, stats), 0.5, 1e-9);
  }
}

TEST(ScoreStats, MedianAndIqrWithFallback) {
  std::vector<StructuredUnit> units(4);
  const double values[] = {1.0, 2.0, 4.0, 10.0};
  for (int i = 0; i < 4; ++i) {
    units[i].graph = InteractionGraph({{0, ClassId{0}, 1}}, {});
    units[i].covariates = {{values[i]}};
  }
  const auto stats = score_stats(units, ScoreKind::kCovariateSum);
  EXPECT_DOUBLE_EQ(stats.center, 3.0);
  EXPECT_DOUBLE_EQ(stats.scale, 5.5 - 1.75);
  EXPECT_FALSE(stats.degenerate);

  const auto depth = score_stats(units, ScoreKind::kTreeDepth);
  EXPECT_TRUE(depth.degenerate);
  EXPECT_EQ(depth.scale, 1.0);
}

TEST(SampleObservational, BalancedAtZeroStrength) {
  const auto ds = synthetic(10000);
  const auto split = sample_observational(ds, BiasPolicy{ScoreKind::kTreeDepth, 0.0}, 5);
  int treated = 0;
  for (const auto& t : split.truth) treated += t.t;
  const double fraction = treated / 10000.0;
  EXPECT_NEAR(fraction, 0.5, 3.0 * std::sqrt(0.25 / 10000.0));
  EXPECT_TRUE(split.factual.all_factual());
}

TEST(SampleObservational, DepthBiasSeparatesGroups) {
  const auto ds = synthetic(5000);
  const auto split = sample_observational(ds, BiasPolicy{ScoreKind::kTreeDepth, 10.0}, 6);
  double depth[2] = {0, 0};
  int count[2] = {0, 0};
  for (std::size_t i = 0; i < ds.units.size(); ++i) {
    depth[split.truth[i].t] += ds.units[i].graph.depth();
    ++count[split.truth[i].t];
  }
  EXPECT_GT(depth[1] / count[1], depth[0] / count[0] + 1.0);
}

TEST(SampleObservational, SeededAssignment) {
  const auto ds = synthetic(500);
  const BiasPolicy p{ScoreKind::kCovariateSum, 4.0};
  const auto a = sample_observational(ds, p, 77);
  const auto b = sample_observational(ds, p, 77);
  const auto c = sample_observational(ds, p, 78);
  std::vector<int> ta, tb, tc;
  for (std::size_t i = 0; i < a.truth.size(); ++i) {
    ta.push_back(a.truth[i].t);
    tb.push_back(b.truth[i].t);
    tc.push_back(c.truth[i].t);
  }
  EXPECT_EQ(ta, tb);
  EXPECT_NE(ta, tc);
}

// Treated fraction per score decile against the mean target propensity,
// two-sided binomial 99% interval.
TEST(SampleObservational, PropensityCalibration) {
  const auto ds = synthetic(10000, 8);
  for (double alpha : {2.0, 10.0}) {
    const BiasPolicy policy{ScoreKind::kCovariateSum, alpha};
    const auto split = sample_observational(ds, policy, 9);
    std::vector<std::size_t> order(ds.units.size());
    std::iota(order.begin(), order.end(), 0);
    std::vector<double> score(ds.units.size());
    for (std::size_t i = 0; i < score.size(); ++i) {
      score[i] = biasing_score(ds.units[i], policy.kind);
    }
    std::sort(order.begin(), order.end(), [&](auto a, auto b) { return score[a] < score[b]; });
    const std::size_t bins = 10, per = order.size() / bins;
    for (std::size_t b = 0; b < bins; ++b) {
      double p_sum = 0.0;
      int treated = 0;
      for (std::size_t k = b * per; k < (b + 1) * per; ++k) {
        p_sum += split.truth[order[k]].propensity;
        treated += split.truth[order[k]].t;
      }
      const double p = p_sum / per;
      const double half_width = 2.5758 * std::sqrt(p * (1.0 - p) / per);
      EXPECT_NEAR(static_cast<double>(treated) / per, p, half_width)
          << "alpha " << alpha << " bin " << b;
    }
  }
}

TEST(SampleObservational, LosslessSplitThroughFiles) {
  const auto ds = synthetic(300);
  const auto split = sample_observational(ds, BiasPolicy{ScoreKind::kTreeDepth, 3.0}, 4);
  const auto dir = std::filesystem::temp_directory_path() / "compcate_bias_test";
  std::filesystem::create_directories(dir);
  const auto path = dir / "factual.jsonl";
  write_dataset(path, split.factual, make_stamp("abc", 4));
  write_truth(path, split.factual, split.truth);

  const auto factual = read_dataset(path);
  const auto truth = read_truth(path, &factual);
  const auto rebuilt = reconstruct_experimental(factual, truth);
  EXPECT_EQ(dataset_jsonl_text(rebuilt), dataset_jsonl_text(ds));
  EXPECT_TRUE(factual.all_factual());

  std::filesystem::remove(truth_path(path));
  EXPECT_THROW(read_truth(path), DataError);
  std::filesystem::remove_all(dir);
}

TEST(BiasPolicy, Validation) {
  EXPECT_THROW((BiasPolicy{ScoreKind::kTreeDepth, -1.0}.validate()), ConfigError);
  EXPECT_THROW((BiasPolicy{ScoreKind::kTreeDepth, 1.0, 0.0, 0.99}.validate()), ConfigError);
  EXPECT_NO_THROW((BiasPolicy{ScoreKind::kTreeDepth, 10.0}.validate()));
  const auto ds = synthetic(10);
  auto factual = sample_observational(ds, BiasPolicy{}, 1).factual;
  EXPECT_THROW(sample_observational(factual, BiasPolicy{}, 1), DataError);
}

}  // namespace
}  // namespace compcate::bias
