// End-to-end acceptance checks. Prints one PASS/FAIL line per criterion and
// exits nonzero when any criterion fails. Pass criterion numbers as arguments
// to run a subset.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <functional>
#include <map>
#include <numbers>
#include <numeric>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "cli.hpp"
#include "compcate/bias/bias.hpp"
#include "compcate/core/io.hpp"
#include "compcate/core/random.hpp"
#include "compcate/dgp/dgp.hpp"
#include "compcate/estimators/compositional.hpp"
#include "compcate/estimators/oracle.hpp"
#include "compcate/eval/eval.hpp"
#include "compcate/eval/experiment.hpp"
#include "compcate/fabsim/fabsim.hpp"
#include "compcate/learner/regressor.hpp"
#include "gradient_oracle.hpp"

using namespace compcate;
namespace fs = std::filesystem;

namespace {

struct Verdict {
  bool pass = false;
  std::string detail;
};

std::string fmt(const char* format, double a, double b = 0.0, double c = 0.0, double d = 0.0) {
  char buf[256];
  std::snprintf(buf, sizeof buf, format, a, b, c, d);
  return buf;
}

double median(std::vector<double> v) {
  std::sort(v.begin(), v.end());
  const auto n = v.size();
  return n % 2 == 1 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

fs::path scratch(const std::string& name) {
  const auto dir = fs::temp_directory_path() / "compcate_acceptance" / name;
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

// Median R^2 per estimator name ("compositional" or "s_learner") and alpha.
std::map<std::pair<std::string, double>, double> median_r2(const eval::ResultTable& table,
                                                           std::string& errors) {
  std::map<std::pair<std::string, double>, std::vector<double>> grouped;
  for (const auto& r : table.rows) {
    if (!r.ok()) {
      errors += r.key() + " " + r.status + "; ";
      continue;
    }
    grouped[{r.estimator, r.alpha.value_or(0.0)}].push_back(r.r2);
  }
  std::map<std::pair<std::string, double>, double> out;
  for (auto& [key, values] : grouped) out[key] = median(values);
  return out;
}

eval::ExperimentConfig versus_s_learner() {
  eval::ExperimentConfig config;
  config.estimators = {estimators::parse_estimator("compositional", "xy"),
                       estimators::parse_estimator("s_learner")};
  config.seeds = {0, 1, 2};
  config.mc_samples = 200;
  return config;
}

// 1. Backprop against central differences on random architectures, and the
// Gaussian NLL against hand values.
Verdict learner_soundness() {
  const auto oracle = learner::testing::run_gradient_oracle(100, 77);
  double nll_error = 0.0;
  const double two_pi = 2.0 * std::numbers::pi;
  nll_error = std::max(nll_error, std::abs(learner::nll_loss(1.7, 1.0 / two_pi, 1.7)));
  nll_error = std::max(nll_error,
                       std::abs(learner::nll_loss(0.0, 1.0, 1.0) - (0.5 * std::log(two_pi) + 0.5)));
  nll_error = std::max(nll_error, std::abs(learner::nll_loss(2.0, 4.0, -2.0) -
                                           (0.5 * std::log(two_pi * 4.0) + 16.0 / 8.0)));
  Rng rng(3);
  std::uniform_real_distribution<double> u(-5.0, 5.0), v(0.01, 4.0);
  for (int i = 0; i < 1000; ++i) {
    const double mean = u(rng), target = u(rng), var = v(rng);
    nll_error = std::max(nll_error, std::abs(learner::nll_loss(mean, var, target) -
                                             learner::testing::scalar_nll(mean, var, target)));
  }
  return {oracle.max_relative_error < 1e-4 && oracle.checked > 0 && nll_error < 1e-9,
          fmt("max gradient rel. error %.2e over %.0f partials, max NLL error %.1e",
              oracle.max_relative_error, static_cast<double>(oracle.checked), nll_error)};
}

// 2. Noise-free additive composition with linear class functions.
Verdict parallel_oracle() {
  dgp::DgpConfig config;
  config.num_classes = 10;
  config.composition = CompositionKind::kParallel;
  config.degree = 1;
  config.noise_sd_min = config.noise_sd_max = 0.0;
  config.n_units = 4000;
  config.seed = 21;
  const auto classes = dgp::sample_classes(config);
  const auto experimental = dgp::generate_experimental_dataset(config, classes);
  const auto observed = bias::sample_observational(experimental, {bias::ScoreKind::kTreeDepth, 0.0}, 1);
  eval::SplitSpec split_spec;
  split_spec.train_fraction = 0.5;
  const auto split = eval::split_compgen(observed.factual, split_spec, 2);
  const auto train = eval::subset(observed.factual, split.train);

  learner::TrainConfig tc;
  tc.seed = 5;
  const auto model = estimators::fit_compositional(train, estimators::AccessCase::kXY, tc);
  estimators::OracleComponentModel oracle(classes, CompositionKind::kParallel);

  std::vector<double> fitted, truth;
  double oracle_gap = 0.0;
  for (const auto i : split.test) {
    const auto& unit = observed.factual.units[i];
    const double tau = observed.truth[i].effect();
    truth.push_back(tau);
    fitted.push_back(estimators::infer_cate_parallel(model, unit).tau);
    oracle_gap = std::max(oracle_gap, std::abs(estimators::infer_cate_parallel(oracle, unit).tau - tau));
  }
  const double r2 = eval::r2_score(fitted, truth);
  return {r2 >= 0.99 && oracle_gap <= 1e-6 && truth.size() == 2000,
          fmt("held-out R^2 %.4f on %.0f units, oracle vs component sum max gap %.1e", r2,
              static_cast<double>(truth.size()), oracle_gap)};
}

dgp::ComponentClass linear_class(int id, double slope0, double slope1, double intercept0,
                                 double intercept1, double parent_coef, double noise_sd) {
  dgp::ComponentClass c;
  c.id = ClassId{id};
  c.law = {dgp::CovariateLawKind::kGaussian, {0.0}, {1.0}};
  c.center = {0.0};
  c.scale = {1.0};
  c.clip = 1e9;
  c.arm[0] = {intercept0, {{slope0}}, parent_coef};
  c.arm[1] = {intercept1, {{slope1}}, parent_coef};
  c.noise_sd[0] = c.noise_sd[1] = noise_sd;
  return c;
}

// 3. Monte-Carlo marginalization along a linear-Gaussian chain of three
// components against the closed form from linearity of expectation.
Verdict hierarchical_marginalization() {
  const std::vector<dgp::ComponentClass> classes = {
      linear_class(0, 0.8, 1.6, 0.0, 0.7, 0.0, 0.6), linear_class(1, -0.5, 0.3, 0.2, -0.1, 1.1, 0.9),
      linear_class(2, 0.4, -0.2, 0.0, 0.5, -0.7, 0.5)};
  estimators::OracleComponentModel model(classes, CompositionKind::kSequential);
  Rng rng(31);
  std::normal_distribution<double> x(0.0, 1.0);
  int inside = 0;
  const int units = 200;
  for (int i = 0; i < units; ++i) {
    std::vector<GraphNode> nodes;
    std::vector<Edge> edges;
    StructuredUnit unit;
    unit.unit_id = i;
    for (int j = 0; j < 3; ++j) {
      nodes.push_back({static_cast<NodeId>(j), ClassId{j}, 1});
      if (j > 0) edges.push_back({static_cast<NodeId>(j - 1), static_cast<NodeId>(j)});
      unit.covariates.push_back({x(rng)});
    }
    unit.graph = InteractionGraph::with_computed_depths(nodes, edges);
    double expected[2];
    for (int t = 0; t < 2; ++t) {
      double parent = 0.0;
      for (int j = 0; j < 3; ++j) {
        const auto& arm = classes[static_cast<std::size_t>(j)].arm[t];
        parent = arm.intercept + arm.coef[0][0] * unit.covariates[static_cast<std::size_t>(j)][0] +
                 (j > 0 ? arm.parent_coef * parent : 0.0);
      }
      expected[t] = parent;
    }
    const auto est = estimators::infer_cate_hierarchical(model, unit, {1000, 404});
    if (est.mc_stderr && std::abs(est.tau - (expected[1] - expected[0])) <= 3.0 * *est.mc_stderr) {
      ++inside;
    }
  }
  const double share = static_cast<double>(inside) / units;
  return {share >= 0.95, fmt("%.1f%% of %.0f units within 3 Monte-Carlo standard errors", 100.0 * share,
                             static_cast<double>(units))};
}

// 4. Sequential units, trained on class combinations of size <= 4 and tested
// on units containing all ten classes; then with every size in training.
Verdict compositional_generalization() {
  dgp::DgpConfig dgp_config;
  dgp_config.num_classes = 10;
  dgp_config.composition = CompositionKind::kSequential;
  dgp_config.structure = dgp::StructureMode::kCombination;
  dgp_config.combo_min = 2;
  dgp_config.combo_max = 10;
  dgp_config.degree = 2;
  dgp_config.n_units = 5000;
  dgp_config.seed = 1;
  const eval::ExperimentData data{dgp::generate_experimental_dataset(dgp_config), {}};

  auto config = versus_s_learner();
  config.alphas = {0.0};
  config.split.kind = eval::SplitKind::kCombos;
  std::string errors;
  config.split.k = 4;
  auto low = median_r2(eval::run_experiment(config, data), errors);
  config.split.k = 10;
  auto full = median_r2(eval::run_experiment(config, data), errors);
  if (!errors.empty()) return {false, "error rows: " + errors};

  const double gap_low = low[{"compositional", 0.0}] - low[{"s_learner", 0.0}];
  const double gap_full = std::abs(full[{"compositional", 0.0}] - full[{"s_learner", 0.0}]);
  return {gap_low >= 0.2 && gap_full <= 0.1,
          fmt("K=4: compositional %.3f vs S-learner %.3f; K=10: %.3f vs %.3f (median R^2, 3 seeds)",
              low[{"compositional", 0.0}], low[{"s_learner", 0.0}], full[{"compositional", 0.0}],
              full[{"s_learner", 0.0}])};
}

eval::ExperimentData manufacturing(int units) {
  fabsim::FabsimConfig config;
  config.n_units = units;
  config.seed = 1;
  return {fabsim::generate_manufacturing_dataset(config).dataset, {}};
}

// 5. Depth-based observational bias on the manufacturing domain.
Verdict bias_robustness() {
  const auto data = manufacturing(10000);
  auto config = versus_s_learner();
  config.alphas = {0.0, 5.0, 10.0};
  std::string errors;
  auto r2 = median_r2(eval::run_experiment(config, data), errors);
  if (!errors.empty()) return {false, "error rows: " + errors};
  const double comp_drop = r2[{"compositional", 0.0}] - r2[{"compositional", 10.0}];
  const double s_drop = r2[{"s_learner", 0.0}] - r2[{"s_learner", 10.0}];
  return {comp_drop < s_drop,
          fmt("R^2 drop from alpha 0 to 10: compositional %.3f (%.3f -> %.3f), S-learner %.3f",
              comp_drop, r2[{"compositional", 0.0}], r2[{"compositional", 10.0}], s_drop)};
}

// 6. Within-distribution with 500 training units.
Verdict sample_efficiency() {
  const auto data = manufacturing(10000);
  auto config = versus_s_learner();
  config.alphas = {0.0};
  config.n_train = {500};
  std::string errors;
  auto r2 = median_r2(eval::run_experiment(config, data), errors);
  if (!errors.empty()) return {false, "error rows: " + errors};
  return {r2[{"compositional", 0.0}] > r2[{"s_learner", 0.0}],
          fmt("median R^2 at n_train 500: compositional %.3f, S-learner %.3f",
              r2[{"compositional", 0.0}], r2[{"s_learner", 0.0}])};
}

// Treated share per bin against the bin's mean target propensity. The
// binomial interval at the mean propensity bounds the variance of a sum of
// heterogeneous Bernoulli draws.
bool calibrated_bins(const bias::ObservationalSplit& split, const std::vector<double>& score,
                     std::size_t bins, double& worst_z) {
  std::vector<std::size_t> order(score.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](auto a, auto b) { return score[a] < score[b]; });
  bool ok = true;
  const std::size_t per = order.size() / bins;
  for (std::size_t b = 0; b < bins; ++b) {
    double p_sum = 0.0;
    double treated = 0.0;
    for (std::size_t k = b * per; k < (b + 1) * per; ++k) {
      p_sum += split.truth[order[k]].propensity;
      treated += split.truth[order[k]].t;
    }
    const double p = p_sum / per;
    const double sd = std::sqrt(p * (1.0 - p) / per);
    const double z = std::abs(treated / per - p) / sd;
    worst_z = std::max(worst_z, z);
    ok = ok && z <= 2.5758;
  }
  return ok;
}

// 7. Bias sampler calibration on 10^4 synthetic units.
Verdict bias_calibration() {
  dgp::DgpConfig config;
  config.n_units = 10000;
  config.seed = 17;
  const auto ds = dgp::generate_experimental_dataset(config);
  const auto balanced = bias::sample_observational(ds, {bias::ScoreKind::kTreeDepth, 0.0}, 3);
  double treated = 0.0;
  for (const auto& u : balanced.factual.units) treated += u.treatment();
  const double fraction = treated / static_cast<double>(ds.units.size());
  bool ok = fraction >= 0.485 && fraction <= 0.515;

  double worst_z = 0.0;
  for (const auto kind : {bias::ScoreKind::kCovariateSum, bias::ScoreKind::kTreeDepth}) {
    std::vector<double> score;
    for (const auto& u : ds.units) score.push_back(bias::biasing_score(u, kind));
    for (const double alpha : {2.0, 10.0}) {
      const auto split = bias::sample_observational(ds, {kind, alpha}, 4);
      ok = calibrated_bins(split, score, 10, worst_z) && ok;
    }
  }
  return {ok, fmt("treated fraction at alpha 0: %.4f; worst bin |z| %.2f (99%% bound 2.58)", fraction,
                  worst_z)};
}

// 8. Simulator determinism, output bounds and the lossless line.
Verdict simulator_integrity() {
  fabsim::FabsimConfig config;
  config.n_units = 300;
  config.seed = 8;
  const bool deterministic = dataset_jsonl_text(fabsim::generate_manufacturing_dataset(config).dataset) ==
                             dataset_jsonl_text(fabsim::generate_manufacturing_dataset(config).dataset);

  Rng rng(99);
  std::uniform_int_distribution<int> layout_id(0, fabsim::kLayoutCount - 1), demand(0, 1000), arm(0, 1);
  std::uniform_real_distribution<double> stock(0.0, 2.5);
  std::vector<fabsim::Layout> layouts;
  for (int id = 0; id < fabsim::kLayoutCount; ++id) layouts.push_back(fabsim::build_layout(id, 8));
  int out_of_bounds = 0;
  bool rerun_identical = true;
  for (int run = 0; run < 10000; ++run) {
    const auto& layout = layouts[static_cast<std::size_t>(layout_id(rng))];
    fabsim::SimRun sim{&layout, demand(rng), {}, arm(rng), rng(), {}};
    for (std::size_t s = 0; s < layout.stations.size(); ++s) {
      std::array<int, fabsim::kRawItemCount> items{};
      for (auto& item : items) item = static_cast<int>(stock(rng) * sim.demand);
      sim.inventory.push_back(items);
    }
    const auto result = fabsim::simulate_run(sim);
    if (result.total_parts < 0 || result.total_parts > sim.demand) ++out_of_bounds;
    if (run % 500 == 0) rerun_identical = rerun_identical && fabsim::simulate_run(sim).total_parts == result.total_parts &&
                                          fabsim::simulate_run(sim).total_time == result.total_time;
  }

  fabsim::SimParams lossless;
  lossless.scrap_coef = 0.0;
  lossless.rework_coef = 0.0;
  lossless.fixed_skill = 1.0;
  int lossless_misses = 0;
  for (const auto& layout : layouts) {
    for (int d : {1, 250, 1000}) {
      fabsim::Inventory ample(layout.stations.size(), {2 * d, 2 * d, 2 * d, 2 * d});
      for (int t : {0, 1}) {
        if (fabsim::simulate_run({&layout, d, ample, t, 5, lossless}).total_parts != d) ++lossless_misses;
      }
    }
  }
  return {deterministic && rerun_identical && out_of_bounds == 0 && lossless_misses == 0,
          fmt("deterministic %.0f, out-of-bounds runs %.0f of 10000, lossless misses %.0f",
              deterministic && rerun_identical ? 1.0 : 0.0, out_of_bounds, lossless_misses)};
}

int cli(const std::vector<std::string>& args) {
  std::ostringstream out, err;
  const int code = cli::run_command(args, out, err);
  if (code != 0) std::fprintf(stderr, "%s", err.str().c_str());
  return code;
}

// Every file below dir, keyed by relative path. Timing sidecars hold wall
// clock and are excluded.
std::map<std::string, std::string> snapshot(const fs::path& dir) {
  std::map<std::string, std::string> files;
  for (const auto& entry : fs::recursive_directory_iterator(dir)) {
    if (!entry.is_regular_file()) continue;
    const auto rel = fs::relative(entry.path(), dir).string();
    if (rel.find(".timing.csv") != std::string::npos) continue;
    files[rel] = read_text(entry.path());
  }
  return files;
}

// 9. The whole CLI pipeline twice from one root seed.
Verdict pipeline_reproducibility() {
  const auto root = scratch("pipeline");
  const auto config = (root / "pipeline.toml").string();
  write_text(config,
             "seed = 2024\n"
             "[dgp]\nnum_classes = 5\nn_units = 500\nmax_depth = 6\nmax_extra_nodes = 3\n"
             "[fabsim]\nn_units = 200\n"
             "[train]\nepochs = 10\n"
             "[inference]\nmc_samples = 50\n"
             "[experiment]\nalphas = [0.0, 4.0]\nreplicates = 2\n");
  std::vector<std::map<std::string, std::string>> runs;
  for (const char* name : {"a", "b"}) {
    const auto dir = root / name;
    const auto d = (dir / "data").string();
    const auto m = (dir / "model").string();
    const auto r = (dir / "results").string();
    const auto s = (dir / "sweep").string();
    const std::vector<std::vector<std::string>> steps = {
        {"generate", "--config", config, "--out", d},
        {"simulate", "--config", config, "--out", d},
        {"bias", "--config", config, "--dataset", d + "/synthetic.jsonl", "--alpha", "3", "--out", d},
        {"train", "--config", config, "--dataset", d + "/factual.jsonl", "--out", m, "--jobs", "2"},
        {"infer", "--config", config, "--model", m, "--dataset", d + "/factual.jsonl", "--out", r, "--jobs", "2"},
        {"eval", "--config", config, "--model", m, "--dataset", d + "/factual.jsonl", "--out", r},
        {"sweep", "--config", config, "--dataset", d + "/synthetic.jsonl", "--out", s, "--jobs", "2"}};
    for (const auto& step : steps) {
      if (cli(step) != 0) return {false, "command failed: " + step.front()};
    }
    runs.push_back(snapshot(dir));
  }
  std::vector<std::string> differing;
  for (const auto& [path, bytes] : runs[0]) {
    const auto it = runs[1].find(path);
    if (it == runs[1].end() || it->second != bytes) differing.push_back(path);
  }
  if (runs[0].size() != runs[1].size()) differing.push_back("(file sets differ)");
  std::string detail = fmt("%.0f artifacts compared", static_cast<double>(runs[0].size()));
  for (const auto& p : differing) detail += ", differs: " + p;
  return {differing.empty() && runs[0].size() > 10, detail};
}

}  // namespace

int main(int argc, char** argv) {
  const std::vector<std::pair<const char*, std::function<Verdict()>>> criteria = {
      {"learner soundness", learner_soundness},
      {"parallel oracle equivalence", parallel_oracle},
      {"hierarchical marginalization", hierarchical_marginalization},
      {"compositional generalization", compositional_generalization},
      {"bias robustness", bias_robustness},
      {"sample efficiency", sample_efficiency},
      {"bias sampler calibration", bias_calibration},
      {"simulator integrity", simulator_integrity},
      {"pipeline reproducibility", pipeline_reproducibility}};
  std::set<int> selected;
  for (int i = 1; i < argc; ++i) selected.insert(std::atoi(argv[i]));

  int failures = 0;
  for (std::size_t i = 0; i < criteria.size(); ++i) {
    const int number = static_cast<int>(i) + 1;
    if (!selected.empty() && !selected.count(number)) continue;
    const auto start = std::chrono::steady_clock::now();
    Verdict verdict;
    try {
      verdict = criteria[i].second();
    } catch (const std::exception& e) {
      verdict = {false, std::string("exception: ") + e.what()};
    }
    const double seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    std::printf("%s %d %s: %s [%.1fs]\n", verdict.pass ? "PASS" : "FAIL", number, criteria[i].first,
                verdict.detail.c_str(), seconds);
    std::fflush(stdout);
    failures += !verdict.pass;
  }
  return failures == 0 ? 0 : 1;
}
