#include "compcate/eval/experiment.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <map>
#include <mutex>
#include <sstream>

#include "compcate/core/error.hpp"
#include "compcate/core/io.hpp"
#include "compcate/core/parallel.hpp"
#include "compcate/core/random.hpp"

namespace compcate::eval {

void ExperimentConfig::validate() const {
  if (estimators.empty()) throw ConfigError("at least one estimator is required", "experiment.estimators");
  if (seeds.empty()) throw ConfigError("at least one seed is required", "experiment.seeds");
  if (n_train.empty()) throw ConfigError("at least one training budget is required", "experiment.n_train");
  for (double a : alphas) {
    bias::BiasPolicy{bias_kind, a}.validate();
  }
  if (mc_samples < 1) throw ConfigError("Monte-Carlo sample count must be at least 1", "experiment.mc_samples");
  split.validate();
  train.validate();
}

nlohmann::ordered_json to_json(const ExperimentConfig& c) {
  nlohmann::ordered_json j = nlohmann::ordered_json::object();
  nlohmann::ordered_json est = nlohmann::ordered_json::array();
  for (const auto& e : c.estimators) est.push_back({{"name", e.name()}, {"case", e.case_name()}});
  j["estimators"] = std::move(est);
  j["alphas"] = c.alphas;
  j["bias_kind"] = c.bias_kind == bias::ScoreKind::kTreeDepth ? "tree_depth" : "covariate_sum";
  j["split"] = to_json(c.split);
  j["n_train"] = c.n_train;
  j["seeds"] = c.seeds;
  j["test_limit"] = c.test_limit;
  j["train"] = learner::to_json(c.train);
  j["mc_samples"] = c.mc_samples;
  j["representation_dim"] = c.compositional.representation_dim;
  return j;
}

ExperimentConfig experiment_config_from_json(const nlohmann::json& j) {
  ExperimentConfig c;
  try {
    for (const auto& e : j.at("estimators")) {
      const auto access = e.value("case", std::string("xy"));
      c.estimators.push_back(
          estimators::parse_estimator(e.at("name").get<std::string>(), access == "-" ? "xy" : access));
    }
    c.alphas = j.value("alphas", c.alphas);
    if (j.contains("bias_kind")) c.bias_kind = bias::parse_score_kind(j.at("bias_kind").get<std::string>());
    if (j.contains("split")) c.split = split_spec_from_json(j.at("split"));
    c.n_train = j.value("n_train", c.n_train);
    c.seeds = j.value("seeds", c.seeds);
    c.test_limit = j.value("test_limit", c.test_limit);
    if (j.contains("train")) c.train = learner::train_config_from_json(j.at("train"));
    c.mc_samples = j.value("mc_samples", c.mc_samples);
    c.compositional.representation_dim =
        j.value("representation_dim", c.compositional.representation_dim);
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("bad experiment config: ") + e.what(), "experiment");
  }
  return c;
}

ExperimentData load_experiment_data(const std::filesystem::path& jsonl) {
  ExperimentData data;
  data.dataset = read_dataset(jsonl);
  if (data.dataset.all_experimental()) return data;
  if (!data.dataset.all_factual()) {
    throw DataError(jsonl.string() + " mixes factual and experimental units");
  }
  data.truth = bias::read_truth(jsonl, &data.dataset);
  if (data.truth.size() != data.dataset.units.size()) {
    throw DataError("truth sidecar has " + std::to_string(data.truth.size()) + " records for " +
                    std::to_string(data.dataset.units.size()) + " units");
  }
  for (std::size_t i = 0; i < data.truth.size(); ++i) {
    if (data.truth[i].unit_id != data.dataset.units[i].unit_id) {
      throw DataError("truth sidecar does not belong to " + jsonl.string());
    }
  }
  return data;
}

namespace {

std::string format_double(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

std::string sanitize(std::string s) {
  for (char& c : s) {
    if (c == ',' || c == '\n' || c == '\r' || c == '"') c = ' ';
  }
  return s;
}

std::vector<std::string> split_fields(const std::string& line) {
  std::vector<std::string> out;
  std::string field;
  std::istringstream in(line);
  while (std::getline(in, field, ',')) out.push_back(field);
  if (!line.empty() && line.back() == ',') out.emplace_back();
  return out;
}

}  // namespace

std::string ResultRow::key() const {
  return estimator + "," + access_case + "," + split + "," +
         (alpha ? format_double(*alpha) : std::string("-")) + "," +
         (n_train == 0 ? std::string("all") : std::to_string(n_train)) + "," + std::to_string(seed);
}

std::string result_csv_header() {
  return "estimator,case,split,alpha,n_train,seed,n_test,pehe,r2,status\n";
}

std::string result_csv_line(const ResultRow& row) {
  std::string line = row.key() + "," + std::to_string(row.n_test) + ",";
  if (row.ok()) line += format_double(row.pehe) + "," + format_double(row.r2);
  else line += ",";
  line += "," + sanitize(row.status) + "\n";
  return line;
}

std::string ResultTable::csv() const {
  std::string out = result_csv_header();
  for (const auto& r : rows) out += result_csv_line(r);
  return out;
}

std::string ResultTable::timing_csv() const {
  std::string out = "estimator,case,split,alpha,n_train,seed,runtime_seconds\n";
  for (const auto& r : rows) out += r.key() + "," + format_double(r.runtime_seconds) + "\n";
  return out;
}

ResultTable ResultTable::from_csv(const std::string& text) {
  ResultTable table;
  std::istringstream in(text);
  std::string line;
  bool header = true;
  while (std::getline(in, line)) {
    if (header) {
      header = false;
      if (line + "\n" != result_csv_header()) throw DataError("results file has an unexpected header");
      continue;
    }
    if (line.empty()) continue;
    const auto f = split_fields(line);
    if (f.size() != 10) throw DataError("results row has " + std::to_string(f.size()) + " fields");
    ResultRow r;
    try {
      r.estimator = f[0];
      r.access_case = f[1];
      r.split = f[2];
      if (f[3] != "-") r.alpha = std::stod(f[3]);
      r.n_train = f[4] == "all" ? 0 : std::stoul(f[4]);
      r.seed = std::stoull(f[5]);
      r.n_test = std::stoul(f[6]);
      r.status = f[9];
      if (r.ok()) {
        r.pehe = std::stod(f[7]);
        r.r2 = std::stod(f[8]);
      }
    } catch (const std::logic_error&) {
      throw DataError("malformed results row: " + line);
    }
    table.rows.push_back(std::move(r));
  }
  return table;
}

std::filesystem::path timing_path(const std::filesystem::path& results_csv) {
  return sidecar_path(results_csv, ".timing.csv");
}

std::filesystem::path manifest_path(const std::filesystem::path& results_csv) {
  return sidecar_path(results_csv, ".manifest.json");
}

nlohmann::ordered_json results_manifest(const ExperimentConfig& config, const ExperimentData& data,
                                        const ResultTable& table) {
  nlohmann::ordered_json j = nlohmann::ordered_json::object();
  j["format"] = "compcate.results/1";
  j["stamp"] = make_stamp(data.dataset.info.config_hash, data.dataset.info.seed).to_json();
  j["dataset"] = {{"config_hash", data.dataset.info.config_hash},
                  {"content_hash", content_hash(data.dataset)},
                  {"units", data.dataset.units.size()},
                  {"factual", data.dataset.all_factual()}};
  j["config"] = to_json(config);
  nlohmann::ordered_json rows = nlohmann::ordered_json::array();
  for (const auto& r : table.rows) rows.push_back(r.key());
  j["rows"] = std::move(rows);
  return j;
}

namespace {

struct Cell {
  std::size_t estimator = 0;
  std::optional<double> alpha;
  std::size_t n_train = 0;
  std::uint64_t seed = 0;
};

ResultRow blank_row(const ExperimentConfig& config, const Cell& cell) {
  ResultRow row;
  const auto& spec = config.estimators[cell.estimator];
  row.estimator = spec.name();
  row.access_case = spec.case_name();
  row.split = config.split.label();
  row.alpha = cell.alpha;
  row.n_train = cell.n_train;
  row.seed = cell.seed;
  return row;
}

std::string error_status(const std::exception& e) {
  if (const auto* err = dynamic_cast<const Error*>(&e)) {
    return std::string("error:") + error_kind_name(err->kind()) + ": " + err->what();
  }
  return std::string("error:internal: ") + e.what();
}

std::vector<std::size_t> seeded_subset(std::vector<std::size_t> pool, std::size_t count,
                                       std::uint64_t seed, std::string_view stream) {
  if (count == 0 || count >= pool.size()) return pool;
  Rng rng(derive_seed(seed, stream));
  std::shuffle(pool.begin(), pool.end(), rng);
  pool.resize(count);
  std::sort(pool.begin(), pool.end());
  return pool;
}

// One (alpha, seed) group: the biased dataset and its split.
struct Prepared {
  const Dataset* factual = nullptr;
  const std::vector<bias::TruthRecord>* truth = nullptr;
  bias::ObservationalSplit owned;
  SplitIndices split;
};

void score_cell(const ExperimentConfig& config, const Prepared& prep, const Cell& cell,
                ResultRow& row) {
  if (cell.n_train > prep.split.train.size()) {
    throw DataError("training budget " + std::to_string(cell.n_train) + " exceeds the " +
                    std::to_string(prep.split.train.size()) + " available training units");
  }
  const auto train_idx = seeded_subset(prep.split.train, cell.n_train, cell.seed, "subsample");
  const auto test_idx = seeded_subset(prep.split.test, config.test_limit, cell.seed, "test");
  const Dataset train = subset(*prep.factual, train_idx);
  const Dataset test = subset(*prep.factual, test_idx);

  learner::TrainConfig train_config = config.train;
  train_config.seed = derive_seed(cell.seed, "train");
  const auto fitted = estimators::fit_estimator(config.estimators[cell.estimator], train,
                                                train_config, config.compositional);
  const estimators::InferenceOptions inference{config.mc_samples, derive_seed(cell.seed, "mc")};
  const auto estimates = fitted.estimate(test.units, inference);

  std::vector<double> tau_hat, tau;
  for (std::size_t k = 0; k < test_idx.size(); ++k) {
    tau_hat.push_back(estimates[k].tau);
    tau.push_back((*prep.truth)[test_idx[k]].effect());
  }
  row.n_test = test_idx.size();
  row.pehe = pehe(tau_hat, tau);
  row.r2 = r2_score(tau_hat, tau);
  if (!std::isfinite(row.pehe) || !std::isfinite(row.r2)) {
    throw NumericError("non-finite metric");
  }
}

std::map<std::string, std::string> previous_ok_lines(const std::filesystem::path& csv) {
  std::map<std::string, std::string> out;
  if (!std::filesystem::exists(csv)) return out;
  const auto table = ResultTable::from_csv(read_text(csv));
  for (const auto& r : table.rows) {
    if (r.ok()) out[r.key()] = result_csv_line(r);
  }
  return out;
}

std::map<std::string, double> previous_runtimes(const std::filesystem::path& csv) {
  std::map<std::string, double> out;
  const auto path = timing_path(csv);
  if (!std::filesystem::exists(path)) return out;
  std::istringstream in(read_text(path));
  std::string line;
  std::getline(in, line);
  while (std::getline(in, line)) {
    const auto pos = line.rfind(',');
    if (pos == std::string::npos) continue;
    try {
      out[line.substr(0, pos)] = std::stod(line.substr(pos + 1));
    } catch (const std::logic_error&) {
    }
  }
  return out;
}

}  // namespace

ResultTable run_experiment(const ExperimentConfig& config, const ExperimentData& data,
                           const RunOptions& options) {
  config.validate();
  const bool biasing = !config.alphas.empty();
  if (biasing && !data.dataset.all_experimental()) {
    throw DataError("a bias sweep needs an experimental dataset with both potential outcomes");
  }
  if (!biasing) {
    if (!data.dataset.all_factual()) {
      throw DataError("without a bias sweep the dataset must be factual");
    }
    if (data.truth.size() != data.dataset.units.size()) {
      throw DataError("factual dataset has no matching truth records");
    }
  }

  // Cell order: alpha, seed, estimator, n_train.
  std::vector<std::optional<double>> alphas;
  if (biasing) {
    for (double a : config.alphas) alphas.emplace_back(a);
  } else {
    alphas.emplace_back(std::nullopt);
  }

  std::map<std::string, std::string> reuse;
  std::map<std::string, double> reuse_time;
  if (options.results_csv) {
    const auto manifest_file = manifest_path(*options.results_csv);
    if (std::filesystem::exists(manifest_file) && std::filesystem::exists(*options.results_csv)) {
      const auto old = nlohmann::json::parse(read_text(manifest_file));
      const auto current = nlohmann::json::parse(to_json(config).dump());
      if (old.value("config", nlohmann::json()) != current) {
        throw ConfigError("results at " + options.results_csv->string() +
                          " came from a different experiment configuration", "experiment");
      }
      reuse = previous_ok_lines(*options.results_csv);
      reuse_time = previous_runtimes(*options.results_csv);
    } else if (std::filesystem::exists(*options.results_csv)) {
      std::filesystem::remove(*options.results_csv);
    }
    std::filesystem::create_directories(
        std::filesystem::absolute(*options.results_csv).parent_path());
    write_text(manifest_path(*options.results_csv),
               results_manifest(config, data, ResultTable{}).dump(2) + "\n");
    if (!std::filesystem::exists(*options.results_csv)) {
      write_text(*options.results_csv, result_csv_header());
    }
  }

  std::mutex writer;
  auto append = [&](const ResultRow& row) {
    if (!options.results_csv) return;
    std::lock_guard lock(writer);
    std::ofstream out(*options.results_csv, std::ios::app | std::ios::binary);
    out << result_csv_line(row);
  };

  ResultTable table;
  for (const auto& alpha : alphas) {
    for (std::uint64_t seed : config.seeds) {
      std::vector<Cell> cells;
      for (std::size_t e = 0; e < config.estimators.size(); ++e) {
        for (std::size_t n : config.n_train) cells.push_back({e, alpha, n, seed});
      }
      std::vector<ResultRow> rows;
      std::vector<bool> pending;
      for (const auto& cell : cells) {
        rows.push_back(blank_row(config, cell));
        pending.push_back(!reuse.count(rows.back().key()));
      }

      if (std::find(pending.begin(), pending.end(), true) != pending.end()) {
        Prepared prep;
        std::optional<std::string> group_error;
        try {
          if (alpha) {
            prep.owned = bias::sample_observational(data.dataset, {config.bias_kind, *alpha},
                                                    derive_seed(seed, "bias"));
            prep.factual = &prep.owned.factual;
            prep.truth = &prep.owned.truth;
          } else {
            prep.factual = &data.dataset;
            prep.truth = &data.truth;
          }
          prep.split = split_compgen(*prep.factual, config.split, derive_seed(seed, "split"));
        } catch (const std::exception& e) {
          group_error = error_status(e);
        }

        parallel_for(cells.size(), options.jobs, [&](std::size_t i) {
          if (!pending[i]) return;
          const auto start = std::chrono::steady_clock::now();
          if (group_error) {
            rows[i].status = *group_error;
          } else {
            try {
              score_cell(config, prep, cells[i], rows[i]);
            } catch (const std::exception& e) {
              rows[i].status = error_status(e);
            }
          }
          rows[i].runtime_seconds =
              std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
          append(rows[i]);
        });
      }

      for (std::size_t i = 0; i < rows.size(); ++i) {
        if (!pending[i]) {
          const auto key = rows[i].key();
          auto parsed = ResultTable::from_csv(result_csv_header() + reuse.at(key)).rows.front();
          parsed.runtime_seconds = reuse_time.count(key) ? reuse_time.at(key) : 0.0;
          rows[i] = std::move(parsed);
        }
        table.rows.push_back(std::move(rows[i]));
      }
    }
  }

  if (options.results_csv) {
    write_text(*options.results_csv, table.csv());
    write_text(timing_path(*options.results_csv), table.timing_csv());
    write_text(manifest_path(*options.results_csv),
               results_manifest(config, data, table).dump(2) + "\n");
  }
  return table;
}

}  // namespace compcate::eval
