#include "compcate/eval/eval.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <set>

#include "compcate/core/error.hpp"
#include "compcate/core/random.hpp"

namespace compcate::eval {

namespace {

void check_lengths(std::span<const double> estimates, std::span<const double> truths,
                   std::size_t minimum) {
  if (estimates.size() != truths.size()) {
    throw DataError("metric inputs differ in length: " + std::to_string(estimates.size()) +
                    " estimates, " + std::to_string(truths.size()) + " truths");
  }
  if (truths.size() < minimum) {
    throw DataError("metric needs at least " + std::to_string(minimum) + " samples");
  }
}

}  // namespace

double pehe(std::span<const double> estimates, std::span<const double> truths) {
  check_lengths(estimates, truths, 1);
  double sum = 0.0;
  for (std::size_t i = 0; i < truths.size(); ++i) {
    const double e = estimates[i] - truths[i];
    sum += e * e;
  }
  return sum / static_cast<double>(truths.size());
}

double r2_score(std::span<const double> estimates, std::span<const double> truths) {
  check_lengths(estimates, truths, 2);
  const double mean =
      std::accumulate(truths.begin(), truths.end(), 0.0) / static_cast<double>(truths.size());
  double res = 0.0, tot = 0.0;
  for (std::size_t i = 0; i < truths.size(); ++i) {
    res += (estimates[i] - truths[i]) * (estimates[i] - truths[i]);
    tot += (truths[i] - mean) * (truths[i] - mean);
  }
  if (tot == 0.0) throw NumericError("R^2 is undefined for constant true effects");
  return 1.0 - res / tot;
}

void SplitSpec::validate() const {
  if (!(train_fraction > 0.0 && train_fraction < 1.0)) {
    throw ConfigError("train fraction must lie strictly between 0 and 1", "split.train_fraction");
  }
  if (kind == SplitKind::kDepth && k < 1) {
    throw ConfigError("depth split needs k >= 1", "split.k");
  }
  if (kind == SplitKind::kCombos && k < 2) {
    throw ConfigError("combination split needs k >= 2", "split.k");
  }
  if (eval_depth < 0) throw ConfigError("evaluation depth must be >= 0", "split.eval_depth");
}

std::string SplitSpec::label() const {
  switch (kind) {
    case SplitKind::kWid: return "wid";
    case SplitKind::kDepth:
      return "depth<=" + std::to_string(k) + (eval_depth > 0 ? "@" + std::to_string(eval_depth) : "");
    case SplitKind::kCombos: return "combos<=" + std::to_string(k);
  }
  return "wid";
}

nlohmann::ordered_json to_json(const SplitSpec& s) {
  nlohmann::ordered_json j = nlohmann::ordered_json::object();
  j["kind"] = s.kind == SplitKind::kWid ? "wid" : s.kind == SplitKind::kDepth ? "depth" : "combos";
  j["k"] = s.k;
  j["eval_depth"] = s.eval_depth;
  j["train_fraction"] = s.train_fraction;
  return j;
}

SplitSpec split_spec_from_json(const nlohmann::json& j) {
  SplitSpec s;
  try {
    const auto kind = j.value("kind", std::string("wid"));
    if (kind == "wid") {
      s.kind = SplitKind::kWid;
    } else if (kind == "depth") {
      s.kind = SplitKind::kDepth;
    } else if (kind == "combos") {
      s.kind = SplitKind::kCombos;
    } else {
      throw ConfigError("unknown split kind '" + kind + "'", "split.kind");
    }
    s.k = j.value("k", s.k);
    s.eval_depth = j.value("eval_depth", s.eval_depth);
    s.train_fraction = j.value("train_fraction", s.train_fraction);
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("bad split spec: ") + e.what(), "split");
  }
  return s;
}

SplitIndices split_compgen(const Dataset& dataset, const SplitSpec& spec, std::uint64_t seed) {
  spec.validate();
  const auto& units = dataset.units;
  int eval_depth = spec.eval_depth;
  if (spec.kind == SplitKind::kDepth && eval_depth == 0) {
    for (const auto& u : units) eval_depth = std::max(eval_depth, u.graph.depth());
  }

  SplitIndices out;
  std::vector<std::size_t> either;
  for (std::size_t i = 0; i < units.size(); ++i) {
    bool train_ok = true, test_ok = true;
    if (spec.kind == SplitKind::kDepth) {
      const int depth = units[i].graph.depth();
      train_ok = depth <= spec.k;
      test_ok = depth == eval_depth;
    } else if (spec.kind == SplitKind::kCombos) {
      std::set<int> classes;
      for (const auto& node : units[i].graph.nodes()) classes.insert(node.cls.value);
      const int size = static_cast<int>(classes.size());
      train_ok = size >= 2 && size <= spec.k;
      test_ok = size == dataset.info.num_classes;
    }
    if (train_ok && test_ok) {
      either.push_back(i);
    } else if (train_ok) {
      out.train.push_back(i);
    } else if (test_ok) {
      out.test.push_back(i);
    }
  }

  Rng rng(derive_seed(seed, "split"));
  std::shuffle(either.begin(), either.end(), rng);
  const auto to_train = static_cast<std::size_t>(
      std::llround(spec.train_fraction * static_cast<double>(either.size())));
  out.train.insert(out.train.end(), either.begin(),
                   either.begin() + static_cast<std::ptrdiff_t>(to_train));
  out.test.insert(out.test.end(), either.begin() + static_cast<std::ptrdiff_t>(to_train),
                  either.end());
  std::sort(out.train.begin(), out.train.end());
  std::sort(out.test.begin(), out.test.end());
  if (out.train.empty()) throw DataError("split " + spec.label() + " leaves no training units");
  if (out.test.empty()) throw DataError("split " + spec.label() + " leaves no test units");
  return out;
}

Dataset subset(const Dataset& dataset, std::span<const std::size_t> indices) {
  Dataset out;
  out.info = dataset.info;
  out.units.reserve(indices.size());
  for (std::size_t i : indices) out.units.push_back(dataset.units.at(i));
  return out;
}

}  // namespace compcate::eval
