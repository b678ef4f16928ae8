#include "compcate/core/io.hpp"

#include <fstream>
#include <sstream>

#include "compcate/core/error.hpp"
#include "compcate/core/random.hpp"
#include "compcate/version.hpp"

namespace compcate {
namespace {

OrderedJson outcome_to_json(const Outcome& outcome) {
  OrderedJson j = OrderedJson::object();
  if (const auto* po = std::get_if<PotentialOutcomes>(&outcome)) {
    j["y0"] = po->y0;
    j["y1"] = po->y1;
  } else {
    const auto& f = std::get<FactualOutcome>(outcome);
    j["t"] = f.t;
    j["y"] = f.y;
  }
  return j;
}

Outcome outcome_from_json(const nlohmann::json& j) {
  if (j.contains("y0") && j.contains("y1")) {
    return PotentialOutcomes{j.at("y0").get<double>(), j.at("y1").get<double>()};
  }
  if (j.contains("t") && j.contains("y")) {
    const int t = j.at("t").get<int>();
    if (t != 0 && t != 1) throw DataError("treatment must be 0 or 1");
    return FactualOutcome{t, j.at("y").get<double>()};
  }
  throw DataError("outcome record needs {y0,y1} or {t,y}");
}

}  // namespace

OrderedJson unit_to_json(const StructuredUnit& unit) {
  OrderedJson j = OrderedJson::object();
  j["unit_id"] = unit.unit_id;
  OrderedJson nodes = OrderedJson::array();
  for (std::size_t i = 0; i < unit.graph.size(); ++i) {
    const GraphNode& n = unit.graph.node(i);
    OrderedJson node = OrderedJson::object();
    node["id"] = n.id;
    node["class"] = n.cls.value;
    node["depth"] = n.depth;
    node["x"] = i < unit.covariates.size() ? unit.covariates[i] : std::vector<double>{};
    nodes.push_back(std::move(node));
  }
  j["nodes"] = std::move(nodes);
  OrderedJson edges = OrderedJson::array();
  for (const Edge& e : unit.graph.edges()) edges.push_back(OrderedJson::array({e.parent, e.child}));
  j["edges"] = std::move(edges);
  if (unit.has_component_outcomes()) {
    OrderedJson comps = OrderedJson::object();
    for (std::size_t i = 0; i < unit.component_outcomes.size(); ++i) {
      comps[std::to_string(unit.graph.node(i).id)] = outcome_to_json(unit.component_outcomes[i]);
    }
    j["y_components"] = std::move(comps);
  }
  if (unit.unit_outcome) j["y_unit"] = outcome_to_json(*unit.unit_outcome);
  return j;
}

StructuredUnit unit_from_json(const nlohmann::json& record) {
  try {
    StructuredUnit unit;
    unit.unit_id = record.at("unit_id").get<std::int64_t>();
    std::vector<GraphNode> nodes;
    for (const auto& n : record.at("nodes")) {
      nodes.push_back({n.at("id").get<int>(), ClassId{n.at("class").get<int>()},
                       n.at("depth").get<int>()});
      unit.covariates.push_back(n.at("x").get<std::vector<double>>());
    }
    std::vector<Edge> edges;
    for (const auto& e : record.at("edges")) {
      if (!e.is_array() || e.size() != 2) throw DataError("edge must be [parent, child]");
      edges.push_back({e[0].get<int>(), e[1].get<int>()});
    }
    unit.graph = InteractionGraph(std::move(nodes), std::move(edges));
    if (record.contains("y_components")) {
      const auto& comps = record.at("y_components");
      unit.component_outcomes.resize(unit.graph.size());
      if (comps.size() != unit.graph.size()) {
        throw DataError("y_components must cover every node");
      }
      for (auto it = comps.begin(); it != comps.end(); ++it) {
        auto index = unit.graph.index_of(std::stoi(it.key()));
        if (!index) throw DataError("y_components names unknown node " + it.key());
        unit.component_outcomes[*index] = outcome_from_json(it.value());
      }
    }
    if (record.contains("y_unit")) unit.unit_outcome = outcome_from_json(record.at("y_unit"));
    return unit;
  } catch (const nlohmann::json::exception& e) {
    throw DataError(std::string("malformed unit record: ") + e.what());
  }
}

std::filesystem::path sidecar_path(const std::filesystem::path& jsonl, const std::string& suffix) {
  std::filesystem::path out = jsonl;
  out.replace_extension();
  out += suffix;
  return out;
}

OrderedJson ArtifactStamp::to_json() const {
  OrderedJson j = OrderedJson::object();
  j["tool_version"] = tool_version;
  j["config_hash"] = config_hash;
  j["seed"] = seed;
  return j;
}

ArtifactStamp ArtifactStamp::from_json(const nlohmann::json& j) {
  return {j.at("tool_version").get<std::string>(), j.at("config_hash").get<std::string>(),
          j.at("seed").get<std::uint64_t>()};
}

ArtifactStamp make_stamp(const std::string& config_hash, std::uint64_t seed) {
  return {std::string(kVersion), config_hash, seed};
}

OrderedJson info_to_json(const DatasetInfo& info) {
  OrderedJson j = OrderedJson::object();
  j["num_classes"] = info.num_classes;
  j["class_arity"] = info.class_arity;
  j["composition"] = std::string(to_string(info.composition));
  j["max_in_degree"] = info.max_in_degree;
  j["max_depth"] = info.max_depth;
  j["source"] = info.source;
  j["seed"] = info.seed;
  j["config_hash"] = info.config_hash;
  return j;
}

DatasetInfo info_from_json(const nlohmann::json& j) {
  try {
    DatasetInfo info;
    info.num_classes = j.at("num_classes").get<int>();
    info.class_arity = j.at("class_arity").get<std::vector<int>>();
    info.composition = parse_composition(j.at("composition").get<std::string>());
    info.max_in_degree = j.at("max_in_degree").get<int>();
    info.max_depth = j.at("max_depth").get<int>();
    info.source = j.value("source", "");
    info.seed = j.value("seed", std::uint64_t{0});
    info.config_hash = j.value("config_hash", "");
    return info;
  } catch (const nlohmann::json::exception& e) {
    throw DataError(std::string("malformed dataset info: ") + e.what());
  }
}

std::string dataset_jsonl_text(const Dataset& dataset) {
  std::string text;
  for (const auto& unit : dataset.units) {
    text += unit_to_json(unit).dump();
    text += '\n';
  }
  return text;
}

std::string content_hash(const Dataset& dataset) {
  return hex64(fnv1a64(dataset_jsonl_text(dataset)));
}

void write_dataset(const std::filesystem::path& jsonl, const Dataset& dataset,
                   const ArtifactStamp& stamp) {
  const std::string text = dataset_jsonl_text(dataset);
  write_text(jsonl, text);
  OrderedJson meta = OrderedJson::object();
  meta["format"] = "compcate.dataset/1";
  meta["stamp"] = stamp.to_json();
  meta["info"] = info_to_json(dataset.info);
  meta["units"] = dataset.units.size();
  meta["content_hash"] = hex64(fnv1a64(text));
  write_text(sidecar_path(jsonl, ".meta.json"), meta.dump(2) + "\n");
}

Dataset read_dataset(const std::filesystem::path& jsonl) {
  const auto meta_path = sidecar_path(jsonl, ".meta.json");
  if (!std::filesystem::exists(jsonl)) throw DataError("dataset not found: " + jsonl.string());
  if (!std::filesystem::exists(meta_path)) {
    throw DataError("dataset metadata not found: " + meta_path.string());
  }
  Dataset dataset;
  nlohmann::json meta;
  try {
    meta = nlohmann::json::parse(read_text(meta_path));
  } catch (const nlohmann::json::exception& e) {
    throw DataError("cannot parse " + meta_path.string() + ": " + e.what());
  }
  dataset.info = info_from_json(meta.at("info"));
  const std::string text = read_text(jsonl);
  if (meta.contains("content_hash") && meta.at("content_hash") != hex64(fnv1a64(text))) {
    throw DataError(jsonl.string() + " does not match the content hash in " + meta_path.string());
  }
  std::istringstream lines(text);
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(lines, line)) {
    ++line_no;
    if (line.empty()) continue;
    try {
      dataset.units.push_back(unit_from_json(nlohmann::json::parse(line)));
    } catch (const nlohmann::json::exception& e) {
      throw DataError(jsonl.string() + ":" + std::to_string(line_no) + ": " + e.what());
    } catch (const DataError& e) {
      throw DataError(jsonl.string() + ":" + std::to_string(line_no) + ": " + e.what());
    }
  }
  return dataset;
}

std::string read_text(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open " + path.string());
  std::ostringstream buffer;
  buffer << in.rdbuf();
  return buffer.str();
}

void write_text(const std::filesystem::path& path, const std::string& text) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  auto tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw DataError("cannot write " + path.string());
    out << text;
    if (!out) throw DataError("write failed for " + path.string());
  }
  std::filesystem::rename(tmp, path);
}

}  // namespace compcate
