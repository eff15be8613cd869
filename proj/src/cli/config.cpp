#include "lineage/cli/config.hpp"

#include <fstream>
#include <set>
#include <sstream>

#include <yaml-cpp/yaml.h>

#include "lineage/errors.hpp"
#include "lineage/util/seed.hpp"

namespace lineage::cli {
namespace {

using nlohmann::json;

nlohmann::json yaml_to_json(const YAML::Node& n) {
  switch (n.Type()) {
    case YAML::NodeType::Null:
    case YAML::NodeType::Undefined:
      return nullptr;
    case YAML::NodeType::Sequence: {
      json a = json::array();
      for (const auto& e : n) a.push_back(yaml_to_json(e));
      return a;
    }
    case YAML::NodeType::Map: {
      json o = json::object();
      for (const auto& kv : n) o[kv.first.as<std::string>()] = yaml_to_json(kv.second);
      return o;
    }
    case YAML::NodeType::Scalar:
      break;
  }
  const std::string s = n.Scalar();
  if (n.Tag() == "!") return s;  // quoted
  if (s == "true" || s == "True") return true;
  if (s == "false" || s == "False") return false;
  if (s == "null" || s == "~") return nullptr;
  try {
    std::size_t used = 0;
    if (s.find_first_of(".eE") == std::string::npos) {
      if (!s.empty() && s[0] != '-') {
        const unsigned long long u = std::stoull(s, &used);
        if (used == s.size()) return u;
      } else {
        const long long i = std::stoll(s, &used);
        if (used == s.size()) return i;
      }
    }
    const double d = std::stod(s, &used);
    if (used == s.size()) return d;
  } catch (const std::exception&) {
  }
  return s;
}

void check_keys(const json& j, const std::string& where, std::initializer_list<const char*> allowed) {
  if (!j.is_object()) throw ConfigError(where + " must be a mapping");
  std::set<std::string> ok(allowed.begin(), allowed.end());
  for (const auto& [k, _] : j.items())
    if (!ok.count(k)) throw ConfigError("unknown key '" + k + "' in " + where);
}

template <class T>
void get(const json& j, const char* key, T& out) {
  if (j.contains(key) && !j.at(key).is_null()) out = j.at(key).get<T>();
}

template <class T>
void get(const json& j, const char* key, std::optional<T>& out) {
  if (j.contains(key) && !j.at(key).is_null()) out = j.at(key).get<T>();
}

template <class T>
json opt(const std::optional<T>& v) {
  return v ? json(*v) : json(nullptr);
}

}  // namespace

json to_json(const RunConfig& c) {
  json tasks = json::array();
  for (const auto& t : c.zoo.tasks) tasks.push_back(t);
  json grids = json::array();
  for (const auto& g : c.zoo.child_grids) grids.push_back(g);
  return {
      {"command", c.command},
      {"seed", c.seed},
      {"workers", c.workers},
      {"out", c.out},
      {"zoo",
       {{"path", c.zoo.path},
        {"parents", c.zoo.parents},
        {"accuracy_floor", c.zoo.accuracy_floor},
        {"hidden", c.zoo.hidden},
        {"activation", std::string(nn::to_string(c.zoo.activation))},
        {"shared_init", c.zoo.shared_init},
        {"tasks", tasks},
        {"parent_grid", c.zoo.parent_grid},
        {"child_grids", grids}}},
      {"eval",
       {{"methods", c.eval.methods},
        {"alphas", c.eval.alphas},
        {"taps", c.eval.taps},
        {"samples", c.eval.samples},
        {"folds", c.eval.folds},
        {"validation_fraction", c.eval.validation_fraction},
        {"ancestor_generation", c.eval.ancestor_generation},
        {"gap_matrix", c.eval.gap_matrix},
        {"scatter", c.eval.scatter},
        {"scatter_alpha", c.eval.scatter_alpha},
        {"scatter_pairs", c.eval.scatter_pairs},
        {"oracle_budget", c.eval.oracle_budget}}},
      {"detect",
       {{"child", c.detect.child},
        {"method", c.detect.method},
        {"alpha", c.detect.alpha},
        {"tap", c.detect.tap},
        {"candidates", c.detect.candidates},
        {"ancestor_generation", opt(c.detect.ancestor_generation)},
        {"samples", c.detect.samples},
        {"oracle", c.detect.oracle},
        {"oracle_budget", c.detect.oracle_budget}}},
      {"detector",
       {{"model", c.detector.model},
        {"planes", c.detector.planes},
        {"epochs", c.detector.epochs},
        {"lr", c.detector.lr},
        {"ancestor_generation", c.detector.ancestor_generation},
        {"descendant_generation", opt(c.detector.descendant_generation)},
        {"withhold_parent", opt(c.detector.withhold_parent)},
        {"resume", c.detector.resume},
        {"shuffle_labels", c.detector.shuffle_labels}}},
  };
}

RunConfig config_from_json(const json& j) {
  RunConfig c;
  try {
    check_keys(j, "config", {"command", "seed", "workers", "out", "zoo", "eval", "detect", "detector"});
    get(j, "command", c.command);
    get(j, "seed", c.seed);
    get(j, "workers", c.workers);
    get(j, "out", c.out);
    if (j.contains("zoo")) {
      const json& z = j.at("zoo");
      check_keys(z, "zoo",
                 {"path", "parents", "accuracy_floor", "hidden", "activation", "shared_init", "tasks", "parent_grid",
                  "child_grids"});
      get(z, "path", c.zoo.path);
      get(z, "parents", c.zoo.parents);
      get(z, "accuracy_floor", c.zoo.accuracy_floor);
      get(z, "hidden", c.zoo.hidden);
      get(z, "shared_init", c.zoo.shared_init);
      if (z.contains("activation")) c.zoo.activation = nn::parse_activation(z.at("activation").get<std::string>());
      if (z.contains("tasks")) {
        std::uint64_t k = 0;
        for (json t : z.at("tasks")) {
          // Tasks without their own seed draw one from the top-level seed.
          if (!t.contains("seed")) t["seed"] = derive_seed({c.seed, 0x7a5c, k});
          c.zoo.tasks.push_back(t.get<zoo::TaskSpec>());
          ++k;
        }
      }
      get(z, "parent_grid", c.zoo.parent_grid);
      if (z.contains("child_grids")) {
        const json& g = z.at("child_grids");
        if (g.is_object()) c.zoo.child_grids.push_back(g.get<zoo::HyperGrid>());
        else c.zoo.child_grids = g.get<std::vector<zoo::HyperGrid>>();
      }
    }
    if (j.contains("eval")) {
      const json& e = j.at("eval");
      check_keys(e, "eval",
                 {"methods", "alphas", "taps", "samples", "folds", "validation_fraction", "ancestor_generation",
                  "gap_matrix", "scatter", "scatter_alpha", "scatter_pairs", "oracle_budget"});
      get(e, "methods", c.eval.methods);
      get(e, "alphas", c.eval.alphas);
      get(e, "taps", c.eval.taps);
      get(e, "samples", c.eval.samples);
      get(e, "folds", c.eval.folds);
      get(e, "validation_fraction", c.eval.validation_fraction);
      get(e, "ancestor_generation", c.eval.ancestor_generation);
      get(e, "gap_matrix", c.eval.gap_matrix);
      get(e, "scatter", c.eval.scatter);
      get(e, "scatter_alpha", c.eval.scatter_alpha);
      get(e, "scatter_pairs", c.eval.scatter_pairs);
      get(e, "oracle_budget", c.eval.oracle_budget);
    }
    if (j.contains("detect")) {
      const json& d = j.at("detect");
      check_keys(d, "detect",
                 {"child", "method", "alpha", "tap", "candidates", "ancestor_generation", "samples", "oracle",
                  "oracle_budget"});
      get(d, "child", c.detect.child);
      get(d, "method", c.detect.method);
      get(d, "alpha", c.detect.alpha);
      get(d, "tap", c.detect.tap);
      get(d, "candidates", c.detect.candidates);
      get(d, "ancestor_generation", c.detect.ancestor_generation);
      get(d, "samples", c.detect.samples);
      get(d, "oracle", c.detect.oracle);
      get(d, "oracle_budget", c.detect.oracle_budget);
    }
    if (j.contains("detector")) {
      const json& d = j.at("detector");
      check_keys(d, "detector",
                 {"model", "planes", "epochs", "lr", "ancestor_generation", "descendant_generation",
                  "withhold_parent", "resume", "shuffle_labels"});
      if (d.contains("model")) {
        check_keys(d.at("model"), "detector.model",
                   {"d_model", "heads", "ffn", "mid_channels", "use_weights", "use_features", "no_parent"});
        c.detector.model = d.at("model").get<detector::DetectorConfig>();
      }
      if (d.contains("planes")) {
        check_keys(d.at("planes"), "detector.planes", {"weight_block", "feature_tap", "feature_samples", "pad"});
        c.detector.planes = d.at("planes").get<detector::PlaneConfig>();
      }
      get(d, "epochs", c.detector.epochs);
      get(d, "lr", c.detector.lr);
      get(d, "ancestor_generation", c.detector.ancestor_generation);
      get(d, "descendant_generation", c.detector.descendant_generation);
      get(d, "withhold_parent", c.detector.withhold_parent);
      get(d, "resume", c.detector.resume);
      get(d, "shuffle_labels", c.detector.shuffle_labels);
    }
  } catch (const json::exception& e) {
    throw ConfigError(std::string("bad config value: ") + e.what());
  }
  return c;
}

json parse_config_text(const std::string& text) {
  try {
    return yaml_to_json(YAML::Load(text));
  } catch (const YAML::Exception& e) {
    throw ConfigError(std::string("cannot parse config: ") + e.what());
  }
}

RunConfig load_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot read config " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  json j = parse_config_text(ss.str());
  if (j.is_null()) j = json::object();
  return config_from_json(j);
}

}  // namespace lineage::cli
