#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "lineage/detector/dataset.hpp"
#include "lineage/detector/model.hpp"
#include "lineage/nn/mlp.hpp"
#include "lineage/zoo/zoo.hpp"

namespace lineage::cli {

struct ZooSection {
  std::string path;  // existing zoo for eval/detect/train-detector
  std::size_t parents = 6;
  double accuracy_floor = 0.8;
  std::vector<std::size_t> hidden{64, 32};
  nn::Activation activation = nn::Activation::relu;
  bool shared_init = false;  // every parent starts from one initialization
  std::vector<zoo::TaskSpec> tasks;  // first task trains the parents
  zoo::HyperGrid parent_grid;
  std::vector<zoo::HyperGrid> child_grids;  // one per later task; a single grid is reused
};

struct EvalSection {
  std::vector<std::string> methods;  // "l2", "l2+approx", "lp:3+approx", "random", ...
  std::vector<double> alphas{0.001, 0.01, 0.1};
  std::vector<std::string> taps{"act1"};
  std::size_t samples = 128;
  std::size_t folds = 1;
  double validation_fraction = 0.2;
  int ancestor_generation = 1;
  bool gap_matrix = false;
  bool scatter = false;  // baseline/approx/oracle per pair
  double scatter_alpha = 0.1;
  std::size_t scatter_pairs = 200;
  std::size_t oracle_budget = nn::kDefaultJacobianBudget;
};

struct DetectSection {
  std::string child;
  std::string method = "l2+approx";
  double alpha = 0.01;
  std::string tap = "act1";
  std::vector<std::string> candidates;  // default: generation ancestor_generation
  std::optional<int> ancestor_generation;  // default: the child's generation − 1
  std::size_t samples = 128;
  bool oracle = false;
  std::size_t oracle_budget = nn::kDefaultJacobianBudget;
};

struct DetectorSection {
  detector::DetectorConfig model;
  detector::PlaneConfig planes;
  std::size_t epochs = 100;
  double lr = 0.01;
  int ancestor_generation = 1;
  std::optional<int> descendant_generation;
  std::optional<std::string> withhold_parent;
  bool resume = false;
  bool shuffle_labels = false;
};

struct RunConfig {
  std::string command;
  std::uint64_t seed = 0;
  std::size_t workers = 1;
  std::string out;
  ZooSection zoo;
  EvalSection eval;
  DetectSection detect;
  DetectorSection detector;
};

// Canonical JSON: every field present, keys sorted.
nlohmann::json to_json(const RunConfig& c);
// Missing keys take defaults; unknown keys and type mismatches are ConfigErrors.
RunConfig config_from_json(const nlohmann::json& j);

// Nested key-value text (YAML; JSON is accepted as a subset).
nlohmann::json parse_config_text(const std::string& text);
RunConfig load_config(const std::filesystem::path& path);

}  // namespace lineage::cli
