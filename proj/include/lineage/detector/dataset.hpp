#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "lineage/detector/model.hpp"
#include "lineage/zoo/zoo.hpp"

namespace lineage::detector {

struct PlaneConfig {
  std::string weight_block = "fc1.weight";
  std::string feature_tap = "act1";
  std::size_t feature_samples = 32;
  bool pad = true;

  friend bool operator==(const PlaneConfig&, const PlaneConfig&) = default;
};

void to_json(nlohmann::json& j, const PlaneConfig& c);
void from_json(const nlohmann::json& j, PlaneConfig& c);

struct DetectorSample {
  std::string child_id;
  std::vector<StackedInput> candidates;
  std::size_t label = 0;  // candidate index, or M for "no parent"
};

struct DetectorDataset {
  std::vector<std::string> candidate_ids;
  std::vector<DetectorSample> samples;  // sorted by child id
  std::size_t excluded = 0;             // true ancestor missing and no-parent mode off

  std::size_t candidate_count() const { return candidate_ids.size(); }
};

struct DatasetOptions {
  int ancestor_generation = 1;
  std::optional<int> descendant_generation;
  std::optional<std::string> withhold_parent;  // removed from candidates; its children get label M
  bool use_weights = true;
  bool use_features = true;
  std::uint64_t input_seed = 0;
  std::size_t workers = 1;
};

DetectorDataset build_dataset(const zoo::Zoo& zoo, const PlaneConfig& planes, const DatasetOptions& opts);

struct Split {
  std::vector<std::size_t> train, validation, test;  // indices into samples
};

// Seeded shuffle then 7:1:2 (by default). ConfigError names an empty partition.
Split split_dataset(std::size_t n, std::uint64_t seed, double train_frac = 0.7, double val_frac = 0.1);

}  // namespace lineage::detector
