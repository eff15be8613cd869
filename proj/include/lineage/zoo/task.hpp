#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "lineage/nn/tensor.hpp"

namespace lineage::zoo {

struct Dataset {
  nn::Tensor x;                 // [N×d]
  std::vector<std::size_t> y;  // labels in [0, classes)
  std::size_t classes = 0;

  std::size_t size() const { return y.size(); }
  std::size_t dims() const { return x.cols(); }
  // Rows `idx` in the given order.
  Dataset subset(std::span<const std::size_t> idx) const;
};

enum class TaskKind { gaussian_blobs, idx_files };

// A classification task. Blobs: cluster centres ~ N(0, I) on the first
// `active_dims` coordinates, samples = centre + spread·N(0, I) there, and the
// remaining coordinates are identically zero. Clusters map onto classes.
struct TaskSpec {
  std::string name;
  TaskKind kind = TaskKind::gaussian_blobs;
  std::uint64_t seed = 0;
  std::size_t classes = 2;
  std::size_t dims = 2;
  std::size_t active_dims = 0;  // 0 means all
  double spread = 1.0;
  std::size_t clusters = 0;      // 0 means one per class
  std::uint64_t label_seed = 0;  // 0 keeps cluster k in class k mod classes
  std::filesystem::path images, labels;
  std::size_t subsample = 0;  // 0 means all rows
  std::size_t train_count = 512;
  std::size_t test_count = 256;

  std::size_t input_dim() const;
};

void to_json(nlohmann::json& j, const TaskSpec& t);
void from_json(const nlohmann::json& j, TaskSpec& t);

struct TaskData {
  Dataset train, test;
};

// Deterministic in the spec (bit-identical for a fixed seed).
TaskData generate(const TaskSpec& spec);

// MNIST-style IDX files: images 0x00000803 (u8, N×rows×cols), labels
// 0x00000801 (u8, N). Pixels are scaled to [0, 1] and flattened.
Dataset load_idx(const std::filesystem::path& images, const std::filesystem::path& labels);

}  // namespace lineage::zoo
