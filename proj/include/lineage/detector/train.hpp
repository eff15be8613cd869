#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "lineage/detector/dataset.hpp"
#include "lineage/detector/model.hpp"
#include "lineage/nn/adam.hpp"

namespace lineage::detector {

struct TrainOptions {
  std::size_t epochs = 100;
  double lr = 0.01;
  std::uint64_t seed = 0;  // init and per-epoch shuffles
  std::size_t workers = 1;
  bool shuffle_labels = false;  // null-model runs
  std::optional<std::filesystem::path> checkpoint;  // written after every epoch
  bool resume = false;
  std::optional<std::size_t> stop_after;  // end this call after that many epochs in total
};

struct LogRow {
  std::size_t epoch = 0;
  double train_loss = 0.0;
  double val_loss = 0.0;
  double val_accuracy = 0.0;
};

struct SplitMetrics {
  double accuracy = 0.0;
  double loss = 0.0;
  std::size_t count = 0;
  std::optional<double> no_parent_recall;  // over samples labelled M
  std::vector<std::size_t> predictions;
};

struct TrainResult {
  nn::ParamVector params;  // best validation checkpoint
  std::size_t best_epoch = 0;
  double best_val_accuracy = 0.0;
  std::vector<LogRow> log;
  std::size_t epochs_done = 0;
};

std::string log_csv(const std::vector<LogRow>& log);

// Initial loss and accuracy for each split are evaluated as epoch 0.
TrainResult train_detector(const DetectorConfig& cfg, const DetectorDataset& data, const Split& split,
                           const TrainOptions& opts);

SplitMetrics evaluate_split(const DetectorConfig& cfg, const nn::ParamVector& params, const DetectorDataset& data,
                            const std::vector<std::size_t>& indices, std::size_t workers = 1);

}  // namespace lineage::detector
