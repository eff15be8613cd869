#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "lineage/nn/param_vector.hpp"
#include "lineage/nn/tape.hpp"

namespace lineage::detector {

struct DetectorConfig {
  std::size_t d_model = 32;       // also the encoder's output channels
  std::size_t heads = 4;
  std::size_t ffn = 128;
  std::size_t mid_channels = 3;   // after the 1×1 layer
  bool use_weights = true;
  bool use_features = true;
  bool no_parent = false;         // adds the learnable s′

  void validate() const;
  friend bool operator==(const DetectorConfig&, const DetectorConfig&) = default;
};

void to_json(nlohmann::json& j, const DetectorConfig& c);
void from_json(const nlohmann::json& j, DetectorConfig& c);

// Parent plane then child plane, per modality. An empty tensor marks a
// modality that is not used.
struct StackedInput {
  nn::Tensor weights;   // [2×Hθ×Wθ]
  nn::Tensor features;  // [2×HF×WF]
};

nn::ParamLayout detector_layout(const DetectorConfig& cfg);
// Uniform ±1/√fan_in for conv/linear weights, embeddings and cls; norms start
// at identity; s′ starts at 0.
nn::ParamVector init_detector(const DetectorConfig& cfg, std::uint64_t seed);

// Encoder for one modality ("wenc" or "fenc"): [2×H×W] → [D].
nn::Var encode(nn::Tape& t, const DetectorConfig& cfg, const std::string& prefix, nn::Var planes);
// Pre-norm transformer layer over tokens [T×D].
nn::Var transformer_layer(nn::Tape& t, const DetectorConfig& cfg, nn::Var tokens);
// Scalar score [1] for one candidate.
nn::Var detector_score(nn::Tape& t, const DetectorConfig& cfg, const StackedInput& input);
// Logits over candidates [1×M], with s′ appended in no-parent mode. In
// no-parent mode the candidate scores are mean-centred and divided by M.
nn::Var candidate_logits(nn::Tape& t, const DetectorConfig& cfg, std::span<const StackedInput> candidates);

double detector_forward(const DetectorConfig& cfg, const nn::ParamVector& params, const StackedInput& input);
std::vector<double> score_candidates(const DetectorConfig& cfg, const nn::ParamVector& params,
                                     std::span<const StackedInput> candidates, std::size_t workers = 1);

// argmax over [ (s_i − mean)/M ..., s′ ]; M means no parent in the set.
std::size_t predict_no_parent(const DetectorConfig& cfg, const nn::ParamVector& params,
                              std::span<const double> scores);

}  // namespace lineage::detector
