#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <string>

#include <json.hpp>

#include "lineage/nn/mlp.hpp"
#include "lineage/zoo/task.hpp"

namespace lineage::zoo {

enum class RegKind { none, ewc, kld };

struct RegularizerSpec {
  RegKind kind = RegKind::none;
  double weight = 0.0;
  std::size_t fisher_samples = 256;  // ewc
  std::string teacher_id;            // kld; "parent" names the record being fine-tuned
  double temperature = 2.0;          // kld

  void validate() const;
  std::string label() const;
  friend bool operator==(const RegularizerSpec&, const RegularizerSpec&) = default;
};

void to_json(nlohmann::json& j, const RegularizerSpec& r);
void from_json(const nlohmann::json& j, RegularizerSpec& r);

struct TrainConfig {
  double lr = 1e-3;
  std::size_t batch = 32;
  std::size_t iterations = 200;
  std::uint64_t seed = 0;
};

// Anchors for the regularized objectives.
struct EwcTerm {
  double weight = 0.0;
  nn::ParamVector anchor;  // θ_p
  nn::ParamVector fisher;  // diagonal, same layout
};

struct KldTerm {
  double weight = 0.0;
  double temperature = 1.0;
  nn::ArchSpec teacher_arch;
  nn::ParamVector teacher;
};

struct Objective {
  std::optional<EwcTerm> ewc;
  std::optional<KldTerm> kld;
};

// Minibatch Adam on mean cross-entropy plus the optional penalties. Batches
// are drawn by reshuffling the training set each pass.
nn::ParamVector train_classifier(const nn::ArchSpec& arch, nn::ParamVector init, const Dataset& train,
                                 const TrainConfig& cfg, const Objective& objective = {});

double accuracy(const nn::ArchSpec& arch, const nn::ParamVector& params, const Dataset& data);

// Empirical diagonal Fisher: mean over `samples` rows of the squared gradient of
// the per-sample log-likelihood at the true label.
nn::ParamVector diagonal_fisher(const nn::ArchSpec& arch, const nn::ParamVector& params, const Dataset& data,
                                std::size_t samples, std::uint64_t seed);

}  // namespace lineage::zoo
