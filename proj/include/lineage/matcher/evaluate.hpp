#pragma once

#include <cstdint>
#include <functional>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "lineage/matcher/match.hpp"
#include "lineage/similarity/approx.hpp"
#include "lineage/zoo/zoo.hpp"

namespace lineage::matcher {

// Scores one child against each candidate at a tap. Entries are first-order
// scores so α can be swept without rescoring.
using Scorer = std::function<std::vector<similarity::LinearizedScore>(
    const zoo::ModelRecord& child, const std::vector<const zoo::ModelRecord*>& candidates, const nn::Tensor& inputs,
    const std::string& tap)>;

struct Method {
  std::string id;
  similarity::MetricSpec metric;
  bool approx = false;
  std::vector<double> alphas{0.001, 0.01, 0.1};
  std::vector<std::string> taps{"act1"};
  Scorer scorer;  // overrides the metric when set

  // "l2" scores the baseline metric; "l2+approx" the linearized parent.
  static Method parse(const std::string& text);
  // Uniform random scores; a null model for accuracy checks.
  static Method random(std::uint64_t seed);
};

struct PairFilter {
  std::optional<int> generation;  // descendant generation; default: all later generations
  std::function<bool(const zoo::ModelRecord&)> keep;
};

struct EvalOptions {
  int ancestor_generation = 1;
  std::size_t samples = 128;        // probe inputs per child, from the child's test split
  std::uint64_t input_seed = 0;     // varies per fold
  double validation_fraction = 0.2; // children used to pick α and tap
  std::size_t workers = 1;
};

struct PairRecord {
  std::string child_id;
  std::string true_parent;
  std::string predicted_parent;
  bool correct = false;
  bool validation = false;
  std::vector<double> probs;  // candidate order
  double p_true = 0.0;
  int gap = 0;
  double lr = 0.0;
  std::size_t iterations = 0;
};

struct EvalReport {
  std::string method;
  double accuracy = 0.0;  // over test pairs
  double alpha = 0.0;
  std::string tap;
  std::size_t candidates = 0;
  std::size_t filtered = 0;
  std::size_t excluded = 0;  // true ancestor not among candidates
  std::size_t evaluated = 0;
  std::size_t ties = 0;
  bool degenerate = false;  // single candidate
  std::vector<PairRecord> pairs;

  std::size_t test_count() const;
  nlohmann::json summary() const;
  // Header: method,child_id,true_parent,predicted_parent,correct,split,gap,lr,iterations,p_true
  std::string to_csv() const;
};

EvalReport evaluate_zoo(const zoo::Zoo& zoo, const Method& method, const PairFilter& filter = {},
                        const EvalOptions& opts = {});

// Same evaluation repeated with input seeds seed, seed+1, ...
struct FoldSummary {
  std::string method;
  std::vector<EvalReport> folds;
  double mean = 0.0, stddev = 0.0;
  nlohmann::json to_json() const;
};
FoldSummary evaluate_folds(const zoo::Zoo& zoo, const Method& method, const PairFilter& filter,
                           const EvalOptions& opts, std::size_t folds);

// Accuracy for every (ancestor generation, descendant generation) pair.
std::map<std::pair<int, int>, EvalReport> generation_gap_matrix(const zoo::Zoo& zoo, const Method& method,
                                                                const EvalOptions& opts = {});

enum class SweepAxis { learning_rate, iterations };

struct SweepPoint {
  double value = 0.0;
  EvalReport report;
};

// One report per axis value per method. `values` empty means every value in
// the zoo's metadata; naming a value no record has is a ConfigError.
std::vector<SweepPoint> sweep(const zoo::Zoo& zoo, SweepAxis axis, const std::vector<Method>& methods,
                              const EvalOptions& opts = {}, std::vector<double> values = {});

}  // namespace lineage::matcher
