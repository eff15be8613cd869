#pragma once

#include <string>
#include <string_view>

#include "lineage/nn/mlp.hpp"
#include "lineage/similarity/metrics.hpp"

namespace lineage::similarity {

struct ModelRef {
  const nn::ArchSpec& arch;
  const nn::ParamVector& params;
};

// θ_c − θ_p on the blocks the tap depends on, laid out as the parent's full
// parameter vector (other blocks zero). Throws LayoutError if those blocks
// differ in shape between the two models.
nn::ParamVector tap_delta(ModelRef parent, ModelRef child, std::string_view tap);

// The first-order score as a function of α: s(f̄_p, f_c) ≈ baseline + α·slope.
struct LinearizedScore {
  double baseline = 0.0;
  double slope = 0.0;
  double at(double alpha) const { return baseline + alpha * slope; }
};

// One forward of each model and exactly one backward sweep through the parent.
LinearizedScore linearized_score(const MetricSpec& metric, ModelRef parent, ModelRef child, const nn::Tensor& inputs,
                                 std::string_view tap);

double approx_similarity(const MetricSpec& metric, ModelRef parent, ModelRef child, const nn::Tensor& inputs,
                         std::string_view tap, double alpha);

// f_p(x_i) + α·J_i·delta for every row, with explicit per-sample Jacobians
// (one backward sweep per feature coordinate per sample).
nn::Tensor linearized_features(ModelRef parent, const nn::ParamVector& delta, const nn::Tensor& inputs,
                               std::string_view tap, double alpha,
                               std::size_t budget = nn::kDefaultJacobianBudget);

// Step-by-step reference: materializes f̄_p with explicit Jacobians and
// evaluates the metric on it without expanding the metric.
double oracle_similarity(const MetricSpec& metric, ModelRef parent, ModelRef child, const nn::Tensor& inputs,
                         std::string_view tap, double alpha, std::size_t budget = nn::kDefaultJacobianBudget);

}  // namespace lineage::similarity
