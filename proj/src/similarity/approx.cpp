#include "lineage/similarity/approx.hpp"

#include "lineage/errors.hpp"
#include "lineage/nn/ops.hpp"

namespace lineage::similarity {

nn::ParamVector tap_delta(ModelRef parent, ModelRef child, std::string_view tap) {
  nn::ParamVector delta(parent.params.layout());
  for (const auto& name : parent.arch.blocks_for_tap(tap)) {
    const auto& pb = parent.params.layout().block(name);
    const auto ci = child.params.layout().index_of(name);
    if (!ci || child.params.layout().blocks()[*ci].shape != pb.shape)
      throw LayoutError("block '" + name + "' is not aligned between parent and child");
    auto p = parent.params.block(name);
    auto c = child.params.block(name);
    auto d = delta.block(name);
    for (std::size_t i = 0; i < d.size(); ++i) d[i] = c[i] - p[i];
  }
  return delta;
}

LinearizedScore linearized_score(const MetricSpec& metric, ModelRef parent, ModelRef child, const nn::Tensor& inputs,
                                 std::string_view tap) {
  if (!metric.has_linearization()) throw ContractError(metric.name() + " has no linearized form");
  const nn::ParamVector delta = tap_delta(parent, child, tap);
  nn::ForwardPass fp = nn::forward(parent.arch, parent.params, inputs);
  const nn::Var feat = fp.tap(tap);
  const nn::Tensor& x = fp.tape.value(feat);
  const nn::Tensor y = nn::features_at(child.arch, child.params, inputs, tap);

  LinearizedScore out;
  out.baseline = baseline_similarity(metric, x, y);
  PiWeights w = pi_weights(metric, x, y);
  // Π is computed from detached values and enters the tape as a constant.
  const nn::Var root = nn::ops::weighted_sum(fp.tape, feat, std::move(w.rows));
  const nn::ParamVector g = nn::grad_scalar(fp.tape, root);
  out.slope = w.prefactor * nn::dot(g, delta);
  return out;
}

double approx_similarity(const MetricSpec& metric, ModelRef parent, ModelRef child, const nn::Tensor& inputs,
                         std::string_view tap, double alpha) {
  if (alpha < 0.0) throw ContractError("alpha must be non-negative");
  return linearized_score(metric, parent, child, inputs, tap).at(alpha);
}

nn::Tensor linearized_features(ModelRef parent, const nn::ParamVector& delta, const nn::Tensor& inputs,
                               std::string_view tap, double alpha, std::size_t budget) {
  if (!(delta.layout() == parent.params.layout())) throw LayoutError("delta does not use the parent's layout");
  nn::Tensor out = nn::features_at(parent.arch, parent.params, inputs, tap);
  const std::size_t k = out.cols(), m = delta.size();
  for (std::size_t i = 0; i < inputs.rows(); ++i) {
    const nn::Tensor j = nn::jacobian(parent.arch, parent.params, inputs.row_span(i), tap, budget);
    for (std::size_t r = 0; r < k; ++r) {
      double acc = 0.0;
      for (std::size_t c = 0; c < m; ++c) acc += j[r * m + c] * delta.values()[c];
      out.at(i, r) += alpha * acc;
    }
  }
  return out;
}

double oracle_similarity(const MetricSpec& metric, ModelRef parent, ModelRef child, const nn::Tensor& inputs,
                         std::string_view tap, double alpha, std::size_t budget) {
  const nn::ParamVector delta = tap_delta(parent, child, tap);
  const nn::Tensor fbar = linearized_features(parent, delta, inputs, tap, alpha, budget);
  const nn::Tensor y = nn::features_at(child.arch, child.params, inputs, tap);
  return baseline_similarity(metric, fbar, y);
}

}  // namespace lineage::similarity
