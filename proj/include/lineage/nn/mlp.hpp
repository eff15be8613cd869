#pragma once

#include <cstddef>
#include <cstdint>
#include <map>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "lineage/nn/param_vector.hpp"
#include "lineage/nn/tape.hpp"

namespace lineage::nn {

enum class ArchKind { mlp };
enum class Activation { relu, tanh };

std::string_view to_string(ArchKind kind);
std::string_view to_string(Activation act);
ArchKind parse_arch_kind(std::string_view s);
Activation parse_activation(std::string_view s);

// Fully connected network: layer_sizes = {d_in, h_1, ..., h_L-1, K}. Every
// hidden layer is linear followed by the activation; the last layer is linear.
//
// Tap names: "fc<i>" is the pre-activation of hidden layer i, "act<i>" its
// activation, and "output" the final linear layer.
struct ArchSpec {
  ArchKind kind = ArchKind::mlp;
  std::vector<std::size_t> layer_sizes;
  Activation activation = Activation::relu;

  static ArchSpec mlp(std::size_t d_in, std::size_t classes, std::vector<std::size_t> hidden = {64, 32},
                      Activation act = Activation::relu);

  std::size_t input_dim() const { return layer_sizes.front(); }
  std::size_t output_dim() const { return layer_sizes.back(); }
  std::size_t num_linear() const { return layer_sizes.size() - 1; }

  void validate() const;
  std::vector<std::string> taps() const;
  bool has_tap(std::string_view tap) const;
  // Width of the tapped feature.
  std::size_t tap_width(std::string_view tap) const;
  // Parameter blocks the tapped feature depends on, in layout order.
  std::vector<std::string> blocks_for_tap(std::string_view tap) const;

  friend bool operator==(const ArchSpec&, const ArchSpec&) = default;
};

ParamLayout make_layout(const ArchSpec& arch);
// Uniform(±1/√fan_in) for weights and biases.
ParamVector init_params(const ArchSpec& arch, std::uint64_t seed);
// Replaces the last layer with one of `classes` outputs, freshly initialized.
// Hidden layers are copied from `params`.
ParamVector reinit_head(const ArchSpec& arch, const ParamVector& params, std::size_t classes,
                        std::uint64_t seed, ArchSpec* new_arch);

// A recorded forward pass. The tape stays alive so callers can run backward
// sweeps from the output or from any tap.
struct ForwardPass {
  Tape tape;
  Var output;
  std::map<std::string, Var, std::less<>> taps;

  const Tensor& outputs() const { return tape.value(output); }
  Var tap(std::string_view name) const;
  const Tensor& feature(std::string_view name) const { return tape.value(tap(name)); }
};

// Runs the network on inputs[N×d_in]. Every tap is recorded; `taps` only
// names the ones the caller intends to read and is validated against the arch.
ForwardPass forward(const ArchSpec& arch, const ParamVector& params, const Tensor& inputs,
                    std::span<const std::string> taps = {});
// Tapped feature values without keeping the tape.
Tensor features_at(const ArchSpec& arch, const ParamVector& params, const Tensor& inputs,
                   std::string_view tap);

// Default limit on K·|θ| for explicit Jacobians.
inline constexpr std::size_t kDefaultJacobianBudget = std::size_t{1} << 26;

// J[k, :] = ∂ feature_k(x) / ∂θ for one input row. Runs one backward sweep per
// feature coordinate. Throws BudgetError if K·|θ| > budget.
Tensor jacobian(const ArchSpec& arch, const ParamVector& params, std::span<const double> x,
                std::string_view tap = "output", std::size_t budget = kDefaultJacobianBudget);

// ∇θ Σ_i weights_i · feature(x_i), with the weights held constant. One
// backward sweep.
ParamVector weighted_output_grad(const ArchSpec& arch, const ParamVector& params, const Tensor& inputs,
                                 const Tensor& weights, std::string_view tap = "output");

}  // namespace lineage::nn
