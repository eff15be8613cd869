#include "lineage/nn/mlp.hpp"

#include <cmath>
#include <random>

#include "lineage/errors.hpp"
#include "lineage/nn/ops.hpp"

namespace lineage::nn {
namespace {

std::string fc(std::size_t i) { return "fc" + std::to_string(i); }

// Returns the hidden layer index for "fc<i>"/"act<i>", 0 for "output".
std::size_t tap_layer(const ArchSpec& arch, std::string_view tap) {
  if (tap == "output") return 0;
  std::string_view digits;
  if (tap.starts_with("fc")) digits = tap.substr(2);
  else if (tap.starts_with("act")) digits = tap.substr(3);
  std::size_t layer = 0;
  if (digits.empty()) throw ContractError("unknown tap '" + std::string(tap) + "'");
  for (char c : digits) {
    if (c < '0' || c > '9') throw ContractError("unknown tap '" + std::string(tap) + "'");
    layer = layer * 10 + static_cast<std::size_t>(c - '0');
  }
  if (layer == 0 || layer >= arch.num_linear())
    throw ContractError("unknown tap '" + std::string(tap) + "'");
  return layer;
}

void init_linear(ParamVector& p, const std::string& name, std::size_t fan_in, std::mt19937_64& rng) {
  const double bound = 1.0 / std::sqrt(static_cast<double>(fan_in));
  std::uniform_real_distribution<double> u(-bound, bound);
  for (double& v : p.block(name + ".weight")) v = u(rng);
  for (double& v : p.block(name + ".bias")) v = u(rng);
}

}  // namespace

std::string_view to_string(ArchKind) { return "mlp"; }

std::string_view to_string(Activation act) { return act == Activation::relu ? "relu" : "tanh"; }

ArchKind parse_arch_kind(std::string_view s) {
  if (s == "mlp") return ArchKind::mlp;
  throw ConfigError("unsupported architecture kind '" + std::string(s) + "'");
}

Activation parse_activation(std::string_view s) {
  if (s == "relu") return Activation::relu;
  if (s == "tanh") return Activation::tanh;
  throw ConfigError("unknown activation '" + std::string(s) + "'");
}

ArchSpec ArchSpec::mlp(std::size_t d_in, std::size_t classes, std::vector<std::size_t> hidden, Activation act) {
  ArchSpec a;
  a.layer_sizes.push_back(d_in);
  a.layer_sizes.insert(a.layer_sizes.end(), hidden.begin(), hidden.end());
  a.layer_sizes.push_back(classes);
  a.activation = act;
  a.validate();
  return a;
}

void ArchSpec::validate() const {
  if (layer_sizes.size() < 2) throw ConfigError("mlp needs at least input and output sizes");
  for (std::size_t s : layer_sizes)
    if (s == 0) throw ConfigError("mlp layer sizes must be positive");
}

std::vector<std::string> ArchSpec::taps() const {
  std::vector<std::string> out;
  for (std::size_t i = 1; i < num_linear(); ++i) {
    out.push_back(fc(i));
    out.push_back("act" + std::to_string(i));
  }
  out.push_back("output");
  return out;
}

bool ArchSpec::has_tap(std::string_view tap) const {
  for (const auto& t : taps())
    if (t == tap) return true;
  return false;
}

std::size_t ArchSpec::tap_width(std::string_view tap) const {
  const std::size_t layer = tap_layer(*this, tap);
  return layer == 0 ? output_dim() : layer_sizes[layer];
}

std::vector<std::string> ArchSpec::blocks_for_tap(std::string_view tap) const {
  std::size_t layer = tap_layer(*this, tap);
  if (layer == 0) layer = num_linear();
  std::vector<std::string> out;
  for (std::size_t i = 1; i <= layer; ++i) {
    out.push_back(fc(i) + ".weight");
    out.push_back(fc(i) + ".bias");
  }
  return out;
}

ParamLayout make_layout(const ArchSpec& arch) {
  arch.validate();
  ParamLayout layout;
  for (std::size_t i = 1; i <= arch.num_linear(); ++i) {
    layout.append(fc(i) + ".weight", {arch.layer_sizes[i], arch.layer_sizes[i - 1]});
    layout.append(fc(i) + ".bias", {arch.layer_sizes[i]});
  }
  return layout;
}

ParamVector init_params(const ArchSpec& arch, std::uint64_t seed) {
  ParamVector p(make_layout(arch));
  std::mt19937_64 rng(seed);
  for (std::size_t i = 1; i <= arch.num_linear(); ++i) init_linear(p, fc(i), arch.layer_sizes[i - 1], rng);
  return p;
}

ParamVector reinit_head(const ArchSpec& arch, const ParamVector& params, std::size_t classes,
                        std::uint64_t seed, ArchSpec* new_arch) {
  ArchSpec next = arch;
  next.layer_sizes.back() = classes;
  ParamVector out(make_layout(next));
  const std::string head = fc(arch.num_linear());
  for (const auto& b : out.layout().blocks()) {
    if (b.name.starts_with(head + ".")) continue;
    auto src = params.block(b.name);
    std::copy(src.begin(), src.end(), out.block(b.name).begin());
  }
  std::mt19937_64 rng(seed);
  init_linear(out, head, next.layer_sizes[next.num_linear() - 1], rng);
  if (new_arch) *new_arch = next;
  return out;
}

Var ForwardPass::tap(std::string_view name) const {
  auto it = taps.find(name);
  if (it == taps.end()) throw ContractError("tap '" + std::string(name) + "' was not recorded");
  return it->second;
}

ForwardPass forward(const ArchSpec& arch, const ParamVector& params, const Tensor& inputs,
                    std::span<const std::string> taps) {
  if (!(params.layout() == make_layout(arch))) throw LayoutError("parameter layout does not match the architecture");
  if (inputs.rank() != 2 || inputs.cols() != arch.input_dim()) {
    throw LayoutError("inputs " + shape_to_string(inputs.shape()) + " do not match input width " +
                      std::to_string(arch.input_dim()));
  }
  inputs.require_finite("network input");
  for (const auto& t : taps)
    if (!arch.has_tap(t)) throw ContractError("unknown tap '" + t + "'");

  ForwardPass fp{Tape(params), {}, {}};
  Tape& t = fp.tape;
  Var h = t.constant(inputs);
  const std::size_t L = arch.num_linear();
  for (std::size_t i = 1; i <= L; ++i) {
    h = ops::linear(t, h, t.param(fc(i) + ".weight"), t.param(fc(i) + ".bias"));
    if (i == L) {
      t.value(h).require_finite("output layer");
      fp.taps.emplace("output", h);
      break;
    }
    t.value(h).require_finite("layer " + fc(i));
    fp.taps.emplace(fc(i), h);
    h = arch.activation == Activation::relu ? ops::relu(t, h) : ops::tanh(t, h);
    fp.taps.emplace("act" + std::to_string(i), h);
  }
  fp.output = h;
  return fp;
}

Tensor features_at(const ArchSpec& arch, const ParamVector& params, const Tensor& inputs, std::string_view tap) {
  ForwardPass fp = forward(arch, params, inputs);
  return fp.feature(tap);
}

Tensor jacobian(const ArchSpec& arch, const ParamVector& params, std::span<const double> x, std::string_view tap,
                std::size_t budget) {
  const std::size_t k = arch.tap_width(tap);
  if (k * params.size() > budget) {
    throw BudgetError("explicit Jacobian needs " + std::to_string(k * params.size()) + " entries (budget " +
                      std::to_string(budget) + "); use the approximated path");
  }
  ForwardPass fp = forward(arch, params, Tensor::row(x));
  const Var root = fp.tap(tap);
  Tensor jac({k, params.size()});
  Tensor seed({1, k});
  for (std::size_t r = 0; r < k; ++r) {
    seed[r] = 1.0;
    fp.tape.backward(root, seed);
    seed[r] = 0.0;
    ParamVector g = fp.tape.param_grad();
    std::copy(g.values().begin(), g.values().end(), jac.data().begin() + static_cast<long>(r * params.size()));
  }
  return jac;
}

ParamVector weighted_output_grad(const ArchSpec& arch, const ParamVector& params, const Tensor& inputs,
                                 const Tensor& weights, std::string_view tap) {
  ForwardPass fp = forward(arch, params, inputs);
  const Var feat = fp.tap(tap);
  const Tensor& f = fp.tape.value(feat);
  if (weights.rank() != 2 || weights.rows() != f.rows() || weights.cols() != f.cols()) {
    throw ContractError("weights " + shape_to_string(weights.shape()) + " do not match feature " +
                        shape_to_string(f.shape()) + " at tap '" + std::string(tap) + "'");
  }
  const Var root = ops::weighted_sum(fp.tape, feat, weights);
  return grad_scalar(fp.tape, root);
}

}  // namespace lineage::nn
