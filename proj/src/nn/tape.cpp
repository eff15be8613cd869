#include "lineage/nn/tape.hpp"

#include <algorithm>

#include "lineage/errors.hpp"
#include "lineage/kernels/kernels.hpp"

namespace lineage::nn {
namespace {
thread_local std::size_t t_backward_passes = 0;
}

std::string_view op_name(OpKind kind) {
  switch (kind) {
    case OpKind::constant: return "constant";
    case OpKind::parameter: return "parameter";
    case OpKind::matmul: return "matmul";
    case OpKind::linear: return "linear";
    case OpKind::add: return "add";
    case OpKind::sub: return "sub";
    case OpKind::mul: return "mul";
    case OpKind::scale: return "scale";
    case OpKind::add_row: return "add_row";
    case OpKind::relu: return "relu";
    case OpKind::tanh: return "tanh";
    case OpKind::exp: return "exp";
    case OpKind::log: return "log";
    case OpKind::square: return "square";
    case OpKind::sum: return "sum";
    case OpKind::mean: return "mean";
    case OpKind::weighted_sum: return "weighted_sum";
    case OpKind::softmax_rows: return "softmax_rows";
    case OpKind::log_softmax_rows: return "log_softmax_rows";
    case OpKind::softmax_xent: return "softmax_xent";
    case OpKind::layer_norm: return "layer_norm";
    case OpKind::instance_norm: return "instance_norm";
    case OpKind::conv2d: return "conv2d";
    case OpKind::mean_trailing: return "mean_trailing";
    case OpKind::slice_rows: return "slice_rows";
    case OpKind::slice_cols: return "slice_cols";
    case OpKind::concat_rows: return "concat_rows";
    case OpKind::concat_cols: return "concat_cols";
    case OpKind::transpose: return "transpose";
    case OpKind::reshape: return "reshape";
  }
  return "unknown";
}

Tape::Tape(ParamVector params)
    : params_(std::move(params)), param_nodes_(params_.layout().blocks().size()) {}

Var Tape::constant(Tensor value) {
  nodes_.push_back(Node{OpKind::constant, {}, std::move(value), false, {}, std::nullopt});
  return Var{static_cast<std::uint32_t>(nodes_.size() - 1)};
}

Var Tape::param(std::string_view block) {
  const auto idx = params_.layout().index_of(block);
  if (!idx) throw LayoutError("tape has no parameter block '" + std::string(block) + "'");
  if (param_nodes_[*idx]) return Var{*param_nodes_[*idx]};
  nodes_.push_back(Node{OpKind::parameter, {}, params_.block_tensor(block), true, {}, *idx});
  const auto id = static_cast<std::uint32_t>(nodes_.size() - 1);
  param_nodes_[*idx] = id;
  return Var{id};
}

Var Tape::record(OpKind kind, std::vector<Var> inputs, Tensor value, BackwardFn backward) {
  Node node{kind, {}, std::move(value), false, std::move(backward), std::nullopt};
  node.inputs.reserve(inputs.size());
  for (Var v : inputs) {
    if (v.id >= nodes_.size()) throw ContractError("tape input refers to a future node");
    node.inputs.push_back(v.id);
    node.requires_grad = node.requires_grad || nodes_[v.id].requires_grad;
  }
  nodes_.push_back(std::move(node));
  return Var{static_cast<std::uint32_t>(nodes_.size() - 1)};
}

void Tape::backward(Var root, const Tensor& seed) {
  if (root.id >= nodes_.size()) throw ContractError("backward root is not on this tape");
  if (seed.numel() != nodes_[root.id].value.numel())
    throw ContractError("backward seed size does not match the root");
  ++t_backward_passes;
  adjoints_.assign(nodes_.size(), Tensor{});
  adjoints_[root.id] = seed.reshaped(nodes_[root.id].value.shape());
  for (std::size_t i = root.id + 1; i-- > 0;) {
    Node& node = nodes_[i];
    if (!node.requires_grad || !node.backward || adjoints_[i].numel() == 0) continue;
    node.backward(*this, adjoints_[i]);
  }
}

const Tensor* Tape::grad(Var v) const {
  if (v.id >= adjoints_.size() || adjoints_[v.id].numel() == 0) return nullptr;
  return &adjoints_[v.id];
}

Tensor& Tape::grad_buffer(Var v) {
  Tensor& g = adjoints_[v.id];
  if (g.numel() == 0 && nodes_[v.id].value.numel() != 0) g = Tensor(nodes_[v.id].value.shape());
  return g;
}

ParamVector Tape::param_grad() const {
  ParamVector out(params_.layout());
  const auto& blocks = params_.layout().blocks();
  for (std::size_t b = 0; b < blocks.size(); ++b) {
    if (!param_nodes_[b]) continue;
    const auto id = *param_nodes_[b];
    if (id >= adjoints_.size() || adjoints_[id].numel() == 0) continue;
    const auto& g = adjoints_[id];
    std::copy(g.data().begin(), g.data().end(),
              out.values().begin() + static_cast<long>(blocks[b].offset));
  }
  return out;
}

ParamVector grad_scalar(Tape& tape, Var root) {
  if (tape.value(root).numel() != 1) {
    throw ContractError("grad_scalar needs a scalar root, got shape " +
                        shape_to_string(tape.value(root).shape()));
  }
  tape.backward(root, Tensor::scalar(1.0));
  return tape.param_grad();
}

std::size_t backward_pass_count() { return t_backward_passes; }

}  // namespace lineage::nn
