#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <optional>
#include <string_view>
#include <vector>

#include "lineage/nn/param_vector.hpp"
#include "lineage/nn/tensor.hpp"

namespace lineage::nn {

enum class OpKind : std::uint8_t {
  constant,
  parameter,
  matmul,
  linear,
  add,
  sub,
  mul,
  scale,
  add_row,
  relu,
  tanh,
  exp,
  log,
  square,
  sum,
  mean,
  weighted_sum,
  softmax_rows,
  log_softmax_rows,
  softmax_xent,
  layer_norm,
  instance_norm,
  conv2d,
  mean_trailing,
  slice_rows,
  slice_cols,
  concat_rows,
  concat_cols,
  transpose,
  reshape,
};

std::string_view op_name(OpKind kind);

// Handle to a node on a Tape.
struct Var {
  std::uint32_t id = 0;
};

// Records a forward computation so one reverse traversal can produce the
// gradient of a scalar root with respect to every bound parameter block.
// Nodes are appended in evaluation order, so inputs always precede their users.
// A Tape is single-threaded; build one per thread.
class Tape {
 public:
  // Accumulates the node's output gradient into its inputs' adjoints.
  using BackwardFn = std::function<void(Tape& tape, const Tensor& grad_out)>;

  Tape() = default;
  explicit Tape(ParamVector params);

  Var constant(Tensor value);
  // Leaf bound to a block of the tape's parameter vector. Repeated calls with
  // the same name return the same node.
  Var param(std::string_view block);

  Var record(OpKind kind, std::vector<Var> inputs, Tensor value, BackwardFn backward);

  const Tensor& value(Var v) const { return nodes_[v.id].value; }
  OpKind kind(Var v) const { return nodes_[v.id].kind; }
  const std::vector<std::uint32_t>& inputs(Var v) const { return nodes_[v.id].inputs; }
  bool requires_grad(Var v) const { return nodes_[v.id].requires_grad; }
  std::size_t size() const { return nodes_.size(); }
  const ParamVector& params() const { return params_; }

  // Reverse sweep seeded with d(root) = seed. Adjoints from a previous sweep
  // are discarded, so one tape can serve several sweeps (Jacobian rows).
  void backward(Var root, const Tensor& seed);
  // Adjoint of `v` after the last sweep; null if nothing flowed into it.
  const Tensor* grad(Var v) const;
  // Mutable adjoint used by backward functions; allocated as zeros on demand.
  Tensor& grad_buffer(Var v);
  // Gradient with respect to the bound parameters after the last sweep.
  ParamVector param_grad() const;

 private:
  struct Node {
    OpKind kind;
    std::vector<std::uint32_t> inputs;
    Tensor value;
    bool requires_grad = false;
    BackwardFn backward;
    std::optional<std::size_t> block;  // parameter leaves only
  };

  ParamVector params_;
  std::vector<Node> nodes_;
  std::vector<std::optional<std::uint32_t>> param_nodes_;  // per layout block
  std::vector<Tensor> adjoints_;
};

// ∂root/∂θ for a scalar root; one reverse sweep. Throws ContractError if the
// root holds more than one value.
ParamVector grad_scalar(Tape& tape, Var root);

// Number of reverse sweeps run on the calling thread since program start.
std::size_t backward_pass_count();

// Snapshot helper: passes() reports sweeps since construction on this thread.
class BackwardPassCounter {
 public:
  BackwardPassCounter() : start_(backward_pass_count()) {}
  std::size_t passes() const { return backward_pass_count() - start_; }

 private:
  std::size_t start_;
};

}  // namespace lineage::nn
