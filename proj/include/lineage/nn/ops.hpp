#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "lineage/nn/tape.hpp"

// Differentiable operations recorded on a Tape. Shapes follow the usual
// row-major conventions: batches are [N×D] with one sample per row, images
// are [C×H×W].
namespace lineage::nn::ops {

Var matmul(Tape& t, Var a, Var b);
// x[N×d] · w[h×d]ᵀ + b[h]
Var linear(Tape& t, Var x, Var w, Var b);
Var linear(Tape& t, Var x, Var w);

Var add(Tape& t, Var a, Var b);
Var sub(Tape& t, Var a, Var b);
Var mul(Tape& t, Var a, Var b);
Var scale(Tape& t, Var a, double s);
// x[N×D] + r (r holds D values), broadcast over rows.
Var add_row(Tape& t, Var x, Var r);

// ReLU with subgradient 0 at 0.
Var relu(Tape& t, Var x);
Var tanh(Tape& t, Var x);
Var exp(Tape& t, Var x);
Var log(Tape& t, Var x);
Var square(Tape& t, Var x);

Var sum(Tape& t, Var x);
Var mean(Tape& t, Var x);
// Σ x ⊙ weights, with `weights` held as a constant (no gradient flows into it).
Var weighted_sum(Tape& t, Var x, Tensor weights);

Var softmax_rows(Tape& t, Var x);
Var log_softmax_rows(Tape& t, Var x);
// Mean cross-entropy of logits[N×K] against integer labels.
Var softmax_xent(Tape& t, Var logits, std::span<const std::size_t> labels);

// Normalizes each row of x[N×D]; gamma/beta hold D values.
Var layer_norm(Tape& t, Var x, Var gamma, Var beta, double eps = 1e-5);
// x[C×...]: normalizes each channel over its trailing extent; gamma/beta hold C values.
Var instance_norm(Tape& t, Var x, Var gamma, Var beta, double eps = 1e-5);

// Stride-1 2-D convolution. x[Cin×H×W], w[Cout×Cin×kh×kw], b[Cout].
Var conv2d(Tape& t, Var x, Var w, Var b, std::size_t pad);
// x[C×...] → [C], mean over the trailing extent (adaptive average pool to 1×1).
Var mean_trailing(Tape& t, Var x);

Var slice_rows(Tape& t, Var x, std::size_t start, std::size_t count);
Var slice_cols(Tape& t, Var x, std::size_t start, std::size_t count);
// Each part contributes rows; parts with one dimension are treated as one row.
Var concat_rows(Tape& t, std::span<const Var> parts);
Var concat_cols(Tape& t, std::span<const Var> parts);
Var transpose(Tape& t, Var x);
Var reshape(Tape& t, Var x, Shape shape);

}  // namespace lineage::nn::ops
