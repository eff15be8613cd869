#include "support/op_cases.hpp"

#include <cmath>

#include "lineage/detector/model.hpp"
#include "lineage/nn/ops.hpp"

namespace lineage::testing {
namespace {

using nn::Shape;
using nn::Tape;
using nn::Tensor;
using nn::Var;
namespace ops = nn::ops;

nn::ParamVector random_params(const std::vector<std::pair<std::string, Shape>>& blocks, std::mt19937_64& rng,
                              bool positive = false) {
  nn::ParamLayout layout;
  for (const auto& [name, shape] : blocks) layout.append(name, shape);
  nn::ParamVector p(layout);
  std::normal_distribution<double> n(0.0, 1.0);
  std::uniform_real_distribution<double> u(0.5, 2.0);
  for (double& v : p.values()) v = positive ? u(rng) : n(rng);
  return p;
}

// Reduces `out` to a scalar with fixed random weights so every output
// coordinate contributes to the gradient.
Var reduce(Tape& t, Var out, const Tensor& w) { return ops::weighted_sum(t, out, w); }

std::size_t dim(std::mt19937_64& rng, std::size_t lo, std::size_t hi) {
  return std::uniform_int_distribution<std::size_t>(lo, hi)(rng);
}

template <class F>
OpCase unary_case(std::string name, F op, bool positive = false) {
  return {name, [op, positive](std::mt19937_64& rng) {
            const Shape s{dim(rng, 1, 4), dim(rng, 1, 5)};
            auto p = random_params({{"x", s}}, rng, positive);
            Tensor w = randn(s, rng);
            return GradProblem{p, [op, w](Tape& t) { return reduce(t, op(t, t.param("x")), w); }};
          }};
}

template <class F>
OpCase binary_case(std::string name, F op) {
  return {name, [op](std::mt19937_64& rng) {
            const Shape s{dim(rng, 1, 4), dim(rng, 1, 5)};
            auto p = random_params({{"a", s}, {"b", s}}, rng);
            Tensor w = randn(s, rng);
            return GradProblem{p, [op, w](Tape& t) { return reduce(t, op(t, t.param("a"), t.param("b")), w); }};
          }};
}

}  // namespace

std::vector<OpCase> nn_op_cases() {
  std::vector<OpCase> cases;
  cases.push_back({"matmul", [](std::mt19937_64& rng) {
                     const std::size_t m = dim(rng, 1, 5), k = dim(rng, 1, 5), n = dim(rng, 1, 5);
                     auto p = random_params({{"a", {m, k}}, {"b", {k, n}}}, rng);
                     Tensor w = randn({m, n}, rng);
                     return GradProblem{p, [w](Tape& t) { return reduce(t, ops::matmul(t, t.param("a"), t.param("b")), w); }};
                   }});
  cases.push_back({"linear", [](std::mt19937_64& rng) {
                     const std::size_t n = dim(rng, 1, 5), d = dim(rng, 1, 6), h = dim(rng, 1, 5);
                     auto p = random_params({{"x", {n, d}}, {"w", {h, d}}, {"b", {h}}}, rng);
                     Tensor w = randn({n, h}, rng);
                     return GradProblem{p, [w](Tape& t) {
                                          return reduce(t, ops::linear(t, t.param("x"), t.param("w"), t.param("b")), w);
                                        }};
                   }});
  cases.push_back({"linear_nobias", [](std::mt19937_64& rng) {
                     const std::size_t n = dim(rng, 1, 5), d = dim(rng, 1, 6), h = dim(rng, 1, 5);
                     auto p = random_params({{"x", {n, d}}, {"w", {h, d}}}, rng);
                     Tensor w = randn({n, h}, rng);
                     return GradProblem{p, [w](Tape& t) { return reduce(t, ops::linear(t, t.param("x"), t.param("w")), w); }};
                   }});
  cases.push_back(binary_case("add", [](Tape& t, Var a, Var b) { return ops::add(t, a, b); }));
  cases.push_back(binary_case("sub", [](Tape& t, Var a, Var b) { return ops::sub(t, a, b); }));
  cases.push_back(binary_case("mul", [](Tape& t, Var a, Var b) { return ops::mul(t, a, b); }));
  cases.push_back(unary_case("scale", [](Tape& t, Var x) { return ops::scale(t, x, -1.7); }));
  cases.push_back({"add_row", [](std::mt19937_64& rng) {
                     const std::size_t n = dim(rng, 1, 5), d = dim(rng, 1, 5);
                     auto p = random_params({{"x", {n, d}}, {"r", {d}}}, rng);
                     Tensor w = randn({n, d}, rng);
                     return GradProblem{p, [w](Tape& t) { return reduce(t, ops::add_row(t, t.param("x"), t.param("r")), w); }};
                   }});
  cases.push_back(unary_case("relu", [](Tape& t, Var x) { return ops::relu(t, x); }));
  cases.push_back(unary_case("tanh", [](Tape& t, Var x) { return ops::tanh(t, x); }));
  cases.push_back(unary_case("exp", [](Tape& t, Var x) { return ops::exp(t, x); }));
  cases.push_back(unary_case("log", [](Tape& t, Var x) { return ops::log(t, x); }, true));
  cases.push_back(unary_case("square", [](Tape& t, Var x) { return ops::square(t, x); }));
  cases.push_back({"sum", [](std::mt19937_64& rng) {
                     auto p = random_params({{"x", {dim(rng, 1, 4), dim(rng, 1, 4)}}}, rng);
                     return GradProblem{p, [](Tape& t) { return ops::sum(t, t.param("x")); }};
                   }});
  cases.push_back({"mean", [](std::mt19937_64& rng) {
                     auto p = random_params({{"x", {dim(rng, 1, 4), dim(rng, 1, 4)}}}, rng);
                     return GradProblem{p, [](Tape& t) { return ops::mean(t, t.param("x")); }};
                   }});
  cases.push_back({"weighted_sum", [](std::mt19937_64& rng) {
                     const Shape s{dim(rng, 1, 4), dim(rng, 1, 4)};
                     auto p = random_params({{"x", s}}, rng);
                     Tensor w = randn(s, rng);
                     return GradProblem{p, [w](Tape& t) { return ops::weighted_sum(t, t.param("x"), w); }};
                   }});
  cases.push_back(unary_case("softmax_rows", [](Tape& t, Var x) { return ops::softmax_rows(t, x); }));
  cases.push_back(unary_case("log_softmax_rows", [](Tape& t, Var x) { return ops::log_softmax_rows(t, x); }));
  cases.push_back({"softmax_xent", [](std::mt19937_64& rng) {
                     const std::size_t n = dim(rng, 1, 5), k = dim(rng, 2, 5);
                     auto p = random_params({{"x", {n, k}}}, rng);
                     std::vector<std::size_t> labels(n);
                     for (auto& l : labels) l = dim(rng, 0, k - 1);
                     return GradProblem{p, [labels](Tape& t) { return ops::softmax_xent(t, t.param("x"), labels); }};
                   }});
  cases.push_back({"layer_norm", [](std::mt19937_64& rng) {
                     const std::size_t n = dim(rng, 1, 4), d = dim(rng, 2, 6);
                     auto p = random_params({{"x", {n, d}}, {"g", {d}}, {"b", {d}}}, rng);
                     Tensor w = randn({n, d}, rng);
                     return GradProblem{p, [w](Tape& t) {
                                          return reduce(t, ops::layer_norm(t, t.param("x"), t.param("g"), t.param("b")), w);
                                        }};
                   }});
  cases.push_back({"instance_norm", [](std::mt19937_64& rng) {
                     const std::size_t c = dim(rng, 1, 3), h = dim(rng, 2, 4), wd = dim(rng, 2, 4);
                     auto p = random_params({{"x", {c, h, wd}}, {"g", {c}}, {"b", {c}}}, rng);
                     Tensor w = randn({c, h, wd}, rng);
                     return GradProblem{p, [w](Tape& t) {
                                          return reduce(t, ops::instance_norm(t, t.param("x"), t.param("g"), t.param("b")),
                                                        w);
                                        }};
                   }});
  cases.push_back({"conv2d", [](std::mt19937_64& rng) {
                     const std::size_t cin = dim(rng, 1, 3), cout = dim(rng, 1, 3), h = dim(rng, 3, 5),
                                       wd = dim(rng, 3, 5), k = dim(rng, 0, 1) ? 3 : 1, pad = k == 3 ? dim(rng, 0, 1) : 0;
                     auto p = random_params({{"x", {cin, h, wd}}, {"w", {cout, cin, k, k}}, {"b", {cout}}}, rng);
                     Tensor w = randn({cout, h + 2 * pad - k + 1, wd + 2 * pad - k + 1}, rng);
                     return GradProblem{p, [w, pad](Tape& t) {
                                          return reduce(t, ops::conv2d(t, t.param("x"), t.param("w"), t.param("b"), pad), w);
                                        }};
                   }});
  cases.push_back({"mean_trailing", [](std::mt19937_64& rng) {
                     const std::size_t c = dim(rng, 1, 4);
                     auto p = random_params({{"x", {c, dim(rng, 1, 3), dim(rng, 1, 3)}}}, rng);
                     Tensor w = randn({c}, rng);
                     return GradProblem{p, [w](Tape& t) { return reduce(t, ops::mean_trailing(t, t.param("x")), w); }};
                   }});
  cases.push_back({"slice_rows", [](std::mt19937_64& rng) {
                     const std::size_t n = dim(rng, 2, 5), d = dim(rng, 1, 4), s = dim(rng, 0, n - 1),
                                       c = dim(rng, 1, n - s);
                     auto p = random_params({{"x", {n, d}}}, rng);
                     Tensor w = randn({c, d}, rng);
                     return GradProblem{p, [w, s, c](Tape& t) { return reduce(t, ops::slice_rows(t, t.param("x"), s, c), w); }};
                   }});
  cases.push_back({"slice_cols", [](std::mt19937_64& rng) {
                     const std::size_t n = dim(rng, 1, 4), d = dim(rng, 2, 5), s = dim(rng, 0, d - 1),
                                       c = dim(rng, 1, d - s);
                     auto p = random_params({{"x", {n, d}}}, rng);
                     Tensor w = randn({n, c}, rng);
                     return GradProblem{p, [w, s, c](Tape& t) { return reduce(t, ops::slice_cols(t, t.param("x"), s, c), w); }};
                   }});
  cases.push_back({"concat_rows", [](std::mt19937_64& rng) {
                     const std::size_t d = dim(rng, 1, 4), n1 = dim(rng, 1, 3), n2 = dim(rng, 1, 3);
                     auto p = random_params({{"a", {n1, d}}, {"b", {d}}, {"c", {n2, d}}}, rng);
                     Tensor w = randn({n1 + 1 + n2, d}, rng);
                     return GradProblem{p, [w](Tape& t) {
                                          const Var parts[] = {t.param("a"), t.param("b"), t.param("c")};
                                          return reduce(t, ops::concat_rows(t, parts), w);
                                        }};
                   }});
  cases.push_back({"concat_cols", [](std::mt19937_64& rng) {
                     const std::size_t n = dim(rng, 1, 4), d1 = dim(rng, 1, 3), d2 = dim(rng, 1, 3);
                     auto p = random_params({{"a", {n, d1}}, {"b", {n, d2}}}, rng);
                     Tensor w = randn({n, d1 + d2}, rng);
                     return GradProblem{p, [w](Tape& t) {
                                          const Var parts[] = {t.param("a"), t.param("b")};
                                          return reduce(t, ops::concat_cols(t, parts), w);
                                        }};
                   }});
  cases.push_back({"transpose", [](std::mt19937_64& rng) {
                     const std::size_t n = dim(rng, 1, 4), d = dim(rng, 1, 4);
                     auto p = random_params({{"x", {n, d}}}, rng);
                     Tensor w = randn({d, n}, rng);
                     return GradProblem{p, [w](Tape& t) { return reduce(t, ops::transpose(t, t.param("x")), w); }};
                   }});
  cases.push_back({"reshape", [](std::mt19937_64& rng) {
                     const std::size_t n = dim(rng, 1, 4), d = dim(rng, 1, 4);
                     auto p = random_params({{"x", {n, d}}}, rng);
                     Tensor w = randn({d * n}, rng);
                     return GradProblem{p, [w, n, d](Tape& t) {
                                          return reduce(t, ops::reshape(t, t.param("x"), {n * d}), w);
                                        }};
                   }});
  return cases;
}

namespace {

// Small detector so central differences over every coordinate stay cheap.
detector::DetectorConfig small_detector(std::mt19937_64& rng, bool no_parent = false) {
  detector::DetectorConfig c;
  c.d_model = 8;
  c.heads = 2;
  c.ffn = 12;
  c.mid_channels = 3;
  c.no_parent = no_parent;
  const auto mode = dim(rng, 0, 2);
  c.use_weights = mode != 2;
  c.use_features = mode != 1;
  return c;
}

nn::ParamVector random_detector(const detector::DetectorConfig& c, std::mt19937_64& rng) {
  nn::ParamVector p(detector::detector_layout(c));
  std::normal_distribution<double> n(0.0, 0.5);
  for (double& v : p.values()) v = n(rng);
  return p;
}

detector::StackedInput random_input(const detector::DetectorConfig& c, std::mt19937_64& rng) {
  detector::StackedInput in;
  if (c.use_weights) in.weights = randn({2, dim(rng, 3, 5), dim(rng, 3, 6)}, rng);
  if (c.use_features) in.features = randn({2, dim(rng, 3, 5), dim(rng, 3, 6)}, rng);
  return in;
}

}  // namespace

std::vector<OpCase> detector_layer_cases() {
  std::vector<OpCase> cases;
  cases.push_back({"encoder", [](std::mt19937_64& rng) {
                     detector::DetectorConfig c = small_detector(rng);
                     c.use_weights = true;
                     auto p = random_detector(c, rng);
                     Tensor planes = randn({2, dim(rng, 3, 6), dim(rng, 3, 6)}, rng);
                     Tensor w = randn({c.d_model}, rng);
                     return GradProblem{p, [c, planes, w](Tape& t) {
                                          return reduce(t, detector::encode(t, c, "wenc", t.constant(planes)), w);
                                        }};
                   }});
  cases.push_back({"transformer_layer", [](std::mt19937_64& rng) {
                     detector::DetectorConfig c = small_detector(rng);
                     auto p = random_detector(c, rng);
                     const std::size_t tokens = dim(rng, 2, 3);
                     Tensor x = randn({tokens, c.d_model}, rng);
                     Tensor w = randn({tokens, c.d_model}, rng);
                     return GradProblem{p, [c, x, w](Tape& t) {
                                          return reduce(t, detector::transformer_layer(t, c, t.constant(x)), w);
                                        }};
                   }});
  cases.push_back({"detector_score", [](std::mt19937_64& rng) {
                     detector::DetectorConfig c = small_detector(rng);
                     auto p = random_detector(c, rng);
                     auto in = random_input(c, rng);
                     return GradProblem{p, [c, in](Tape& t) { return detector::detector_score(t, c, in); }};
                   }});
  cases.push_back({"candidate_loss", [](std::mt19937_64& rng) {
                     const bool no_parent = dim(rng, 0, 1) == 1;
                     detector::DetectorConfig c = small_detector(rng, no_parent);
                     auto p = random_detector(c, rng);
                     const std::size_t m = dim(rng, 2, 3);
                     std::vector<detector::StackedInput> cands;
                     const auto first = random_input(c, rng);
                     for (std::size_t i = 0; i < m; ++i) {
                       auto in = random_input(c, rng);
                       // Candidates for one child share plane shapes.
                       if (c.use_weights) in.weights = randn(first.weights.shape(), rng);
                       if (c.use_features) in.features = randn(first.features.shape(), rng);
                       cands.push_back(in);
                     }
                     const std::size_t label = dim(rng, 0, no_parent ? m : m - 1);
                     return GradProblem{p, [c, cands, label](Tape& t) {
                                          return ops::softmax_xent(t, detector::candidate_logits(t, c, cands),
                                                                   {&label, 1});
                                        }};
                   }});
  return cases;
}

}  // namespace lineage::testing
