#include <doctest.h>

#include <cmath>
#include <random>

#include "lineage/errors.hpp"
#include "lineage/nn/adam.hpp"
#include "lineage/nn/mlp.hpp"
#include "lineage/nn/ops.hpp"
#include "support/gradcheck.hpp"
#include "support/op_cases.hpp"

using namespace lineage;
using namespace lineage::nn;
using lineage::testing::randn;

namespace {

ArchSpec small_net() { return ArchSpec::mlp(2, 2, {4}); }

ParamVector small_params() {
  ParamVector p(make_layout(small_net()));
  p.set_block("fc1.weight", Tensor::matrix({{0.3, -0.2}, {0.1, 0.4}, {-0.5, 0.25}, {0.7, -0.6}}));
  p.set_block("fc1.bias", Tensor({4}, {0.05, -0.1, 0.2, 0.0}));
  p.set_block("fc2.weight", Tensor::matrix({{0.2, -0.3, 0.5, 0.1}, {-0.4, 0.6, 0.05, -0.2}}));
  p.set_block("fc2.bias", Tensor({2}, {0.01, -0.02}));
  return p;
}

}  // namespace

TEST_CASE("tensor rejects mismatched data and reports non-finite values") {
  CHECK_THROWS_AS(Tensor({2, 2}, {1.0, 2.0, 3.0}), LayoutError);
  Tensor t({2}, {1.0, std::nan("")});
  CHECK_FALSE(t.all_finite());
  CHECK_THROWS_AS(t.require_finite("x"), NumericError);
  CHECK(Tensor::matrix({{1, 2, 3}, {4, 5, 6}}).transposed() == Tensor::matrix({{1, 4}, {2, 5}, {3, 6}}));
}

TEST_CASE("param layout enforces contiguity and unique names") {
  CHECK_THROWS_AS(ParamLayout({{"a", {2}, 0}, {"b", {2}, 3}}), LayoutError);
  CHECK_THROWS_AS(ParamLayout({{"a", {2}, 0}, {"a", {2}, 2}}), LayoutError);
  ParamLayout ok({{"a", {2, 3}, 0}, {"b", {4}, 6}});
  CHECK(ok.total() == 10);
  ParamVector x(ok), y(ParamLayout({{"a", {10}, 0}}));
  CHECK_THROWS_AS(x += y, LayoutError);
}

TEST_CASE("identity linear net passes inputs through") {
  ArchSpec arch;
  arch.layer_sizes = {2, 2};
  ParamVector p(make_layout(arch));
  p.set_block("fc1.weight", Tensor::matrix({{1, 0}, {0, 1}}));
  auto fp = forward(arch, p, Tensor::matrix({{1, 2}}));
  CHECK(fp.outputs() == Tensor::matrix({{1, 2}}));
}

TEST_CASE("zero-weight mlp outputs zeros") {
  ArchSpec arch = ArchSpec::mlp(3, 2);
  ParamVector p(make_layout(arch));
  auto fp = forward(arch, p, Tensor::matrix({{1, -2, 3}, {0.5, 0.5, 9}}));
  for (double v : fp.outputs().data()) CHECK(v == 0.0);
}

TEST_CASE("2-4-2 mlp forward matches hand-rolled matrix products") {
  // Reference values from an independent numpy evaluation of W2·relu(W1·x + b1) + b2.
  auto fp = forward(small_net(), small_params(), Tensor::matrix({{0.5, -0.5}}), std::vector<std::string>{"act1"});
  CHECK(fp.outputs()[0] == doctest::Approx(0.13499999999999998).epsilon(1e-15));
  CHECK(fp.outputs()[1] == doctest::Approx(-0.26999999999999996).epsilon(1e-15));
  const Tensor expect_act1 = Tensor::matrix({{0.3, 0.0, 0.0, 0.65}});
  CHECK(max_abs_diff(fp.feature("act1"), expect_act1) < 1e-15);

  ArchSpec tanh_net = small_net();
  tanh_net.activation = Activation::tanh;
  auto ft = forward(tanh_net, small_params(), Tensor::matrix({{0.5, -0.5}}));
  CHECK(ft.outputs()[0] == doctest::Approx(0.1122875389026126).epsilon(1e-14));
  CHECK(ft.outputs()[1] == doctest::Approx(-0.40647199353161834).epsilon(1e-14));
}

TEST_CASE("forward validates shapes, taps and finiteness") {
  ArchSpec arch = small_net();
  CHECK_THROWS_AS(forward(arch, small_params(), Tensor::matrix({{1, 2, 3}})), LayoutError);
  CHECK_THROWS_AS(forward(arch, small_params(), Tensor::matrix({{1, 2}}), std::vector<std::string>{"act7"}),
                  ContractError);
  ParamVector p = small_params();
  p.block("fc1.weight")[0] = 1e308;
  p.block("fc1.weight")[2] = 1e308;
  try {
    forward(arch, p, Tensor::matrix({{1e10, 1e10}}));
    FAIL("expected a numeric error");
  } catch (const NumericError& e) {
    CHECK(std::string(e.what()).find("fc1") != std::string::npos);
  }
}

TEST_CASE("tap bookkeeping") {
  ArchSpec arch = ArchSpec::mlp(8, 3);
  CHECK(arch.taps() == std::vector<std::string>{"fc1", "act1", "fc2", "act2", "output"});
  CHECK(arch.tap_width("act1") == 64);
  CHECK(arch.tap_width("output") == 3);
  CHECK(arch.blocks_for_tap("act1") == std::vector<std::string>{"fc1.weight", "fc1.bias"});
  CHECK(arch.blocks_for_tap("output").size() == 6);
  CHECK_THROWS_AS(arch.tap_width("act3"), ContractError);
}

TEST_CASE("every op gradient matches central differences") {
  std::mt19937_64 rng(11);
  for (const auto& c : lineage::testing::nn_op_cases()) {
    CAPTURE(c.name);
    for (int rep = 0; rep < 5; ++rep) {
      auto prob = c.make(rng);
      auto res = lineage::testing::check_gradient(prob.at, prob.build);
      CHECK(res.max_rel < 1e-6);
    }
  }
}

TEST_CASE("grad_scalar of sum(W x) is the outer pattern of x") {
  ParamLayout layout;
  layout.append("w", {3, 2});
  layout.append("unused", {2});
  ParamVector p(layout);
  std::mt19937_64 rng(3);
  for (double& v : p.values()) v = std::normal_distribution<double>()(rng);
  const Tensor x = Tensor::matrix({{0.7, -1.3}});
  Tape t(p);
  Var y = ops::sum(t, ops::linear(t, t.constant(x), t.param("w")));
  t.param("unused");
  ParamVector g = grad_scalar(t, y);
  for (std::size_t r = 0; r < 3; ++r) {
    CHECK(g.block("w")[r * 2 + 0] == doctest::Approx(0.7));
    CHECK(g.block("w")[r * 2 + 1] == doctest::Approx(-1.3));
  }
  CHECK(g.block("unused")[0] == 0.0);
  CHECK(g.block("unused")[1] == 0.0);
  CHECK_THROWS_AS(grad_scalar(t, ops::linear(t, t.constant(x), t.param("w"))), ContractError);
}

TEST_CASE("mlp mean-squared-output gradient matches finite differences") {
  std::mt19937_64 rng(5);
  for (auto act : {Activation::relu, Activation::tanh}) {
    ArchSpec arch = ArchSpec::mlp(4, 3, {6, 5}, act);
    ParamVector p = init_params(arch, 77);
    Tensor x = randn({7, 4}, rng);
    auto build = [&](Tape& t) {
      Var h = t.constant(x);
      for (std::size_t i = 1; i <= arch.num_linear(); ++i) {
        h = ops::linear(t, h, t.param("fc" + std::to_string(i) + ".weight"),
                        t.param("fc" + std::to_string(i) + ".bias"));
        if (i < arch.num_linear()) h = act == Activation::relu ? ops::relu(t, h) : ops::tanh(t, h);
      }
      return ops::mean(t, ops::square(t, h));
    };
    CHECK(lineage::testing::check_gradient(p, build).max_rel < 1e-6);
  }
}

TEST_CASE("jacobian of y = Wx is the Kronecker pattern of x") {
  ArchSpec arch;
  arch.layer_sizes = {3, 2};
  std::mt19937_64 rng(9);
  ParamVector p = init_params(arch, 4);
  const std::vector<double> x{0.2, -1.0, 3.0};
  Tensor j = jacobian(arch, p, x);
  REQUIRE(j.shape() == Shape{2, 8});
  for (std::size_t k = 0; k < 2; ++k) {
    for (std::size_t r = 0; r < 2; ++r)
      for (std::size_t c = 0; c < 3; ++c) CHECK(j.at(k, r * 3 + c) == (r == k ? x[c] : 0.0));
    for (std::size_t r = 0; r < 2; ++r) CHECK(j.at(k, 6 + r) == (r == k ? 1.0 : 0.0));
  }
}

TEST_CASE("jacobian is zero when the output ignores the parameters") {
  ArchSpec arch = ArchSpec::mlp(2, 2, {3});
  ParamVector p(make_layout(arch));  // zero weights: relu(0) kills the path
  Tensor j = jacobian(arch, p, std::vector<double>{1.0, 1.0}, "act1");
  for (std::size_t i = 0; i < p.size() * 3; ++i) {
    const std::size_t col = i % p.size();
    const bool first_layer = col < 9;
    if (!first_layer) CHECK(j[i] == 0.0);
  }
  ArchSpec lin;
  lin.layer_sizes = {2, 2};
  ParamVector q = init_params(lin, 1);
  Tensor jz = jacobian(lin, q, std::vector<double>{0.0, 0.0});
  for (std::size_t k = 0; k < 2; ++k)
    for (std::size_t c = 0; c < 4; ++c) CHECK(jz.at(k, c) == 0.0);
}

TEST_CASE("jacobian rows equal per-coordinate grad_scalar") {
  ArchSpec arch = ArchSpec::mlp(2, 2, {3});
  ParamVector p = init_params(arch, 21);
  const std::vector<double> x{0.4, -0.9};
  Tensor j = jacobian(arch, p, x);
  for (std::size_t k = 0; k < 2; ++k) {
    Tensor sel({1, 2});
    sel[k] = 1.0;
    ParamVector g = weighted_output_grad(arch, p, Tensor::row(x), sel);
    for (std::size_t c = 0; c < p.size(); ++c) CHECK(j.at(k, c) == g.values()[c]);
  }
}

TEST_CASE("jacobian refuses to exceed its budget") {
  ArchSpec arch = ArchSpec::mlp(16, 10);
  ParamVector p = init_params(arch, 1);
  CHECK_THROWS_AS(jacobian(arch, p, std::vector<double>(16, 0.1), "output", 100), BudgetError);
}

TEST_CASE("weighted_output_grad equals the explicit Jacobian contraction") {
  std::mt19937_64 rng(13);
  for (const char* tap : {"output", "act1", "fc2", "act2"}) {
    CAPTURE(tap);
    ArchSpec arch = ArchSpec::mlp(5, 3, {8, 6});
    ParamVector p = init_params(arch, 8);
    Tensor x = randn({6, 5}, rng);
    const std::size_t k = arch.tap_width(tap);
    Tensor pi = randn({6, k}, rng);
    ParamVector fast = weighted_output_grad(arch, p, x, pi, tap);
    std::vector<double> slow(p.size(), 0.0);
    for (std::size_t i = 0; i < 6; ++i) {
      Tensor j = jacobian(arch, p, x.row_span(i), tap);
      for (std::size_t r = 0; r < k; ++r)
        for (std::size_t c = 0; c < p.size(); ++c) slow[c] += pi.at(i, r) * j.at(r, c);
    }
    double worst = 0.0;
    for (std::size_t c = 0; c < p.size(); ++c) worst = std::max(worst, std::abs(slow[c] - fast.values()[c]));
    CHECK(worst < 1e-10);
  }
}

TEST_CASE("weighted_output_grad: zero weights, selectors, linearity, width check") {
  std::mt19937_64 rng(17);
  ArchSpec arch = ArchSpec::mlp(4, 3, {5, 4});
  ParamVector p = init_params(arch, 2);
  Tensor x = randn({3, 4}, rng);
  ParamVector zero = weighted_output_grad(arch, p, x, Tensor({3, 3}));
  for (double v : zero.values()) CHECK(v == 0.0);

  Tensor p1 = randn({3, 3}, rng), p2 = randn({3, 3}, rng);
  Tensor mix({3, 3});
  for (std::size_t i = 0; i < 9; ++i) mix[i] = 2.5 * p1[i] - 0.75 * p2[i];
  ParamVector lhs = weighted_output_grad(arch, p, x, mix);
  ParamVector rhs = 2.5 * weighted_output_grad(arch, p, x, p1) + (-0.75) * weighted_output_grad(arch, p, x, p2);
  for (std::size_t c = 0; c < p.size(); ++c) CHECK(lhs.values()[c] == doctest::Approx(rhs.values()[c]).epsilon(1e-12));

  CHECK_THROWS_AS(weighted_output_grad(arch, p, x, Tensor({3, 4})), ContractError);
}

TEST_CASE("forward and backward are bit-deterministic") {
  std::mt19937_64 rng(23);
  ArchSpec arch = ArchSpec::mlp(6, 4);
  Tensor x = randn({10, 6}, rng);
  Tensor pi = randn({10, 4}, rng);
  auto a = weighted_output_grad(arch, init_params(arch, 5), x, pi);
  auto b = weighted_output_grad(arch, init_params(arch, 5), x, pi);
  CHECK(a == b);
  CHECK(init_params(arch, 5) == init_params(arch, 5));
  CHECK_FALSE(init_params(arch, 5) == init_params(arch, 6));
}

TEST_CASE("backward pass counter counts sweeps") {
  ArchSpec arch = ArchSpec::mlp(3, 2, {4});
  ParamVector p = init_params(arch, 1);
  std::mt19937_64 rng(1);
  Tensor x = randn({5, 3}, rng);
  BackwardPassCounter c1;
  weighted_output_grad(arch, p, x, randn({5, 2}, rng));
  CHECK(c1.passes() == 1);
  BackwardPassCounter c2;
  for (std::size_t i = 0; i < 5; ++i) jacobian(arch, p, x.row_span(i), "act1");
  CHECK(c2.passes() == 5 * 4);
}

TEST_CASE("reinit_head keeps hidden layers and resizes the head") {
  ArchSpec arch = ArchSpec::mlp(4, 3);
  ParamVector p = init_params(arch, 3);
  ArchSpec next;
  ParamVector q = reinit_head(arch, p, 5, 9, &next);
  CHECK(next.output_dim() == 5);
  CHECK(q.block_tensor("fc1.weight") == p.block_tensor("fc1.weight"));
  CHECK(q.block_tensor("fc2.bias") == p.block_tensor("fc2.bias"));
  CHECK(q.block_tensor("fc3.weight").shape() == Shape{5, 32});
}

TEST_CASE("adam takes a bias-corrected first step of size lr") {
  ParamLayout layout;
  layout.append("x", {3});
  ParamVector p(layout, {1.0, 2.0, 3.0});
  ParamVector g(layout, {0.5, -2.0, 0.0});
  Adam opt({0.1}, 3);
  opt.step(p, g);
  CHECK(p.values()[0] == doctest::Approx(0.9).epsilon(1e-7));
  CHECK(p.values()[1] == doctest::Approx(2.1).epsilon(1e-7));
  CHECK(p.values()[2] == 3.0);
  CHECK(opt.steps() == 1);
}
