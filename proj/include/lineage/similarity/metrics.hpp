#pragma once

#include <string>
#include <string_view>

#include "lineage/nn/tensor.hpp"

namespace lineage::similarity {

enum class MetricKind { l1, l2, linf, lp, lse, cka, dc };

struct MetricSpec {
  MetricKind kind = MetricKind::l2;
  double p = 4.0;   // lp exponent
  double t = 0.01;  // lse temperature

  // "l1", "l2", "linf", "lp", "lp:3", "lse", "lse:0.5", "cka", "dc"
  static MetricSpec parse(std::string_view text);
  std::string name() const;
  // Every kind except linf has a one-pass linearization.
  bool has_linearization() const { return kind != MetricKind::linf; }
  void validate() const;

  friend bool operator==(const MetricSpec&, const MetricSpec&) = default;
};

// s(X, Y) for feature batches X = f_p, Y = f_c of shape [N×K]. Distances are
// negated so that larger is more similar; cka and dc lie in [0, 1].
double baseline_similarity(const MetricSpec& metric, const nn::Tensor& x, const nn::Tensor& y);

// Per-sample weights of the first-order expansion of s around X:
// s(X + G, Y) ≈ s(X, Y) + prefactor · Σ_i rows_i · G_i.
// For cka/dc rows hold ζ_i / ξ_i and prefactor = s(X, Y); otherwise rows
// hold Π_i and prefactor = 1.
struct PiWeights {
  nn::Tensor rows;
  MetricSpec metric;
  double prefactor = 1.0;
};

PiWeights pi_weights(const MetricSpec& metric, const nn::Tensor& x, const nn::Tensor& y);

}  // namespace lineage::similarity
