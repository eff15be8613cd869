#pragma once

#include <string_view>

#include "lineage/similarity/approx.hpp"

namespace lineage::similarity {

struct Prop2Solution {
  nn::Tensor w;        // per-sample W(x) [K×|Δθ|], or empty
  nn::ParamVector z;   // shared Z, or empty
  double residual = 0.0;
};

// Per-sample optimum W(x) = (f_c(x) − f_p(x))·Δθᵀ / ‖Δθ‖². Δθ spans the
// blocks below the tap. residual = ‖f_p(x) + W·Δθ − f_c(x)‖₂.
Prop2Solution prop2_solve_W(ModelRef parent, ModelRef child, std::span<const double> x,
                            std::string_view tap = "output");

// Shared optimum Z: minimum-norm solution of Σ_i J_iᵀJ_i Z = Σ_i J_iᵀ(t_i − f_p(x_i)),
// singular values below 1e-10·σ_max treated as zero. `targets` holds the child
// outputs t_i row by row. residual = Σ_i ‖f_p(x_i) + J_i Z − t_i‖².
Prop2Solution prop2_solve_Z(ModelRef parent, const nn::Tensor& inputs, const nn::Tensor& targets,
                            std::string_view tap = "output", std::size_t budget = nn::kDefaultJacobianBudget);

}  // namespace lineage::similarity
