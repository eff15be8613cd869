#pragma once

#include <cstdint>
#include <vector>

#include "lineage/nn/param_vector.hpp"

namespace lineage::nn {

struct AdamConfig {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

// Bias-corrected first/second moment optimizer.
class Adam {
 public:
  Adam(AdamConfig config, std::size_t size);

  void step(ParamVector& params, const ParamVector& grad);

  const AdamConfig& config() const { return config_; }
  std::uint64_t steps() const { return t_; }
  const std::vector<double>& m() const { return m_; }
  const std::vector<double>& v() const { return v_; }
  // Restores a saved state (checkpoint resume).
  void restore(std::uint64_t steps, std::vector<double> m, std::vector<double> v);

 private:
  AdamConfig config_;
  std::uint64_t t_ = 0;
  std::vector<double> m_, v_;
};

}  // namespace lineage::nn
