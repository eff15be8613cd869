#include "lineage/nn/adam.hpp"

#include <cmath>

#include "lineage/errors.hpp"

namespace lineage::nn {

Adam::Adam(AdamConfig config, std::size_t size) : config_(config), m_(size, 0.0), v_(size, 0.0) {
  if (!(config_.lr > 0.0)) throw ConfigError("learning rate must be positive");
}

void Adam::step(ParamVector& params, const ParamVector& grad) {
  if (params.size() != m_.size() || grad.size() != m_.size())
    throw LayoutError("optimizer state has " + std::to_string(m_.size()) + " slots, got " +
                      std::to_string(params.size()));
  ++t_;
  const double b1 = config_.beta1, b2 = config_.beta2;
  const double c1 = 1.0 - std::pow(b1, static_cast<double>(t_));
  const double c2 = 1.0 - std::pow(b2, static_cast<double>(t_));
  auto p = params.values();
  auto g = grad.values();
  for (std::size_t i = 0; i < m_.size(); ++i) {
    m_[i] = b1 * m_[i] + (1.0 - b1) * g[i];
    v_[i] = b2 * v_[i] + (1.0 - b2) * g[i] * g[i];
    const double mhat = m_[i] / c1;
    const double vhat = v_[i] / c2;
    p[i] -= config_.lr * mhat / (std::sqrt(vhat) + config_.eps);
  }
}

void Adam::restore(std::uint64_t steps, std::vector<double> m, std::vector<double> v) {
  if (m.size() != m_.size() || v.size() != v_.size()) throw LayoutError("optimizer state size mismatch");
  t_ = steps;
  m_ = std::move(m);
  v_ = std::move(v);
}

}  // namespace lineage::nn
