#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <utility>
#include <vector>

#include "lineage/nn/tensor.hpp"

namespace lineage::detector {

// Most-square h×w (h ≤ w) with h·w ≥ count. A prime count > 3 is padded by
// one element so the plane is not a single row.
std::pair<std::size_t, std::size_t> plane_shape(std::size_t count);

struct Plane {
  nn::Tensor values;          // [H×W], row-major fill
  std::vector<std::uint8_t> mask;  // 1 for real elements, 0 for padding
  std::size_t count = 0;      // real elements

  std::size_t padding() const { return values.numel() - count; }
};

// Throws ContractError when h·w < count, or h·w > count without `pad`.
Plane reshape_to_planes(std::span<const double> values, std::size_t h, std::size_t w, bool pad = false);
std::vector<double> flatten(const Plane& plane);

// Stacks two equally shaped planes into [2×H×W].
nn::Tensor stack_planes(const nn::Tensor& parent, const nn::Tensor& child);

}  // namespace lineage::detector
