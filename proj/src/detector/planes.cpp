#include "lineage/detector/planes.hpp"

#include <algorithm>
#include <cmath>

#include "lineage/errors.hpp"

namespace lineage::detector {
namespace {

std::pair<std::size_t, std::size_t> most_square(std::size_t n) {
  std::size_t h = static_cast<std::size_t>(std::sqrt(static_cast<double>(n)));
  while (h > 1 && n % h != 0) --h;
  return {h, n / h};
}

}  // namespace

std::pair<std::size_t, std::size_t> plane_shape(std::size_t count) {
  if (count == 0) throw ContractError("cannot shape an empty plane");
  auto hw = most_square(count);
  if (hw.first == 1 && count > 3) hw = most_square(count + 1);
  return hw;
}

Plane reshape_to_planes(std::span<const double> values, std::size_t h, std::size_t w, bool pad) {
  const std::size_t cells = h * w;
  if (cells < values.size())
    throw ContractError("plane " + std::to_string(h) + "x" + std::to_string(w) + " cannot hold " +
                        std::to_string(values.size()) + " elements");
  if (cells > values.size() && !pad)
    throw ContractError("plane " + std::to_string(h) + "x" + std::to_string(w) + " needs padding for " +
                        std::to_string(values.size()) + " elements");
  Plane p;
  p.values = nn::Tensor({h, w});
  p.mask.assign(cells, 0);
  p.count = values.size();
  std::copy(values.begin(), values.end(), p.values.data().begin());
  std::fill(p.mask.begin(), p.mask.begin() + static_cast<long>(values.size()), 1);
  return p;
}

std::vector<double> flatten(const Plane& plane) {
  return {plane.values.data().begin(), plane.values.data().begin() + static_cast<long>(plane.count)};
}

nn::Tensor stack_planes(const nn::Tensor& parent, const nn::Tensor& child) {
  if (parent.shape() != child.shape())
    throw LayoutError("parent plane " + nn::shape_to_string(parent.shape()) + " and child plane " +
                      nn::shape_to_string(child.shape()) + " differ");
  if (parent.rank() != 2) throw LayoutError("planes must be rank 2");
  nn::Tensor out({2, parent.dim(0), parent.dim(1)});
  auto d = out.data();
  std::copy(parent.data().begin(), parent.data().end(), d.begin());
  std::copy(child.data().begin(), child.data().end(), d.begin() + static_cast<long>(parent.numel()));
  return out;
}

}  // namespace lineage::detector
