#include "lineage/nn/param_vector.hpp"

#include <algorithm>
#include <cmath>

#include "lineage/errors.hpp"
#include "lineage/kernels/kernels.hpp"

namespace lineage::nn {

ParamLayout::ParamLayout(std::vector<ParamBlock> blocks) : blocks_(std::move(blocks)) {
  std::size_t expected = 0;
  for (const auto& b : blocks_) {
    if (b.offset != expected) {
      throw LayoutError("parameter block '" + b.name + "' at offset " + std::to_string(b.offset) +
                        ", expected " + std::to_string(expected));
    }
    expected += b.size();
  }
  for (std::size_t i = 0; i < blocks_.size(); ++i)
    for (std::size_t j = i + 1; j < blocks_.size(); ++j)
      if (blocks_[i].name == blocks_[j].name)
        throw LayoutError("duplicate parameter block '" + blocks_[i].name + "'");
  total_ = expected;
}

void ParamLayout::append(std::string name, Shape shape) {
  if (index_of(name)) throw LayoutError("duplicate parameter block '" + name + "'");
  ParamBlock b{std::move(name), std::move(shape), total_};
  total_ += b.size();
  blocks_.push_back(std::move(b));
}

std::optional<std::size_t> ParamLayout::index_of(std::string_view name) const {
  for (std::size_t i = 0; i < blocks_.size(); ++i)
    if (blocks_[i].name == name) return i;
  return std::nullopt;
}

const ParamBlock& ParamLayout::block(std::string_view name) const {
  auto idx = index_of(name);
  if (!idx) throw LayoutError("unknown parameter block '" + std::string(name) + "'");
  return blocks_[*idx];
}

ParamVector::ParamVector(ParamLayout layout)
    : layout_(std::move(layout)), values_(layout_.total(), 0.0) {}

ParamVector::ParamVector(ParamLayout layout, std::vector<double> values)
    : layout_(std::move(layout)), values_(std::move(values)) {
  if (values_.size() != layout_.total()) {
    throw LayoutError("parameter vector has " + std::to_string(values_.size()) +
                      " values but layout covers " + std::to_string(layout_.total()));
  }
}

std::span<const double> ParamVector::block(std::string_view name) const {
  const auto& b = layout_.block(name);
  return std::span<const double>(values_).subspan(b.offset, b.size());
}

std::span<double> ParamVector::block(std::string_view name) {
  const auto& b = layout_.block(name);
  return std::span<double>(values_).subspan(b.offset, b.size());
}

Tensor ParamVector::block_tensor(std::string_view name) const {
  const auto& b = layout_.block(name);
  auto s = block(name);
  return Tensor(b.shape, std::vector<double>(s.begin(), s.end()));
}

void ParamVector::set_block(std::string_view name, const Tensor& value) {
  const auto& b = layout_.block(name);
  if (value.numel() != b.size())
    throw LayoutError("block '" + std::string(name) + "' expects " + std::to_string(b.size()) +
                      " values, got " + std::to_string(value.numel()));
  std::copy(value.data().begin(), value.data().end(), values_.begin() + static_cast<long>(b.offset));
}

bool ParamVector::all_finite() const {
  return std::all_of(values_.begin(), values_.end(), [](double v) { return std::isfinite(v); });
}

void ParamVector::require_same_layout(const ParamVector& other) const {
  if (!(layout_ == other.layout_)) throw LayoutError("parameter vectors have different layouts");
}

ParamVector& ParamVector::operator+=(const ParamVector& other) {
  require_same_layout(other);
  kernels::axpy(1.0, other.values_, values_);
  return *this;
}

ParamVector& ParamVector::operator-=(const ParamVector& other) {
  require_same_layout(other);
  kernels::axpy(-1.0, other.values_, values_);
  return *this;
}

ParamVector& ParamVector::operator*=(double s) {
  for (double& v : values_) v *= s;
  return *this;
}

double dot(const ParamVector& a, const ParamVector& b) {
  if (!(a.layout() == b.layout())) throw LayoutError("dot of parameter vectors with different layouts");
  return kernels::dot(a.values(), b.values());
}

double norm2(const ParamVector& a) { return std::sqrt(kernels::dot(a.values(), a.values())); }

ParamVector select_blocks(const ParamVector& source, std::span<const std::string> names) {
  ParamLayout layout;
  for (const auto& b : source.layout().blocks()) {
    if (std::find(names.begin(), names.end(), b.name) != names.end()) layout.append(b.name, b.shape);
  }
  ParamVector out(layout);
  for (const auto& b : layout.blocks()) {
    auto src = source.block(b.name);
    std::copy(src.begin(), src.end(), out.block(b.name).begin());
  }
  return out;
}

}  // namespace lineage::nn
