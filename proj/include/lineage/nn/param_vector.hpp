#pragma once

#include <cstddef>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "lineage/nn/tensor.hpp"

namespace lineage::nn {

struct ParamBlock {
  std::string name;
  Shape shape;
  std::size_t offset = 0;

  std::size_t size() const { return shape_numel(shape); }
  friend bool operator==(const ParamBlock&, const ParamBlock&) = default;
};

// Ordered list of named blocks laid out back to back.
class ParamLayout {
 public:
  ParamLayout() = default;
  // Validates contiguity: offsets must start at 0 and follow each other exactly.
  explicit ParamLayout(std::vector<ParamBlock> blocks);

  void append(std::string name, Shape shape);

  const std::vector<ParamBlock>& blocks() const { return blocks_; }
  std::size_t total() const { return total_; }
  std::optional<std::size_t> index_of(std::string_view name) const;
  const ParamBlock& block(std::string_view name) const;

  friend bool operator==(const ParamLayout&, const ParamLayout&) = default;

 private:
  std::vector<ParamBlock> blocks_;
  std::size_t total_ = 0;
};

// Flat parameter vector θ with its layout.
class ParamVector {
 public:
  ParamVector() = default;
  explicit ParamVector(ParamLayout layout);  // zeros
  ParamVector(ParamLayout layout, std::vector<double> values);

  const ParamLayout& layout() const { return layout_; }
  std::size_t size() const { return values_.size(); }
  std::span<const double> values() const { return values_; }
  std::span<double> values() { return values_; }

  std::span<const double> block(std::string_view name) const;
  std::span<double> block(std::string_view name);
  Tensor block_tensor(std::string_view name) const;
  void set_block(std::string_view name, const Tensor& value);

  bool all_finite() const;

  ParamVector& operator+=(const ParamVector& other);
  ParamVector& operator-=(const ParamVector& other);
  ParamVector& operator*=(double s);
  friend ParamVector operator+(ParamVector a, const ParamVector& b) { return a += b; }
  friend ParamVector operator-(ParamVector a, const ParamVector& b) { return a -= b; }
  friend ParamVector operator*(ParamVector a, double s) { return a *= s; }
  friend ParamVector operator*(double s, ParamVector a) { return a *= s; }

  friend bool operator==(const ParamVector&, const ParamVector&) = default;

 private:
  void require_same_layout(const ParamVector& other) const;

  ParamLayout layout_;
  std::vector<double> values_;
};

double dot(const ParamVector& a, const ParamVector& b);
double norm2(const ParamVector& a);
// Restricts `source` to the blocks named in `names`, keeping their relative order.
ParamVector select_blocks(const ParamVector& source, std::span<const std::string> names);

}  // namespace lineage::nn
