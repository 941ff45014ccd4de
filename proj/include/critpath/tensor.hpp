#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <vector>

namespace critpath {

using Shape = std::vector<std::size_t>;

std::size_t shape_numel(std::span<const std::size_t> shape);
std::string shape_to_string(std::span<const std::size_t> shape);

// Dense row-major f32 tensor. Image tensors use HWC layout.
struct Tensor {
  Shape shape;
  std::vector<float> data;

  Tensor() = default;
  // Throws InvalidArgument if the element count does not match the shape or
  // any entry is non-finite.
  Tensor(Shape shape, std::vector<float> data);

  static Tensor zeros(Shape shape);

  std::size_t size() const { return data.size(); }
  std::span<const float> values() const { return data; }

  bool operator==(const Tensor&) const = default;
};

}  // namespace critpath
