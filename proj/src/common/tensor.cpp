#include "critpath/tensor.hpp"

#include <cmath>
#include <functional>
#include <numeric>

#include "critpath/error.hpp"

namespace critpath {

std::size_t shape_numel(std::span<const std::size_t> shape) {
  return std::accumulate(shape.begin(), shape.end(), std::size_t{1}, std::multiplies<>());
}

std::string shape_to_string(std::span<const std::size_t> shape) {
  std::string out = "[";
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i > 0) out += ",";
    out += std::to_string(shape[i]);
  }
  return out + "]";
}

Tensor::Tensor(Shape s, std::vector<float> d) : shape(std::move(s)), data(std::move(d)) {
  if (shape_numel(shape) != data.size()) {
    throw InvalidArgument("tensor: shape " + shape_to_string(shape) + " does not match " +
                          std::to_string(data.size()) + " elements");
  }
  for (float v : data) {
    if (!std::isfinite(v)) throw InvalidArgument("tensor: non-finite entry");
  }
}

Tensor Tensor::zeros(Shape s) {
  const std::size_t n = shape_numel(s);
  return Tensor(std::move(s), std::vector<float>(n, 0.0f));
}

}  // namespace critpath
