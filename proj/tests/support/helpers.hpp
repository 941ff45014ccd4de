#pragma once

#include <unistd.h>

#include <filesystem>
#include <random>
#include <string>
#include <vector>

#include "critpath/nn/network.hpp"
#include "critpath/random.hpp"
#include "critpath/tensor.hpp"

namespace testing_support {

using critpath::Rng;
using critpath::Shape;
using critpath::Tensor;
namespace nn = critpath::nn;

inline std::vector<float> normal_floats(Rng& rng, std::size_t n, double sd) {
  std::normal_distribution<double> d(0.0, sd);
  std::vector<float> v(n);
  for (auto& x : v) x = static_cast<float>(d(rng));
  return v;
}

inline Tensor uniform_tensor(Rng& rng, Shape shape, double lo = 0.0, double hi = 1.0) {
  std::uniform_real_distribution<double> d(lo, hi);
  std::vector<float> v(critpath::shape_numel(shape));
  for (auto& x : v) x = static_cast<float>(d(rng));
  return Tensor(std::move(shape), std::move(v));
}

inline nn::Layer dense(Rng& rng, std::uint32_t in, std::uint32_t out, double sd = 0.5) {
  return nn::Layer::make_dense(in, out, normal_floats(rng, std::size_t{in} * out, sd), normal_floats(rng, out, 0.1));
}

// in -> h1 -> h2 -> out with ReLUs.
inline nn::Network random_mlp(Rng& rng, std::vector<std::uint32_t> widths, nn::TraceOptions opt = {}) {
  std::vector<nn::Layer> layers;
  for (std::size_t i = 0; i + 1 < widths.size(); ++i) {
    layers.push_back(dense(rng, widths[i], widths[i + 1]));
    if (i + 2 < widths.size()) layers.push_back(nn::Layer::make_relu());
  }
  return nn::Network(std::move(layers), opt);
}

// 5x5x2 input: conv3x3(pad 1) -> relu -> conv2x2(stride 2) -> relu -> flatten -> dense(8 -> 3).
inline nn::Network random_convnet(Rng& rng, nn::TraceOptions opt = {}) {
  std::vector<nn::Layer> layers;
  nn::ConvDims c1{3, 3, 2, 3, 1, 1};
  layers.push_back(nn::Layer::make_conv(c1, normal_floats(rng, 3 * 2 * 3 * 3, 0.5), normal_floats(rng, 3, 0.1)));
  layers.push_back(nn::Layer::make_relu());
  nn::ConvDims c2{2, 2, 3, 2, 2, 0};
  layers.push_back(nn::Layer::make_conv(c2, normal_floats(rng, 2 * 3 * 2 * 2, 0.5), normal_floats(rng, 2, 0.1)));
  layers.push_back(nn::Layer::make_relu());
  layers.push_back(nn::Layer::make_flatten());
  layers.push_back(dense(rng, 8, 3));
  return nn::Network(std::move(layers), opt, Shape{5, 5, 2});
}

inline std::vector<double> to_double(const Tensor& t) { return {t.data.begin(), t.data.end()}; }

// Fresh directory under the system temp dir, removed on destruction.
class TempDir {
 public:
  explicit TempDir(const std::string& tag) {
    static int counter = 0;
    path_ = std::filesystem::temp_directory_path() /
            ("critpath_test_" + tag + "_" + std::to_string(::getpid()) + "_" + std::to_string(counter++));
    std::filesystem::remove_all(path_);
    std::filesystem::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
  }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;

  const std::filesystem::path& path() const { return path_; }
  std::filesystem::path operator/(const std::string& name) const { return path_ / name; }

 private:
  std::filesystem::path path_;
};

}  // namespace testing_support
