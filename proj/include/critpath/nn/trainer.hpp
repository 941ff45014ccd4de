#pragma once

#include <cstdint>
#include <span>
#include <string_view>
#include <vector>

#include "critpath/nn/network.hpp"

namespace critpath::nn {

class TrainingDiverged : public Error {
 public:
  TrainingDiverged(std::size_t epoch, double loss);
  std::size_t epoch() const { return epoch_; }

 private:
  std::size_t epoch_;
};

struct TrainOptions {
  std::size_t epochs = 200;
  double learning_rate = 0.05;
  std::uint64_t seed = 1;
};

struct TrainResult {
  Network network;
  double train_accuracy = 0.0;
  double final_loss = 0.0;
};

// "2-16-16-3" -> {2, 16, 16, 3}.
std::vector<std::size_t> parse_arch(std::string_view spec);

// Dense MLP with ReLU between layers, He-normal weights and zero biases.
Network init_mlp(std::span<const std::size_t> widths, std::uint64_t seed);

// Plain per-sample SGD on softmax cross-entropy, shuffled each epoch.
TrainResult train_toy(std::span<const Tensor> inputs, std::span<const std::size_t> labels,
                      std::span<const std::size_t> arch, const TrainOptions& options);

double accuracy(const Network& net, std::span<const Tensor> inputs, std::span<const std::size_t> labels);

}  // namespace critpath::nn
