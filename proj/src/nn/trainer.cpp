#include "critpath/nn/trainer.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <numeric>

#include "critpath/random.hpp"

namespace critpath::nn {

TrainingDiverged::TrainingDiverged(std::size_t epoch, double loss)
    : Error("training diverged at epoch " + std::to_string(epoch) + " (loss " + std::to_string(loss) + ")"),
      epoch_(epoch) {}

std::vector<std::size_t> parse_arch(std::string_view spec) {
  std::vector<std::size_t> widths;
  std::size_t pos = 0;
  while (pos <= spec.size()) {
    const std::size_t dash = std::min(spec.find('-', pos), spec.size());
    const auto token = spec.substr(pos, dash - pos);
    std::size_t v = 0;
    const auto res = std::from_chars(token.data(), token.data() + token.size(), v);
    if (token.empty() || res.ec != std::errc() || res.ptr != token.data() + token.size() || v == 0) {
      throw InvalidArgument("invalid architecture \"" + std::string(spec) + "\"");
    }
    widths.push_back(v);
    pos = dash + 1;
  }
  if (widths.size() < 2) throw InvalidArgument("architecture needs at least input and output widths");
  return widths;
}

Network init_mlp(std::span<const std::size_t> widths, std::uint64_t seed) {
  if (widths.size() < 2) throw InvalidArgument("architecture needs at least input and output widths");
  Rng rng(seed);
  std::vector<Layer> layers;
  for (std::size_t i = 0; i + 1 < widths.size(); ++i) {
    const std::size_t in = widths[i], out = widths[i + 1];
    std::normal_distribution<double> dist(0.0, std::sqrt(2.0 / static_cast<double>(in)));
    std::vector<float> w(in * out);
    for (auto& v : w) v = static_cast<float>(dist(rng));
    layers.push_back(Layer::make_dense(static_cast<std::uint32_t>(in), static_cast<std::uint32_t>(out), std::move(w),
                                       std::vector<float>(out, 0.0f)));
    if (i + 2 < widths.size()) layers.push_back(Layer::make_relu());
  }
  return Network(std::move(layers));
}

double accuracy(const Network& net, std::span<const Tensor> inputs, std::span<const std::size_t> labels) {
  if (inputs.empty()) return 0.0;
  std::size_t correct = 0;
  for (std::size_t i = 0; i < inputs.size(); ++i) {
    if (forward(net, inputs[i]).predicted_class == labels[i]) ++correct;
  }
  return static_cast<double>(correct) / static_cast<double>(inputs.size());
}

TrainResult train_toy(std::span<const Tensor> inputs, std::span<const std::size_t> labels,
                      std::span<const std::size_t> arch, const TrainOptions& options) {
  if (inputs.size() != labels.size()) throw InvalidArgument("train_toy: inputs and labels differ in length");
  if (inputs.empty()) throw InvalidArgument("train_toy: empty training set");
  for (std::size_t y : labels) {
    if (y >= arch.back()) throw InvalidArgument("train_toy: label exceeds output width");
  }
  Network net = init_mlp(arch, options.seed);
  std::vector<Layer> layers = net.layers();

  Rng rng(derive_seed(options.seed, 1));
  std::vector<std::size_t> order(inputs.size());
  std::iota(order.begin(), order.end(), 0);

  double epoch_loss = 0.0;
  ParamGrads grads;
  for (std::size_t epoch = 0; epoch < options.epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), rng);
    epoch_loss = 0.0;
    for (std::size_t idx : order) {
      const Network current(layers);
      const double loss = loss_and_gradients(current, inputs[idx], labels[idx], nullptr, &grads);
      if (!std::isfinite(loss)) throw TrainingDiverged(epoch, loss);
      epoch_loss += loss;
      bool finite = true;
      const auto step = [&](float& p, double g) {
        p = static_cast<float>(p - options.learning_rate * g);
        finite = finite && std::isfinite(p);
      };
      for (std::size_t li = 0; li < layers.size(); ++li) {
        auto& l = layers[li];
        if (!l.parametric()) continue;
        for (std::size_t k = 0; k < l.weights.size(); ++k) step(l.weights[k], grads.weights[li][k]);
        for (std::size_t k = 0; k < l.bias.size(); ++k) step(l.bias[k], grads.bias[li][k]);
      }
      // Checked per step: the next forward pass would reject non-finite weights.
      if (!finite) throw TrainingDiverged(epoch, loss);
    }
    epoch_loss /= static_cast<double>(inputs.size());
  }

  TrainResult result{Network(std::move(layers)), 0.0, epoch_loss};
  result.train_accuracy = accuracy(result.network, inputs, labels);
  return result;
}

}  // namespace critpath::nn
