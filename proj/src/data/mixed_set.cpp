#include <algorithm>
#include <numeric>

#include "critpath/data/dataset.hpp"
#include "critpath/random.hpp"

namespace critpath::data {

std::size_t MixedSet::anomaly_count() const {
  return static_cast<std::size_t>(std::count(labels.begin(), labels.end(), std::uint8_t{1}));
}

std::vector<std::size_t> predict_all(const nn::Network& net, std::span<const Tensor> inputs) {
  std::vector<std::size_t> out;
  out.reserve(inputs.size());
  for (const auto& x : inputs) out.push_back(nn::forward(net, x).predicted_class);
  return out;
}

MixedSet build_mixed_set(const LabeledDataset& test, std::span<const std::size_t> test_predictions,
                         std::span<const AnomalySet> anomalies,
                         std::span<const std::vector<std::size_t>> anomaly_predictions, std::size_t k,
                         std::size_t per_source_cap, std::uint64_t seed) {
  if (test_predictions.size() != test.size() || anomaly_predictions.size() != anomalies.size()) {
    throw InvalidArgument("build_mixed_set: prediction arrays do not match inputs");
  }
  MixedSet mixed;
  mixed.class_id = k;
  for (std::size_t i = 0; i < test.size(); ++i) {
    if (test_predictions[i] != k) continue;
    mixed.inputs.push_back(test.inputs[i]);
    mixed.labels.push_back(0);
    mixed.sources.emplace_back("normal");
  }
  for (std::size_t s = 0; s < anomalies.size(); ++s) {
    const auto& set = anomalies[s];
    if (anomaly_predictions[s].size() != set.size()) {
      throw InvalidArgument("build_mixed_set: prediction arrays do not match inputs");
    }
    std::vector<std::size_t> eligible;
    for (std::size_t i = 0; i < set.size(); ++i) {
      if (anomaly_predictions[s][i] == k) eligible.push_back(i);
    }
    Rng rng(derive_seed(seed, s));
    std::shuffle(eligible.begin(), eligible.end(), rng);
    eligible.resize(std::min(eligible.size(), per_source_cap));
    std::sort(eligible.begin(), eligible.end());
    for (std::size_t i : eligible) {
      mixed.inputs.push_back(set.inputs[i]);
      mixed.labels.push_back(1);
      mixed.sources.push_back(set.source);
    }
  }
  if (mixed.normal_count() == 0 || mixed.anomaly_count() == 0) {
    throw DataError(DataError::Code::EmptyClass,
                    "class " + std::to_string(k) + " has " + std::to_string(mixed.normal_count()) + " normal and " +
                        std::to_string(mixed.anomaly_count()) + " anomaly samples");
  }
  return mixed;
}

MixedSet build_mixed_set(const nn::Network& net, const LabeledDataset& test, std::span<const AnomalySet> anomalies,
                         std::size_t k, std::size_t per_source_cap, std::uint64_t seed) {
  const auto test_pred = predict_all(net, test.inputs);
  std::vector<std::vector<std::size_t>> anomaly_pred;
  anomaly_pred.reserve(anomalies.size());
  for (const auto& set : anomalies) anomaly_pred.push_back(predict_all(net, set.inputs));
  return build_mixed_set(test, test_pred, anomalies, anomaly_pred, k, per_source_cap, seed);
}

}  // namespace critpath::data
