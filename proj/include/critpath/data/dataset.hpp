#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "critpath/error.hpp"
#include "critpath/nn/network.hpp"
#include "critpath/tensor.hpp"

namespace critpath::data {

class DataError : public Error {
 public:
  enum class Code { BadMagic, CountMismatch, RaggedRow, ValueOutOfRange, ShapeMismatch, EmptyClass, Truncated };

  DataError(Code code, const std::string& detail);
  Code code() const { return code_; }

 private:
  Code code_;
};

enum class Split { Train, Test };

struct LabeledDataset {
  Shape shape;
  std::vector<Tensor> inputs;
  std::vector<std::size_t> labels;
  Split split = Split::Train;

  std::size_t size() const { return inputs.size(); }
  std::size_t num_classes() const;  // max label + 1
};

struct AnomalySet {
  Shape shape;
  std::vector<Tensor> inputs;
  // "gaussian", "uniform", "fgsm", "pgd" or "ood:<name>".
  std::string source;
  std::uint64_t seed = 0;

  std::size_t size() const { return inputs.size(); }
};

// IDX (big-endian) image/label pair; pixels are scaled by 1/255 into [0,1].
LabeledDataset load_idx(const std::filesystem::path& images, const std::filesystem::path& labels,
                        Split split = Split::Train);
// IDX image file without labels.
std::vector<Tensor> load_idx_images(const std::filesystem::path& images);

// One sample per non-empty line: label, then product(shape) values in [0,1].
LabeledDataset load_csv(const std::filesystem::path& path, const Shape& shape, Split split = Split::Train);
void save_csv(const LabeledDataset& ds, const std::filesystem::path& path);

// Isotropic Gaussian blobs clipped to [0,1]: per_class samples around each center.
LabeledDataset make_blobs(std::span<const std::vector<float>> centers, float stddev, std::size_t per_class,
                          std::uint64_t seed, Split split = Split::Train);

// --- anomaly generators ----------------------------------------------------

AnomalySet gen_gaussian_noise(const Shape& shape, std::size_t count, double mean, double stddev,
                              std::uint64_t seed);
// Uniform noise on [lo, hi] per element (default the full pixel range).
AnomalySet gen_uniform_noise(const Shape& shape, std::size_t count, std::uint64_t seed, double lo = 0.0,
                             double hi = 1.0);

// x' = clip(x + epsilon * sign(grad), 0, 1) with sign(0) = 0.
Tensor fgsm(const nn::Network& net, const Tensor& x, std::size_t label, double epsilon);
// Iterated signed-gradient steps, projected onto the epsilon-ball around x and
// onto [0,1] after every step.
Tensor pgd(const nn::Network& net, const Tensor& x, std::size_t label, double epsilon, double step,
           std::size_t iters);

AnomalySet fgsm_set(const nn::Network& net, const LabeledDataset& ds, double epsilon);
AnomalySet pgd_set(const nn::Network& net, const LabeledDataset& ds, double epsilon, double step,
                   std::size_t iters);

// Center-crop or zero-pad spatial dims to `target` and broadcast/average
// channels so foreign datasets fit the model input.
Tensor conform_to_shape(const Tensor& x, const Shape& target);
AnomalySet wrap_ood(const std::string& name, std::span<const Tensor> inputs, const Shape& target);

// Raw f32 LE blob at `<base>.bin` plus JSON sidecar `<base>.json`
// {shape, count, source, seed}.
void save_anomaly_set(const AnomalySet& set, const std::filesystem::path& base);
AnomalySet load_anomaly_set(const std::filesystem::path& sidecar);

// --- mixed sets ------------------------------------------------------------

struct MixedSet {
  std::size_t class_id = 0;
  std::vector<Tensor> inputs;
  std::vector<std::uint8_t> labels;  // 0 = normal, 1 = anomaly
  std::vector<std::string> sources;  // "normal" or the anomaly source tag

  std::size_t size() const { return inputs.size(); }
  std::size_t anomaly_count() const;
  std::size_t normal_count() const { return size() - anomaly_count(); }
};

// Normals: every test item the model predicts as k. Anomalies: up to
// per_source_cap items per source, sampled without replacement among those
// predicted as k (source i shuffled with derive_seed(seed, i)).
MixedSet build_mixed_set(const nn::Network& net, const LabeledDataset& test, std::span<const AnomalySet> anomalies,
                         std::size_t k, std::size_t per_source_cap, std::uint64_t seed);

// Same, with model predictions precomputed (parallel to test.inputs and to
// each anomaly set's inputs).
MixedSet build_mixed_set(const LabeledDataset& test, std::span<const std::size_t> test_predictions,
                         std::span<const AnomalySet> anomalies,
                         std::span<const std::vector<std::size_t>> anomaly_predictions, std::size_t k,
                         std::size_t per_source_cap, std::uint64_t seed);

std::vector<std::size_t> predict_all(const nn::Network& net, std::span<const Tensor> inputs);

}  // namespace critpath::data
