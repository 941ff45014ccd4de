#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "critpath/data/dataset.hpp"
#include "critpath/error.hpp"
#include "critpath/nn/network.hpp"
#include "critpath/random.hpp"
#include "critpath/svdd/svdd.hpp"

namespace critpath::paths {

class PathError : public Error {
 public:
  enum class Code { IndexOutOfRange, LengthMismatch, NoAlternativeNeuron, EmptyInput, NoAnomalies, RestartFailed };

  PathError(Code code, const std::string& detail);
  Code code() const { return code_; }

 private:
  Code code_;
};

// One neuron (or conv channel) index per traced layer.
struct Path {
  std::vector<std::size_t> indices;

  std::size_t size() const { return indices.size(); }
  bool operator==(const Path&) const = default;
};

void validate_path(const Path& path, std::span<const std::size_t> widths);
Path random_path(std::span<const std::size_t> widths, Rng& rng);

// Returns a copy of `path` whose index at `layer` is redrawn uniformly from
// the remaining neurons of that layer (never the current one).
Path mutate_path(const Path& path, std::size_t layer, std::span<const std::size_t> widths, Rng& rng);

// rows = traces, cols = path length; entry (r, i) = traces[r][i][path[i]].
svdd::FeatureMatrix path_features(std::span<const nn::ActivationTrace> traces, const Path& path);

// Largest tau such that at least `retention` of the scores are >= tau: the
// floor((1 - retention) * count)-th smallest score.
double compute_threshold(std::span<const double> scores, double retention);

// Fraction of anomalies (label 1) scoring strictly below tau.
double compute_tpr(std::span<const double> scores, std::span<const std::uint8_t> labels, double tau);

struct SearchConfig {
  std::size_t paths = 21;       // m restarts
  std::size_t mutations = 5000;  // n iterations per restart
  double retention = 0.95;
  std::uint64_t seed = 1;
  svdd::SvddOptions svdd{};
  // SVDD training rows per class are subsampled to this many (0 = no cap).
  std::size_t max_train_rows = 2000;
  // Which layer outputs form path positions; echoed so later stages reload
  // the model identically.
  nn::TraceOptions trace{};

  void validate() const;
};

struct ScoredPath {
  std::size_t class_id = 0;
  Path path;
  double tpr = 0.0;
  // Threshold on raw SVDD scores retaining `retention` of the mixed-set normals.
  double tau = 0.0;
  svdd::SvddModel svdd;
};

// Trains an SVDD on the path's training features, calibrates tau on the mixed
// set's normals and measures TPR on its anomalies.
ScoredPath score_path(const Path& path, std::size_t class_id, std::span<const nn::ActivationTrace> train_traces,
                      std::span<const nn::ActivationTrace> mixed_traces, std::span<const std::uint8_t> mixed_labels,
                      const SearchConfig& config);

struct TprEvent {
  std::size_t iteration = 0;
  double tpr = 0.0;
};

struct RestartResult {
  ScoredPath best;
  Path initial_path;
  double initial_tpr = 0.0;
  std::vector<TprEvent> accepted;  // accepted mutations in iteration order
  std::size_t evaluations = 0;
  std::size_t skipped = 0;

  // initial_tpr followed by every accepted TPR.
  std::vector<double> trajectory() const;
};

struct ExtractionResult {
  std::size_t class_id = 0;
  std::vector<RestartResult> restarts;
  double seconds = 0.0;
};

// Per-class trace caches shared read-only by every restart.
struct ClassTraces {
  std::size_t class_id = 0;
  std::vector<nn::ActivationTrace> train;
  std::vector<nn::ActivationTrace> mixed;
  std::vector<std::uint8_t> mixed_labels;
};

// Traces of the training items labelled k (subsampled to max_train_rows with
// derive_seed(seed, k)) and of every mixed-set member.
ClassTraces collect_traces(const nn::Network& net, const data::LabeledDataset& train, const data::MixedSet& mixed,
                           const SearchConfig& config);

// m independent hill climbs of n iterations each. Every iteration draws a
// mutable layer; a draw equal to the previously mutated layer is skipped but
// still consumes the iteration. A mutation of the incumbent is accepted only
// if its TPR is strictly higher.
ExtractionResult extract_critical_paths(const ClassTraces& traces, std::span<const std::size_t> widths,
                                        const SearchConfig& config);
ExtractionResult extract_critical_paths(const nn::Network& net, const data::LabeledDataset& train,
                                        const data::MixedSet& mixed, const SearchConfig& config);

}  // namespace critpath::paths
