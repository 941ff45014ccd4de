#include "critpath/paths/path_search.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <numeric>

namespace critpath::paths {
namespace {

std::string_view code_name(PathError::Code code) {
  using C = PathError::Code;
  switch (code) {
    case C::IndexOutOfRange: return "IndexOutOfRange";
    case C::LengthMismatch: return "LengthMismatch";
    case C::NoAlternativeNeuron: return "NoAlternativeNeuron";
    case C::EmptyInput: return "EmptyInput";
    case C::NoAnomalies: return "NoAnomalies";
    case C::RestartFailed: return "RestartFailed";
  }
  return "Unknown";
}

}  // namespace

PathError::PathError(Code code, const std::string& detail)
    : Error("paths: " + std::string(code_name(code)) + ": " + detail), code_(code) {}

void validate_path(const Path& path, std::span<const std::size_t> widths) {
  if (path.size() != widths.size()) {
    throw PathError(PathError::Code::LengthMismatch, "path of length " + std::to_string(path.size()) + " for " +
                                                         std::to_string(widths.size()) + " traced layers");
  }
  for (std::size_t i = 0; i < widths.size(); ++i) {
    if (path.indices[i] >= widths[i]) {
      throw PathError(PathError::Code::IndexOutOfRange, "index " + std::to_string(path.indices[i]) + " at layer " +
                                                            std::to_string(i) + " of width " +
                                                            std::to_string(widths[i]));
    }
  }
}

Path random_path(std::span<const std::size_t> widths, Rng& rng) {
  Path p;
  p.indices.reserve(widths.size());
  for (std::size_t w : widths) p.indices.push_back(uniform_index(rng, w));
  return p;
}

Path mutate_path(const Path& path, std::size_t layer, std::span<const std::size_t> widths, Rng& rng) {
  validate_path(path, widths);
  if (layer >= widths.size()) {
    throw PathError(PathError::Code::IndexOutOfRange, "layer " + std::to_string(layer) + " out of range");
  }
  if (widths[layer] < 2) {
    throw PathError(PathError::Code::NoAlternativeNeuron, "layer " + std::to_string(layer) + " has width 1");
  }
  Path out = path;
  // Draw from w-1 slots and skip over the current index.
  std::size_t pick = uniform_index(rng, widths[layer] - 1);
  if (pick >= path.indices[layer]) ++pick;
  out.indices[layer] = pick;
  return out;
}

svdd::FeatureMatrix path_features(std::span<const nn::ActivationTrace> traces, const Path& path) {
  if (traces.empty()) throw PathError(PathError::Code::EmptyInput, "no traces");
  const std::size_t cols = path.size();
  std::vector<float> data;
  data.reserve(traces.size() * cols);
  for (const auto& t : traces) {
    if (t.size() != cols) {
      throw PathError(PathError::Code::LengthMismatch, "trace has " + std::to_string(t.size()) + " layers, path " +
                                                           std::to_string(cols));
    }
    for (std::size_t i = 0; i < cols; ++i) {
      if (path.indices[i] >= t[i].size()) {
        throw PathError(PathError::Code::IndexOutOfRange, "index " + std::to_string(path.indices[i]) +
                                                              " at layer " + std::to_string(i) + " of width " +
                                                              std::to_string(t[i].size()));
      }
      data.push_back(t[i][path.indices[i]]);
    }
  }
  return svdd::FeatureMatrix(traces.size(), cols, std::move(data));
}

double compute_threshold(std::span<const double> scores, double retention) {
  if (scores.empty()) throw PathError(PathError::Code::EmptyInput, "threshold of an empty score set");
  if (!(retention > 0.0 && retention <= 1.0)) throw InvalidArgument("retention must lie in (0,1]");
  std::vector<double> sorted(scores.begin(), scores.end());
  std::sort(sorted.begin(), sorted.end());
  // The epsilon absorbs representation error in (1 - retention) * count.
  const double raw = (1.0 - retention) * static_cast<double>(sorted.size());
  auto idx = static_cast<std::size_t>(std::floor(raw + 1e-9));
  idx = std::min(idx, sorted.size() - 1);
  return sorted[idx];
}

double compute_tpr(std::span<const double> scores, std::span<const std::uint8_t> labels, double tau) {
  if (scores.size() != labels.size()) throw PathError(PathError::Code::LengthMismatch, "scores and labels differ");
  std::size_t tp = 0, fn = 0;
  for (std::size_t i = 0; i < scores.size(); ++i) {
    if (labels[i] != 1) continue;
    if (scores[i] < tau) {
      ++tp;
    } else {
      ++fn;
    }
  }
  if (tp + fn == 0) throw PathError(PathError::Code::NoAnomalies, "mixed set has no anomalies");
  return static_cast<double>(tp) / static_cast<double>(tp + fn);
}

void SearchConfig::validate() const {
  if (paths < 1) throw InvalidArgument("path count m must be >= 1");
  if (!(retention > 0.0 && retention < 1.0)) throw InvalidArgument("retention must lie in (0,1)");
  if (!(svdd.nu > 0.0 && svdd.nu <= 1.0)) throw InvalidArgument("nu must lie in (0,1]");
  if (svdd.kernel_width && !(*svdd.kernel_width > 0.0)) throw InvalidArgument("kernel width must be > 0");
}

ScoredPath score_path(const Path& path, std::size_t class_id, std::span<const nn::ActivationTrace> train_traces,
                      std::span<const nn::ActivationTrace> mixed_traces, std::span<const std::uint8_t> mixed_labels,
                      const SearchConfig& config) {
  if (mixed_traces.size() != mixed_labels.size()) {
    throw PathError(PathError::Code::LengthMismatch, "mixed traces and labels differ");
  }
  auto options = config.svdd;
  options.warn_on_drop = false;
  svdd::SvddModel model = svdd::fit_svdd(path_features(train_traces, path), options);

  const auto mixed = path_features(mixed_traces, path);
  std::vector<double> scores(mixed.rows);
  std::vector<double> normal_scores;
  for (std::size_t r = 0; r < mixed.rows; ++r) {
    scores[r] = model.score(mixed.row(r));
    if (mixed_labels[r] == 0) normal_scores.push_back(scores[r]);
  }
  if (normal_scores.empty()) throw PathError(PathError::Code::EmptyInput, "mixed set has no normal samples");
  const double tau = compute_threshold(normal_scores, config.retention);
  const double tpr = compute_tpr(scores, mixed_labels, tau);
  return ScoredPath{class_id, path, tpr, tau, std::move(model)};
}

std::vector<double> RestartResult::trajectory() const {
  std::vector<double> t{initial_tpr};
  for (const auto& e : accepted) t.push_back(e.tpr);
  return t;
}

ClassTraces collect_traces(const nn::Network& net, const data::LabeledDataset& train, const data::MixedSet& mixed,
                           const SearchConfig& config) {
  ClassTraces ct;
  ct.class_id = mixed.class_id;
  std::vector<std::size_t> members;
  for (std::size_t i = 0; i < train.size(); ++i) {
    if (train.labels[i] == mixed.class_id) members.push_back(i);
  }
  if (members.empty()) {
    throw PathError(PathError::Code::EmptyInput, "no training samples for class " + std::to_string(mixed.class_id));
  }
  if (config.max_train_rows > 0 && members.size() > config.max_train_rows) {
    Rng rng(derive_seed(config.seed, mixed.class_id));
    std::shuffle(members.begin(), members.end(), rng);
    members.resize(config.max_train_rows);
    std::sort(members.begin(), members.end());
  }
  ct.train.reserve(members.size());
  for (std::size_t i : members) ct.train.push_back(nn::forward_trace(net, train.inputs[i]));
  ct.mixed.reserve(mixed.size());
  for (const auto& x : mixed.inputs) ct.mixed.push_back(nn::forward_trace(net, x));
  ct.mixed_labels = mixed.labels;
  return ct;
}

ExtractionResult extract_critical_paths(const ClassTraces& traces, std::span<const std::size_t> widths,
                                        const SearchConfig& config) {
  config.validate();
  const auto start = std::chrono::steady_clock::now();

  std::vector<std::size_t> mutable_layers;
  for (std::size_t i = 0; i < widths.size(); ++i) {
    if (widths[i] >= 2) mutable_layers.push_back(i);
  }

  ExtractionResult result;
  result.class_id = traces.class_id;
  result.restarts.reserve(config.paths);
  const std::uint64_t class_seed = derive_seed(config.seed, traces.class_id);
  for (std::size_t j = 0; j < config.paths; ++j) {
    try {
      Rng rng(derive_seed(class_seed, j));
      const Path initial = random_path(widths, rng);
      ScoredPath incumbent = score_path(initial, traces.class_id, traces.train, traces.mixed, traces.mixed_labels, config);
      RestartResult rr{incumbent, initial, incumbent.tpr, {}, 1, 0};

      constexpr std::size_t kNone = static_cast<std::size_t>(-1);
      std::size_t last_visit = kNone;
      for (std::size_t i = 0; i < config.mutations && !mutable_layers.empty(); ++i) {
        const std::size_t layer = mutable_layers[uniform_index(rng, mutable_layers.size())];
        if (layer == last_visit) {
          ++rr.skipped;
          continue;
        }
        const Path candidate = mutate_path(incumbent.path, layer, widths, rng);
        ScoredPath scored =
            score_path(candidate, traces.class_id, traces.train, traces.mixed, traces.mixed_labels, config);
        ++rr.evaluations;
        last_visit = layer;
        if (scored.tpr > incumbent.tpr) {
          incumbent = std::move(scored);
          rr.accepted.push_back({i, incumbent.tpr});
        }
      }
      rr.best = std::move(incumbent);
      result.restarts.push_back(std::move(rr));
    } catch (const Error& e) {
      throw PathError(PathError::Code::RestartFailed, "class " + std::to_string(traces.class_id) + " restart " +
                                                          std::to_string(j) + ": " + e.what());
    }
  }
  result.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  return result;
}

ExtractionResult extract_critical_paths(const nn::Network& net, const data::LabeledDataset& train,
                                        const data::MixedSet& mixed, const SearchConfig& config) {
  const auto traces = collect_traces(net, train, mixed, config);
  return extract_critical_paths(traces, net.traced_widths(), config);
}

}  // namespace critpath::paths
