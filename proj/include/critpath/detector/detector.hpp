#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "critpath/data/dataset.hpp"
#include "critpath/error.hpp"
#include "critpath/nn/network.hpp"
#include "critpath/paths/path_search.hpp"

namespace critpath::detector {

class DetectorError : public Error {
 public:
  enum class Code {
    DegenerateBounds,
    UnderpopulatedClass,
    FingerprintMismatch,
    Uncalibrated,
    NoUsablePaths,
    LengthMismatch,
    ClassOutOfRange,
    BadBundle,
  };

  DetectorError(Code code, const std::string& detail);
  Code code() const { return code_; }

 private:
  Code code_;
};

// clamp((raw - lo) / (hi - lo), 0, 1). Requires lo < hi.
double normalize_score(double raw, double lo, double hi);

struct VoteResult {
  double final_score = 0.0;
  std::size_t a_count = 0;  // scores at or above their threshold
  std::size_t b_count = 0;  // scores below their threshold
};

// Unanimous A -> max(A); unanimous B -> min(B); otherwise the median of the
// strict majority side, B on ties. Even-size medians take the lower middle.
VoteResult vote(std::span<const double> normalized, std::span<const double> taus);

struct CalibratedPath {
  paths::ScoredPath scored;
  double score_min = 0.0;
  double score_max = 0.0;
  double tau = 0.0;  // on the normalized scale
};

struct ClassDetector {
  std::size_t class_id = 0;
  // Sorted by search TPR, descending. Before calibration the bounds are unset.
  std::vector<CalibratedPath> paths;
  double tau_k = 0.0;
  bool calibrated = false;
  // Number of calibration normals the bounds were computed from.
  std::size_t calibration_count = 0;
};

struct DetectorBundle {
  std::string fingerprint;  // SHA-256 of the model's MDLW encoding
  double retention = 0.95;
  nlohmann::ordered_json config;
  std::vector<ClassDetector> classes;

  bool calibrated() const;
};

std::string model_fingerprint(const nn::Network& net);

// Uncalibrated bundle with each class's restart winners sorted by TPR.
DetectorBundle make_bundle(const nn::Network& net, std::vector<paths::ExtractionResult> extractions,
                           nlohmann::ordered_json config = nlohmann::ordered_json::object());

// Raw SVDD scores of `trace` under each path of `cls` (one per path).
std::vector<double> raw_scores(const ClassDetector& cls, const nn::ActivationTrace& trace);

// Sets per-path bounds and thresholds and tau_k from the normals predicted as
// each class. Paths whose bounds collapse are dropped with a warning.
DetectorBundle calibrate(const DetectorBundle& bundle, const nn::Network& net, std::span<const Tensor> normals,
                         double retention = 0.95, std::size_t min_count = 20);

struct Verdict {
  std::string id;
  std::size_t predicted_class = 0;
  std::vector<double> raw;
  std::vector<double> normalized;
  double final_score = 0.0;
  bool is_anomaly = false;
  std::size_t a_count = 0;
  std::size_t b_count = 0;
};

// Score an already traced input predicted as `predicted_class`.
Verdict judge(const DetectorBundle& bundle, std::size_t predicted_class, const nn::ActivationTrace& trace,
              std::string id = {});

Verdict detect(const DetectorBundle& bundle, const nn::Network& net, const Tensor& x, std::string id = {});
std::vector<Verdict> detect_batch(const DetectorBundle& bundle, const nn::Network& net, std::span<const Tensor> xs,
                                  std::string_view id_prefix = {});

// One JSON object per line: {id, class, final, is_anomaly, a_count, b_count}.
std::string verdict_jsonl(std::span<const Verdict> verdicts);

struct Correlation {
  std::size_t paths = 0;
  std::vector<double> r;            // paths x paths, row-major
  std::vector<bool> zero_variance;  // flagged paths have 0 off-diagonal entries

  double at(std::size_t i, std::size_t j) const { return r[i * paths + j]; }
};

// Pearson correlation between path score columns; scores is samples x paths.
Correlation pearson_paths(std::span<const double> scores, std::size_t samples, std::size_t paths);

// Directory layout: manifest.json, class_<k>.json path stores, and the
// SVDD blobs referenced from them.
void save_bundle(const DetectorBundle& bundle, const std::filesystem::path& dir);
DetectorBundle load_bundle(const std::filesystem::path& dir);

}  // namespace critpath::detector
