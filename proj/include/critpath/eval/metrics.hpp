#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

namespace critpath::eval {

// Low scores are anomalous throughout this module.

// P(anomaly score < normal score), ties counting 1/2 (rank-sum form).
double auroc(std::span<const double> normal, std::span<const double> anomaly);

// Fraction of anomaly scores strictly below the threshold that retains `tnr`
// of the normal scores.
double tpr_at_tnr(std::span<const double> normal, std::span<const double> anomaly, double tnr = 0.95);

struct ClassBreakdown {
  std::string class_label;
  // Unset when the class has no normals or no anomalies.
  std::optional<double> auroc;
  std::optional<double> tpr_at_tnr;
  std::size_t n_normal = 0;
  std::size_t n_anomaly = 0;

  bool operator==(const ClassBreakdown&) const = default;
};

struct Timing {
  std::string phase;
  double seconds = 0.0;

  bool operator==(const Timing&) const = default;
};

struct EvalResult {
  std::string model;
  std::string anomaly_source;
  std::uint64_t seed = 0;
  double tnr = 0.95;
  double auroc = 0.0;
  double tpr_at_tnr = 0.0;
  std::size_t n_normal = 0;
  std::size_t n_anomaly = 0;
  std::vector<ClassBreakdown> per_class;
  std::vector<Timing> timings;

  bool operator==(const EvalResult&) const = default;
};

struct ScoredSample {
  std::size_t predicted_class = 0;
  double score = 0.0;
};

// Pooled metrics over every sample plus one breakdown row per class.
EvalResult evaluate_scores(std::span<const ScoredSample> normal, std::span<const ScoredSample> anomaly,
                           std::size_t num_classes, double tnr = 0.95);

nlohmann::ordered_json to_json(const EvalResult& r);
EvalResult eval_from_json(const nlohmann::json& j);

// Columns, in order: model, class, anomaly_source, auroc, tpr_at_95tnr,
// n_normal, n_anomaly, seed. One row per class breakdown entry; undefined
// metrics are left empty.
inline constexpr const char* kCsvHeader = "model,class,anomaly_source,auroc,tpr_at_95tnr,n_normal,n_anomaly,seed";
std::string to_csv(std::span<const EvalResult> results);

// One row per class followed by an "all" row.
std::string to_markdown(const EvalResult& r);

// Model | Dataset | Enumerate <n> times | Evaluation | Total (seconds).
struct TimingRow {
  std::string model;
  std::string dataset;
  double enumerate_s = 0.0;
  double evaluation_s = 0.0;
};
std::string timing_table(std::span<const TimingRow> rows, std::size_t mutations);

enum class ReportFormat { Json, Csv, Markdown };

// JSON writes an array of results; markdown concatenates one table per result.
void write_report(std::span<const EvalResult> results, ReportFormat format, const std::filesystem::path& path);
std::vector<EvalResult> read_json_report(const std::filesystem::path& path);

}  // namespace critpath::eval
