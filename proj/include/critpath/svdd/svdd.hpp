#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "critpath/error.hpp"

namespace critpath::svdd {

class SvddError : public Error {
 public:
  enum class Code { DimensionMismatch, InvalidKernelWidth, InvalidNu, AllIdentical, EmptyInput, BadFormat };

  SvddError(Code code, const std::string& detail);
  Code code() const { return code_; }

 private:
  Code code_;
};

// Row-major f32 feature rows (one row per sample, one column per path position).
struct FeatureMatrix {
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::vector<float> data;

  FeatureMatrix() = default;
  FeatureMatrix(std::size_t rows, std::size_t cols, std::vector<float> data);

  std::span<const float> row(std::size_t r) const { return {data.data() + r * cols, cols}; }
};

// exp(-||a - b||^2 / s^2).
double rbf_kernel(std::span<const float> a, std::span<const float> b, double s);
double rbf_kernel(std::span<const double> a, std::span<const double> b, double s);

// Median pairwise Euclidean distance over up to `sample_cap` rows drawn
// without replacement. A zero median falls back to the median of the
// non-zero distances; if every distance is zero the width is 1.0 (with a
// warning) or, when allow_fallback is false, SvddError::AllIdentical.
double median_heuristic(const FeatureMatrix& x, std::size_t sample_cap, std::uint64_t seed,
                        bool allow_fallback = true);
double median_heuristic(std::span<const double> rows, std::size_t cols, std::size_t sample_cap, std::uint64_t seed,
                        bool allow_fallback = true);

// Per-column z-standardization. Columns with zero spread are dropped.
class FeatureScaler {
 public:
  static FeatureScaler identity(std::size_t dim);
  static FeatureScaler fit(const FeatureMatrix& x, bool warn_on_drop = true);
  static FeatureScaler from_parts(std::vector<double> mean, std::vector<double> stddev);

  std::size_t input_dim() const { return mean_.size(); }
  std::size_t output_dim() const { return kept_.size(); }
  const std::vector<double>& mean() const { return mean_; }
  // 0 marks a dropped column.
  const std::vector<double>& stddev() const { return stddev_; }

  void apply(std::span<const float> row, std::span<double> out) const;
  std::vector<double> apply(const FeatureMatrix& x) const;

 private:
  std::vector<double> mean_;
  std::vector<double> stddev_;
  std::vector<std::size_t> kept_;
};

// Solved SVDD dual. Support vectors are stored in raw (unscaled) feature
// space; the scaler maps them and query rows into kernel space.
class SvddModel {
 public:
  struct Parts {
    double nu = 0.1;
    double kernel_width = 1.0;
    double const_term = 0.0;
    double radius_sq = 0.0;
    std::size_t train_count = 0;
    std::vector<double> alphas;
    std::vector<float> support_vectors;  // n_sv x input_dim
    FeatureScaler scaler;
    bool converged = true;
    std::size_t iterations = 0;
  };

  explicit SvddModel(Parts parts);

  double nu() const { return p_.nu; }
  double kernel_width() const { return p_.kernel_width; }
  double const_term() const { return p_.const_term; }
  double radius_sq() const { return p_.radius_sq; }
  std::size_t train_count() const { return p_.train_count; }
  std::size_t support_count() const { return p_.alphas.size(); }
  std::size_t input_dim() const { return p_.scaler.input_dim(); }
  const std::vector<double>& alphas() const { return p_.alphas; }
  const std::vector<float>& support_vectors() const { return p_.support_vectors; }
  const FeatureScaler& scaler() const { return p_.scaler; }
  bool converged() const { return p_.converged; }
  std::size_t iterations() const { return p_.iterations; }
  const Parts& parts() const { return p_; }

  // Upper box bound 1/(n nu).
  double box_bound() const;
  // sum_i alpha_i K(x_i,x_i) - sum_ij alpha_i alpha_j K(x_i,x_j).
  double dual_objective() const { return 1.0 - p_.const_term; }

  // -||phi(z) - a||^2 = 2 sum_i alpha_i K(z,x_i) - const_term - 1. Higher is more normal.
  double score(std::span<const float> z) const;
  // ||phi(z) - a||^2 <= R^2.
  bool contains(std::span<const float> z) const { return score(z) >= -p_.radius_sq; }

 private:
  Parts p_;
  std::vector<double> scaled_sv_;
};

// Solves the dual on the raw rows (no standardization):
//   max sum_i a_i K_ii - sum_ij a_i a_j K_ij  s.t.  sum a = 1, 0 <= a_i <= 1/(n nu)
// by maximal-violating-pair coordinate ascent. max_passes counts sweeps of n
// pair updates; 0 selects 10 * n.
SvddModel train_svdd(const FeatureMatrix& x, double nu, double kernel_width, double tol = 1e-6,
                     std::size_t max_passes = 0);

struct SvddOptions {
  double nu = 0.1;
  std::optional<double> kernel_width;  // median heuristic when unset
  double tol = 1e-6;
  std::size_t max_passes = 0;
  std::size_t median_sample_cap = 1000;
  std::uint64_t seed = 0;
  bool standardize = true;
  bool warn_on_drop = true;
};

// Standardize columns, pick the kernel width, then solve.
SvddModel fit_svdd(const FeatureMatrix& x, const SvddOptions& options);

// File layout: u32 LE header length | JSON header | alphas f64 LE | support vectors f32 LE.
std::vector<std::uint8_t> encode_svdd(const SvddModel& model);
SvddModel decode_svdd(std::span<const std::uint8_t> bytes);
void save_svdd(const SvddModel& model, const std::filesystem::path& path);
SvddModel load_svdd(const std::filesystem::path& path);

}  // namespace critpath::svdd
