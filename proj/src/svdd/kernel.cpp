#include <algorithm>
#include <cmath>
#include <numeric>

#include "critpath/log.hpp"
#include "critpath/random.hpp"
#include "critpath/svdd/svdd.hpp"

namespace critpath::svdd {
namespace {

std::string_view code_name(SvddError::Code code) {
  using C = SvddError::Code;
  switch (code) {
    case C::DimensionMismatch: return "DimensionMismatch";
    case C::InvalidKernelWidth: return "InvalidKernelWidth";
    case C::InvalidNu: return "InvalidNu";
    case C::AllIdentical: return "AllIdentical";
    case C::EmptyInput: return "EmptyInput";
    case C::BadFormat: return "BadFormat";
  }
  return "Unknown";
}

template <typename T>
double rbf(std::span<const T> a, std::span<const T> b, double s) {
  if (a.size() != b.size()) {
    throw SvddError(SvddError::Code::DimensionMismatch,
                    "kernel rows of length " + std::to_string(a.size()) + " and " + std::to_string(b.size()));
  }
  if (!(s > 0.0)) throw SvddError(SvddError::Code::InvalidKernelWidth, "kernel width must be > 0");
  double d2 = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double d = static_cast<double>(a[i]) - static_cast<double>(b[i]);
    d2 += d * d;
  }
  return std::exp(-d2 / (s * s));
}

double median_of(std::vector<double>& v) {
  const std::size_t mid = v.size() / 2;
  std::nth_element(v.begin(), v.begin() + static_cast<std::ptrdiff_t>(mid), v.end());
  const double upper = v[mid];
  if (v.size() % 2 == 1) return upper;
  const double lower = *std::max_element(v.begin(), v.begin() + static_cast<std::ptrdiff_t>(mid));
  return 0.5 * (lower + upper);
}

}  // namespace

SvddError::SvddError(Code code, const std::string& detail)
    : Error("svdd: " + std::string(code_name(code)) + ": " + detail), code_(code) {}

FeatureMatrix::FeatureMatrix(std::size_t r, std::size_t c, std::vector<float> d)
    : rows(r), cols(c), data(std::move(d)) {
  if (data.size() != rows * cols) {
    throw SvddError(SvddError::Code::DimensionMismatch, "feature matrix data does not match rows x cols");
  }
  if (!std::all_of(data.begin(), data.end(), [](float v) { return std::isfinite(v); })) {
    throw SvddError(SvddError::Code::BadFormat, "feature matrix has non-finite entries");
  }
}

double rbf_kernel(std::span<const float> a, std::span<const float> b, double s) { return rbf(a, b, s); }
double rbf_kernel(std::span<const double> a, std::span<const double> b, double s) { return rbf(a, b, s); }

double median_heuristic(std::span<const double> rows, std::size_t cols, std::size_t sample_cap, std::uint64_t seed,
                        bool allow_fallback) {
  const std::size_t n = cols == 0 ? 0 : rows.size() / cols;
  if (cols != 0 && n < 2) throw SvddError(SvddError::Code::EmptyInput, "median heuristic needs at least 2 rows");

  std::vector<std::size_t> idx(n);
  std::iota(idx.begin(), idx.end(), 0);
  if (sample_cap >= 2 && n > sample_cap) {
    Rng rng(seed);
    std::shuffle(idx.begin(), idx.end(), rng);
    idx.resize(sample_cap);
    std::sort(idx.begin(), idx.end());
  }

  std::vector<double> dist;
  dist.reserve(idx.size() * (idx.size() - (idx.empty() ? 0 : 1)) / 2);
  for (std::size_t a = 0; a < idx.size(); ++a) {
    const double* ra = rows.data() + idx[a] * cols;
    for (std::size_t b = a + 1; b < idx.size(); ++b) {
      const double* rb = rows.data() + idx[b] * cols;
      double d2 = 0.0;
      for (std::size_t c = 0; c < cols; ++c) d2 += (ra[c] - rb[c]) * (ra[c] - rb[c]);
      dist.push_back(std::sqrt(d2));
    }
  }
  if (!dist.empty()) {
    const double med = median_of(dist);
    if (med > 0.0) return med;
    std::vector<double> positive;
    std::copy_if(dist.begin(), dist.end(), std::back_inserter(positive), [](double d) { return d > 0.0; });
    if (!positive.empty()) return median_of(positive);
  }
  if (!allow_fallback) throw SvddError(SvddError::Code::AllIdentical, "all pairwise distances are zero");
  log_warn("median heuristic: all sampled rows identical, using kernel width 1.0");
  return 1.0;
}

double median_heuristic(const FeatureMatrix& x, std::size_t sample_cap, std::uint64_t seed, bool allow_fallback) {
  if (x.rows < 2) throw SvddError(SvddError::Code::EmptyInput, "median heuristic needs at least 2 rows");
  std::vector<double> rows(x.data.begin(), x.data.end());
  return median_heuristic(rows, x.cols, sample_cap, seed, allow_fallback);
}

FeatureScaler FeatureScaler::identity(std::size_t dim) {
  return from_parts(std::vector<double>(dim, 0.0), std::vector<double>(dim, 1.0));
}

FeatureScaler FeatureScaler::from_parts(std::vector<double> mean, std::vector<double> stddev) {
  if (mean.size() != stddev.size()) {
    throw SvddError(SvddError::Code::DimensionMismatch, "scaler mean and stddev lengths differ");
  }
  FeatureScaler s;
  s.mean_ = std::move(mean);
  s.stddev_ = std::move(stddev);
  for (std::size_t c = 0; c < s.stddev_.size(); ++c) {
    if (s.stddev_[c] > 0.0) s.kept_.push_back(c);
  }
  return s;
}

FeatureScaler FeatureScaler::fit(const FeatureMatrix& x, bool warn_on_drop) {
  if (x.rows == 0) throw SvddError(SvddError::Code::EmptyInput, "cannot standardize an empty matrix");
  std::vector<double> mean(x.cols, 0.0), sd(x.cols, 0.0);
  for (std::size_t r = 0; r < x.rows; ++r) {
    for (std::size_t c = 0; c < x.cols; ++c) mean[c] += x.data[r * x.cols + c];
  }
  for (auto& m : mean) m /= static_cast<double>(x.rows);
  for (std::size_t r = 0; r < x.rows; ++r) {
    for (std::size_t c = 0; c < x.cols; ++c) {
      const double d = x.data[r * x.cols + c] - mean[c];
      sd[c] += d * d;
    }
  }
  for (std::size_t c = 0; c < x.cols; ++c) {
    sd[c] = std::sqrt(sd[c] / static_cast<double>(x.rows));
    // Spread below float resolution of the column is treated as constant.
    if (sd[c] <= 1e-7 * std::max(1.0, std::abs(mean[c]))) {
      sd[c] = 0.0;
      if (warn_on_drop) log_warn("feature column " + std::to_string(c) + " is constant on the training rows; dropped");
    }
  }
  return from_parts(std::move(mean), std::move(sd));
}

void FeatureScaler::apply(std::span<const float> row, std::span<double> out) const {
  if (row.size() != input_dim() || out.size() != output_dim()) {
    throw SvddError(SvddError::Code::DimensionMismatch,
                    "row of length " + std::to_string(row.size()) + ", model expects " + std::to_string(input_dim()));
  }
  for (std::size_t k = 0; k < kept_.size(); ++k) {
    const std::size_t c = kept_[k];
    out[k] = (static_cast<double>(row[c]) - mean_[c]) / stddev_[c];
  }
}

std::vector<double> FeatureScaler::apply(const FeatureMatrix& x) const {
  std::vector<double> out(x.rows * output_dim());
  for (std::size_t r = 0; r < x.rows; ++r) {
    apply(x.row(r), std::span<double>(out.data() + r * output_dim(), output_dim()));
  }
  return out;
}

}  // namespace critpath::svdd
