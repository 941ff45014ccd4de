#include "critpath/svdd/svdd.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include <json.hpp>

#include "critpath/binary_io.hpp"
#include "critpath/log.hpp"

namespace critpath::svdd {
namespace {

double sq_dist(const double* a, const double* b, std::size_t d) {
  double s = 0.0;
  for (std::size_t k = 0; k < d; ++k) {
    const double t = a[k] - b[k];
    s += t * t;
  }
  return s;
}

// Solves the dual over scaled rows z (n x d). Raw rows are kept for the
// support vectors of the returned model.
SvddModel solve(const FeatureMatrix& raw, const std::vector<double>& z, std::size_t d, FeatureScaler scaler,
                double nu, double width, double tol, std::size_t max_passes) {
  const std::size_t n = raw.rows;
  if (n == 0) throw SvddError(SvddError::Code::EmptyInput, "cannot train on zero rows");
  if (!(nu > 0.0 && nu <= 1.0)) throw SvddError(SvddError::Code::InvalidNu, "nu must lie in (0,1]");
  if (!(width > 0.0) || !std::isfinite(width)) {
    throw SvddError(SvddError::Code::InvalidKernelWidth, "kernel width must be > 0");
  }

  const double inv_s2 = 1.0 / (width * width);
  std::vector<double> k(n * n);
  for (std::size_t i = 0; i < n; ++i) {
    k[i * n + i] = 1.0;
    for (std::size_t j = i + 1; j < n; ++j) {
      const double v = std::exp(-sq_dist(&z[i * d], &z[j * d], d) * inv_s2);
      k[i * n + j] = v;
      k[j * n + i] = v;
    }
  }

  const double box = 1.0 / (static_cast<double>(n) * nu);
  // Feasible start: fill the box greedily in index order.
  std::vector<double> alpha(n, 0.0);
  if (nu == 1.0) {
    std::fill(alpha.begin(), alpha.end(), 1.0 / static_cast<double>(n));
  } else {
    double remaining = 1.0;
    for (std::size_t i = 0; i < n && remaining > 0.0; ++i) {
      alpha[i] = std::min(box, remaining);
      remaining -= alpha[i];
    }
  }
  // Gradient of f(a) = a'Ka - sum a_i K_ii (the negated dual).
  std::vector<double> grad(n);
  for (std::size_t i = 0; i < n; ++i) {
    double s = 0.0;
    for (std::size_t j = 0; j < n; ++j) s += k[i * n + j] * alpha[j];
    grad[i] = 2.0 * s - k[i * n + i];
  }

  const std::size_t passes = max_passes == 0 ? 10 * n : max_passes;
  const std::size_t max_iter = passes * n;
  std::size_t iter = 0;
  bool converged = false;
  for (; iter < max_iter; ++iter) {
    // Maximal violating pair: raise alpha_up (below the box), lower alpha_low (above 0).
    std::size_t up = n, low = n;
    double g_up = std::numeric_limits<double>::infinity();
    double g_low = -std::numeric_limits<double>::infinity();
    for (std::size_t i = 0; i < n; ++i) {
      if (alpha[i] < box && grad[i] < g_up) {
        g_up = grad[i];
        up = i;
      }
      if (alpha[i] > 0.0 && grad[i] > g_low) {
        g_low = grad[i];
        low = i;
      }
    }
    if (up == n || low == n || g_low - g_up <= tol) {
      converged = true;
      break;
    }
    const double eta = k[up * n + up] + k[low * n + low] - 2.0 * k[up * n + low];
    double t = eta > 1e-12 ? (g_low - g_up) / (2.0 * eta) : std::numeric_limits<double>::infinity();
    const double room_up = box - alpha[up];
    const double room_low = alpha[low];
    bool hit_up = false, hit_low = false;
    if (t >= room_up) {
      t = room_up;
      hit_up = true;
    }
    if (t >= room_low) {
      t = room_low;
      hit_low = true;
      hit_up = t == room_up;
    }
    alpha[up] = hit_up ? box : alpha[up] + t;
    alpha[low] = hit_low ? 0.0 : alpha[low] - t;
    for (std::size_t i = 0; i < n; ++i) grad[i] += 2.0 * t * (k[i * n + up] - k[i * n + low]);
  }
  if (!converged) {
    log_warn("svdd: no convergence after " + std::to_string(iter) + " pair updates; returning last iterate");
  }

  // Exact recomputation of K alpha for the radius and constant term.
  std::vector<double> k_alpha(n, 0.0);
  double const_term = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    double s = 0.0;
    for (std::size_t j = 0; j < n; ++j) s += k[i * n + j] * alpha[j];
    k_alpha[i] = s;
    const_term += alpha[i] * s;
  }
  const_term = std::max(const_term, 0.0);

  double r2_sum = 0.0, r2_max = 0.0;
  std::size_t boundary = 0;
  bool any_sv = false;
  for (std::size_t i = 0; i < n; ++i) {
    if (alpha[i] <= 0.0) continue;
    const double dist2 = std::max(0.0, k[i * n + i] - 2.0 * k_alpha[i] + const_term);
    if (!any_sv || dist2 > r2_max) r2_max = dist2;
    any_sv = true;
    if (alpha[i] < box - tol) {
      r2_sum += dist2;
      ++boundary;
    }
  }

  SvddModel::Parts parts;
  parts.nu = nu;
  parts.kernel_width = width;
  parts.const_term = const_term;
  parts.radius_sq = boundary > 0 ? r2_sum / static_cast<double>(boundary) : r2_max;
  parts.train_count = n;
  parts.converged = converged;
  parts.iterations = iter;
  parts.scaler = std::move(scaler);
  for (std::size_t i = 0; i < n; ++i) {
    if (alpha[i] <= 0.0) continue;
    parts.alphas.push_back(alpha[i]);
    const auto row = raw.row(i);
    parts.support_vectors.insert(parts.support_vectors.end(), row.begin(), row.end());
  }
  return SvddModel(std::move(parts));
}

}  // namespace

SvddModel::SvddModel(Parts parts) : p_(std::move(parts)) {
  const std::size_t in_dim = p_.scaler.input_dim();
  const std::size_t out_dim = p_.scaler.output_dim();
  if (p_.support_vectors.size() != p_.alphas.size() * in_dim) {
    throw SvddError(SvddError::Code::DimensionMismatch, "support vector block does not match alphas x dim");
  }
  scaled_sv_.resize(p_.alphas.size() * out_dim);
  for (std::size_t i = 0; i < p_.alphas.size(); ++i) {
    p_.scaler.apply(std::span<const float>(p_.support_vectors.data() + i * in_dim, in_dim),
                    std::span<double>(scaled_sv_.data() + i * out_dim, out_dim));
  }
}

double SvddModel::box_bound() const { return 1.0 / (static_cast<double>(p_.train_count) * p_.nu); }

double SvddModel::score(std::span<const float> z) const {
  const std::size_t d = p_.scaler.output_dim();
  std::vector<double> zs(d);
  p_.scaler.apply(z, zs);
  const double inv_s2 = 1.0 / (p_.kernel_width * p_.kernel_width);
  double cross = 0.0;
  for (std::size_t i = 0; i < p_.alphas.size(); ++i) {
    cross += p_.alphas[i] * std::exp(-sq_dist(zs.data(), scaled_sv_.data() + i * d, d) * inv_s2);
  }
  return 2.0 * cross - p_.const_term - 1.0;
}

SvddModel train_svdd(const FeatureMatrix& x, double nu, double kernel_width, double tol, std::size_t max_passes) {
  std::vector<double> z(x.data.begin(), x.data.end());
  return solve(x, z, x.cols, FeatureScaler::identity(x.cols), nu, kernel_width, tol, max_passes);
}

SvddModel fit_svdd(const FeatureMatrix& x, const SvddOptions& options) {
  if (x.rows == 0) throw SvddError(SvddError::Code::EmptyInput, "cannot train on zero rows");
  FeatureScaler scaler =
      options.standardize ? FeatureScaler::fit(x, options.warn_on_drop) : FeatureScaler::identity(x.cols);
  const std::vector<double> z = scaler.apply(x);
  const std::size_t d = scaler.output_dim();
  double width = 1.0;
  if (options.kernel_width) {
    width = *options.kernel_width;
  } else if (x.rows >= 2 && d > 0) {
    width = median_heuristic(z, d, options.median_sample_cap, options.seed);
  }
  return solve(x, z, d, std::move(scaler), options.nu, width, options.tol, options.max_passes);
}

// ---------------------------------------------------------------------------
// Serialization

std::vector<std::uint8_t> encode_svdd(const SvddModel& model) {
  nlohmann::ordered_json h;
  h["nu"] = model.nu();
  h["s"] = model.kernel_width();
  h["const_term"] = model.const_term();
  h["radius_sq"] = model.radius_sq();
  h["n_sv"] = model.support_count();
  h["dim"] = model.input_dim();
  h["train_count"] = model.train_count();
  h["column_means"] = model.scaler().mean();
  h["column_stds"] = model.scaler().stddev();
  h["converged"] = model.converged();
  h["iterations"] = model.iterations();
  h["alpha_dtype"] = "f64";
  const std::string header = h.dump();

  ByteWriter w;
  w.u32(static_cast<std::uint32_t>(header.size()));
  w.bytes(std::span(reinterpret_cast<const std::uint8_t*>(header.data()), header.size()));
  w.f64s(model.alphas());
  w.f32s(model.support_vectors());
  return w.take();
}

SvddModel decode_svdd(std::span<const std::uint8_t> bytes) {
  ByteReader r(bytes);
  std::uint32_t header_len = 0;
  std::span<const std::uint8_t> header;
  if (!r.u32(header_len) || !r.bytes(header_len, header)) {
    throw SvddError(SvddError::Code::BadFormat, "truncated header");
  }
  nlohmann::json h;
  try {
    h = nlohmann::json::parse(header.begin(), header.end());
  } catch (const nlohmann::json::exception& e) {
    throw SvddError(SvddError::Code::BadFormat, e.what());
  }
  SvddModel::Parts p;
  p.nu = h.at("nu").get<double>();
  p.kernel_width = h.at("s").get<double>();
  p.const_term = h.at("const_term").get<double>();
  p.radius_sq = h.at("radius_sq").get<double>();
  p.train_count = h.at("train_count").get<std::size_t>();
  p.converged = h.value("converged", true);
  p.iterations = h.value("iterations", std::size_t{0});
  p.scaler = FeatureScaler::from_parts(h.at("column_means").get<std::vector<double>>(),
                                       h.at("column_stds").get<std::vector<double>>());
  const auto n_sv = h.at("n_sv").get<std::size_t>();
  const auto dim = h.at("dim").get<std::size_t>();
  if (dim != p.scaler.input_dim()) throw SvddError(SvddError::Code::BadFormat, "dim does not match scaler");
  if (r.remaining() != n_sv * 8 + n_sv * dim * 4) {
    throw SvddError(SvddError::Code::BadFormat, "blob size does not match header");
  }
  p.alphas.resize(n_sv);
  for (auto& a : p.alphas) r.f64(a);
  p.support_vectors.resize(n_sv * dim);
  for (auto& v : p.support_vectors) r.f32(v);
  return SvddModel(std::move(p));
}

void save_svdd(const SvddModel& model, const std::filesystem::path& path) {
  write_file_bytes(path, encode_svdd(model));
}

SvddModel load_svdd(const std::filesystem::path& path) { return decode_svdd(read_file_bytes(path)); }

}  // namespace critpath::svdd
