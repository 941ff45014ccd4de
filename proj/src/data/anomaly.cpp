#include <algorithm>
#include <cmath>

#include <json.hpp>

#include "critpath/binary_io.hpp"
#include "critpath/data/dataset.hpp"
#include "critpath/random.hpp"

namespace critpath::data {
namespace {

void require_count(std::size_t count) {
  if (count == 0) throw InvalidArgument("anomaly generator: count must be > 0");
}

float sign(float v) { return v > 0.0f ? 1.0f : (v < 0.0f ? -1.0f : 0.0f); }

}  // namespace

AnomalySet gen_gaussian_noise(const Shape& shape, std::size_t count, double mean, double stddev,
                              std::uint64_t seed) {
  require_count(count);
  if (stddev < 0.0) throw InvalidArgument("gen_gaussian_noise: negative stddev");
  Rng rng(seed);
  std::normal_distribution<double> dist(mean, stddev);
  AnomalySet set{shape, {}, "gaussian", seed};
  const std::size_t n = shape_numel(shape);
  set.inputs.reserve(count);
  for (std::size_t i = 0; i < count; ++i) {
    std::vector<float> v(n);
    for (auto& x : v) x = static_cast<float>(std::clamp(stddev == 0.0 ? mean : dist(rng), 0.0, 1.0));
    set.inputs.emplace_back(shape, std::move(v));
  }
  return set;
}

AnomalySet gen_uniform_noise(const Shape& shape, std::size_t count, std::uint64_t seed, double lo, double hi) {
  require_count(count);
  if (!(lo >= 0.0 && hi <= 1.0 && lo <= hi)) throw InvalidArgument("gen_uniform_noise: bounds must satisfy 0<=lo<=hi<=1");
  Rng rng(seed);
  std::uniform_real_distribution<double> dist(lo, hi);
  AnomalySet set{shape, {}, "uniform", seed};
  const std::size_t n = shape_numel(shape);
  set.inputs.reserve(count);
  for (std::size_t i = 0; i < count; ++i) {
    std::vector<float> v(n);
    for (auto& x : v) x = static_cast<float>(std::clamp(dist(rng), 0.0, 1.0));
    set.inputs.emplace_back(shape, std::move(v));
  }
  return set;
}

Tensor fgsm(const nn::Network& net, const Tensor& x, std::size_t label, double epsilon) {
  return pgd(net, x, label, epsilon, epsilon, 1);
}

Tensor pgd(const nn::Network& net, const Tensor& x, std::size_t label, double epsilon, double step,
           std::size_t iters) {
  if (!(epsilon > 0.0)) throw InvalidArgument("attack: epsilon must be > 0");
  if (!(step > 0.0)) throw InvalidArgument("attack: step must be > 0");
  Tensor adv = x;
  for (auto& v : adv.data) v = std::clamp(v, 0.0f, 1.0f);
  const auto eps = static_cast<float>(epsilon);
  for (std::size_t it = 0; it < iters; ++it) {
    const Tensor g = nn::input_gradient(net, adv, label);
    for (std::size_t i = 0; i < adv.data.size(); ++i) {
      float v = adv.data[i] + static_cast<float>(step) * sign(g.data[i]);
      v = std::clamp(v, x.data[i] - eps, x.data[i] + eps);
      adv.data[i] = std::clamp(v, 0.0f, 1.0f);
    }
  }
  return adv;
}

AnomalySet fgsm_set(const nn::Network& net, const LabeledDataset& ds, double epsilon) {
  AnomalySet set{ds.shape, {}, "fgsm", 0};
  set.inputs.reserve(ds.size());
  for (std::size_t i = 0; i < ds.size(); ++i) set.inputs.push_back(fgsm(net, ds.inputs[i], ds.labels[i], epsilon));
  return set;
}

AnomalySet pgd_set(const nn::Network& net, const LabeledDataset& ds, double epsilon, double step,
                   std::size_t iters) {
  AnomalySet set{ds.shape, {}, "pgd", 0};
  set.inputs.reserve(ds.size());
  for (std::size_t i = 0; i < ds.size(); ++i) {
    set.inputs.push_back(pgd(net, ds.inputs[i], ds.labels[i], epsilon, step, iters));
  }
  return set;
}

Tensor conform_to_shape(const Tensor& x, const Shape& target) {
  if (x.shape == target) return x;
  if (target.size() == 1) {
    // Flat target: center crop / pad the flattened values.
    std::vector<float> out(target[0], 0.0f);
    const std::size_t n = x.size(), m = target[0];
    if (n >= m) {
      std::copy_n(x.data.begin() + static_cast<std::ptrdiff_t>((n - m) / 2), m, out.begin());
    } else {
      std::copy(x.data.begin(), x.data.end(), out.begin() + static_cast<std::ptrdiff_t>((m - n) / 2));
    }
    return Tensor(target, std::move(out));
  }
  Shape src = x.shape;
  if (src.size() == 2) src.push_back(1);
  Shape dst = target;
  if (dst.size() == 2) dst.push_back(1);
  if (src.size() != 3 || dst.size() != 3) {
    throw DataError(DataError::Code::ShapeMismatch,
                    "cannot conform " + shape_to_string(x.shape) + " to " + shape_to_string(target));
  }
  const std::size_t sc = src[2], dc = dst[2];
  if (!(sc == dc || sc == 1 || dc == 1)) {
    throw DataError(DataError::Code::ShapeMismatch,
                    "cannot map " + std::to_string(sc) + " channels to " + std::to_string(dc));
  }
  std::vector<float> out(shape_numel(dst), 0.0f);
  // Offsets: positive = crop from source, negative = pad in destination.
  const auto off_y = (static_cast<std::ptrdiff_t>(src[0]) - static_cast<std::ptrdiff_t>(dst[0])) / 2;
  const auto off_x = (static_cast<std::ptrdiff_t>(src[1]) - static_cast<std::ptrdiff_t>(dst[1])) / 2;
  for (std::size_t y = 0; y < dst[0]; ++y) {
    const auto sy = static_cast<std::ptrdiff_t>(y) + off_y;
    if (sy < 0 || sy >= static_cast<std::ptrdiff_t>(src[0])) continue;
    for (std::size_t xx = 0; xx < dst[1]; ++xx) {
      const auto sx = static_cast<std::ptrdiff_t>(xx) + off_x;
      if (sx < 0 || sx >= static_cast<std::ptrdiff_t>(src[1])) continue;
      const float* px = x.data.data() + (static_cast<std::size_t>(sy) * src[1] + static_cast<std::size_t>(sx)) * sc;
      float* q = out.data() + (y * dst[1] + xx) * dc;
      if (sc == dc) {
        std::copy_n(px, sc, q);
      } else if (sc == 1) {
        std::fill_n(q, dc, px[0]);
      } else {
        double s = 0.0;
        for (std::size_t c = 0; c < sc; ++c) s += px[c];
        q[0] = static_cast<float>(s / static_cast<double>(sc));
      }
    }
  }
  return Tensor(target, std::move(out));
}

AnomalySet wrap_ood(const std::string& name, std::span<const Tensor> inputs, const Shape& target) {
  AnomalySet set{target, {}, "ood:" + name, 0};
  set.inputs.reserve(inputs.size());
  for (const auto& x : inputs) set.inputs.push_back(conform_to_shape(x, target));
  return set;
}

void save_anomaly_set(const AnomalySet& set, const std::filesystem::path& base) {
  ByteWriter w;
  for (const auto& x : set.inputs) w.f32s(x.data);
  auto bin = base;
  bin += ".bin";
  auto sidecar = base;
  sidecar += ".json";
  write_file_bytes(bin, w.buffer());
  nlohmann::ordered_json j;
  j["shape"] = set.shape;
  j["count"] = set.size();
  j["source"] = set.source;
  j["seed"] = set.seed;
  j["blob"] = bin.filename().string();
  write_file_text(sidecar, j.dump(2) + "\n");
}

AnomalySet load_anomaly_set(const std::filesystem::path& sidecar) {
  const auto j = nlohmann::json::parse(read_file_text(sidecar));
  AnomalySet set;
  set.shape = j.at("shape").get<Shape>();
  set.source = j.at("source").get<std::string>();
  set.seed = j.at("seed").get<std::uint64_t>();
  const auto count = j.at("count").get<std::size_t>();
  std::filesystem::path bin = sidecar;
  bin.replace_extension(".bin");
  if (j.contains("blob")) bin = sidecar.parent_path() / j["blob"].get<std::string>();
  const auto bytes = read_file_bytes(bin);
  const std::size_t n = shape_numel(set.shape);
  if (bytes.size() != count * n * 4) {
    throw DataError(DataError::Code::Truncated, bin.string() + ": expected " + std::to_string(count * n * 4) +
                                                    " bytes, found " + std::to_string(bytes.size()));
  }
  ByteReader r(bytes);
  for (std::size_t i = 0; i < count; ++i) {
    std::vector<float> v(n);
    for (auto& x : v) r.f32(x);
    set.inputs.emplace_back(set.shape, std::move(v));
  }
  return set;
}

}  // namespace critpath::data
