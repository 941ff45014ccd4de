#include "critpath/detector/detector.hpp"

#include <algorithm>
#include <cmath>

#include "critpath/binary_io.hpp"
#include "critpath/hash.hpp"
#include "critpath/log.hpp"
#include "critpath/nn/mdlw.hpp"
#include "critpath/paths/path_store.hpp"

namespace critpath::detector {
namespace {

std::string_view code_name(DetectorError::Code code) {
  using C = DetectorError::Code;
  switch (code) {
    case C::DegenerateBounds: return "DegenerateBounds";
    case C::UnderpopulatedClass: return "UnderpopulatedClass";
    case C::FingerprintMismatch: return "FingerprintMismatch";
    case C::Uncalibrated: return "Uncalibrated";
    case C::NoUsablePaths: return "NoUsablePaths";
    case C::LengthMismatch: return "LengthMismatch";
    case C::ClassOutOfRange: return "ClassOutOfRange";
    case C::BadBundle: return "BadBundle";
  }
  return "Unknown";
}

double lower_median(std::vector<double> v) {
  std::sort(v.begin(), v.end());
  return v[(v.size() - 1) / 2];
}

void check_fingerprint(const DetectorBundle& bundle, const nn::Network& net) {
  const std::string fp = model_fingerprint(net);
  if (fp != bundle.fingerprint) {
    throw DetectorError(DetectorError::Code::FingerprintMismatch,
                        "bundle was built for model " + bundle.fingerprint + ", got " + fp);
  }
}

constexpr int kBundleVersion = 1;

}  // namespace

DetectorError::DetectorError(Code code, const std::string& detail)
    : Error("detector: " + std::string(code_name(code)) + ": " + detail), code_(code) {}

double normalize_score(double raw, double lo, double hi) {
  if (!(lo < hi)) {
    throw DetectorError(DetectorError::Code::DegenerateBounds,
                        "score_min " + std::to_string(lo) + " is not below score_max " + std::to_string(hi));
  }
  return std::clamp((raw - lo) / (hi - lo), 0.0, 1.0);
}

VoteResult vote(std::span<const double> normalized, std::span<const double> taus) {
  if (normalized.size() != taus.size()) {
    throw DetectorError(DetectorError::Code::LengthMismatch, "scores and thresholds differ in length");
  }
  if (normalized.empty()) throw InvalidArgument("vote needs at least one score");
  std::vector<double> a, b;
  for (std::size_t i = 0; i < normalized.size(); ++i) {
    (normalized[i] >= taus[i] ? a : b).push_back(normalized[i]);
  }
  VoteResult v{0.0, a.size(), b.size()};
  if (b.empty()) {
    v.final_score = *std::max_element(a.begin(), a.end());
  } else if (a.empty()) {
    v.final_score = *std::min_element(b.begin(), b.end());
  } else if (a.size() > b.size()) {
    v.final_score = lower_median(std::move(a));
  } else {
    v.final_score = lower_median(std::move(b));
  }
  return v;
}

bool DetectorBundle::calibrated() const {
  return !classes.empty() && std::all_of(classes.begin(), classes.end(), [](const auto& c) { return c.calibrated; });
}

std::string model_fingerprint(const nn::Network& net) { return sha256_hex(nn::encode_model(net)); }

DetectorBundle make_bundle(const nn::Network& net, std::vector<paths::ExtractionResult> extractions,
                           nlohmann::ordered_json config) {
  DetectorBundle bundle;
  bundle.fingerprint = model_fingerprint(net);
  bundle.config = std::move(config);
  bundle.classes.resize(net.num_classes());
  for (std::size_t k = 0; k < bundle.classes.size(); ++k) bundle.classes[k].class_id = k;
  std::vector<bool> seen(net.num_classes(), false);
  for (auto& ex : extractions) {
    if (ex.class_id >= net.num_classes()) {
      throw DetectorError(DetectorError::Code::ClassOutOfRange, "extraction for class " + std::to_string(ex.class_id));
    }
    auto& cls = bundle.classes[ex.class_id];
    for (auto& rr : ex.restarts) cls.paths.push_back(CalibratedPath{std::move(rr.best), 0.0, 0.0, 0.0});
    std::stable_sort(cls.paths.begin(), cls.paths.end(),
                     [](const CalibratedPath& x, const CalibratedPath& y) { return x.scored.tpr > y.scored.tpr; });
    seen[ex.class_id] = true;
  }
  for (std::size_t k = 0; k < seen.size(); ++k) {
    if (!seen[k] || bundle.classes[k].paths.empty()) {
      throw DetectorError(DetectorError::Code::NoUsablePaths, "no extracted paths for class " + std::to_string(k));
    }
  }
  return bundle;
}

std::vector<double> raw_scores(const ClassDetector& cls, const nn::ActivationTrace& trace) {
  std::vector<double> out;
  out.reserve(cls.paths.size());
  std::vector<float> feat;
  for (const auto& p : cls.paths) {
    const auto& idx = p.scored.path.indices;
    if (idx.size() != trace.size()) {
      throw DetectorError(DetectorError::Code::LengthMismatch, "trace does not match path length");
    }
    feat.resize(idx.size());
    for (std::size_t i = 0; i < idx.size(); ++i) feat[i] = trace[i].at(idx[i]);
    out.push_back(p.scored.svdd.score(feat));
  }
  return out;
}

DetectorBundle calibrate(const DetectorBundle& bundle, const nn::Network& net, std::span<const Tensor> normals,
                         double retention, std::size_t min_count) {
  check_fingerprint(bundle, net);
  if (!(retention > 0.0 && retention < 1.0)) throw InvalidArgument("retention must lie in (0,1)");

  std::vector<std::vector<nn::ActivationTrace>> by_class(bundle.classes.size());
  for (const auto& x : normals) {
    auto tp = nn::forward_traced(net, x);
    const std::size_t k = tp.prediction.predicted_class;
    if (k < by_class.size()) by_class[k].push_back(std::move(tp.trace));
  }

  DetectorBundle out = bundle;
  out.retention = retention;
  for (auto& cls : out.classes) {
    const auto& members = by_class[cls.class_id];
    const std::size_t count = members.size();
    if (count < min_count) {
      throw DetectorError(DetectorError::Code::UnderpopulatedClass,
                          "class " + std::to_string(cls.class_id) + " has " + std::to_string(count) +
                              " calibration normals, need " + std::to_string(min_count));
    }
    std::vector<std::vector<double>> raw;  // count x m
    raw.reserve(count);
    for (const auto& t : members) raw.push_back(raw_scores(cls, t));

    std::vector<CalibratedPath> kept;
    std::vector<std::size_t> kept_cols;
    for (std::size_t j = 0; j < cls.paths.size(); ++j) {
      double lo = raw[0][j], hi = raw[0][j];
      for (const auto& row : raw) {
        lo = std::min(lo, row[j]);
        hi = std::max(hi, row[j]);
      }
      if (!(lo < hi)) {
        log_warn("class " + std::to_string(cls.class_id) + ": path " + std::to_string(j) +
                 " scores every calibration normal identically; dropped");
        continue;
      }
      CalibratedPath cp = cls.paths[j];
      cp.score_min = lo;
      cp.score_max = hi;
      std::vector<double> col(count);
      for (std::size_t r = 0; r < count; ++r) col[r] = normalize_score(raw[r][j], lo, hi);
      cp.tau = paths::compute_threshold(col, retention);
      kept.push_back(std::move(cp));
      kept_cols.push_back(j);
    }
    if (kept.empty()) {
      throw DetectorError(DetectorError::Code::NoUsablePaths,
                          "every path of class " + std::to_string(cls.class_id) + " is degenerate");
    }
    cls.paths = std::move(kept);

    std::vector<double> taus, norm(cls.paths.size()), finals(count);
    for (const auto& p : cls.paths) taus.push_back(p.tau);
    for (std::size_t r = 0; r < count; ++r) {
      for (std::size_t j = 0; j < cls.paths.size(); ++j) {
        norm[j] = normalize_score(raw[r][kept_cols[j]], cls.paths[j].score_min, cls.paths[j].score_max);
      }
      finals[r] = vote(norm, taus).final_score;
    }
    cls.tau_k = paths::compute_threshold(finals, retention);
    cls.calibrated = true;
    cls.calibration_count = count;
  }
  return out;
}

Verdict judge(const DetectorBundle& bundle, std::size_t predicted_class, const nn::ActivationTrace& trace,
              std::string id) {
  if (predicted_class >= bundle.classes.size()) {
    throw DetectorError(DetectorError::Code::ClassOutOfRange, "class " + std::to_string(predicted_class));
  }
  const auto& cls = bundle.classes[predicted_class];
  if (!cls.calibrated) {
    throw DetectorError(DetectorError::Code::Uncalibrated, "class " + std::to_string(predicted_class));
  }
  Verdict v;
  v.id = std::move(id);
  v.predicted_class = predicted_class;
  v.raw = raw_scores(cls, trace);
  std::vector<double> taus;
  for (std::size_t j = 0; j < cls.paths.size(); ++j) {
    v.normalized.push_back(normalize_score(v.raw[j], cls.paths[j].score_min, cls.paths[j].score_max));
    taus.push_back(cls.paths[j].tau);
  }
  const auto vr = vote(v.normalized, taus);
  v.final_score = vr.final_score;
  v.a_count = vr.a_count;
  v.b_count = vr.b_count;
  v.is_anomaly = v.final_score < cls.tau_k;
  return v;
}

Verdict detect(const DetectorBundle& bundle, const nn::Network& net, const Tensor& x, std::string id) {
  check_fingerprint(bundle, net);
  const auto tp = nn::forward_traced(net, x);
  return judge(bundle, tp.prediction.predicted_class, tp.trace, std::move(id));
}

std::vector<Verdict> detect_batch(const DetectorBundle& bundle, const nn::Network& net, std::span<const Tensor> xs,
                                  std::string_view id_prefix) {
  check_fingerprint(bundle, net);
  std::vector<Verdict> out;
  out.reserve(xs.size());
  for (std::size_t i = 0; i < xs.size(); ++i) {
    const auto tp = nn::forward_traced(net, xs[i]);
    out.push_back(judge(bundle, tp.prediction.predicted_class, tp.trace, std::string(id_prefix) + std::to_string(i)));
  }
  return out;
}

std::string verdict_jsonl(std::span<const Verdict> verdicts) {
  std::string out;
  for (const auto& v : verdicts) {
    nlohmann::ordered_json j;
    j["id"] = v.id;
    j["class"] = v.predicted_class;
    j["final"] = v.final_score;
    j["is_anomaly"] = v.is_anomaly;
    j["a_count"] = v.a_count;
    j["b_count"] = v.b_count;
    out += j.dump();
    out += '\n';
  }
  return out;
}

Correlation pearson_paths(std::span<const double> scores, std::size_t samples, std::size_t paths) {
  if (scores.size() != samples * paths) {
    throw DetectorError(DetectorError::Code::LengthMismatch, "score matrix does not match samples x paths");
  }
  if (samples < 2) throw InvalidArgument("pearson correlation needs at least 2 samples");
  Correlation c;
  c.paths = paths;
  c.r.assign(paths * paths, 0.0);
  c.zero_variance.assign(paths, false);
  std::vector<double> mean(paths, 0.0), ss(paths, 0.0);
  for (std::size_t s = 0; s < samples; ++s) {
    for (std::size_t j = 0; j < paths; ++j) mean[j] += scores[s * paths + j];
  }
  for (auto& m : mean) m /= static_cast<double>(samples);
  for (std::size_t s = 0; s < samples; ++s) {
    for (std::size_t j = 0; j < paths; ++j) {
      const double d = scores[s * paths + j] - mean[j];
      ss[j] += d * d;
    }
  }
  for (std::size_t j = 0; j < paths; ++j) {
    c.zero_variance[j] = !(ss[j] > 0.0);
    if (c.zero_variance[j]) log_warn("path " + std::to_string(j) + " has zero score variance");
    c.r[j * paths + j] = 1.0;
  }
  for (std::size_t a = 0; a < paths; ++a) {
    for (std::size_t b = a + 1; b < paths; ++b) {
      if (c.zero_variance[a] || c.zero_variance[b]) continue;
      double cross = 0.0;
      for (std::size_t s = 0; s < samples; ++s) {
        cross += (scores[s * paths + a] - mean[a]) * (scores[s * paths + b] - mean[b]);
      }
      const double r = std::clamp(cross / std::sqrt(ss[a] * ss[b]), -1.0, 1.0);
      c.r[a * paths + b] = r;
      c.r[b * paths + a] = r;
    }
  }
  return c;
}

void save_bundle(const DetectorBundle& bundle, const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  nlohmann::ordered_json m;
  m["format"] = "critpath-bundle";
  m["version"] = kBundleVersion;
  m["fingerprint"] = bundle.fingerprint;
  m["retention"] = bundle.retention;
  m["config"] = bundle.config;
  auto& classes = m["classes"] = nlohmann::ordered_json::array();
  for (const auto& cls : bundle.classes) {
    nlohmann::ordered_json store;
    store["class"] = cls.class_id;
    store["config"] = bundle.config;
    auto& store_paths = store["paths"] = nlohmann::ordered_json::array();

    nlohmann::ordered_json c;
    c["class"] = cls.class_id;
    c["calibrated"] = cls.calibrated;
    c["calibration_count"] = cls.calibration_count;
    c["tau_k"] = cls.tau_k;
    c["store"] = paths::store_file_name(cls.class_id);
    auto& arr = c["paths"] = nlohmann::ordered_json::array();
    for (std::size_t j = 0; j < cls.paths.size(); ++j) {
      const auto& p = cls.paths[j];
      const std::string blob = paths::svdd_file_name(cls.class_id, j);
      svdd::save_svdd(p.scored.svdd, dir / blob);
      store_paths.push_back({{"indices", p.scored.path.indices},
                             {"tpr", p.scored.tpr},
                             {"tau_path", p.scored.tau},
                             {"svdd_file", blob}});
      nlohmann::ordered_json e;
      e["indices"] = p.scored.path.indices;
      e["tpr"] = p.scored.tpr;
      e["tau_path"] = p.scored.tau;
      e["svdd_file"] = blob;
      e["score_min"] = p.score_min;
      e["score_max"] = p.score_max;
      e["tau"] = p.tau;
      arr.push_back(std::move(e));
    }
    write_file_text(dir / paths::store_file_name(cls.class_id), store.dump(2) + "\n");
    classes.push_back(std::move(c));
  }
  write_file_text(dir / "manifest.json", m.dump(2) + "\n");
}

DetectorBundle load_bundle(const std::filesystem::path& dir) {
  const auto manifest = dir / "manifest.json";
  if (!std::filesystem::exists(manifest)) {
    throw DetectorError(DetectorError::Code::BadBundle, "missing " + manifest.string());
  }
  DetectorBundle b;
  try {
    const auto m = nlohmann::ordered_json::parse(read_file_text(manifest));
    if (m.at("format").get<std::string>() != "critpath-bundle" || m.at("version").get<int>() != kBundleVersion) {
      throw DetectorError(DetectorError::Code::BadBundle, "unsupported bundle format");
    }
    b.fingerprint = m.at("fingerprint").get<std::string>();
    b.retention = m.at("retention").get<double>();
    b.config = m.at("config");
    for (const auto& c : m.at("classes")) {
      ClassDetector cls;
      cls.class_id = c.at("class").get<std::size_t>();
      cls.calibrated = c.at("calibrated").get<bool>();
      cls.calibration_count = c.value("calibration_count", std::size_t{0});
      cls.tau_k = c.at("tau_k").get<double>();
      for (const auto& e : c.at("paths")) {
        paths::ScoredPath sp{cls.class_id, paths::Path{e.at("indices").get<std::vector<std::size_t>>()},
                             e.at("tpr").get<double>(), e.at("tau_path").get<double>(),
                             svdd::load_svdd(dir / e.at("svdd_file").get<std::string>())};
        cls.paths.push_back(CalibratedPath{std::move(sp), e.at("score_min").get<double>(),
                                           e.at("score_max").get<double>(), e.at("tau").get<double>()});
      }
      if (cls.class_id != b.classes.size()) {
        throw DetectorError(DetectorError::Code::BadBundle, "classes are not listed in order");
      }
      b.classes.push_back(std::move(cls));
    }
  } catch (const nlohmann::json::exception& e) {
    throw DetectorError(DetectorError::Code::BadBundle, e.what());
  }
  return b;
}

}  // namespace critpath::detector
