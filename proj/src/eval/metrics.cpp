#include "critpath/eval/metrics.hpp"

#include <algorithm>
#include <cstdio>
#include <sstream>

#include "critpath/binary_io.hpp"
#include "critpath/error.hpp"
#include "critpath/paths/path_search.hpp"

namespace critpath::eval {
namespace {

void require_both(std::span<const double> normal, std::span<const double> anomaly) {
  if (normal.empty() || anomaly.empty()) throw InvalidArgument("metric needs normal and anomaly scores");
}

std::string fmt(double v, const char* spec = "%.6f") {
  char buf[64];
  std::snprintf(buf, sizeof buf, spec, v);
  return buf;
}

nlohmann::ordered_json opt(const std::optional<double>& v) { return v ? nlohmann::ordered_json(*v) : nullptr; }

std::optional<double> opt_from(const nlohmann::json& j) {
  if (j.is_null()) return std::nullopt;
  return j.get<double>();
}

}  // namespace

double auroc(std::span<const double> normal, std::span<const double> anomaly) {
  require_both(normal, anomaly);
  struct Item {
    double score;
    bool is_normal;
  };
  std::vector<Item> all;
  all.reserve(normal.size() + anomaly.size());
  for (double s : normal) all.push_back({s, true});
  for (double s : anomaly) all.push_back({s, false});
  std::sort(all.begin(), all.end(), [](const Item& a, const Item& b) { return a.score < b.score; });
  // Mid-ranks (1-based) over tie groups; U counts normal-over-anomaly wins.
  double rank_sum = 0.0;
  for (std::size_t i = 0; i < all.size();) {
    std::size_t j = i;
    while (j < all.size() && all[j].score == all[i].score) ++j;
    const double mid = 0.5 * static_cast<double>(i + 1 + j);
    for (std::size_t t = i; t < j; ++t) {
      if (all[t].is_normal) rank_sum += mid;
    }
    i = j;
  }
  const double nn = static_cast<double>(normal.size());
  const double na = static_cast<double>(anomaly.size());
  return (rank_sum - nn * (nn + 1.0) / 2.0) / (nn * na);
}

double tpr_at_tnr(std::span<const double> normal, std::span<const double> anomaly, double tnr) {
  require_both(normal, anomaly);
  const double tau = paths::compute_threshold(normal, tnr);
  const auto below = std::count_if(anomaly.begin(), anomaly.end(), [&](double s) { return s < tau; });
  return static_cast<double>(below) / static_cast<double>(anomaly.size());
}

EvalResult evaluate_scores(std::span<const ScoredSample> normal, std::span<const ScoredSample> anomaly,
                           std::size_t num_classes, double tnr) {
  EvalResult r;
  r.tnr = tnr;
  std::vector<double> n_all, a_all;
  std::vector<std::vector<double>> n_k(num_classes), a_k(num_classes);
  for (const auto& s : normal) {
    n_all.push_back(s.score);
    if (s.predicted_class < num_classes) n_k[s.predicted_class].push_back(s.score);
  }
  for (const auto& s : anomaly) {
    a_all.push_back(s.score);
    if (s.predicted_class < num_classes) a_k[s.predicted_class].push_back(s.score);
  }
  r.n_normal = n_all.size();
  r.n_anomaly = a_all.size();
  r.auroc = auroc(n_all, a_all);
  r.tpr_at_tnr = tpr_at_tnr(n_all, a_all, tnr);
  for (std::size_t k = 0; k < num_classes; ++k) {
    ClassBreakdown b{std::to_string(k), std::nullopt, std::nullopt, n_k[k].size(), a_k[k].size()};
    if (!n_k[k].empty() && !a_k[k].empty()) {
      b.auroc = auroc(n_k[k], a_k[k]);
      b.tpr_at_tnr = tpr_at_tnr(n_k[k], a_k[k], tnr);
    }
    r.per_class.push_back(std::move(b));
  }
  return r;
}

nlohmann::ordered_json to_json(const EvalResult& r) {
  nlohmann::ordered_json j;
  j["model"] = r.model;
  j["anomaly_source"] = r.anomaly_source;
  j["seed"] = r.seed;
  j["tnr"] = r.tnr;
  j["auroc"] = r.auroc;
  j["tpr_at_tnr"] = r.tpr_at_tnr;
  j["n_normal"] = r.n_normal;
  j["n_anomaly"] = r.n_anomaly;
  auto& pc = j["per_class"] = nlohmann::ordered_json::array();
  for (const auto& b : r.per_class) {
    pc.push_back({{"class", b.class_label},
                  {"auroc", opt(b.auroc)},
                  {"tpr_at_tnr", opt(b.tpr_at_tnr)},
                  {"n_normal", b.n_normal},
                  {"n_anomaly", b.n_anomaly}});
  }
  auto& t = j["timings"] = nlohmann::ordered_json::array();
  for (const auto& x : r.timings) t.push_back({{"phase", x.phase}, {"seconds", x.seconds}});
  return j;
}

EvalResult eval_from_json(const nlohmann::json& j) {
  EvalResult r;
  r.model = j.at("model").get<std::string>();
  r.anomaly_source = j.at("anomaly_source").get<std::string>();
  r.seed = j.at("seed").get<std::uint64_t>();
  r.tnr = j.at("tnr").get<double>();
  r.auroc = j.at("auroc").get<double>();
  r.tpr_at_tnr = j.at("tpr_at_tnr").get<double>();
  r.n_normal = j.at("n_normal").get<std::size_t>();
  r.n_anomaly = j.at("n_anomaly").get<std::size_t>();
  for (const auto& b : j.at("per_class")) {
    r.per_class.push_back({b.at("class").get<std::string>(), opt_from(b.at("auroc")), opt_from(b.at("tpr_at_tnr")),
                           b.at("n_normal").get<std::size_t>(), b.at("n_anomaly").get<std::size_t>()});
  }
  for (const auto& t : j.at("timings")) {
    r.timings.push_back({t.at("phase").get<std::string>(), t.at("seconds").get<double>()});
  }
  return r;
}

std::string to_csv(std::span<const EvalResult> results) {
  std::ostringstream out;
  out << kCsvHeader << '\n';
  const auto num = [](const std::optional<double>& v) { return v ? fmt(*v, "%.17g") : std::string(); };
  for (const auto& r : results) {
    for (const auto& b : r.per_class) {
      out << r.model << ',' << b.class_label << ',' << r.anomaly_source << ',' << num(b.auroc) << ','
          << num(b.tpr_at_tnr) << ',' << b.n_normal << ',' << b.n_anomaly << ',' << r.seed << '\n';
    }
  }
  return out.str();
}

std::string to_markdown(const EvalResult& r) {
  std::ostringstream out;
  out << "| class | anomaly source | AUROC | TPR@" << fmt(100.0 * r.tnr, "%.0f") << "TNR | normals | anomalies |\n";
  out << "|---|---|---|---|---|---|\n";
  const auto num = [](const std::optional<double>& v) { return v ? fmt(*v, "%.4f") : std::string("n/a"); };
  for (const auto& b : r.per_class) {
    out << "| " << b.class_label << " | " << r.anomaly_source << " | " << num(b.auroc) << " | "
        << num(b.tpr_at_tnr) << " | " << b.n_normal << " | " << b.n_anomaly << " |\n";
  }
  out << "| all | " << r.anomaly_source << " | " << fmt(r.auroc, "%.4f") << " | " << fmt(r.tpr_at_tnr, "%.4f")
      << " | " << r.n_normal << " | " << r.n_anomaly << " |\n";
  return out.str();
}

std::string timing_table(std::span<const TimingRow> rows, std::size_t mutations) {
  std::ostringstream out;
  out << "| Model | Dataset | Enumerate " << mutations << " times | Evaluation | Total |\n";
  out << "|---|---|---|---|---|\n";
  for (const auto& r : rows) {
    out << "| " << r.model << " | " << r.dataset << " | " << fmt(r.enumerate_s, "%.3f") << " | "
        << fmt(r.evaluation_s, "%.3f") << " | " << fmt(r.enumerate_s + r.evaluation_s, "%.3f") << " |\n";
  }
  return out.str();
}

void write_report(std::span<const EvalResult> results, ReportFormat format, const std::filesystem::path& path) {
  std::string text;
  switch (format) {
    case ReportFormat::Json: {
      auto arr = nlohmann::ordered_json::array();
      for (const auto& r : results) arr.push_back(to_json(r));
      text = arr.dump(2) + "\n";
      break;
    }
    case ReportFormat::Csv:
      text = to_csv(results);
      break;
    case ReportFormat::Markdown:
      for (const auto& r : results) {
        if (!text.empty()) text += '\n';
        text += to_markdown(r);
      }
      break;
  }
  write_file_text(path, text);
}

std::vector<EvalResult> read_json_report(const std::filesystem::path& path) {
  std::vector<EvalResult> out;
  try {
    for (const auto& j : nlohmann::json::parse(read_file_text(path))) out.push_back(eval_from_json(j));
  } catch (const nlohmann::json::exception& e) {
    throw InvalidArgument("report " + path.string() + ": " + e.what());
  }
  return out;
}

}  // namespace critpath::eval
