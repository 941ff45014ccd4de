#include "critpath/paths/path_store.hpp"

#include <cstdio>

#include "critpath/binary_io.hpp"

namespace critpath::paths {

nlohmann::ordered_json config_to_json(const SearchConfig& c) {
  nlohmann::ordered_json j;
  j["paths"] = c.paths;
  j["mutations"] = c.mutations;
  j["retention"] = c.retention;
  j["seed"] = c.seed;
  j["nu"] = c.svdd.nu;
  j["kernel_width"] = c.svdd.kernel_width ? nlohmann::ordered_json(*c.svdd.kernel_width) : nullptr;
  j["svdd_tol"] = c.svdd.tol;
  j["svdd_max_passes"] = c.svdd.max_passes;
  j["median_sample_cap"] = c.svdd.median_sample_cap;
  j["standardize"] = c.svdd.standardize;
  j["max_train_rows"] = c.max_train_rows;
  j["trace_input"] = c.trace.trace_input;
  j["readout"] = c.trace.output_readout == nn::OutputReadout::Softmax ? "softmax" : "logit";
  return j;
}

SearchConfig config_from_json(const nlohmann::json& j) {
  SearchConfig c;
  c.paths = j.at("paths").get<std::size_t>();
  c.mutations = j.at("mutations").get<std::size_t>();
  c.retention = j.at("retention").get<double>();
  c.seed = j.at("seed").get<std::uint64_t>();
  c.svdd.nu = j.at("nu").get<double>();
  if (j.contains("kernel_width") && !j["kernel_width"].is_null()) c.svdd.kernel_width = j["kernel_width"].get<double>();
  c.svdd.tol = j.value("svdd_tol", c.svdd.tol);
  c.svdd.max_passes = j.value("svdd_max_passes", c.svdd.max_passes);
  c.svdd.median_sample_cap = j.value("median_sample_cap", c.svdd.median_sample_cap);
  c.svdd.standardize = j.value("standardize", c.svdd.standardize);
  c.max_train_rows = j.value("max_train_rows", c.max_train_rows);
  c.trace.trace_input = j.value("trace_input", false);
  c.trace.output_readout =
      j.value("readout", std::string("logit")) == "softmax" ? nn::OutputReadout::Softmax : nn::OutputReadout::Logit;
  return c;
}

std::string store_file_name(std::size_t class_id) { return "class_" + std::to_string(class_id) + ".json"; }

std::string svdd_file_name(std::size_t class_id, std::size_t index) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "class_%zu_path_%03zu.svdd", class_id, index);
  return buf;
}

std::filesystem::path save_path_store(const ExtractionResult& result, const SearchConfig& config,
                                      const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  nlohmann::ordered_json j;
  j["class"] = result.class_id;
  j["config"] = config_to_json(config);
  auto& arr = j["paths"] = nlohmann::ordered_json::array();
  for (std::size_t r = 0; r < result.restarts.size(); ++r) {
    const auto& rr = result.restarts[r];
    const std::string blob = svdd_file_name(result.class_id, r);
    svdd::save_svdd(rr.best.svdd, dir / blob);
    nlohmann::ordered_json p;
    p["restart"] = r;
    p["indices"] = rr.best.path.indices;
    p["tpr"] = rr.best.tpr;
    p["tau_path"] = rr.best.tau;
    p["svdd_file"] = blob;
    p["initial_indices"] = rr.initial_path.indices;
    p["initial_tpr"] = rr.initial_tpr;
    auto& traj = p["trajectory"] = nlohmann::ordered_json::array();
    for (const auto& e : rr.accepted) traj.push_back({{"iteration", e.iteration}, {"tpr", e.tpr}});
    p["evaluations"] = rr.evaluations;
    p["skipped"] = rr.skipped;
    arr.push_back(std::move(p));
  }
  const auto file = dir / store_file_name(result.class_id);
  write_file_text(file, j.dump(2) + "\n");
  return file;
}

LoadedStore load_path_store(const std::filesystem::path& store_file) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(read_file_text(store_file));
  } catch (const nlohmann::json::exception& e) {
    throw InvalidArgument("path store " + store_file.string() + ": " + e.what());
  }
  const auto dir = store_file.parent_path();
  LoadedStore out;
  try {
    out.config = config_from_json(j.at("config"));
    out.result.class_id = j.at("class").get<std::size_t>();
    for (const auto& p : j.at("paths")) {
      ScoredPath best{out.result.class_id, Path{p.at("indices").get<std::vector<std::size_t>>()},
                      p.at("tpr").get<double>(), p.at("tau_path").get<double>(),
                      svdd::load_svdd(dir / p.at("svdd_file").get<std::string>())};
      RestartResult rr{std::move(best), Path{p.at("initial_indices").get<std::vector<std::size_t>>()},
                       p.at("initial_tpr").get<double>(), {}, p.value("evaluations", std::size_t{0}),
                       p.value("skipped", std::size_t{0})};
      for (const auto& e : p.at("trajectory")) {
        rr.accepted.push_back({e.at("iteration").get<std::size_t>(), e.at("tpr").get<double>()});
      }
      out.result.restarts.push_back(std::move(rr));
    }
  } catch (const nlohmann::json::exception& e) {
    throw InvalidArgument("path store " + store_file.string() + ": " + e.what());
  }
  return out;
}

}  // namespace critpath::paths
