#pragma once

#include <filesystem>
#include <string>

#include <json.hpp>

#include "critpath/paths/path_search.hpp"

namespace critpath::paths {

nlohmann::ordered_json config_to_json(const SearchConfig& config);
SearchConfig config_from_json(const nlohmann::json& j);

std::string store_file_name(std::size_t class_id);
std::string svdd_file_name(std::size_t class_id, std::size_t index);

// Writes <dir>/class_<k>.json
//   {class, config, paths: [{restart, indices, tpr, tau_path, svdd_file,
//    initial_indices, initial_tpr, trajectory, evaluations, skipped}]}
// and one SVDD blob per path next to it. Returns the store path.
std::filesystem::path save_path_store(const ExtractionResult& result, const SearchConfig& config,
                                      const std::filesystem::path& dir);

struct LoadedStore {
  ExtractionResult result;
  SearchConfig config;
};

LoadedStore load_path_store(const std::filesystem::path& store_file);

}  // namespace critpath::paths
