#pragma once

#include <cstdint>
#include <filesystem>
#include <string>

#include <nlohmann/json.hpp>

namespace attnsel {

enum class BranchMode { kBoth, kRawOnly, kFeatureOnly };

const char* to_string(BranchMode mode);
BranchMode parse_branch_mode(const std::string& text);

struct RunConfig {
  double alpha = 0.5;
  double beta = 0.9;
  std::int64_t k = 20;
  std::int64_t n_crops = 60;
  double tau = 0.01;
  double patch_temperature = 1.0;
  std::uint64_t seed = 0;
  std::int64_t split_layer = 0;  // 0: whatever the encoder was built/exported with
  bool include_full_image = false;
  BranchMode branches = BranchMode::kBoth;
  std::int64_t workers = 1;

  std::string backend = "onnx";  // "onnx" or "reference"
  std::uint64_t reference_seed = 42;
  std::filesystem::path models_dir;     // holds encoder/ and attention/
  std::filesystem::path catalog;        // catalog.json
  std::filesystem::path dataset;
  std::filesystem::path output;
  std::filesystem::path class_mapping;  // optional JSON: directory -> catalog class

  bool raw_enabled() const { return branches != BranchMode::kFeatureOnly; }
  bool feature_enabled() const { return branches != BranchMode::kRawOnly; }

  // Throws ConfigError on the first violated constraint.
  void validate() const;
};

nlohmann::json to_json(const RunConfig& config);

// Keys absent from `j` keep the values already in `config`.
void merge_json(RunConfig& config, const nlohmann::json& j);

RunConfig load_config(const std::filesystem::path& path);

}  // namespace attnsel
