#include "attnsel/config.h"

#include <fstream>

#include "attnsel/errors.h"
#include "attnsel/rng.h"

namespace attnsel {

using nlohmann::json;

const char* to_string(BranchMode mode) {
  switch (mode) {
    case BranchMode::kBoth:
      return "both";
    case BranchMode::kRawOnly:
      return "raw_only";
    case BranchMode::kFeatureOnly:
      return "feature_only";
  }
  return "unknown";
}

BranchMode parse_branch_mode(const std::string& text) {
  if (text == "both") return BranchMode::kBoth;
  if (text == "raw_only" || text == "raw") return BranchMode::kRawOnly;
  if (text == "feature_only" || text == "feature") return BranchMode::kFeatureOnly;
  throw ConfigError("unknown branch mode '" + text + "' (expected both, raw_only or feature_only)");
}

void RunConfig::validate() const {
  if (!(alpha > 0.0) || !(alpha <= beta) || !(beta <= 1.0)) {
    throw ConfigError("need 0 < alpha <= beta <= 1 (alpha=" + std::to_string(alpha) + ", beta=" + std::to_string(beta) +
                      ")");
  }
  if (k < 1) throw ConfigError("k must be >= 1");
  if (n_crops < 1) throw ConfigError("n_crops must be >= 1");
  if (!(tau > 0.0)) throw ConfigError("tau must be > 0");
  if (!(patch_temperature > 0.0)) throw ConfigError("patch_temperature must be > 0");
  if (split_layer < 0) throw ConfigError("split_layer must be >= 0");
  if (workers < 1) throw ConfigError("workers must be >= 1");
  if (backend != "onnx" && backend != "reference") {
    throw ConfigError("backend must be 'onnx' or 'reference', got '" + backend + "'");
  }
}

json to_json(const RunConfig& c) {
  return {
      {"alpha", c.alpha},
      {"beta", c.beta},
      {"k", c.k},
      {"n_crops", c.n_crops},
      {"tau", c.tau},
      {"patch_temperature", c.patch_temperature},
      {"seed", c.seed},
      {"rng", std::string(kRngAlgorithm)},
      {"split_layer", c.split_layer},
      {"include_full_image", c.include_full_image},
      {"branches", to_string(c.branches)},
      {"workers", c.workers},
      {"backend", c.backend},
      {"reference_seed", c.reference_seed},
      {"models_dir", c.models_dir.string()},
      {"catalog", c.catalog.string()},
      {"class_mapping", c.class_mapping.string()},
      {"dataset", c.dataset.string()},
      {"output", c.output.string()},
  };
}

void merge_json(RunConfig& c, const json& j) {
  try {
    for (const auto& [key, value] : j.items()) {
      if (key == "alpha") c.alpha = value.get<double>();
      else if (key == "beta") c.beta = value.get<double>();
      else if (key == "k") c.k = value.get<std::int64_t>();
      else if (key == "n_crops") c.n_crops = value.get<std::int64_t>();
      else if (key == "tau") c.tau = value.get<double>();
      else if (key == "patch_temperature") c.patch_temperature = value.get<double>();
      else if (key == "seed") c.seed = value.get<std::uint64_t>();
      else if (key == "split_layer") c.split_layer = value.get<std::int64_t>();
      else if (key == "include_full_image") c.include_full_image = value.get<bool>();
      else if (key == "branches") c.branches = parse_branch_mode(value.get<std::string>());
      else if (key == "workers") c.workers = value.get<std::int64_t>();
      else if (key == "backend") c.backend = value.get<std::string>();
      else if (key == "reference_seed") c.reference_seed = value.get<std::uint64_t>();
      else if (key == "models_dir") c.models_dir = value.get<std::string>();
      else if (key == "catalog") c.catalog = value.get<std::string>();
      else if (key == "dataset") c.dataset = value.get<std::string>();
      else if (key == "output") c.output = value.get<std::string>();
      else if (key == "class_mapping") c.class_mapping = value.get<std::string>();
      else if (key == "rng") {
        if (value.get<std::string>() != kRngAlgorithm) {
          throw ConfigError("unsupported rng '" + value.get<std::string>() + "'");
        }
      } else {
        throw ConfigError("unknown config key '" + key + "'");
      }
    }
  } catch (const json::exception& e) {
    throw ConfigError(std::string("bad config value: ") + e.what());
  }
}

RunConfig load_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config: " + path.string());
  RunConfig c;
  try {
    merge_json(c, json::parse(in));
  } catch (const json::parse_error& e) {
    throw ConfigError(path.string() + ": " + e.what());
  }
  return c;
}

}  // namespace attnsel
