#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "attnsel/attention_sampler.h"
#include "attnsel/backend.h"
#include "attnsel/catalog.h"
#include "attnsel/config.h"
#include "attnsel/image.h"
#include "attnsel/scoring.h"

namespace attnsel {

struct Backends {
  std::shared_ptr<const SplitEncoder> encoder;
  std::shared_ptr<const AttentionSource> attention;
};

// Builds the backends a config asks for: the seeded reference encoder (serving
// both roles) or ONNX graphs under models_dir/encoder and models_dir/attention.
Backends load_backends(const RunConfig& config);

struct StageTiming {
  double crop_preprocess_ms = 0.0;
  double encoding_ms = 0.0;
  double scoring_ms = 0.0;
  double total_ms = 0.0;
};

struct ImageResult {
  std::string image_id;
  std::optional<std::string> label;
  std::int64_t predicted = -1;
  std::string predicted_name;
  float margin = 0.0f;
  std::vector<float> scores;
  std::vector<EmbeddingTag> crops;
  std::uint64_t global_seed = 0;
  std::uint64_t image_seed = 0;
  StageTiming timing;
  nlohmann::json config;

  // Kept for diagnostics; not serialized.
  std::optional<AttentionGrid> attention;
};

std::uint64_t image_seed(std::uint64_t global_seed, const std::string& image_id);

// Attention -> N anchor samples -> raw crops through the full encoder and the
// matching token crops through the suffix -> soft-matched class scores.
ImageResult run_image(const ImageTensor& image, const std::string& image_id, const RunConfig& config,
                      const Backends& backends, const DescriptionCatalog& catalog);

// Full-image cosine against class prototypes.
ImageResult run_baseline(const ImageTensor& image, const std::string& image_id, const RunConfig& config,
                         const Backends& backends, const DescriptionCatalog& catalog);

nlohmann::json to_json(const ImageResult& result, const DescriptionCatalog& catalog, bool include_timing = true);

struct ClassAccuracy {
  std::string name;
  std::int64_t count = 0;
  std::int64_t correct = 0;
};

struct ImageError {
  std::string image_id;
  std::string message;
};

struct EvalReport {
  std::string dataset;
  std::int64_t image_count = 0;  // successfully classified
  std::int64_t correct = 0;
  double top1_accuracy = 0.0;
  std::vector<ClassAccuracy> per_class;
  std::vector<ImageError> errors;
  std::vector<std::string> warnings;
  nlohmann::json config;
  double wall_time_s = 0.0;
};

struct EvalOptions {
  std::filesystem::path jsonl;  // per-image results; empty disables
  bool baseline = false;
  std::function<void(const std::string&)> on_warning;
};

EvalReport evaluate_dataset(const std::filesystem::path& root, const RunConfig& config, const Backends& backends,
                            const DescriptionCatalog& catalog, const EvalOptions& options = {});

nlohmann::json to_json(const EvalReport& report);

// Report JSON without wall time or machine-specific paths; byte-stable across
// runs, worker counts and output locations.
std::string canonical_report_json(const EvalReport& report);

// Attention heatmap (bilinear-upsampled, max-normalized, fixed palette)
// alpha-blended over the image, crop boxes outlined.
ImageTensor render_overlay(const ImageTensor& image, const AttentionGrid& attention, std::span<const CropBox> boxes);

}  // namespace attnsel
