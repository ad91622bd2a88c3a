#pragma once

#include <filesystem>
#include <memory>
#include <string>
#include <vector>

#include "attnsel/backend.h"
#include "attnsel/catalog.h"
#include "attnsel/config.h"
#include "attnsel/image.h"
#include "attnsel/pipeline.h"

namespace attnsel {

// Three color classes over the seeded reference encoder. Images are noisy
// class-colored fields with a brighter blob; catalog rows are encoder
// embeddings of class-colored swatches (2, 3 and 4 rows per class), so the
// dataset is separable by construction.
struct SyntheticItem {
  std::string id;     // "<class>/<file>.png"
  std::string label;
  ImageTensor image;
};

struct SyntheticWorld {
  RunConfig config;
  Backends backends;
  DescriptionCatalog catalog;
  std::vector<SyntheticItem> items;
};

inline constexpr std::uint64_t kSyntheticEncoderSeed = 42;
inline constexpr std::uint64_t kSyntheticRunSeed = 7;

// reference backend, seed 7, k=6, n_crops=8, split at layer 1.
RunConfig synthetic_config();

ImageTensor synthetic_image(std::int64_t class_index, std::int64_t variant);

// 4 images per class, 12 total.
SyntheticWorld make_synthetic_world();

// dir/dataset/<class>/*.png, dir/catalog.json + catalog.abst, dir/config.json.
void write_synthetic_world(const SyntheticWorld& world, const std::filesystem::path& dir);

// Deterministic 3 x S x S probe for the golden embedding.
Tensor golden_probe_input(const EncoderInputSpec& spec);

}  // namespace attnsel
