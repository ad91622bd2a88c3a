#include "attnsel/pipeline.h"

#include <chrono>

#include "attnsel/errors.h"
#include "attnsel/feat_select.h"
#include "attnsel/raw_select.h"
#include "attnsel/rng.h"

namespace attnsel {

using nlohmann::json;

namespace {

using Clock = std::chrono::steady_clock;

double ms_since(Clock::time_point start) {
  return std::chrono::duration<double, std::milli>(Clock::now() - start).count();
}

json box_json(const CropBox& b) { return json::array({b.x0, b.y0, b.width, b.height}); }

}  // namespace

Backends load_backends(const RunConfig& config) {
  config.validate();
  if (config.backend == "reference") {
    auto spec = default_reference_spec();
    if (config.split_layer > 0) spec.split_layer = config.split_layer;
    auto enc = make_reference_encoder(config.reference_seed, spec);
    return {enc, enc};
  }
  if (config.models_dir.empty()) throw ConfigError("models_dir is required for the onnx backend");
  auto encoder = load_onnx_encoder(config.models_dir / "encoder");
  if (config.split_layer > 0 && config.split_layer != encoder->spec().split_layer) {
    throw ConfigError("split_layer " + std::to_string(config.split_layer) + " requested but the exported graphs split at " +
                      std::to_string(encoder->spec().split_layer));
  }
  return {encoder, load_onnx_attention(config.models_dir / "attention")};
}

std::uint64_t image_seed(std::uint64_t global_seed, const std::string& image_id) {
  return mix64(global_seed, stable_hash(image_id));
}

ImageResult run_image(const ImageTensor& image, const std::string& image_id, const RunConfig& config,
                      const Backends& backends, const DescriptionCatalog& catalog) {
  config.validate();
  const auto start = Clock::now();
  const auto& encoder = *backends.encoder;
  const auto& attention_model = *backends.attention;
  const auto& enc_spec = encoder.spec();
  const auto attn_grid = attention_model.grid();
  if (config.k > attn_grid.count()) {
    throw ConfigError("k=" + std::to_string(config.k) + " exceeds the attention grid's " +
                      std::to_string(attn_grid.count()) + " patches");
  }

  ImageResult result;
  result.image_id = image_id;
  result.global_seed = config.seed;
  result.image_seed = image_seed(config.seed, image_id);
  result.config = to_json(config);
  Rng rng(result.image_seed);
  const auto size = image.size();
  const auto full = full_image_box(size);

  // Anchors from head-averaged class-token attention.
  auto t = Clock::now();
  const auto attn_input = crop_and_preprocess(image, full, attention_model.input_spec());
  result.timing.crop_preprocess_ms += ms_since(t);
  t = Clock::now();
  const auto heads = attention_model.cls_attention(attn_input);
  result.timing.encoding_ms += ms_since(t);

  t = Clock::now();
  auto grid = average_heads(heads);
  const auto topk = patch_probabilities(select_top_k(grid, config.k), static_cast<float>(config.patch_temperature));
  const auto samples = sample_patches(topk, config.n_crops, rng);
  std::vector<CropBox> boxes;
  boxes.reserve(samples.size());
  for (const auto& s : samples) {
    auto box = propose_crop_box(patch_center_pixels(s.patch, attn_grid, size), config.alpha, config.beta, size, rng);
    box.anchor = s.patch;
    boxes.push_back(box);
  }

  std::vector<Tensor> raw_inputs;
  if (config.raw_enabled()) {
    for (const auto& b : boxes) raw_inputs.push_back(crop_and_preprocess(image, b, enc_spec.input));
  }
  std::optional<Tensor> full_input;
  if (config.feature_enabled() || config.include_full_image) {
    full_input = crop_and_preprocess(image, full, enc_spec.input);
  }
  result.timing.crop_preprocess_ms += ms_since(t);

  EmbeddingSet set;
  if (config.raw_enabled()) {
    t = Clock::now();
    auto rows = encoder.encode_images(raw_inputs);
    result.timing.encoding_ms += ms_since(t);
    for (std::size_t i = 0; i < rows.size(); ++i) {
      set.add(std::move(rows[i]), {Branch::kRaw, boxes[i], std::nullopt, static_cast<std::int64_t>(i)});
    }
  }

  if (config.feature_enabled()) {
    t = Clock::now();
    const auto prefix = encoder.encode_prefix(*full_input);
    result.timing.encoding_ms += ms_since(t);

    t = Clock::now();
    std::vector<Tensor> sequences;
    std::vector<TokenBox> token_boxes;
    sequences.reserve(boxes.size());
    for (const auto& b : boxes) {
      const auto tb = map_box_to_tokens(b, size, prefix.grid);
      sequences.push_back(assemble_crop_sequence(prefix.cls, resize_token_grid(crop_token_grid(prefix, tb), prefix.grid)));
      token_boxes.push_back(tb);
    }
    result.timing.crop_preprocess_ms += ms_since(t);

    t = Clock::now();
    auto rows = encoder.encode_suffixes(sequences);
    result.timing.encoding_ms += ms_since(t);
    for (std::size_t i = 0; i < rows.size(); ++i) {
      set.add(std::move(rows[i]), {Branch::kFeature, boxes[i], token_boxes[i], static_cast<std::int64_t>(i)});
    }
  }

  if (config.include_full_image) {
    t = Clock::now();
    set.add(encoder.encode_image(*full_input), {Branch::kFull, full, std::nullopt, -1});
    result.timing.encoding_ms += ms_since(t);
  }

  t = Clock::now();
  const auto table = aggregate_scores(set, catalog, static_cast<float>(config.tau));
  result.timing.scoring_ms = ms_since(t);

  result.scores = table.scores;
  result.predicted = table.predicted;
  result.predicted_name = catalog.cls(table.predicted).name;
  result.margin = table.margin;
  result.crops = std::move(set.tags);
  result.attention = std::move(grid);
  result.timing.total_ms = ms_since(start);
  return result;
}

ImageResult run_baseline(const ImageTensor& image, const std::string& image_id, const RunConfig& config,
                         const Backends& backends, const DescriptionCatalog& catalog) {
  const auto start = Clock::now();
  ImageResult result;
  result.image_id = image_id;
  result.global_seed = config.seed;
  result.image_seed = image_seed(config.seed, image_id);
  result.config = to_json(config);
  result.config["mode"] = "baseline";

  auto t = Clock::now();
  const auto box = full_image_box(image.size());
  const auto input = crop_and_preprocess(image, box, backends.encoder->spec().input);
  result.timing.crop_preprocess_ms = ms_since(t);
  t = Clock::now();
  const auto f = backends.encoder->encode_image(input);
  result.timing.encoding_ms = ms_since(t);
  t = Clock::now();
  const auto prototypes = class_prototypes(catalog);
  result.scores = baseline_clip_score(f, prototypes);
  result.predicted = argmax_lowest(result.scores);
  result.predicted_name = catalog.cls(result.predicted).name;
  result.margin = top_margin(result.scores);
  result.crops.push_back({Branch::kFull, box, std::nullopt, -1});
  result.timing.scoring_ms = ms_since(t);
  result.timing.total_ms = ms_since(start);
  return result;
}

json to_json(const ImageResult& r, const DescriptionCatalog& catalog, bool include_timing) {
  json crops = json::array();
  for (const auto& tag : r.crops) {
    json c = {{"branch", to_string(tag.branch)},
              {"sample", tag.sample_index},
              {"anchor", json::array({tag.box.anchor.row, tag.box.anchor.col})},
              {"box", box_json(tag.box)},
              {"fractions", json::array({tag.box.fx, tag.box.fy})}};
    if (tag.token_box) {
      const auto& tb = *tag.token_box;
      c["token_box"] = json::array({tb.r0, tb.c0, tb.rows, tb.cols});
    }
    crops.push_back(std::move(c));
  }
  json scores = json::object();
  for (std::size_t k = 0; k < r.scores.size(); ++k) scores[catalog.cls(static_cast<std::int64_t>(k)).name] = r.scores[k];

  json j = {{"image_id", r.image_id},
            {"predicted", r.predicted_name},
            {"predicted_index", r.predicted},
            {"margin", r.margin},
            {"scores", std::move(scores)},
            {"crops", std::move(crops)},
            {"seed", r.global_seed},
            {"image_seed", r.image_seed},
            {"config", r.config}};
  if (r.label) j["label"] = *r.label;
  if (include_timing) {
    j["timing_ms"] = {{"crop_preprocess", r.timing.crop_preprocess_ms},
                      {"encoding", r.timing.encoding_ms},
                      {"scoring", r.timing.scoring_ms},
                      {"total", r.timing.total_ms}};
  }
  return j;
}

}  // namespace attnsel
