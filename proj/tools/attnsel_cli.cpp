// attnsel: zero-shot classification with attention-based crop selection.

#include <cstdio>
#include <fstream>
#include <iostream>
#include <optional>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "attnsel/errors.h"
#include "attnsel/pipeline.h"
#include "attnsel/selftest.h"
#include "attnsel/synthetic.h"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace attnsel;

namespace {

// Flag values; unset optionals leave the config file (or default) in place.
struct Flags {
  std::string config_path;
  std::optional<double> alpha, beta;
  std::optional<std::int64_t> k, n_crops, split_layer, workers;
  std::optional<double> tau, patch_temperature;
  std::optional<std::uint64_t> seed, reference_seed;
  std::optional<std::string> branches, backend, models_dir, catalog, class_mapping;
  bool include_full_image = false;
  bool baseline = false;
};

void add_run_flags(CLI::App* app, Flags& f) {
  app->add_option("--config", f.config_path, "JSON config; flags override its values")->check(CLI::ExistingFile);
  app->add_option("--alpha", f.alpha, "lower bound of the crop side fraction");
  app->add_option("--beta", f.beta, "upper bound of the crop side fraction");
  app->add_option("--k", f.k, "top-k attention patches kept as anchor candidates");
  app->add_option("--n-crops", f.n_crops, "crops per branch (N)");
  app->add_option("--tau", f.tau, "description soft-match temperature");
  app->add_option("--patch-temperature", f.patch_temperature, "softmax temperature over top-k attention");
  app->add_option("--seed", f.seed, "global sampling seed");
  app->add_option("--split-layer", f.split_layer, "encoder split layer (0: as built/exported)");
  app->add_flag("--include-full-image", f.include_full_image, "add the whole-image embedding to the crop set");
  app->add_option("--branches", f.branches, "both | raw_only | feature_only");
  app->add_option("--workers", f.workers, "image-level worker threads");
  app->add_option("--backend", f.backend, "onnx | reference");
  app->add_option("--reference-seed", f.reference_seed, "weight seed of the reference encoder");
  app->add_option("--models-dir", f.models_dir, "directory holding encoder/ and attention/");
  app->add_option("--catalog", f.catalog, "catalog.json (embeddings in the sibling .abst)");
  app->add_option("--class-mapping", f.class_mapping, "JSON object: dataset directory -> catalog class");
  app->add_flag("--baseline", f.baseline, "plain full-image scoring against class prototypes");
}

RunConfig resolve(const Flags& f) {
  RunConfig c = f.config_path.empty() ? RunConfig{} : load_config(f.config_path);
  if (f.alpha) c.alpha = *f.alpha;
  if (f.beta) c.beta = *f.beta;
  if (f.k) c.k = *f.k;
  if (f.n_crops) c.n_crops = *f.n_crops;
  if (f.tau) c.tau = *f.tau;
  if (f.patch_temperature) c.patch_temperature = *f.patch_temperature;
  if (f.seed) c.seed = *f.seed;
  if (f.split_layer) c.split_layer = *f.split_layer;
  if (f.include_full_image) c.include_full_image = true;
  if (f.branches) c.branches = parse_branch_mode(*f.branches);
  if (f.workers) c.workers = *f.workers;
  if (f.backend) c.backend = *f.backend;
  if (f.reference_seed) c.reference_seed = *f.reference_seed;
  if (f.models_dir) c.models_dir = *f.models_dir;
  if (f.catalog) c.catalog = *f.catalog;
  if (f.class_mapping) c.class_mapping = *f.class_mapping;
  c.validate();
  return c;
}

DescriptionCatalog require_catalog(const RunConfig& c, const Backends& b) {
  if (c.catalog.empty()) throw ConfigError("--catalog is required");
  auto catalog = load_catalog(c.catalog);
  if (catalog.dim() != b.encoder->spec().embed_dim) {
    throw ConfigError("catalog embed_dim " + std::to_string(catalog.dim()) + " does not match the encoder's " +
                      std::to_string(b.encoder->spec().embed_dim));
  }
  return catalog;
}

int cmd_classify(const Flags& f, const std::string& image_path) {
  const auto config = resolve(f);
  const auto backends = load_backends(config);
  const auto catalog = require_catalog(config, backends);
  const auto image = decode_image(image_path);
  const auto id = fs::path(image_path).filename().string();
  const auto result = f.baseline ? run_baseline(image, id, config, backends, catalog)
                                 : run_image(image, id, config, backends, catalog);
  std::cout << to_json(result, catalog).dump(2) << '\n';
  return 0;
}

int cmd_eval(const Flags& f, std::string dataset, std::string output) {
  auto config = resolve(f);
  if (dataset.empty()) dataset = config.dataset.string();
  if (output.empty()) output = config.output.string();
  if (dataset.empty()) throw ConfigError("a dataset directory is required");
  const auto backends = load_backends(config);
  const auto catalog = require_catalog(config, backends);

  EvalOptions options;
  options.baseline = f.baseline;
  options.on_warning = [](const std::string& msg) { std::cerr << "warning: " << msg << '\n'; };
  if (!output.empty()) {
    fs::create_directories(output);
    options.jsonl = fs::path(output) / "results.jsonl";
  }
  const auto report = evaluate_dataset(dataset, config, backends, catalog, options);
  for (const auto& e : report.errors) std::cerr << "error: " << e.image_id << ": " << e.message << '\n';
  const auto text = to_json(report).dump(2);
  if (!output.empty()) {
    std::ofstream(fs::path(output) / "report.json") << text << '\n';
  }
  std::cout << text << '\n';
  return 0;
}

int cmd_overlay(const Flags& f, const std::string& image_path, const std::string& out_path) {
  const auto config = resolve(f);
  const auto backends = load_backends(config);
  const auto catalog = require_catalog(config, backends);
  const auto image = decode_image(image_path);
  const auto result = run_image(image, fs::path(image_path).filename().string(), config, backends, catalog);
  std::vector<CropBox> boxes;
  for (const auto& tag : result.crops) {
    if (tag.branch != Branch::kFull && (tag.branch == Branch::kRaw || !config.raw_enabled())) boxes.push_back(tag.box);
  }
  write_png(render_overlay(image, *result.attention, boxes), out_path);
  std::cerr << "predicted " << result.predicted_name << ", wrote " << out_path << '\n';
  return 0;
}

int cmd_selftest(const std::string& backend_dir, const std::string& write_golden) {
  if (!write_golden.empty()) {
    write_goldens(compute_goldens(), write_golden);
    std::cout << "wrote goldens to " << write_golden << '\n';
    return 0;
  }
  const auto checks = backend_dir.empty() ? run_reference_selftest() : run_backend_selftest(backend_dir);
  bool ok = true;
  for (const auto& c : checks) {
    std::cout << (c.passed ? "PASS  " : "FAIL  ") << c.name << ": " << c.detail << '\n';
    ok = ok && c.passed;
  }
  return ok ? 0 : 1;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Zero-shot image classification with attention-based crop selection"};
  app.require_subcommand(1);

  Flags flags;
  std::string image, dataset, output, overlay_out, backend_dir, write_golden, synth_dir;

  auto* classify = app.add_subcommand("classify", "classify one image; JSON result on stdout");
  add_run_flags(classify, flags);
  classify->add_option("image", image, "PNG or JPEG")->required()->check(CLI::ExistingFile);

  auto* eval = app.add_subcommand("eval", "evaluate a dataset of class subdirectories");
  add_run_flags(eval, flags);
  eval->add_option("dataset", dataset, "dataset root (one directory per class)");
  eval->add_option("--output", output, "write report.json and results.jsonl here");

  auto* overlay = app.add_subcommand("overlay", "render the attention heatmap and crop boxes");
  add_run_flags(overlay, flags);
  overlay->add_option("image", image, "PNG or JPEG")->required()->check(CLI::ExistingFile);
  overlay->add_option("--out", overlay_out, "output PNG")->required();

  auto* selftest = app.add_subcommand("selftest", "reference-stack golden suite, or check exported graphs");
  selftest->add_option("--backend", backend_dir, "exported graph directory to check")->check(CLI::ExistingDirectory);
  selftest->add_option("--write-golden", write_golden, "recompute goldens into this directory");

  auto* synth = app.add_subcommand("synth", "write the synthetic reference world (dataset, catalog, config)");
  synth->add_option("dir", synth_dir, "output directory")->required();

  CLI11_PARSE(app, argc, argv);

  try {
    if (classify->parsed()) return cmd_classify(flags, image);
    if (eval->parsed()) return cmd_eval(flags, dataset, output);
    if (overlay->parsed()) return cmd_overlay(flags, image, overlay_out);
    if (selftest->parsed()) return cmd_selftest(backend_dir, write_golden);
    if (synth->parsed()) {
      write_synthetic_world(make_synthetic_world(), synth_dir);
      std::cout << "wrote " << synth_dir << '\n';
      return 0;
    }
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  return 0;
}
