#include "attnsel/selftest.h"

#include <unistd.h>

#include <cmath>
#include <cstdlib>
#include <fstream>
#include <sstream>

#include <nlohmann/json.hpp>

#include "attnsel/errors.h"
#include "attnsel/pipeline.h"
#include "attnsel/rng.h"
#include "attnsel/synthetic.h"

namespace attnsel {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

class ScratchDir {
 public:
  explicit ScratchDir(const fs::path& requested) {
    if (!requested.empty()) {
      path_ = requested;
      fs::create_directories(path_);
      return;
    }
    auto tmpl = (fs::temp_directory_path() / "attnsel-XXXXXX").string();
    if (!mkdtemp(tmpl.data())) throw std::runtime_error("cannot create a temp directory");
    path_ = tmpl;
    owned_ = true;
  }
  ~ScratchDir() {
    std::error_code ec;
    if (owned_) fs::remove_all(path_, ec);
  }
  ScratchDir(const ScratchDir&) = delete;
  ScratchDir& operator=(const ScratchDir&) = delete;

  const fs::path& path() const { return path_; }

 private:
  fs::path path_;
  bool owned_ = false;
};

std::string embedding_json(const UnitVector& v) {
  return json{{"model", "reference-vit"}, {"seed", kSyntheticEncoderSeed}, {"embedding", v.values()}}.dump(2);
}

Tensor random_input(const EncoderInputSpec& spec, Rng& rng) {
  const auto s = spec.input_size;
  std::vector<float> v(static_cast<std::size_t>(3 * s * s));
  for (auto& x : v) x = static_cast<float>(rng.uniform(-2.0, 2.0));
  return Tensor::from_f32({3, s, s}, std::move(v));
}

std::string fmt_err(double e) {
  std::ostringstream os;
  os << "max |diff| = " << e;
  return os.str();
}

CheckResult composition_check(const SplitEncoder& enc, int probes, double tol) {
  Rng rng(mix64(0xc0ffee, static_cast<std::uint64_t>(probes)));
  double worst = 0.0;
  for (int i = 0; i < probes; ++i) {
    const auto x = random_input(enc.spec().input, rng);
    const auto grid = enc.encode_prefix(x);
    const auto composed = enc.encode_suffix(assemble_crop_sequence(grid.cls, grid.tokens));
    worst = std::max(worst, max_abs_diff(enc.encode_image(x), composed));
  }
  return {"split composition identity (" + enc.model_id() + ")", worst <= tol, fmt_err(worst)};
}

CheckResult full_box_check(const SplitEncoder& enc, int probes, double tol) {
  Rng rng(mix64(0xf011, static_cast<std::uint64_t>(probes)));
  double worst = 0.0;
  for (int i = 0; i < probes; ++i) {
    const auto w = 24 + static_cast<std::int64_t>(rng.uniform01() * 40.0);
    const auto h = 24 + static_cast<std::int64_t>(rng.uniform01() * 40.0);
    std::vector<std::uint8_t> px(static_cast<std::size_t>(w * h * 3));
    for (auto& p : px) p = static_cast<std::uint8_t>(rng.uniform01() * 256.0);
    const ImageTensor img(w, h, std::move(px));
    const auto box = full_image_box(img.size());
    const auto input = crop_and_preprocess(img, box, enc.spec().input);
    const auto grid = enc.encode_prefix(input);
    const auto tb = map_box_to_tokens(box, img.size(), grid.grid);
    const auto seq = assemble_crop_sequence(grid.cls, resize_token_grid(crop_token_grid(grid, tb), grid.grid));
    worst = std::max(worst, max_abs_diff(enc.encode_image(input), enc.encode_suffix(seq)));
  }
  return {"feature full-box identity (" + enc.model_id() + ")", worst <= tol, fmt_err(worst)};
}

CheckResult compare_golden(const std::string& name, const std::string& expected, const std::string& actual) {
  if (expected.empty()) return {name, false, "no frozen golden compiled in"};
  if (expected == actual) return {name, true, "identical"};
  return {name, false, "output differs from frozen golden"};
}

}  // namespace

GoldenSet compute_goldens(const fs::path& work_dir) {
  ScratchDir scratch(work_dir);
  auto world = make_synthetic_world();
  GoldenSet g;
  const auto& enc = *world.backends.encoder;
  g.embedding = embedding_json(enc.encode_image(golden_probe_input(enc.spec().input)));

  const auto& first = world.items.front();
  auto result = run_image(first.image, first.id, world.config, world.backends, world.catalog);
  result.label = first.label;
  g.image_result = to_json(result, world.catalog, false).dump(2);

  std::vector<CropBox> boxes;
  for (const auto& tag : result.crops) {
    if (tag.branch == Branch::kRaw) boxes.push_back(tag.box);
  }
  g.overlay_png = encode_png(render_overlay(first.image, *result.attention, boxes));

  write_synthetic_world(world, scratch.path());
  const auto report = evaluate_dataset(scratch.path() / "dataset", world.config, world.backends, world.catalog);
  g.eval_report = canonical_report_json(report);
  return g;
}

void write_goldens(const GoldenSet& g, const fs::path& dir) {
  fs::create_directories(dir);
  auto put = [&](const char* name, const std::string& text) {
    std::ofstream out(dir / name, std::ios::binary);
    out << text;
  };
  put("reference_embedding.json", g.embedding);
  put("image_result.json", g.image_result);
  put("eval_report.json", g.eval_report);
  std::ofstream png(dir / "overlay.png", std::ios::binary);
  png.write(reinterpret_cast<const char*>(g.overlay_png.data()), static_cast<std::streamsize>(g.overlay_png.size()));
}

std::vector<CheckResult> run_reference_selftest() {
  std::vector<CheckResult> out;
  auto world = make_synthetic_world();
  const auto& enc = *world.backends.encoder;
  out.push_back(composition_check(enc, 10, 1e-5));
  out.push_back(full_box_check(enc, 5, 1e-4));

  const auto& frozen = builtin_goldens();
  ScratchDir scratch({});
  const auto current = compute_goldens(scratch.path() / "golden");
  out.push_back(compare_golden("golden reference embedding", frozen.embedding, current.embedding));
  out.push_back(compare_golden("golden image result", frozen.image_result, current.image_result));
  out.push_back(compare_golden("golden eval report", frozen.eval_report, current.eval_report));

  write_synthetic_world(world, scratch.path() / "world");
  const auto root = scratch.path() / "world" / "dataset";
  auto parallel = world.config;
  parallel.workers = 4;
  const auto serial_report = evaluate_dataset(root, world.config, world.backends, world.catalog);
  const auto parallel_report = evaluate_dataset(root, parallel, world.backends, world.catalog);
  const bool same = canonical_report_json(serial_report) == canonical_report_json(parallel_report);
  out.push_back({"parallel eval matches serial", same, same ? "identical" : "reports differ"});
  const bool all_correct = serial_report.correct == serial_report.image_count && serial_report.image_count == 12;
  out.push_back({"synthetic dataset accuracy", all_correct,
                 std::to_string(serial_report.correct) + "/" + std::to_string(serial_report.image_count)});
  return out;
}

std::vector<CheckResult> run_backend_selftest(const fs::path& dir) {
  if (fs::is_directory(dir / "encoder") || fs::is_directory(dir / "attention")) {
    std::vector<CheckResult> out;
    for (const char* sub : {"encoder", "attention"}) {
      if (!fs::is_directory(dir / sub)) continue;
      auto part = run_backend_selftest(dir / sub);
      out.insert(out.end(), part.begin(), part.end());
    }
    return out;
  }

  std::vector<CheckResult> out;
  bool any = false;
  if (fs::exists(dir / "prefix.onnx")) {
    any = true;
    try {
      const auto enc = load_onnx_encoder(dir);
      out.push_back(composition_check(*enc, 5, 1e-4));
      out.push_back(full_box_check(*enc, 3, 1e-4));
    } catch (const std::exception& e) {
      out.push_back({"load encoder graphs (" + dir.string() + ")", false, e.what()});
    }
  }
  if (fs::exists(dir / "attention.onnx")) {
    any = true;
    try {
      const auto src = load_onnx_attention(dir);
      Rng rng(0xa77e);
      const auto heads = src->cls_attention(random_input(src->input_spec(), rng));
      const auto grid = average_heads(heads);
      double total = 0.0;
      for (float v : grid.values().f32()) total += v;
      const bool ok = total > 0.0 && total <= 1.0 + 1e-4;
      std::ostringstream os;
      os << heads.heads() << " heads, " << grid.grid().rows << "x" << grid.grid().cols << " grid, mass " << total;
      out.push_back({"attention graph (" + src->model_id() + ")", ok, os.str()});
    } catch (const std::exception& e) {
      out.push_back({"attention graph (" + dir.string() + ")", false, e.what()});
    }
  }
  if (!any) out.push_back({"backend directory", false, "no prefix.onnx or attention.onnx in " + dir.string()});
  return out;
}

}  // namespace attnsel
