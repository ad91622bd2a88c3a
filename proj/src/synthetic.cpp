#include "attnsel/synthetic.h"

#include <algorithm>
#include <array>
#include <fstream>

#include "attnsel/rng.h"

namespace attnsel {

namespace fs = std::filesystem;

namespace {

struct ClassColor {
  const char* name;
  std::array<int, 3> rgb;
};

constexpr std::array<ClassColor, 3> kClasses{{
    {"red", {200, 40, 40}},
    {"green", {40, 180, 60}},
    {"blue", {40, 60, 200}},
}};
constexpr std::int64_t kImagesPerClass = 4;
constexpr std::array<const char*, 4> kShades{"dark", "deep", "plain", "bright"};

std::uint8_t clamp_u8(double v) { return static_cast<std::uint8_t>(std::clamp(v, 0.0, 255.0)); }

// Class-colored field with per-pixel noise; `scale` brightens or darkens it.
ImageTensor swatch(const ClassColor& c, std::int64_t w, std::int64_t h, double scale, double noise, Rng& rng) {
  std::vector<std::uint8_t> px(static_cast<std::size_t>(w * h * 3));
  for (std::size_t i = 0; i < px.size(); ++i) {
    px[i] = clamp_u8(c.rgb[i % 3] * scale + noise * (2.0 * rng.uniform01() - 1.0));
  }
  return ImageTensor(w, h, std::move(px));
}

}  // namespace

RunConfig synthetic_config() {
  RunConfig c;
  c.backend = "reference";
  c.reference_seed = kSyntheticEncoderSeed;
  c.seed = kSyntheticRunSeed;
  c.k = 6;
  c.n_crops = 8;
  c.split_layer = 1;
  return c;
}

ImageTensor synthetic_image(std::int64_t class_index, std::int64_t variant) {
  const auto& c = kClasses.at(static_cast<std::size_t>(class_index));
  Rng rng(mix64(kSyntheticRunSeed, static_cast<std::uint64_t>(class_index * 16 + variant)));
  const auto w = 40 + 8 * variant;
  const auto h = 32 + 6 * (variant % 3);
  auto img = swatch(c, w, h, 0.8, 30.0, rng);

  // Brighter blob somewhere in the frame.
  const auto bw = w / 3;
  const auto bh = h / 3;
  const auto bx = static_cast<std::int64_t>(rng.uniform01() * static_cast<double>(w - bw));
  const auto by = static_cast<std::int64_t>(rng.uniform01() * static_cast<double>(h - bh));
  auto& px = img.pixels();
  for (std::int64_t y = by; y < by + bh; ++y) {
    for (std::int64_t x = bx; x < bx + bw; ++x) {
      for (int ch = 0; ch < 3; ++ch) {
        px[static_cast<std::size_t>((y * w + x) * 3 + ch)] = clamp_u8(c.rgb[static_cast<std::size_t>(ch)] * 1.2 + 20.0);
      }
    }
  }
  return img;
}

SyntheticWorld make_synthetic_world() {
  SyntheticWorld world;
  world.config = synthetic_config();
  world.backends = load_backends(world.config);
  const auto& enc = *world.backends.encoder;

  std::vector<std::string> names;
  std::vector<std::vector<std::vector<float>>> rows;
  std::vector<std::vector<std::string>> descriptions;
  for (std::size_t k = 0; k < kClasses.size(); ++k) {
    names.emplace_back(kClasses[k].name);
    auto& group = rows.emplace_back();
    auto& text = descriptions.emplace_back();
    Rng rng(mix64(kSyntheticEncoderSeed, 1000 + k));
    const auto m = 2 + k;
    for (std::size_t d = 0; d < m; ++d) {
      const double scale = 0.6 + 0.2 * static_cast<double>(d);
      const auto img = swatch(kClasses[k], 32, 32, scale, 20.0, rng);
      const auto e = enc.encode_image(crop_and_preprocess(img, full_image_box(img.size()), enc.spec().input));
      group.emplace_back(e.values().begin(), e.values().end());
      text.push_back(std::string("a ") + kShades[d] + " " + kClasses[k].name + " surface");
    }
  }
  world.catalog = DescriptionCatalog::from_rows(names, rows, enc.model_id());
  auto classes = world.catalog.classes();
  for (std::size_t k = 0; k < classes.size(); ++k) classes[k].descriptions = descriptions[k];
  world.catalog = DescriptionCatalog(std::move(classes), world.catalog.embeddings(), enc.model_id());

  for (std::size_t k = 0; k < kClasses.size(); ++k) {
    for (std::int64_t v = 0; v < kImagesPerClass; ++v) {
      const std::string name = kClasses[k].name;
      world.items.push_back({name + "/" + name + "_0" + std::to_string(v) + ".png", name,
                             synthetic_image(static_cast<std::int64_t>(k), v)});
    }
  }
  return world;
}

void write_synthetic_world(const SyntheticWorld& world, const fs::path& dir) {
  fs::create_directories(dir / "dataset");
  for (const auto& item : world.items) {
    const auto path = dir / "dataset" / item.id;
    fs::create_directories(path.parent_path());
    write_png(item.image, path);
  }
  save_catalog(world.catalog, dir / "catalog.json");
  auto cfg = to_json(world.config);
  cfg["catalog"] = fs::absolute(dir / "catalog.json").string();
  cfg["dataset"] = fs::absolute(dir / "dataset").string();
  cfg.erase("models_dir");
  cfg.erase("class_mapping");
  std::ofstream out(dir / "config.json");
  out << cfg.dump(2) << '\n';
}

Tensor golden_probe_input(const EncoderInputSpec& spec) {
  const auto s = spec.input_size;
  Rng rng(0x5eed);
  std::vector<float> v(static_cast<std::size_t>(3 * s * s));
  for (auto& x : v) x = static_cast<float>(rng.uniform(-2.0, 2.0));
  return Tensor::from_f32({3, s, s}, std::move(v));
}

}  // namespace attnsel
