#include <doctest.h>

#include <algorithm>
#include <fstream>
#include <iterator>
#include <tuple>

#include "attnsel/errors.h"
#include "attnsel/pipeline.h"
#include "attnsel/scoring.h"
#include "attnsel/synthetic.h"
#include "test_support.h"

using namespace attnsel;

namespace {

const SyntheticWorld& world() {
  static const SyntheticWorld w = make_synthetic_world();
  return w;
}

std::string slurp(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

using TagKey = std::tuple<int, std::int64_t, std::int64_t, std::int64_t, std::int64_t, std::int64_t>;

std::vector<TagKey> tag_keys(const std::vector<EmbeddingTag>& tags) {
  std::vector<TagKey> keys;
  for (const auto& t : tags) {
    keys.emplace_back(static_cast<int>(t.branch), t.sample_index, t.box.x0, t.box.y0, t.box.width, t.box.height);
  }
  std::sort(keys.begin(), keys.end());
  return keys;
}

}  // namespace

TEST_CASE("image seeds depend on the global seed and the image id") {
  CHECK(image_seed(7, "a/b.png") == mix64(7, stable_hash("a/b.png")));
  CHECK(image_seed(7, "a/b.png") != image_seed(8, "a/b.png"));
  CHECK(image_seed(7, "a/b.png") != image_seed(7, "a/c.png"));
}

TEST_CASE("run_image is deterministic and shaped by the config") {
  const auto& w = world();
  const auto& item = w.items.front();
  const auto a = run_image(item.image, item.id, w.config, w.backends, w.catalog);
  const auto b = run_image(item.image, item.id, w.config, w.backends, w.catalog);
  CHECK(a.scores == b.scores);
  CHECK(a.crops.size() == static_cast<std::size_t>(2 * w.config.n_crops));
  CHECK(a.scores.size() == 3);
  CHECK(a.predicted_name == item.label);
  CHECK(to_json(a, w.catalog, false) == to_json(b, w.catalog, false));
  for (const auto& t : a.crops) {
    CHECK(t.box.inside(item.image.size()));
    if (t.branch == Branch::kFeature) CHECK(t.token_box.has_value());
  }
}

TEST_CASE("different seeds give different boxes and both seeds are recorded") {
  const auto& w = world();
  const auto& item = w.items[4];
  auto c8 = w.config;
  c8.seed = 8;
  const auto a = run_image(item.image, item.id, w.config, w.backends, w.catalog);
  const auto b = run_image(item.image, item.id, c8, w.backends, w.catalog);
  CHECK(tag_keys(a.crops) != tag_keys(b.crops));
  const auto ja = to_json(a, w.catalog);
  const auto jb = to_json(b, w.catalog);
  CHECK(ja["seed"] == 7);
  CHECK(jb["seed"] == 8);
  CHECK(ja["image_seed"] != jb["image_seed"]);
}

TEST_CASE("single full-image raw crop agrees with the baseline") {
  // One description per class so the baseline prototypes are the catalog rows.
  const auto& w = world();
  std::vector<std::vector<std::vector<float>>> rows;
  std::vector<std::string> names;
  for (const auto& p : class_prototypes(w.catalog)) rows.push_back({std::vector<float>(p.values().begin(), p.values().end())});
  for (const auto& c : w.catalog.classes()) names.push_back(c.name);
  const auto cat = DescriptionCatalog::from_rows(names, rows);
  auto config = w.config;
  config.branches = BranchMode::kRawOnly;
  config.n_crops = 1;
  config.alpha = config.beta = 1.0;
  for (const auto& item : w.items) {
    const auto r = run_image(item.image, item.id, config, w.backends, cat);
    const auto base = run_baseline(item.image, item.id, config, w.backends, cat);
    CHECK(r.predicted == base.predicted);
    REQUIRE(r.crops.size() == 1);
    CHECK(r.crops[0].box.width == item.image.width());
    CHECK(r.crops[0].box.height == item.image.height());
  }
}

TEST_CASE("raw-only and feature-only runs union to the two-branch run") {
  const auto& w = world();
  for (std::size_t i : {0, 5, 11}) {
    const auto& item = w.items[i];
    auto raw = w.config, feat = w.config;
    raw.branches = BranchMode::kRawOnly;
    feat.branches = BranchMode::kFeatureOnly;
    const auto both = run_image(item.image, item.id, w.config, w.backends, w.catalog);
    auto tags = run_image(item.image, item.id, raw, w.backends, w.catalog).crops;
    const auto f = run_image(item.image, item.id, feat, w.backends, w.catalog).crops;
    tags.insert(tags.end(), f.begin(), f.end());
    CHECK(tag_keys(tags) == tag_keys(both.crops));
  }
}

TEST_CASE("full image row is added on request") {
  const auto& w = world();
  auto config = w.config;
  config.include_full_image = true;
  const auto r = run_image(w.items[0].image, w.items[0].id, config, w.backends, w.catalog);
  CHECK(r.crops.size() == static_cast<std::size_t>(2 * config.n_crops + 1));
  CHECK(r.crops.back().branch == Branch::kFull);
}

TEST_CASE("timings are non-negative and consistent") {
  const auto& w = world();
  const auto r = run_image(w.items[2].image, w.items[2].id, w.config, w.backends, w.catalog);
  const auto& t = r.timing;
  CHECK(t.crop_preprocess_ms >= 0.0);
  CHECK(t.encoding_ms >= 0.0);
  CHECK(t.scoring_ms >= 0.0);
  CHECK(t.crop_preprocess_ms + t.encoding_ms + t.scoring_ms <= t.total_ms + 1.0);
}

TEST_CASE("k larger than the grid is a config error") {
  const auto& w = world();
  auto config = w.config;
  config.k = 17;
  CHECK_THROWS_AS(run_image(w.items[0].image, w.items[0].id, config, w.backends, w.catalog), ConfigError);
}

TEST_CASE("image result matches the frozen golden") {
  const auto golden = testing::fixture_dir() / "golden/image_result.json";
  REQUIRE(std::filesystem::exists(golden));
  const auto& w = world();
  const auto& item = w.items.front();
  auto r = run_image(item.image, item.id, w.config, w.backends, w.catalog);
  r.label = item.label;
  CHECK(to_json(r, w.catalog, false).dump(2) == slurp(golden));
}

TEST_CASE("overlay rendering") {
  const auto img = ImageTensor::filled(16, 16, 100, 100, 100);
  SUBCASE("uniform attention tints every pixel the same") {
    const AttentionGrid flat(Tensor::from_f32({4, 4}, std::vector<float>(16, 0.25f)));
    const auto out = render_overlay(img, flat, {});
    for (std::int64_t y = 0; y < 16; ++y) {
      for (std::int64_t x = 0; x < 16; ++x) {
        for (int c = 0; c < 3; ++c) CHECK(out.at(x, y, c) == out.at(0, 0, c));
      }
    }
  }
  SUBCASE("one-hot attention lights a single cell") {
    std::vector<float> v(16, 0.0f);
    v[1 * 4 + 2] = 1.0f;
    const auto out = render_overlay(img, AttentionGrid(Tensor::from_f32({4, 4}, v)), {});
    const int hot = out.at(10, 6, 0) + out.at(10, 6, 1) + out.at(10, 6, 2);
    const int cold = out.at(1, 14, 0) + out.at(1, 14, 1) + out.at(1, 14, 2);
    CHECK(out.at(10, 6, 0) > out.at(1, 14, 0));
    CHECK(hot != cold);
    CHECK(out.pixels() == render_overlay(img, AttentionGrid(Tensor::from_f32({4, 4}, v)), {}).pixels());
  }
  SUBCASE("boxes are outlined without changing the size") {
    const AttentionGrid flat(Tensor::from_f32({4, 4}, std::vector<float>(16, 0.25f)));
    const std::vector<CropBox> boxes{{2, 2, 8, 8, {}, 0.5, 0.5}};
    const auto plain = render_overlay(img, flat, {});
    const auto boxed = render_overlay(img, flat, boxes);
    CHECK(boxed.width() == 16);
    CHECK(boxed.pixels() != plain.pixels());
    CHECK(boxed.at(5, 5, 0) == plain.at(5, 5, 0));
  }
  SUBCASE("synthetic overlay is byte-stable against the golden png") {
    const auto golden = testing::fixture_dir() / "golden/overlay.png";
    REQUIRE(std::filesystem::exists(golden));
    const auto& w = world();
    const auto& item = w.items.front();
    const auto r = run_image(item.image, item.id, w.config, w.backends, w.catalog);
    std::vector<CropBox> boxes;
    for (const auto& t : r.crops) {
      if (t.branch == Branch::kRaw) boxes.push_back(t.box);
    }
    const auto png = encode_png(render_overlay(item.image, *r.attention, boxes));
    const auto want = slurp(golden);
    CHECK(std::string(png.begin(), png.end()) == want);
  }
}
