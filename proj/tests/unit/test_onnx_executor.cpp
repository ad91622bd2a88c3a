#include <doctest.h>

#include <cmath>
#include <fstream>

#include <nlohmann/json.hpp>

#include "attnsel/backend.h"
#include "attnsel/errors.h"
#include "attnsel/feat_select.h"
#include "attnsel/tensor_io.h"
#include "onnx/onnx_graph.h"
#include "test_support.h"

using namespace attnsel;
using nlohmann::json;

namespace {

std::filesystem::path exported() { return testing::fixture_dir() / "export"; }

onnx::Value value_from_json(const json& j) {
  const auto shape = j.at("shape").get<std::vector<std::int64_t>>();
  const auto dtype = j.at("dtype").get<std::string>();
  if (dtype == "float") return onnx::Value::floats(shape, j.at("data").get<std::vector<float>>());
  auto data = j.at("data").get<std::vector<std::int64_t>>();
  return dtype == "bool" ? onnx::Value::bools(shape, std::move(data)) : onnx::Value::ints(shape, std::move(data));
}

double worst_diff(std::span<const float> a, std::span<const float> b) {
  REQUIRE(a.size() == b.size());
  double worst = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) worst = std::max(worst, static_cast<double>(std::fabs(a[i] - b[i])));
  return worst;
}

std::vector<float> normalized(std::span<const float> v) {
  double s = 0.0;
  for (float x : v) s += static_cast<double>(x) * x;
  std::vector<float> out(v.begin(), v.end());
  for (auto& x : out) x = static_cast<float>(x / std::sqrt(s));
  return out;
}

}  // namespace

TEST_CASE("single-op graphs match onnxruntime") {
  std::ifstream in(exported() / "op_cases.json");
  const auto cases = json::parse(in).at("cases");
  REQUIRE(cases.size() > 50);
  for (const auto& c : cases) {
    const auto name = c.at("name").get<std::string>();
    CAPTURE(name);
    const auto graph = onnx::Graph::load(exported() / c.at("model").get<std::string>());
    std::map<std::string, onnx::Value> feeds;
    for (const auto& [k, v] : c.at("inputs").items()) feeds.emplace(k, value_from_json(v));
    const auto got = graph.run(feeds);
    for (const auto& [k, v] : c.at("outputs").items()) {
      CAPTURE(k);
      REQUIRE(got.count(k) == 1);
      const auto want = value_from_json(v);
      const auto& out = got.at(k);
      CHECK(out.shape == want.shape);
      CHECK(out.kind == want.kind);
      if (want.is_float()) {
        REQUIRE(out.f.size() == want.f.size());
        for (std::size_t i = 0; i < want.f.size(); ++i) {
          CHECK(std::fabs(out.f[i] - want.f[i]) <= 1e-5f * std::max(1.0f, std::fabs(want.f[i])));
        }
      } else {
        CHECK(out.i == want.i);
      }
    }
  }
}

TEST_CASE("exported encoder matches onnxruntime on the probe") {
  const auto enc = load_onnx_encoder(exported() / "models/encoder");
  CHECK(enc->spec().d_model == 32);
  CHECK(enc->spec().split_layer == 2);
  const auto image = read_tensor(exported() / "probe/image.abst");

  const auto grid = enc->encode_prefix(image);
  CHECK(grid.grid == GridDims{4, 4});
  CHECK(worst_diff(grid.cls, read_tensor(exported() / "probe/cls.abst").f32()) <= 1e-4);
  CHECK(worst_diff(grid.tokens.f32(), read_tensor(exported() / "probe/tokens.abst").f32()) <= 1e-4);

  const auto seq = read_tensor(exported() / "probe/sequence.abst");
  const auto suffix = enc->encode_suffix(seq);
  CHECK(worst_diff(suffix.values(), normalized(read_tensor(exported() / "probe/suffix_embedding.abst").f32())) <= 1e-4);

  const auto full = enc->encode_image(image);
  CHECK(worst_diff(full.values(), normalized(read_tensor(exported() / "probe/image_embedding.abst").f32())) <= 1e-4);

  // The split graphs compose to the unsplit graph.
  const auto via = enc->encode_suffix(assemble_crop_sequence(grid.cls, grid.tokens));
  CHECK(max_abs_diff(via, full) <= 1e-4);
}

TEST_CASE("exported attention matches onnxruntime on the probe") {
  const auto att = load_onnx_attention(exported() / "models/attention");
  CHECK(att->grid() == GridDims{4, 4});
  const auto a = att->cls_attention(read_tensor(exported() / "probe/image.abst"));
  CHECK(a.values().shape() == Shape{4, 4, 4});
  CHECK(worst_diff(a.values().f32(), read_tensor(exported() / "probe/cls_attn.abst").f32()) <= 1e-5);
}

TEST_CASE("bad graphs and directories are rejected") {
  CHECK_THROWS_AS(onnx::Graph::load(exported() / "errors/unsupported_op.onnx"), FormatError);
  try {
    onnx::Graph::load(exported() / "errors/unsupported_op.onnx");
  } catch (const FormatError& e) {
    CHECK(std::string(e.what()).find("LpPool") != std::string::npos);
  }
  CHECK_THROWS_AS(onnx::Graph::load(exported() / "errors/garbage.onnx"), FormatError);
  CHECK_THROWS_AS(onnx::Graph::load(exported() / "errors/absent.onnx"), FormatError);
  CHECK_THROWS_AS(load_onnx_encoder(exported() / "models/attention"), FormatError);

  const auto graph = onnx::Graph::load(exported() / "ops/relu.onnx");
  CHECK_THROWS_AS(graph.run({}), BackendError);
}

TEST_CASE("model spec that disagrees with the graphs fails at run time") {
  testing::TempDir dir;
  for (const auto* f : {"prefix.onnx", "suffix.onnx"}) {
    std::filesystem::copy_file(exported() / "models/encoder" / f, dir / f);
  }
  auto spec = load_model_spec(exported() / "models/encoder/model_spec.json");
  spec.d_model = 16;
  save_model_spec(spec, dir / "model_spec.json");
  const auto enc = load_onnx_encoder(dir.path());
  const auto image = read_tensor(exported() / "probe/image.abst");
  CHECK_THROWS_AS(enc->encode_prefix(image), BackendError);
}
