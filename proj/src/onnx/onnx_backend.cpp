#include <algorithm>
#include <optional>

#include "attnsel/backend.h"
#include "attnsel/errors.h"
#include "onnx/onnx_graph.h"

namespace attnsel {

namespace fs = std::filesystem;
using onnx::Graph;
using onnx::Value;

namespace {

Graph load_graph(const fs::path& path, const std::vector<std::string>& inputs, const std::vector<std::string>& outputs) {
  if (!fs::exists(path)) throw FormatError("missing ONNX graph: " + path.string());
  auto g = Graph::load(path);
  for (const auto& name : inputs) {
    if (std::find(g.input_names().begin(), g.input_names().end(), name) == g.input_names().end()) {
      throw FormatError(path.string() + ": expected graph input '" + name + "'");
    }
  }
  for (const auto& name : outputs) {
    if (std::find(g.output_names().begin(), g.output_names().end(), name) == g.output_names().end()) {
      throw FormatError(path.string() + ": expected graph output '" + name + "'");
    }
  }
  return g;
}

Value image_feed(const Tensor& input) {
  auto s = input.shape();
  s.insert(s.begin(), 1);
  return Value::floats(s, {input.f32().begin(), input.f32().end()});
}

void expect_shape(const Value& v, const Shape& shape, const std::string& what) {
  if (v.shape != shape || !v.is_float()) {
    throw BackendError(what + " has shape " + shape_string(v.shape) + ", expected " + shape_string(shape));
  }
}

class OnnxSplitEncoder final : public SplitEncoder {
 public:
  explicit OnnxSplitEncoder(const fs::path& dir)
      : dir_(dir),
        spec_(load_model_spec(dir / "model_spec.json")),
        prefix_(load_graph(dir / "prefix.onnx", {"image"}, {"cls", "tokens"})),
        suffix_(load_graph(dir / "suffix.onnx", {"sequence"}, {"embedding"})) {
    if (fs::exists(dir / "image.onnx")) full_ = load_graph(dir / "image.onnx", {"image"}, {"embedding"});
  }

  const SplitEncoderSpec& spec() const override { return spec_; }
  std::string model_id() const override { return "onnx:" + dir_.string(); }

  TokenGrid encode_prefix(const Tensor& input) const override {
    check_image_input(input);
    auto out = prefix_.run({{"image", image_feed(input)}}, {"cls", "tokens"});
    const auto d = spec_.d_model;
    const auto& cls = out.at("cls");
    const auto& tokens = out.at("tokens");
    expect_shape(cls, {1, 1, d}, model_id() + " prefix output 'cls'");
    expect_shape(tokens, {1, spec_.patch_count(), d}, model_id() + " prefix output 'tokens'");
    TokenGrid grid;
    grid.grid = spec_.grid;
    grid.d_model = d;
    grid.split_layer = spec_.split_layer;
    grid.cls = cls.f;
    grid.tokens = Tensor::from_f32({spec_.grid.rows, spec_.grid.cols, d}, tokens.f);
    grid.validate();
    return grid;
  }

  UnitVector encode_suffix(const Tensor& seq) const override {
    check_sequence_input(seq);
    auto s = seq.shape();
    s.insert(s.begin(), 1);
    auto out = suffix_.run({{"sequence", Value::floats(s, {seq.f32().begin(), seq.f32().end()})}}, {"embedding"});
    return embedding(out.at("embedding"), "suffix");
  }

  UnitVector encode_image(const Tensor& input) const override {
    check_image_input(input);
    if (full_) {
      auto out = full_->run({{"image", image_feed(input)}}, {"embedding"});
      return embedding(out.at("embedding"), "image");
    }
    const auto grid = encode_prefix(input);
    return encode_suffix(assemble_crop_sequence(grid.cls, grid.tokens));
  }

 private:
  UnitVector embedding(const Value& v, const char* graph) const {
    expect_shape(v, {1, spec_.embed_dim}, model_id() + " " + graph + " output 'embedding'");
    return l2_normalize(v.f);
  }

  fs::path dir_;
  SplitEncoderSpec spec_;
  Graph prefix_;
  Graph suffix_;
  std::optional<Graph> full_;
};

class OnnxAttentionSource final : public AttentionSource {
 public:
  explicit OnnxAttentionSource(const fs::path& dir)
      : dir_(dir),
        spec_(load_model_spec(dir / "model_spec.json", false)),
        graph_(load_graph(dir / "attention.onnx", {"image"}, {"cls_attn"})) {}

  const EncoderInputSpec& input_spec() const override { return spec_.input; }
  GridDims grid() const override { return spec_.grid; }
  std::string model_id() const override { return "onnx:" + dir_.string(); }

  MultiHeadClsAttention cls_attention(const Tensor& input) const override {
    const auto s = spec_.input.input_size;
    if (input.dtype() != DType::kF32 || input.shape() != Shape{3, s, s}) {
      throw ArgumentError(model_id() + ": image input must be f32 [3," + std::to_string(s) + "," + std::to_string(s) +
                          "], got " + shape_string(input.shape()));
    }
    auto out = graph_.run({{"image", image_feed(input)}}, {"cls_attn"});
    const auto& a = out.at("cls_attn");
    if (!a.is_float() || a.rank() != 3 || a.shape[0] != 1 || a.shape[2] != spec_.grid.count()) {
      throw BackendError(model_id() + ": 'cls_attn' has shape " + shape_string(a.shape) + ", expected [1,heads," +
                         std::to_string(spec_.grid.count()) + "]");
    }
    return MultiHeadClsAttention(Tensor::from_f32({a.shape[1], spec_.grid.rows, spec_.grid.cols}, a.f));
  }

 private:
  fs::path dir_;
  SplitEncoderSpec spec_;
  Graph graph_;
};

}  // namespace

std::shared_ptr<SplitEncoder> load_onnx_encoder(const fs::path& dir) {
  return std::make_shared<OnnxSplitEncoder>(dir);
}

std::shared_ptr<AttentionSource> load_onnx_attention(const fs::path& dir) {
  return std::make_shared<OnnxAttentionSource>(dir);
}

}  // namespace attnsel
