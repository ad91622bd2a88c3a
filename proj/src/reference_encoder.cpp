#include <algorithm>
#include <cmath>
#include <string>

#include "attnsel/backend.h"
#include "attnsel/errors.h"
#include "attnsel/rng.h"

namespace attnsel {

namespace {

constexpr float kLayerNormEps = 1e-5f;

struct Linear {
  std::int64_t in = 0;
  std::int64_t out = 0;
  std::vector<float> w;  // in x out
  std::vector<float> b;  // out

  Linear() = default;
  Linear(std::int64_t in_dim, std::int64_t out_dim, Rng& rng, bool bias = true) : in(in_dim), out(out_dim) {
    const double scale = 1.0 / std::sqrt(static_cast<double>(in_dim));
    w.resize(static_cast<std::size_t>(in * out));
    for (auto& v : w) v = static_cast<float>(rng.normal() * scale);
    b.assign(static_cast<std::size_t>(out), 0.0f);
    if (bias) {
      for (auto& v : b) v = static_cast<float>(rng.normal() * 0.02);
    }
  }

  // x: n x in -> n x out
  std::vector<float> operator()(std::span<const float> x, std::int64_t n) const {
    std::vector<float> y(static_cast<std::size_t>(n * out));
    for (std::int64_t r = 0; r < n; ++r) {
      float* dst = y.data() + r * out;
      std::copy(b.begin(), b.end(), dst);
      const float* src = x.data() + r * in;
      for (std::int64_t k = 0; k < in; ++k) {
        const float xv = src[k];
        const float* wr = w.data() + k * out;
        for (std::int64_t c = 0; c < out; ++c) dst[c] += xv * wr[c];
      }
    }
    return y;
  }
};

struct LayerNorm {
  std::vector<float> gamma;
  std::vector<float> beta;

  LayerNorm() = default;
  LayerNorm(std::int64_t d, Rng& rng) : gamma(static_cast<std::size_t>(d)), beta(static_cast<std::size_t>(d)) {
    for (auto& g : gamma) g = static_cast<float>(1.0 + 0.1 * rng.normal());
    for (auto& v : beta) v = static_cast<float>(0.1 * rng.normal());
  }

  std::vector<float> operator()(std::span<const float> x, std::int64_t n) const {
    const auto d = static_cast<std::int64_t>(gamma.size());
    std::vector<float> y(x.size());
    for (std::int64_t r = 0; r < n; ++r) {
      const float* src = x.data() + r * d;
      double mean = 0.0;
      for (std::int64_t i = 0; i < d; ++i) mean += src[i];
      mean /= static_cast<double>(d);
      double var = 0.0;
      for (std::int64_t i = 0; i < d; ++i) var += (src[i] - mean) * (src[i] - mean);
      var /= static_cast<double>(d);
      const double inv = 1.0 / std::sqrt(var + kLayerNormEps);
      float* dst = y.data() + r * d;
      for (std::int64_t i = 0; i < d; ++i) {
        dst[i] = static_cast<float>((src[i] - mean) * inv) * gamma[static_cast<std::size_t>(i)] +
                 beta[static_cast<std::size_t>(i)];
      }
    }
    return y;
  }
};

struct Block {
  LayerNorm ln1;
  Linear qkv;
  Linear attn_out;
  LayerNorm ln2;
  Linear fc1;
  Linear fc2;
};

float gelu(float x) { return static_cast<float>(0.5 * x * (1.0 + std::erf(x / std::sqrt(2.0)))); }

}  // namespace

struct ReferenceEncoder::Weights {
  Linear patch_embed;
  std::vector<float> cls;
  std::vector<float> pos;  // (1 + P) x d
  LayerNorm ln_pre;
  std::vector<Block> blocks;
  LayerNorm ln_post;
  Linear proj;
  std::int64_t d = 0;
  std::int64_t heads = 0;

  // Self-attention of one block on x (n x d); when `cls_probs` is set the
  // class-token attention row (heads x n) is written there.
  std::vector<float> attention(const Block& blk, std::span<const float> x, std::int64_t n,
                               std::vector<float>* cls_probs) const {
    const auto y = blk.ln1(x, n);
    const auto qkv = blk.qkv(y, n);
    const std::int64_t dh = d / heads;
    const double scale = 1.0 / std::sqrt(static_cast<double>(dh));
    std::vector<float> ctx(static_cast<std::size_t>(n * d), 0.0f);
    std::vector<double> scores(static_cast<std::size_t>(n));
    if (cls_probs) cls_probs->assign(static_cast<std::size_t>(heads * n), 0.0f);
    for (std::int64_t h = 0; h < heads; ++h) {
      for (std::int64_t i = 0; i < n; ++i) {
        const float* q = qkv.data() + i * 3 * d + h * dh;
        double max_s = -INFINITY;
        for (std::int64_t j = 0; j < n; ++j) {
          const float* k = qkv.data() + j * 3 * d + d + h * dh;
          double s = 0.0;
          for (std::int64_t c = 0; c < dh; ++c) s += static_cast<double>(q[c]) * k[c];
          scores[static_cast<std::size_t>(j)] = s * scale;
          max_s = std::max(max_s, s * scale);
        }
        double total = 0.0;
        for (auto& s : scores) {
          s = std::exp(s - max_s);
          total += s;
        }
        float* out = ctx.data() + i * d + h * dh;
        for (std::int64_t j = 0; j < n; ++j) {
          const double p = scores[static_cast<std::size_t>(j)] / total;
          if (cls_probs && i == 0) (*cls_probs)[static_cast<std::size_t>(h * n + j)] = static_cast<float>(p);
          const float* v = qkv.data() + j * 3 * d + 2 * d + h * dh;
          for (std::int64_t c = 0; c < dh; ++c) out[c] += static_cast<float>(p * v[c]);
        }
      }
    }
    return blk.attn_out(ctx, n);
  }

  void run_block(const Block& blk, std::vector<float>& x, std::int64_t n) const {
    const auto a = attention(blk, x, n, nullptr);
    for (std::size_t i = 0; i < x.size(); ++i) x[i] += a[i];
    auto hidden = blk.fc1(blk.ln2(x, n), n);
    for (auto& v : hidden) v = gelu(v);
    const auto m = blk.fc2(hidden, n);
    for (std::size_t i = 0; i < x.size(); ++i) x[i] += m[i];
  }

  // 3 x S x S -> (1 + P) x d after the embedding and ln_pre.
  std::vector<float> embed(const Tensor& input, const SplitEncoderSpec& spec) const {
    const auto p = spec.input.patch_size;
    const auto s = spec.input.input_size;
    const auto g = spec.grid;
    const auto patch_dim = 3 * p * p;
    auto px = input.f32();
    std::vector<float> patches(static_cast<std::size_t>(g.count() * patch_dim));
    for (std::int64_t pr = 0; pr < g.rows; ++pr) {
      for (std::int64_t pc = 0; pc < g.cols; ++pc) {
        float* dst = patches.data() + (pr * g.cols + pc) * patch_dim;
        for (std::int64_t c = 0; c < 3; ++c) {
          for (std::int64_t dy = 0; dy < p; ++dy) {
            for (std::int64_t dx = 0; dx < p; ++dx) {
              dst[(c * p + dy) * p + dx] = px[static_cast<std::size_t>((c * s + pr * p + dy) * s + pc * p + dx)];
            }
          }
        }
      }
    }
    const auto tokens = patch_embed(patches, g.count());
    const auto n = 1 + g.count();
    std::vector<float> x(static_cast<std::size_t>(n * d));
    std::copy(cls.begin(), cls.end(), x.begin());
    std::copy(tokens.begin(), tokens.end(), x.begin() + d);
    for (std::size_t i = 0; i < x.size(); ++i) x[i] += pos[i];
    return ln_pre(x, n);
  }

  std::vector<float> head(std::span<const float> x) const {
    const auto normed = ln_post(x.subspan(0, static_cast<std::size_t>(d)), 1);
    return proj(normed, 1);
  }
};

SplitEncoderSpec default_reference_spec() {
  SplitEncoderSpec spec;
  spec.input.input_size = 32;
  spec.input.patch_size = 8;
  spec.input.mean = {0.48145466f, 0.4578275f, 0.40821073f};
  spec.input.std = {0.26862954f, 0.26130258f, 0.27577711f};
  spec.grid = {4, 4};
  spec.d_model = 16;
  spec.embed_dim = 8;
  spec.layers = 2;
  spec.split_layer = 1;
  return spec;
}

ReferenceEncoder::ReferenceEncoder(std::uint64_t seed, SplitEncoderSpec spec, ReferenceEncoderOptions options)
    : seed_(seed), spec_(std::move(spec)), options_(options), weights_(std::make_unique<Weights>()) {
  spec_.validate();
  if (options_.heads < 1 || spec_.d_model % options_.heads != 0) {
    throw ConfigError("d_model must be divisible by the head count");
  }
  Rng rng(seed);
  auto& w = *weights_;
  const auto d = spec_.d_model;
  w.d = d;
  w.heads = options_.heads;
  const auto p = spec_.input.patch_size;
  w.patch_embed = Linear(3 * p * p, d, rng, false);
  w.cls.resize(static_cast<std::size_t>(d));
  for (auto& v : w.cls) v = static_cast<float>(0.5 * rng.normal());
  w.pos.resize(static_cast<std::size_t>((1 + spec_.patch_count()) * d));
  for (auto& v : w.pos) v = static_cast<float>(0.1 * rng.normal());
  w.ln_pre = LayerNorm(d, rng);
  const auto hidden = d * options_.mlp_ratio;
  for (std::int64_t l = 0; l < spec_.layers; ++l) {
    Block b;
    b.ln1 = LayerNorm(d, rng);
    b.qkv = Linear(d, 3 * d, rng);
    b.attn_out = Linear(d, d, rng);
    b.ln2 = LayerNorm(d, rng);
    b.fc1 = Linear(d, hidden, rng);
    b.fc2 = Linear(hidden, d, rng);
    w.blocks.push_back(std::move(b));
  }
  w.ln_post = LayerNorm(d, rng);
  w.proj = Linear(d, spec_.embed_dim, rng, false);
}

ReferenceEncoder::~ReferenceEncoder() = default;

std::string ReferenceEncoder::model_id() const { return "reference-vit:seed=" + std::to_string(seed_); }

TokenGrid ReferenceEncoder::encode_prefix(const Tensor& input) const {
  check_image_input(input);
  const auto& w = *weights_;
  const auto n = 1 + spec_.patch_count();
  auto x = w.embed(input, spec_);
  for (std::int64_t l = 0; l < spec_.split_layer; ++l) w.run_block(w.blocks[static_cast<std::size_t>(l)], x, n);

  TokenGrid out;
  out.grid = spec_.grid;
  out.d_model = spec_.d_model;
  out.split_layer = spec_.split_layer;
  out.cls.assign(x.begin(), x.begin() + spec_.d_model);
  out.tokens = Tensor::from_f32({spec_.grid.rows, spec_.grid.cols, spec_.d_model},
                                std::vector<float>(x.begin() + spec_.d_model, x.end()));
  return out;
}

UnitVector ReferenceEncoder::encode_suffix(const Tensor& seq) const {
  check_sequence_input(seq);
  const auto& w = *weights_;
  const auto n = 1 + spec_.patch_count();
  std::vector<float> x(seq.f32().begin(), seq.f32().end());
  for (std::int64_t l = spec_.split_layer; l < spec_.layers; ++l) {
    w.run_block(w.blocks[static_cast<std::size_t>(l)], x, n);
  }
  return l2_normalize(w.head(x));
}

UnitVector ReferenceEncoder::encode_image(const Tensor& input) const {
  check_image_input(input);
  const auto& w = *weights_;
  const auto n = 1 + spec_.patch_count();
  auto x = w.embed(input, spec_);
  for (const auto& blk : w.blocks) w.run_block(blk, x, n);
  return l2_normalize(w.head(x));
}

MultiHeadClsAttention ReferenceEncoder::cls_attention(const Tensor& input) const {
  check_image_input(input);
  const auto& w = *weights_;
  const auto n = 1 + spec_.patch_count();
  auto x = w.embed(input, spec_);
  for (std::size_t l = 0; l + 1 < w.blocks.size(); ++l) w.run_block(w.blocks[l], x, n);
  std::vector<float> probs;
  w.attention(w.blocks.back(), x, n, &probs);

  // Drop the class-token column; the remaining mass stays unnormalized.
  const auto cells = spec_.patch_count();
  std::vector<float> grid(static_cast<std::size_t>(w.heads * cells));
  for (std::int64_t h = 0; h < w.heads; ++h) {
    std::copy_n(probs.begin() + h * n + 1, cells, grid.begin() + h * cells);
  }
  return MultiHeadClsAttention(Tensor::from_f32({w.heads, spec_.grid.rows, spec_.grid.cols}, std::move(grid)));
}

std::shared_ptr<ReferenceEncoder> make_reference_encoder(std::uint64_t seed, const SplitEncoderSpec& spec) {
  return std::make_shared<ReferenceEncoder>(seed, spec);
}

}  // namespace attnsel
