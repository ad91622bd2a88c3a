#pragma once

#include <cstdint>
#include <filesystem>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "attnsel/attention_sampler.h"
#include "attnsel/feat_select.h"
#include "attnsel/numeric.h"
#include "attnsel/raw_select.h"
#include "attnsel/tensor.h"

namespace attnsel {

// Geometry and split point of a vision transformer whose final layers can be
// re-entered from mid-network token features.
struct SplitEncoderSpec {
  EncoderInputSpec input;
  GridDims grid;
  std::int64_t d_model = 0;
  std::int64_t embed_dim = 0;
  std::int64_t split_layer = 0;
  std::int64_t layers = 0;

  std::int64_t patch_count() const { return grid.count(); }
  void validate() const;
};

// Reads model_spec.json (keys: input_size, patch_size, grid, d_model,
// embed_dim, split_layer, layers, mean, std). Attention models may omit the
// encoder-only keys.
SplitEncoderSpec load_model_spec(const std::filesystem::path& path, bool require_encoder_keys = true);
void save_model_spec(const SplitEncoderSpec& spec, const std::filesystem::path& path);

// Image encoder factored at `split_layer`: prefix produces the token grid
// entering that layer, suffix runs the remaining layers, the final norm and
// the projection.
class SplitEncoder {
 public:
  virtual ~SplitEncoder() = default;

  virtual const SplitEncoderSpec& spec() const = 0;
  virtual std::string model_id() const = 0;

  // input: 3 x S x S normalized pixels.
  virtual TokenGrid encode_prefix(const Tensor& input) const = 0;
  // seq: (1 + P) x d_model laid out as by assemble_crop_sequence.
  virtual UnitVector encode_suffix(const Tensor& seq) const = 0;
  virtual UnitVector encode_image(const Tensor& input) const = 0;

  virtual std::vector<UnitVector> encode_images(std::span<const Tensor> inputs) const;
  virtual std::vector<UnitVector> encode_suffixes(std::span<const Tensor> seqs) const;

 protected:
  void check_image_input(const Tensor& input) const;
  void check_sequence_input(const Tensor& seq) const;
};

// Source of last-layer class-token attention over the patch grid.
class AttentionSource {
 public:
  virtual ~AttentionSource() = default;

  virtual const EncoderInputSpec& input_spec() const = 0;
  virtual GridDims grid() const = 0;
  virtual std::string model_id() const = 0;
  virtual MultiHeadClsAttention cls_attention(const Tensor& input) const = 0;
};

enum class Branch { kRaw, kFeature, kFull };

const char* to_string(Branch branch);

struct EmbeddingTag {
  Branch branch = Branch::kRaw;
  CropBox box;
  std::optional<TokenBox> token_box;
  std::int64_t sample_index = -1;
};

// Unit-norm image embeddings with their provenance.
struct EmbeddingSet {
  std::vector<UnitVector> rows;
  std::vector<EmbeddingTag> tags;

  std::size_t count() const { return rows.size(); }
  std::int64_t dim() const { return rows.empty() ? 0 : static_cast<std::int64_t>(rows.front().dim()); }
  void add(UnitVector v, EmbeddingTag tag) {
    rows.push_back(std::move(v));
    tags.push_back(std::move(tag));
  }
};

struct ReferenceEncoderOptions {
  std::int64_t heads = 2;
  std::int64_t mlp_ratio = 4;
};

// Small seeded transformer (patchify, linear embed, pre-norm blocks, projection)
// implementing both interfaces. Shares weights between the two roles.
class ReferenceEncoder final : public SplitEncoder, public AttentionSource {
 public:
  ReferenceEncoder(std::uint64_t seed, SplitEncoderSpec spec, ReferenceEncoderOptions options = {});
  ~ReferenceEncoder() override;

  const SplitEncoderSpec& spec() const override { return spec_; }
  std::string model_id() const override;
  TokenGrid encode_prefix(const Tensor& input) const override;
  UnitVector encode_suffix(const Tensor& seq) const override;
  UnitVector encode_image(const Tensor& input) const override;

  const EncoderInputSpec& input_spec() const override { return spec_.input; }
  GridDims grid() const override { return spec_.grid; }
  MultiHeadClsAttention cls_attention(const Tensor& input) const override;

  std::uint64_t seed() const { return seed_; }

 private:
  struct Weights;

  std::uint64_t seed_;
  SplitEncoderSpec spec_;
  ReferenceEncoderOptions options_;
  std::unique_ptr<Weights> weights_;
};

// The spec make_reference_encoder uses when none is given: S=32, patch 8,
// 4x4 grid, d_model 16, embed 8, 2 layers split at 1.
SplitEncoderSpec default_reference_spec();

std::shared_ptr<ReferenceEncoder> make_reference_encoder(std::uint64_t seed,
                                                         const SplitEncoderSpec& spec = default_reference_spec());

// ONNX-graph backed encoder. Directory layout: prefix.onnx, suffix.onnx,
// model_spec.json, optionally image.onnx (the unsplit graph).
std::shared_ptr<SplitEncoder> load_onnx_encoder(const std::filesystem::path& dir);

// Directory layout: attention.onnx, model_spec.json.
std::shared_ptr<AttentionSource> load_onnx_attention(const std::filesystem::path& dir);

// Largest |a - b| over two embeddings.
double max_abs_diff(const UnitVector& a, const UnitVector& b);

}  // namespace attnsel
