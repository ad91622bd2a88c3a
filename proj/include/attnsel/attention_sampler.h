#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "attnsel/rng.h"
#include "attnsel/tensor.h"

namespace attnsel {

struct GridDims {
  std::int64_t rows = 0;
  std::int64_t cols = 0;

  std::int64_t count() const { return rows * cols; }
  friend bool operator==(const GridDims&, const GridDims&) = default;
};

struct PatchIndex {
  std::int64_t row = 0;
  std::int64_t col = 0;

  friend bool operator==(const PatchIndex&, const PatchIndex&) = default;
};

// Per-head class-token -> patch attention laid out on the patch grid.
// values: heads x rows x cols, non-negative and finite.
class MultiHeadClsAttention {
 public:
  explicit MultiHeadClsAttention(Tensor values);

  std::int64_t heads() const { return values_.dim(0); }
  GridDims grid() const { return {values_.dim(1), values_.dim(2)}; }
  const Tensor& values() const { return values_; }

 private:
  Tensor values_;
};

// Head-averaged attention, rows x cols.
class AttentionGrid {
 public:
  explicit AttentionGrid(Tensor values);

  GridDims grid() const { return {values_.dim(0), values_.dim(1)}; }
  const Tensor& values() const { return values_; }
  float at(PatchIndex p) const { return values_.f32()[static_cast<std::size_t>(p.row * grid().cols + p.col)]; }

 private:
  Tensor values_;
};

struct PatchSample {
  PatchIndex patch;
  float attention = 0.0f;
  float probability = 0.0f;
};

AttentionGrid average_heads(const MultiHeadClsAttention& attn);

// k largest cells, descending; ties go to the lower row-major index.
std::vector<PatchSample> select_top_k(const AttentionGrid& grid, std::int64_t k);

// Softmax of the attention values at `temperature`, written into `probability`.
std::vector<PatchSample> patch_probabilities(std::span<const PatchSample> topk, float temperature = 1.0f);

// n draws with replacement by inverse CDF over the list in its given order.
std::vector<PatchSample> sample_patches(std::span<const PatchSample> topk_with_probs, std::int64_t n,
                                        Rng& rng);

}  // namespace attnsel
