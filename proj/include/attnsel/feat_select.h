#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "attnsel/attention_sampler.h"
#include "attnsel/raw_select.h"
#include "attnsel/tensor.h"

namespace attnsel {

// Patch-token features entering the encoder suffix, plus the class token.
struct TokenGrid {
  GridDims grid;
  std::int64_t d_model = 0;
  Tensor tokens;            // rows x cols x d_model
  std::vector<float> cls;   // d_model
  std::int64_t split_layer = 0;

  void validate() const;
};

struct TokenBox {
  std::int64_t r0 = 0;
  std::int64_t c0 = 0;
  std::int64_t rows = 1;
  std::int64_t cols = 1;
  CropBox source;

  friend bool operator==(const TokenBox& a, const TokenBox& b) {
    return a.r0 == b.r0 && a.c0 == b.c0 && a.rows == b.rows && a.cols == b.cols;
  }
};

TokenBox map_box_to_tokens(const CropBox& box, ImageSize image, GridDims grid);

// rows x cols x d_model copy of the boxed tokens.
Tensor crop_token_grid(const TokenGrid& grid, const TokenBox& tb);

// Per-channel bicubic resize back to target grid dims.
Tensor resize_token_grid(const Tensor& sub, GridDims target);

// (1 + rows*cols) x d_model: class token first, then tokens row-major.
Tensor assemble_crop_sequence(std::span<const float> cls, const Tensor& grid);

}  // namespace attnsel
