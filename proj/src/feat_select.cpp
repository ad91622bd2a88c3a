#include "attnsel/feat_select.h"

#include <algorithm>
#include <cmath>
#include <string>

#include "attnsel/errors.h"
#include "attnsel/numeric.h"

namespace attnsel {

void TokenGrid::validate() const {
  if (tokens.rank() != 3 || tokens.dim(0) != grid.rows || tokens.dim(1) != grid.cols || tokens.dim(2) != d_model) {
    throw ArgumentError("token grid tensor " + shape_string(tokens.shape()) + " does not match grid " +
                        std::to_string(grid.rows) + "x" + std::to_string(grid.cols) + "x" + std::to_string(d_model));
  }
  if (static_cast<std::int64_t>(cls.size()) != d_model) throw ArgumentError("class token width != d_model");
  if (!tokens.all_finite()) throw ArgumentError("token grid contains non-finite values");
}

TokenBox map_box_to_tokens(const CropBox& box, ImageSize image, GridDims grid) {
  if (!box.inside(image)) throw InvariantError("crop box outside image when mapping to tokens");
  auto axis = [](std::int64_t start, std::int64_t extent, std::int64_t pixels, std::int64_t cells) {
    const auto first = std::min<std::int64_t>(start * cells / pixels, cells - 1);
    const auto count = std::max<std::int64_t>(
        1, std::llround(static_cast<double>(extent) * static_cast<double>(cells) / static_cast<double>(pixels)));
    return std::pair{first, std::min(count, cells - first)};
  };
  const auto [r0, rows] = axis(box.y0, box.height, image.height, grid.rows);
  const auto [c0, cols] = axis(box.x0, box.width, image.width, grid.cols);
  return {r0, c0, rows, cols, box};
}

Tensor crop_token_grid(const TokenGrid& grid, const TokenBox& tb) {
  if (tb.r0 < 0 || tb.c0 < 0 || tb.rows < 1 || tb.cols < 1 || tb.r0 + tb.rows > grid.grid.rows ||
      tb.c0 + tb.cols > grid.grid.cols) {
    throw InvariantError("token box outside the token grid");
  }
  const auto d = static_cast<std::size_t>(grid.d_model);
  auto src = grid.tokens.f32();
  std::vector<float> out(static_cast<std::size_t>(tb.rows * tb.cols) * d);
  for (std::int64_t r = 0; r < tb.rows; ++r) {
    const auto from = static_cast<std::size_t>((tb.r0 + r) * grid.grid.cols + tb.c0) * d;
    std::copy_n(src.begin() + static_cast<std::ptrdiff_t>(from), tb.cols * grid.d_model,
                out.begin() + static_cast<std::ptrdiff_t>(r * tb.cols) * grid.d_model);
  }
  return Tensor::from_f32({tb.rows, tb.cols, grid.d_model}, std::move(out));
}

Tensor resize_token_grid(const Tensor& sub, GridDims target) {
  if (sub.rank() != 3) throw ArgumentError("token sub-grid must be rows x cols x d_model");
  auto values = bicubic_resample_hwc(sub.f32(), sub.dim(0), sub.dim(1), sub.dim(2), target.rows, target.cols);
  return Tensor::from_f32({target.rows, target.cols, sub.dim(2)}, std::move(values));
}

Tensor assemble_crop_sequence(std::span<const float> cls, const Tensor& grid) {
  if (grid.rank() != 3) throw ArgumentError("token grid must be rows x cols x d_model");
  const auto d = grid.dim(2);
  if (static_cast<std::int64_t>(cls.size()) != d) {
    throw ArgumentError("class token width " + std::to_string(cls.size()) + " != d_model " + std::to_string(d));
  }
  const auto tokens = grid.dim(0) * grid.dim(1);
  std::vector<float> seq;
  seq.reserve(static_cast<std::size_t>((1 + tokens) * d));
  seq.insert(seq.end(), cls.begin(), cls.end());
  auto body = grid.f32();
  seq.insert(seq.end(), body.begin(), body.end());
  return Tensor::from_f32({1 + tokens, d}, std::move(seq));
}

}  // namespace attnsel
