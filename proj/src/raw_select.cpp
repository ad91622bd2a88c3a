#include "attnsel/raw_select.h"

#include <algorithm>
#include <cmath>
#include <string>

#include "attnsel/errors.h"
#include "attnsel/numeric.h"

namespace attnsel {

void EncoderInputSpec::validate() const {
  if (input_size < 1 || patch_size < 1 || input_size % patch_size != 0) {
    throw ConfigError("input_size must be a positive multiple of patch_size (got " + std::to_string(input_size) +
                      " / " + std::to_string(patch_size) + ")");
  }
  for (float s : std) {
    if (!(s > 0.0f)) throw ConfigError("normalization std must be > 0");
  }
}

CropBox full_image_box(ImageSize image) { return {0, 0, image.width, image.height, {}, 1.0, 1.0}; }

PixelPoint patch_center_pixels(PatchIndex patch, GridDims grid, ImageSize image) {
  if (patch.row < 0 || patch.col < 0 || patch.row >= grid.rows || patch.col >= grid.cols) {
    throw ArgumentError("patch index outside the grid");
  }
  const double cx = (static_cast<double>(patch.col) + 0.5) * static_cast<double>(image.width) / grid.cols;
  const double cy = (static_cast<double>(patch.row) + 0.5) * static_cast<double>(image.height) / grid.rows;
  return {std::llround(cx), std::llround(cy)};
}

CropBox propose_crop_box(PixelPoint center, double alpha, double beta, ImageSize image, Rng& rng) {
  if (!(alpha > 0.0) || !(beta <= 1.0) || alpha > beta) {
    throw ConfigError("crop bounds need 0 < alpha <= beta <= 1 (alpha=" + std::to_string(alpha) +
                      ", beta=" + std::to_string(beta) + ")");
  }
  if (center.x < 0 || center.y < 0 || center.x > image.width || center.y > image.height) {
    throw ArgumentError("crop center outside the image");
  }
  CropBox box;
  box.fx = rng.uniform(alpha, beta);
  box.fy = rng.uniform(alpha, beta);
  box.width = std::clamp<std::int64_t>(std::llround(box.fx * static_cast<double>(image.width)), 1, image.width);
  box.height = std::clamp<std::int64_t>(std::llround(box.fy * static_cast<double>(image.height)), 1, image.height);
  box.x0 = std::clamp<std::int64_t>(center.x - box.width / 2, 0, image.width - box.width);
  box.y0 = std::clamp<std::int64_t>(center.y - box.height / 2, 0, image.height - box.height);
  return box;
}

Tensor crop_and_preprocess(const ImageTensor& image, const CropBox& box, const EncoderInputSpec& spec) {
  if (!box.inside(image.size())) {
    throw InvariantError("crop box (" + std::to_string(box.x0) + "," + std::to_string(box.y0) + "," +
                         std::to_string(box.width) + "," + std::to_string(box.height) + ") outside " +
                         std::to_string(image.width()) + "x" + std::to_string(image.height()) + " image");
  }
  const auto s = spec.input_size;
  std::vector<float> region(static_cast<std::size_t>(box.width * box.height * 3));
  for (std::int64_t y = 0; y < box.height; ++y) {
    const auto* src = image.pixels().data() + ((box.y0 + y) * image.width() + box.x0) * 3;
    std::copy(src, src + box.width * 3, region.begin() + y * box.width * 3);
  }
  const auto resized = bicubic_resample_hwc(region, box.height, box.width, 3, s, s);

  std::vector<float> chw(static_cast<std::size_t>(3 * s * s));
  const auto plane = static_cast<std::size_t>(s * s);
  for (std::size_t i = 0; i < plane; ++i) {
    for (std::size_t c = 0; c < 3; ++c) {
      chw[c * plane + i] = (resized[i * 3 + c] / 255.0f - spec.mean[c]) / spec.std[c];
    }
  }
  return Tensor::from_f32({3, s, s}, std::move(chw));
}

}  // namespace attnsel
