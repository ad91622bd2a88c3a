#pragma once

#include <array>
#include <cstdint>

#include "attnsel/attention_sampler.h"
#include "attnsel/image.h"
#include "attnsel/rng.h"
#include "attnsel/tensor.h"

namespace attnsel {

// Preprocessing constants an image encoder expects.
struct EncoderInputSpec {
  std::int64_t input_size = 224;  // square side S in pixels
  std::int64_t patch_size = 16;
  std::array<float, 3> mean{0.0f, 0.0f, 0.0f};
  std::array<float, 3> std{1.0f, 1.0f, 1.0f};

  std::int64_t grid_side() const { return input_size / patch_size; }
  GridDims grid() const { return {grid_side(), grid_side()}; }
  void validate() const;
};

struct PixelPoint {
  std::int64_t x = 0;
  std::int64_t y = 0;
  friend bool operator==(const PixelPoint&, const PixelPoint&) = default;
};

struct CropBox {
  std::int64_t x0 = 0;
  std::int64_t y0 = 0;
  std::int64_t width = 1;
  std::int64_t height = 1;
  PatchIndex anchor;
  double fx = 1.0;
  double fy = 1.0;

  bool inside(ImageSize image) const {
    return x0 >= 0 && y0 >= 0 && width >= 1 && height >= 1 && x0 + width <= image.width &&
           y0 + height <= image.height;
  }
  bool contains(PixelPoint p) const { return p.x >= x0 && p.x < x0 + width && p.y >= y0 && p.y < y0 + height; }
};

CropBox full_image_box(ImageSize image);

PixelPoint patch_center_pixels(PatchIndex patch, GridDims grid, ImageSize image);

// Draws fx then fy uniformly from [alpha, beta], sizes the box, centers it on
// `center`, then translates it the minimum distance needed to fit the image.
CropBox propose_crop_box(PixelPoint center, double alpha, double beta, ImageSize image, Rng& rng);

// Box pixels -> S x S bicubic resample -> [0,1] -> per-channel normalize.
// Returns 3 x S x S (CHW).
Tensor crop_and_preprocess(const ImageTensor& image, const CropBox& box, const EncoderInputSpec& spec);

}  // namespace attnsel
