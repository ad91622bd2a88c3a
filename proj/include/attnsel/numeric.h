#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "attnsel/tensor.h"

namespace attnsel {

// Catmull-Rom cubic convolution coefficient.
inline constexpr double kCubicA = -0.5;

// L2-normalized f32 vector; |norm - 1| <= 1e-5 holds for every instance.
class UnitVector {
 public:
  UnitVector() = default;

  // Wraps values that are already unit-norm; throws ArgumentError otherwise.
  static UnitVector from_normalized(std::vector<float> values, double tolerance = 1e-5);

  std::size_t dim() const { return values_.size(); }
  std::span<const float> values() const { return values_; }
  float operator[](std::size_t i) const { return values_[i]; }

 private:
  friend UnitVector l2_normalize(std::span<const float> v);
  explicit UnitVector(std::vector<float> values) : values_(std::move(values)) {}

  std::vector<float> values_;
};

// Max-subtracted softmax at the given temperature, accumulated in double.
std::vector<float> softmax(std::span<const float> values, float temperature = 1.0f);

// Throws DegenerateVectorError when the norm is at or below 1e-12.
UnitVector l2_normalize(std::span<const float> v);

double dot(std::span<const float> a, std::span<const float> b);

double cubic_kernel(double t, double a = kCubicA);

// Bicubic resize of a single h x w plane (Catmull-Rom, half-pixel centers,
// clamped borders).
Tensor bicubic_resample_2d(const Tensor& plane, std::int64_t out_h, std::int64_t out_w);

// Same kernel applied independently to each of `channels` interleaved planes
// of an HWC buffer. Returns out_h x out_w x channels.
std::vector<float> bicubic_resample_hwc(std::span<const float> in, std::int64_t h, std::int64_t w,
                                        std::int64_t channels, std::int64_t out_h, std::int64_t out_w);

}  // namespace attnsel
