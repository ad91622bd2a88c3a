#include "attnsel/numeric.h"

#include <algorithm>
#include <array>
#include <cmath>
#include <limits>
#include <string>

#include "attnsel/errors.h"

namespace attnsel {

UnitVector UnitVector::from_normalized(std::vector<float> values, double tolerance) {
  if (values.empty()) throw ArgumentError("unit vector must have dim >= 1");
  const double norm = std::sqrt(dot(values, values));
  if (!std::isfinite(norm) || std::abs(norm - 1.0) > tolerance) {
    throw ArgumentError("vector is not unit-norm (norm " + std::to_string(norm) + ")");
  }
  return UnitVector(std::move(values));
}

std::vector<float> softmax(std::span<const float> values, float temperature) {
  if (values.empty()) throw ArgumentError("softmax of an empty list");
  if (!(temperature > 0.0f) || !std::isfinite(temperature)) {
    throw ArgumentError("softmax temperature must be > 0, got " + std::to_string(temperature));
  }
  double max_v = values[0];
  for (float v : values) {
    if (!std::isfinite(v)) throw ArgumentError("softmax input contains a non-finite value");
    max_v = std::max(max_v, static_cast<double>(v));
  }
  std::vector<double> e(values.size());
  double total = 0.0;
  for (std::size_t i = 0; i < values.size(); ++i) {
    e[i] = std::exp((static_cast<double>(values[i]) - max_v) / temperature);
    total += e[i];
  }
  std::vector<float> out(values.size());
  for (std::size_t i = 0; i < values.size(); ++i) {
    // Underflow to exactly zero would break strict positivity.
    out[i] = std::max(static_cast<float>(e[i] / total), std::numeric_limits<float>::denorm_min());
  }
  return out;
}

double dot(std::span<const float> a, std::span<const float> b) {
  if (a.size() != b.size()) {
    throw ArgumentError("dot of mismatched dims " + std::to_string(a.size()) + " and " +
                        std::to_string(b.size()));
  }
  double acc = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) acc += static_cast<double>(a[i]) * b[i];
  return acc;
}

UnitVector l2_normalize(std::span<const float> v) {
  if (v.empty()) throw DegenerateVectorError("cannot normalize an empty vector");
  const double norm = std::sqrt(dot(v, v));
  if (!(norm > 1e-12) || !std::isfinite(norm)) {
    throw DegenerateVectorError("cannot normalize vector with norm " + std::to_string(norm));
  }
  std::vector<float> out(v.size());
  for (std::size_t i = 0; i < v.size(); ++i) out[i] = static_cast<float>(v[i] / norm);
  return UnitVector(std::move(out));
}

double cubic_kernel(double t, double a) {
  t = std::abs(t);
  if (t <= 1.0) return ((a + 2.0) * t - (a + 3.0)) * t * t + 1.0;
  if (t < 2.0) return ((a * t - 5.0 * a) * t + 8.0 * a) * t - 4.0 * a;
  return 0.0;
}

namespace {

struct Taps {
  std::array<std::int64_t, 4> index;
  std::array<double, 4> weight;
};

// Source taps for each output coordinate along one axis.
std::vector<Taps> axis_taps(std::int64_t in, std::int64_t out) {
  std::vector<Taps> taps(static_cast<std::size_t>(out));
  const double scale = static_cast<double>(in) / static_cast<double>(out);
  for (std::int64_t o = 0; o < out; ++o) {
    const double src = (static_cast<double>(o) + 0.5) * scale - 0.5;
    const double base = std::floor(src);
    const double frac = src - base;
    auto& t = taps[static_cast<std::size_t>(o)];
    for (int k = 0; k < 4; ++k) {
      t.index[k] = std::clamp<std::int64_t>(static_cast<std::int64_t>(base) - 1 + k, 0, in - 1);
      t.weight[k] = cubic_kernel(frac - (k - 1));
    }
  }
  return taps;
}

}  // namespace

std::vector<float> bicubic_resample_hwc(std::span<const float> in, std::int64_t h, std::int64_t w,
                                        std::int64_t channels, std::int64_t out_h, std::int64_t out_w) {
  if (h < 1 || w < 1 || channels < 1 || out_h < 1 || out_w < 1) {
    throw ArgumentError("bicubic resample needs positive dims");
  }
  if (in.size() != static_cast<std::size_t>(h * w * channels)) {
    throw ArgumentError("bicubic resample input size does not match h*w*channels");
  }
  if (h == out_h && w == out_w) return {in.begin(), in.end()};

  const auto col_taps = axis_taps(w, out_w);
  const auto row_taps = axis_taps(h, out_h);
  const auto c = static_cast<std::size_t>(channels);

  // Horizontal pass: h x out_w x c.
  std::vector<double> mid(static_cast<std::size_t>(h * out_w) * c, 0.0);
  for (std::int64_t y = 0; y < h; ++y) {
    const float* row = in.data() + static_cast<std::size_t>(y * w) * c;
    double* dst_row = mid.data() + static_cast<std::size_t>(y * out_w) * c;
    for (std::int64_t x = 0; x < out_w; ++x) {
      const auto& t = col_taps[static_cast<std::size_t>(x)];
      double* dst = dst_row + static_cast<std::size_t>(x) * c;
      for (int k = 0; k < 4; ++k) {
        const float* src = row + static_cast<std::size_t>(t.index[k]) * c;
        const double wk = t.weight[k];
        for (std::size_t ch = 0; ch < c; ++ch) dst[ch] += wk * src[ch];
      }
    }
  }

  // Vertical pass.
  std::vector<float> out(static_cast<std::size_t>(out_h * out_w) * c);
  std::vector<double> acc(static_cast<std::size_t>(out_w) * c);
  for (std::int64_t y = 0; y < out_h; ++y) {
    const auto& t = row_taps[static_cast<std::size_t>(y)];
    std::fill(acc.begin(), acc.end(), 0.0);
    for (int k = 0; k < 4; ++k) {
      const double* src = mid.data() + static_cast<std::size_t>(t.index[k] * out_w) * c;
      const double wk = t.weight[k];
      for (std::size_t i = 0; i < acc.size(); ++i) acc[i] += wk * src[i];
    }
    float* dst = out.data() + static_cast<std::size_t>(y * out_w) * c;
    for (std::size_t i = 0; i < acc.size(); ++i) dst[i] = static_cast<float>(acc[i]);
  }
  return out;
}

Tensor bicubic_resample_2d(const Tensor& plane, std::int64_t out_h, std::int64_t out_w) {
  if (plane.rank() != 2) {
    throw ArgumentError("bicubic_resample_2d expects a rank-2 plane, got " + shape_string(plane.shape()));
  }
  auto values = bicubic_resample_hwc(plane.f32(), plane.dim(0), plane.dim(1), 1, out_h, out_w);
  return Tensor::from_f32({out_h, out_w}, std::move(values));
}

}  // namespace attnsel
