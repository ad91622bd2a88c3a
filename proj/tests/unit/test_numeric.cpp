#include <doctest.h>

#include <cmath>

#include "attnsel/errors.h"
#include "attnsel/numeric.h"
#include "attnsel/rng.h"
#include "test_support.h"

using namespace attnsel;

TEST_CASE("softmax basics") {
  const auto half = softmax(std::vector<float>{0.0f, 0.0f});
  CHECK(half[0] == doctest::Approx(0.5).epsilon(1e-7));
  CHECK(half[1] == doctest::Approx(0.5).epsilon(1e-7));

  const std::vector<float> x{1.0f, 2.0f, 3.0f};
  const auto got = softmax(x);
  const auto want = testing::softmax_oracle({1.0, 2.0, 3.0}, 1.0L);
  for (std::size_t i = 0; i < 3; ++i) CHECK(std::fabs(got[i] - static_cast<double>(want[i])) <= 1e-7);
}

TEST_CASE("softmax shift invariance with exactly representable shifts") {
  const std::vector<float> x{0.25f, -1.5f, 3.0f, 0.0f};
  for (float c : {1.0f, -8.0f, 64.0f}) {
    std::vector<float> y(x);
    for (auto& v : y) v += c;
    const auto a = softmax(x, 0.5f);
    const auto b = softmax(y, 0.5f);
    for (std::size_t i = 0; i < x.size(); ++i) CHECK(a[i] == b[i]);
  }
}

TEST_CASE("softmax at a small temperature matches the extended-precision oracle") {
  Rng rng(11);
  for (int trial = 0; trial < 50; ++trial) {
    std::vector<float> x(6);
    std::vector<double> xd(6);
    for (std::size_t i = 0; i < 6; ++i) {
      x[i] = static_cast<float>(rng.uniform(0.1, 0.4));
      xd[i] = x[i];
    }
    const auto got = softmax(x, 0.01f);
    const auto want = testing::softmax_oracle(xd, static_cast<long double>(0.01f));
    for (std::size_t i = 0; i < 6; ++i) CHECK(std::fabs(got[i] - static_cast<double>(want[i])) <= 1e-7);
  }
}

TEST_CASE("softmax rejects bad input") {
  CHECK_THROWS_AS(softmax(std::vector<float>{}), ArgumentError);
  CHECK_THROWS_AS(softmax(std::vector<float>{1.0f}, 0.0f), ArgumentError);
  CHECK_THROWS_AS(softmax(std::vector<float>{NAN, 1.0f}), ArgumentError);
}

TEST_CASE("softmax stays strictly positive") {
  const auto p = softmax(std::vector<float>{0.0f, 1000.0f}, 0.01f);
  CHECK(p[0] > 0.0f);
  CHECK(p[1] == 1.0f);
}

TEST_CASE("l2 normalize") {
  const auto v = l2_normalize(std::vector<float>{3.0f, 4.0f});
  CHECK(v[0] == doctest::Approx(0.6).epsilon(1e-7));
  CHECK(v[1] == doctest::Approx(0.8).epsilon(1e-7));

  const auto again = l2_normalize(v.values());
  for (std::size_t i = 0; i < 2; ++i) CHECK(std::fabs(again[i] - v[i]) <= 1e-7);

  Rng rng(5);
  std::vector<float> big(512);
  for (auto& x : big) x = static_cast<float>(rng.normal());
  const auto u = l2_normalize(big);
  CHECK(std::fabs(dot(u.values(), u.values()) - 1.0) <= 1e-5);

  CHECK_THROWS_AS(l2_normalize(std::vector<float>{0.0f, 0.0f}), DegenerateVectorError);
  CHECK_THROWS_AS(l2_normalize(std::vector<float>{1e-14f}), DegenerateVectorError);
  CHECK_THROWS_AS(UnitVector::from_normalized({0.5f, 0.5f}), ArgumentError);
  CHECK_NOTHROW(UnitVector::from_normalized({0.6f, 0.8f}));
}

TEST_CASE("cubic kernel values") {
  CHECK(cubic_kernel(0.0) == 1.0);
  CHECK(cubic_kernel(1.0) == 0.0);
  CHECK(cubic_kernel(2.0) == 0.0);
  CHECK(cubic_kernel(0.5) == doctest::Approx(0.5625));
  CHECK(cubic_kernel(-1.5) == doctest::Approx(-0.0625));
  // Partition of unity at any phase.
  for (double t : {0.0, 0.1, 0.37, 0.5, 0.99}) {
    CHECK(cubic_kernel(t + 1) + cubic_kernel(t) + cubic_kernel(1 - t) + cubic_kernel(2 - t) ==
          doctest::Approx(1.0).epsilon(1e-12));
  }
}

TEST_CASE("bicubic constant and identity") {
  const auto seven = Tensor::from_f32({4, 4}, std::vector<float>(16, 7.0f));
  for (auto [h, w] : {std::pair{1L, 1L}, {3L, 9L}, {16L, 5L}, {4L, 4L}}) {
    const auto out = bicubic_resample_2d(seven, h, w);
    CHECK(out.shape() == Shape{h, w});
    for (float v : out.f32()) CHECK(std::fabs(v - 7.0f) <= 1e-6);
  }

  Rng rng(3);
  std::vector<float> vals(49);
  for (auto& v : vals) v = static_cast<float>(rng.normal());
  const auto plane = Tensor::from_f32({7, 7}, vals);
  const auto same = bicubic_resample_2d(plane, 7, 7);
  for (std::size_t i = 0; i < vals.size(); ++i) CHECK(std::fabs(same.f32()[i] - vals[i]) <= 1e-6);
}

TEST_CASE("bicubic 5x5 to 14x14 matches the direct oracle") {
  Rng rng(17);
  std::vector<float> vals(25);
  std::vector<double> vd(25);
  for (std::size_t i = 0; i < 25; ++i) {
    vals[i] = static_cast<float>(rng.uniform(-3.0, 3.0));
    vd[i] = vals[i];
  }
  const auto out = bicubic_resample_2d(Tensor::from_f32({5, 5}, vals), 14, 14);
  const auto want = testing::bicubic_oracle(vd, 5, 5, 14, 14);
  double worst = 0.0;
  for (std::size_t i = 0; i < want.size(); ++i) worst = std::max(worst, std::fabs(out.f32()[i] - want[i]));
  CHECK(worst <= 1e-5);
}

TEST_CASE("bicubic reproduces quadratics away from the border") {
  // Catmull-Rom is exact for polynomials up to degree 2; border clamping
  // breaks this near the edges, so only interior samples are compared.
  const long n = 12;
  std::vector<float> vals(static_cast<std::size_t>(n * n));
  auto f = [](double y, double x) { return 0.5 * x * x - 0.25 * y * y + 0.75 * x * y + x - 2 * y + 3; };
  for (long y = 0; y < n; ++y) {
    for (long x = 0; x < n; ++x) vals[static_cast<std::size_t>(y * n + x)] = static_cast<float>(f(y, x));
  }
  const long m = 30;
  const auto out = bicubic_resample_2d(Tensor::from_f32({n, n}, vals), m, m);
  for (long oy = 0; oy < m; ++oy) {
    const double sy = (oy + 0.5) * n / m - 0.5;
    for (long ox = 0; ox < m; ++ox) {
      const double sx = (ox + 0.5) * n / m - 0.5;
      if (sy < 1 || sx < 1 || sy > n - 3 || sx > n - 3) continue;
      CHECK(out.f32()[static_cast<std::size_t>(oy * m + ox)] == doctest::Approx(f(sy, sx)).epsilon(1e-5));
    }
  }
}

TEST_CASE("hwc resample runs each channel independently") {
  Rng rng(23);
  const long h = 7, w = 7, c = 8, oh = 4, ow = 11;
  std::vector<float> hwc(static_cast<std::size_t>(h * w * c));
  for (auto& v : hwc) v = static_cast<float>(rng.normal());
  const auto out = bicubic_resample_hwc(hwc, h, w, c, oh, ow);
  for (long ch = 0; ch < c; ++ch) {
    std::vector<double> plane(static_cast<std::size_t>(h * w));
    for (long i = 0; i < h * w; ++i) plane[static_cast<std::size_t>(i)] = hwc[static_cast<std::size_t>(i * c + ch)];
    const auto want = testing::bicubic_oracle(plane, h, w, oh, ow);
    for (long i = 0; i < oh * ow; ++i) {
      CHECK(std::fabs(out[static_cast<std::size_t>(i * c + ch)] - want[static_cast<std::size_t>(i)]) <= 1e-5);
    }
  }
  CHECK_THROWS_AS(bicubic_resample_hwc(hwc, h, w, c, 0, 3), ArgumentError);
  CHECK_THROWS_AS(bicubic_resample_hwc(hwc, h, w + 1, c, 2, 3), ArgumentError);
}
