#include "attnsel/tensor.h"

#include <cmath>
#include <cstring>
#include <sstream>

#include "attnsel/errors.h"

namespace attnsel {

std::string to_string(DType dtype) {
  switch (dtype) {
    case DType::kF32:
      return "f32";
    case DType::kU8:
      return "u8";
  }
  return "unknown";
}

std::size_t element_count(const Shape& shape) {
  std::size_t n = 1;
  for (auto extent : shape) {
    n *= static_cast<std::size_t>(extent);
  }
  return shape.empty() ? 0 : n;
}

std::string shape_string(const Shape& shape) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) {
    os << (i ? "," : "") << shape[i];
  }
  os << ']';
  return os.str();
}

namespace {

void check_shape(const Shape& shape) {
  if (shape.empty()) {
    throw ArgumentError("tensor shape must have rank >= 1");
  }
  for (auto extent : shape) {
    if (extent < 1) {
      throw ArgumentError("tensor extents must be >= 1, got " + shape_string(shape));
    }
  }
}

}  // namespace

Tensor::Tensor(DType dtype, Shape shape,
               std::variant<std::vector<float>, std::vector<std::uint8_t>> data)
    : dtype_(dtype), shape_(std::move(shape)), data_(std::move(data)) {}

Tensor Tensor::zeros(Shape shape, DType dtype) {
  check_shape(shape);
  const auto n = element_count(shape);
  if (dtype == DType::kF32) {
    return Tensor(dtype, std::move(shape), std::vector<float>(n, 0.0f));
  }
  return Tensor(dtype, std::move(shape), std::vector<std::uint8_t>(n, 0));
}

Tensor Tensor::from_f32(Shape shape, std::vector<float> values) {
  check_shape(shape);
  if (values.size() != element_count(shape)) {
    throw ArgumentError("f32 payload has " + std::to_string(values.size()) +
                        " elements but shape " + shape_string(shape) + " needs " +
                        std::to_string(element_count(shape)));
  }
  return Tensor(DType::kF32, std::move(shape), std::move(values));
}

Tensor Tensor::from_u8(Shape shape, std::vector<std::uint8_t> values) {
  check_shape(shape);
  if (values.size() != element_count(shape)) {
    throw ArgumentError("u8 payload has " + std::to_string(values.size()) +
                        " elements but shape " + shape_string(shape) + " needs " +
                        std::to_string(element_count(shape)));
  }
  return Tensor(DType::kU8, std::move(shape), std::move(values));
}

std::span<float> Tensor::f32() {
  if (dtype_ != DType::kF32) throw ArgumentError("tensor is " + to_string(dtype_) + ", not f32");
  return std::get<std::vector<float>>(data_);
}

std::span<const float> Tensor::f32() const {
  if (dtype_ != DType::kF32) throw ArgumentError("tensor is " + to_string(dtype_) + ", not f32");
  return std::get<std::vector<float>>(data_);
}

std::span<std::uint8_t> Tensor::u8() {
  if (dtype_ != DType::kU8) throw ArgumentError("tensor is " + to_string(dtype_) + ", not u8");
  return std::get<std::vector<std::uint8_t>>(data_);
}

std::span<const std::uint8_t> Tensor::u8() const {
  if (dtype_ != DType::kU8) throw ArgumentError("tensor is " + to_string(dtype_) + ", not u8");
  return std::get<std::vector<std::uint8_t>>(data_);
}

Tensor Tensor::reshaped(Shape shape) const {
  check_shape(shape);
  if (element_count(shape) != size()) {
    throw ArgumentError("cannot reshape " + shape_string(shape_) + " to " + shape_string(shape));
  }
  return Tensor(dtype_, std::move(shape), data_);
}

bool Tensor::all_finite() const {
  if (dtype_ != DType::kF32) return true;
  for (float v : f32()) {
    if (!std::isfinite(v)) return false;
  }
  return true;
}

bool operator==(const Tensor& a, const Tensor& b) {
  if (a.dtype_ != b.dtype_ || a.shape_ != b.shape_) return false;
  if (a.dtype_ == DType::kF32) {
    auto x = a.f32();
    auto y = b.f32();
    return x.size() == y.size() && std::memcmp(x.data(), y.data(), x.size_bytes()) == 0;
  }
  auto x = a.u8();
  auto y = b.u8();
  return x.size() == y.size() && std::memcmp(x.data(), y.data(), x.size_bytes()) == 0;
}

}  // namespace attnsel
