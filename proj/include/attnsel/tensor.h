#pragma once

#include <cstddef>
#include <cstdint>
#include <initializer_list>
#include <span>
#include <string>
#include <variant>
#include <vector>

namespace attnsel {

enum class DType : std::uint8_t { kF32 = 0, kU8 = 1 };

std::string to_string(DType dtype);

using Shape = std::vector<std::int64_t>;

std::size_t element_count(const Shape& shape);
std::string shape_string(const Shape& shape);

// Dense row-major tensor holding either f32 or u8 elements.
class Tensor {
 public:
  Tensor() = default;

  static Tensor zeros(Shape shape, DType dtype = DType::kF32);
  static Tensor from_f32(Shape shape, std::vector<float> values);
  static Tensor from_u8(Shape shape, std::vector<std::uint8_t> values);

  DType dtype() const { return dtype_; }
  const Shape& shape() const { return shape_; }
  std::size_t rank() const { return shape_.size(); }
  std::int64_t dim(std::size_t axis) const { return shape_.at(axis); }
  std::size_t size() const { return element_count(shape_); }
  bool empty() const { return shape_.empty(); }

  std::span<float> f32();
  std::span<const float> f32() const;
  std::span<std::uint8_t> u8();
  std::span<const std::uint8_t> u8() const;

  // Reinterprets the payload under a new shape of equal element count.
  Tensor reshaped(Shape shape) const;

  // True when every f32 element is finite (always true for u8).
  bool all_finite() const;

  friend bool operator==(const Tensor& a, const Tensor& b);

 private:
  Tensor(DType dtype, Shape shape, std::variant<std::vector<float>, std::vector<std::uint8_t>> data);

  DType dtype_ = DType::kF32;
  Shape shape_;
  std::variant<std::vector<float>, std::vector<std::uint8_t>> data_;
};

}  // namespace attnsel
