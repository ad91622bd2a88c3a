#include "attnsel/tensor_io.h"

#include <bit>
#include <cstring>
#include <fstream>
#include <iterator>
#include <limits>
#include <string>

#include "attnsel/errors.h"

namespace attnsel {

namespace {

constexpr char kMagic[4] = {'A', 'B', 'S', 'T'};
constexpr std::size_t kFixedHeader = 7;  // magic + version + dtype + rank

void put_u64(std::vector<std::uint8_t>& out, std::uint64_t v) {
  for (int i = 0; i < 8; ++i) out.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
}

std::uint64_t get_u64(const std::uint8_t* p) {
  std::uint64_t v = 0;
  for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(p[i]) << (8 * i);
  return v;
}

}  // namespace

std::vector<std::uint8_t> encode_tensor(const Tensor& tensor) {
  if (tensor.empty()) throw ArgumentError("cannot encode an empty tensor");
  if (tensor.rank() > std::numeric_limits<std::uint8_t>::max()) {
    throw ArgumentError("tensor rank exceeds 255");
  }
  if (!tensor.all_finite()) throw ArgumentError("refusing to write non-finite f32 payload");

  std::vector<std::uint8_t> out(std::begin(kMagic), std::end(kMagic));
  out.push_back(kAbstVersion);
  out.push_back(static_cast<std::uint8_t>(tensor.dtype()));
  out.push_back(static_cast<std::uint8_t>(tensor.rank()));
  for (auto extent : tensor.shape()) put_u64(out, static_cast<std::uint64_t>(extent));

  if (tensor.dtype() == DType::kU8) {
    auto v = tensor.u8();
    out.insert(out.end(), v.begin(), v.end());
  } else {
    auto v = tensor.f32();
    out.reserve(out.size() + v.size() * 4);
    for (float f : v) {
      auto bits = std::bit_cast<std::uint32_t>(f);
      for (int i = 0; i < 4; ++i) out.push_back(static_cast<std::uint8_t>(bits >> (8 * i)));
    }
  }
  return out;
}

Tensor decode_tensor(std::span<const std::uint8_t> bytes) {
  if (bytes.size() < kFixedHeader) throw FormatError("ABST header truncated: need 7 bytes");
  if (std::memcmp(bytes.data(), kMagic, 4) != 0) throw FormatError("ABST bad magic: expected 'ABST'");
  if (bytes[4] != kAbstVersion) {
    throw FormatError("ABST unsupported version: " + std::to_string(bytes[4]));
  }
  const auto dtype_code = bytes[5];
  if (dtype_code > 1) throw FormatError("ABST unsupported dtype code: " + std::to_string(dtype_code));
  const auto dtype = static_cast<DType>(dtype_code);
  const std::size_t rank = bytes[6];
  if (rank == 0) throw FormatError("ABST rank must be >= 1");
  if (bytes.size() < kFixedHeader + 8 * rank) throw FormatError("ABST shape truncated");

  Shape shape(rank);
  std::uint64_t count = 1;
  for (std::size_t i = 0; i < rank; ++i) {
    const auto extent = get_u64(bytes.data() + kFixedHeader + 8 * i);
    if (extent == 0 || extent > (std::uint64_t{1} << 40)) {
      throw FormatError("ABST shape extent " + std::to_string(i) + " invalid: " + std::to_string(extent));
    }
    count *= extent;
    if (count > (std::uint64_t{1} << 40)) throw FormatError("ABST shape too large");
    shape[i] = static_cast<std::int64_t>(extent);
  }

  const std::size_t offset = kFixedHeader + 8 * rank;
  const std::size_t elem = dtype == DType::kF32 ? 4 : 1;
  const std::size_t expected = static_cast<std::size_t>(count) * elem;
  const std::size_t actual = bytes.size() - offset;
  if (actual < expected) {
    throw FormatError("ABST payload truncated: expected " + std::to_string(expected) + " bytes, got " +
                      std::to_string(actual));
  }
  if (actual > expected) {
    throw FormatError("ABST payload has " + std::to_string(actual - expected) + " trailing bytes");
  }

  const auto* p = bytes.data() + offset;
  if (dtype == DType::kU8) {
    return Tensor::from_u8(std::move(shape), std::vector<std::uint8_t>(p, p + expected));
  }
  std::vector<float> values(static_cast<std::size_t>(count));
  for (std::size_t i = 0; i < values.size(); ++i) {
    std::uint32_t bits = 0;
    for (int b = 0; b < 4; ++b) bits |= static_cast<std::uint32_t>(p[4 * i + b]) << (8 * b);
    values[i] = std::bit_cast<float>(bits);
  }
  auto t = Tensor::from_f32(std::move(shape), std::move(values));
  if (!t.all_finite()) throw FormatError("ABST payload contains non-finite f32 values");
  return t;
}

Tensor read_tensor(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw FormatError("cannot open tensor file: " + path.string());
  std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  try {
    return decode_tensor(bytes);
  } catch (const FormatError& e) {
    throw FormatError(path.string() + ": " + e.what());
  }
}

void write_tensor(const Tensor& tensor, const std::filesystem::path& path) {
  const auto bytes = encode_tensor(tensor);
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw FormatError("cannot open tensor file for writing: " + path.string());
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw FormatError("failed writing tensor file: " + path.string());
}

}  // namespace attnsel
