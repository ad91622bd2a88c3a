#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

#include "attnsel/tensor.h"

namespace attnsel {

// ABST container: "ABST", version u8 (=1), dtype u8 (0=f32, 1=u8), rank u8,
// rank x u64 shape, raw row-major payload. All multi-byte values little-endian.
inline constexpr std::uint8_t kAbstVersion = 1;

Tensor read_tensor(const std::filesystem::path& path);
void write_tensor(const Tensor& tensor, const std::filesystem::path& path);

Tensor decode_tensor(std::span<const std::uint8_t> bytes);
std::vector<std::uint8_t> encode_tensor(const Tensor& tensor);

}  // namespace attnsel
