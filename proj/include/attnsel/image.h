#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

namespace attnsel {

struct ImageSize {
  std::int64_t width = 0;
  std::int64_t height = 0;
};

// 8-bit RGB image, interleaved HWC.
class ImageTensor {
 public:
  ImageTensor() = default;
  ImageTensor(std::int64_t width, std::int64_t height, std::vector<std::uint8_t> rgb, std::string source = {});

  static ImageTensor filled(std::int64_t width, std::int64_t height, std::uint8_t r, std::uint8_t g,
                            std::uint8_t b);

  std::int64_t width() const { return width_; }
  std::int64_t height() const { return height_; }
  ImageSize size() const { return {width_, height_}; }
  const std::string& source() const { return source_; }
  const std::vector<std::uint8_t>& pixels() const { return rgb_; }
  std::vector<std::uint8_t>& pixels() { return rgb_; }

  std::uint8_t at(std::int64_t x, std::int64_t y, int channel) const {
    return rgb_[static_cast<std::size_t>((y * width_ + x) * 3 + channel)];
  }

 private:
  std::int64_t width_ = 0;
  std::int64_t height_ = 0;
  std::vector<std::uint8_t> rgb_;
  std::string source_;
};

// PNG or JPEG, sniffed from the file signature; any color type becomes RGB.
ImageTensor decode_image(const std::filesystem::path& path);

void write_png(const ImageTensor& image, const std::filesystem::path& path);
std::vector<std::uint8_t> encode_png(const ImageTensor& image);

}  // namespace attnsel
