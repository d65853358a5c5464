#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

namespace medi::image {

// 8-bit RGB raster, row-major interleaved.
struct Image {
  int width = 0;
  int height = 0;
  std::vector<std::uint8_t> rgb;

  bool operator==(const Image&) const = default;
};

// Binary PPM (P6, maxval 255).
std::vector<std::uint8_t> encode_ppm(const Image& img);
Image decode_ppm(const std::vector<std::uint8_t>& bytes);
Image read_ppm(const std::filesystem::path& path);
void write_ppm(const Image& img, const std::filesystem::path& path);

// CHW floats in [-1, 1] <-> 8-bit pixels.
std::vector<float> to_chw(const Image& img);
Image from_chw(const std::vector<float>& chw, int width, int height);

}  // namespace medi::image
