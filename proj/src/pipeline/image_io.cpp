#include "medi/image_io.hpp"

#include "medi/error.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <fstream>
#include <iterator>

namespace medi::image {

std::vector<std::uint8_t> encode_ppm(const Image& img) {
  const std::string header = "P6\n" + std::to_string(img.width) + " " + std::to_string(img.height) + "\n255\n";
  std::vector<std::uint8_t> out(header.begin(), header.end());
  out.insert(out.end(), img.rgb.begin(), img.rgb.end());
  return out;
}

Image decode_ppm(const std::vector<std::uint8_t>& bytes) {
  std::size_t pos = 0;
  auto skip_space = [&] {
    while (pos < bytes.size()) {
      if (bytes[pos] == '#') {
        while (pos < bytes.size() && bytes[pos] != '\n') ++pos;
      } else if (std::isspace(bytes[pos])) {
        ++pos;
      } else {
        break;
      }
    }
  };
  auto read_int = [&] {
    skip_space();
    int v = 0;
    bool any = false;
    while (pos < bytes.size() && std::isdigit(bytes[pos])) {
      v = v * 10 + (bytes[pos++] - '0');
      any = true;
    }
    if (!any) throw Error("malformed PPM header");
    return v;
  };
  if (bytes.size() < 2 || bytes[0] != 'P' || bytes[1] != '6') throw Error("not a binary PPM image");
  pos = 2;
  Image img;
  img.width = read_int();
  img.height = read_int();
  if (read_int() != 255) throw Error("only 8-bit PPM images are supported");
  ++pos;  // single whitespace before the raster
  const std::size_t n = static_cast<std::size_t>(img.width) * img.height * 3;
  if (bytes.size() < pos + n) throw Error("truncated PPM raster");
  img.rgb.assign(bytes.begin() + static_cast<std::ptrdiff_t>(pos), bytes.begin() + static_cast<std::ptrdiff_t>(pos + n));
  return img;
}

Image read_ppm(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot open image " + path.string());
  std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  return decode_ppm(bytes);
}

void write_ppm(const Image& img, const std::filesystem::path& path) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  const auto bytes = encode_ppm(img);
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw Error("cannot write image " + path.string());
}

std::vector<float> to_chw(const Image& img) {
  const std::size_t hw = static_cast<std::size_t>(img.width) * img.height;
  std::vector<float> out(3 * hw);
  for (std::size_t p = 0; p < hw; ++p)
    for (std::size_t c = 0; c < 3; ++c) out[c * hw + p] = img.rgb[p * 3 + c] / 127.5f - 1.0f;
  return out;
}

Image from_chw(const std::vector<float>& chw, int width, int height) {
  const std::size_t hw = static_cast<std::size_t>(width) * height;
  if (chw.size() != 3 * hw) throw Error("from_chw: expected 3 channels");
  Image img{width, height, std::vector<std::uint8_t>(3 * hw)};
  for (std::size_t p = 0; p < hw; ++p)
    for (std::size_t c = 0; c < 3; ++c) {
      const float v = std::clamp((chw[c * hw + p] + 1.0f) * 127.5f, 0.0f, 255.0f);
      img.rgb[p * 3 + c] = static_cast<std::uint8_t>(std::lround(v));
    }
  return img;
}

}  // namespace medi::image
