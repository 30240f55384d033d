#pragma once

#include <cstddef>
#include <filesystem>
#include <string>
#include <utility>
#include <vector>

#include "affect/tensor.hpp"

namespace affect {

// Pixels in [0, 1], row-major height x width x channels.
struct Image {
  std::size_t height = 0;
  std::size_t width = 0;
  std::size_t channels = 1;
  std::vector<double> pixels;

  Tensor to_tensor() const;  // [height x width x channels]
  static Image from_tensor(const Tensor& t);
};

// Binary PGM (P5, grayscale) and PPM (P6, RGB) with maxval <= 255. Values
// are scaled by 1/maxval on read and quantized to 8 bits on write.
Image read_pnm(const std::filesystem::path& path);
void write_pnm(const std::filesystem::path& path, const Image& image);

// Every .pgm/.ppm file directly inside dir, sorted by file name.
std::vector<std::pair<std::string, Image>> load_image_dir(const std::filesystem::path& dir);

}  // namespace affect
