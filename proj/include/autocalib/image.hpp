#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "autocalib/camera.hpp"
#include "autocalib/types.hpp"

namespace autocalib {

// 8-bit grayscale image, row-major.
struct Image {
  int width = 0;
  int height = 0;
  std::vector<uint8_t> pixels;

  Image() = default;
  Image(int w, int h, uint8_t fill = 0)
      : width(w), height(h),
        pixels(static_cast<size_t>(w) * h, fill) {}

  uint8_t at(int x, int y) const {
    return pixels[static_cast<size_t>(y) * width + x];
  }
  uint8_t& at(int x, int y) {
    return pixels[static_cast<size_t>(y) * width + x];
  }
  bool inside(int x, int y) const {
    return x >= 0 && x < width && y >= 0 && y < height;
  }
};

// Binary PGM (P5, maxval <= 255) I/O. Throws Error(kIo) / Error(kParse).
Image read_pgm(const std::string& path);
void write_pgm(const Image& image, const std::string& path);

// Bilinear sample; coordinates outside the image return 0.
double bilinear_sample(const Image& image, double x, double y);

// Resample through a rectification map. Throws Error(kDimensionMismatch)
// if the map and image sizes disagree.
Image rectify_image(const Image& image, const RectificationMap& map);

// Mean local SSIM over all 8x8 windows (stride 1), standard constants
// C1 = (0.01*255)^2, C2 = (0.03*255)^2. Throws on size mismatch.
double ssim_mean(const Image& a, const Image& b);

}  // namespace autocalib
