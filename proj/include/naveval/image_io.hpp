#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

namespace naveval {

class ImageError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// 8-bit interleaved RGB, row-major, top row first.
struct RgbImage {
  int width = 0;
  int height = 0;
  std::vector<std::uint8_t> pixels;  // width*height*3

  std::uint8_t* at(int x, int y) { return pixels.data() + 3 * (y * width + x); }
  const std::uint8_t* at(int x, int y) const {
    return pixels.data() + 3 * (y * width + x);
  }
};

/// Single-channel float32 depth in meters, row-major, top row first.
/// Values <= 0 or non-finite mark invalid pixels.
struct DepthImage {
  int width = 0;
  int height = 0;
  std::vector<float> values;  // width*height

  float& at(int x, int y) { return values[y * width + x]; }
  float at(int x, int y) const { return values[y * width + x]; }
};

/// 8-bit single-channel mask, row-major. Nonzero selects the pixel.
struct MaskImage {
  int width = 0;
  int height = 0;
  std::vector<std::uint8_t> values;  // width*height

  std::uint8_t& at(int x, int y) { return values[y * width + x]; }
  std::uint8_t at(int x, int y) const { return values[y * width + x]; }
};

// Binary PPM (P6), 255 maxval.
void write_ppm(const std::string& path, const RgbImage& image);
RgbImage read_ppm(const std::string& path);

// PFM grayscale ("Pf"), rows stored bottom-up as the format requires,
// negative scale marking little-endian floats.
void write_pfm(const std::string& path, const DepthImage& image);
DepthImage read_pfm(const std::string& path);

// Binary PGM (P5), 255 maxval.
void write_pgm(const std::string& path, const MaskImage& image);
MaskImage read_pgm(const std::string& path);

}  // namespace naveval
