#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <vector>

#include "afforda/types.hpp"

namespace afforda {

using Rgb = std::array<std::uint8_t, 3>;

// Interleaved 8-bit RGB raster.
class RgbImage {
 public:
  RgbImage() = default;
  RgbImage(int width, int height, Rgb fill = {0, 0, 0});

  int width() const { return width_; }
  int height() const { return height_; }
  bool in_bounds(int x, int y) const { return x >= 0 && y >= 0 && x < width_ && y < height_; }
  Rgb at(int x, int y) const;
  void set(int x, int y, Rgb c);
  // Alpha blend of `c` over the current pixel, rounded to nearest.
  void blend(int x, int y, Rgb c, double alpha);
  const std::vector<std::uint8_t>& data() const { return data_; }
  std::vector<std::uint8_t>& data() { return data_; }

  friend bool operator==(const RgbImage&, const RgbImage&) = default;

 private:
  int width_ = 0;
  int height_ = 0;
  std::vector<std::uint8_t> data_;
};

// 8-bit single-channel raster.
struct GrayImage {
  int width = 0;
  int height = 0;
  std::vector<std::uint8_t> pixels;
};

// PNG codec (libpng). Encoding is deterministic for identical pixels.
std::vector<std::uint8_t> encode_png(const RgbImage& img);
std::vector<std::uint8_t> encode_png(const GrayImage& img);
// Any 8-bit PNG is expanded to RGB.
RgbImage decode_png_rgb(const std::vector<std::uint8_t>& bytes);
// Only genuinely single-channel 8-bit PNGs decode; anything else is
// UnsupportedFormat.
GrayImage decode_png_gray(const std::vector<std::uint8_t>& bytes);

std::vector<std::uint8_t> read_file_bytes(const std::string& path);
void write_file_bytes(const std::string& path, const std::vector<std::uint8_t>& bytes);

RgbImage load_rgb(const std::string& path);
void save_png(const std::string& path, const RgbImage& img);
void save_png(const std::string& path, const GrayImage& img);

std::string base64_encode(const std::vector<std::uint8_t>& bytes);
// 64-bit FNV-1a as 16 lowercase hex digits.
std::string fnv1a_hex(const std::vector<std::uint8_t>& bytes);

// Heatmap rendered as 8-bit gray with its maximum mapped to 255.
GrayImage heatmap_to_gray(const AffordanceMap& map);

}  // namespace afforda
