#include "afforda/image.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <iterator>

#include <png.h>

#include "afforda/error.hpp"

namespace afforda {

RgbImage::RgbImage(int width, int height, Rgb fill) : width_(width), height_(height) {
  if (width < 0 || height < 0) throw Error(Errc::InvalidArgument, "negative image dimensions");
  data_.resize(static_cast<std::size_t>(width) * height * 3);
  for (std::size_t i = 0; i < data_.size(); i += 3) {
    data_[i] = fill[0];
    data_[i + 1] = fill[1];
    data_[i + 2] = fill[2];
  }
}

Rgb RgbImage::at(int x, int y) const {
  const std::size_t i = (static_cast<std::size_t>(y) * width_ + x) * 3;
  return {data_[i], data_[i + 1], data_[i + 2]};
}

void RgbImage::set(int x, int y, Rgb c) {
  if (!in_bounds(x, y)) return;
  const std::size_t i = (static_cast<std::size_t>(y) * width_ + x) * 3;
  data_[i] = c[0];
  data_[i + 1] = c[1];
  data_[i + 2] = c[2];
}

void RgbImage::blend(int x, int y, Rgb c, double alpha) {
  if (!in_bounds(x, y)) return;
  const Rgb base = at(x, y);
  Rgb out;
  for (int k = 0; k < 3; ++k) {
    const double v = (1.0 - alpha) * base[k] + alpha * c[k];
    out[k] = static_cast<std::uint8_t>(std::lround(std::clamp(v, 0.0, 255.0)));
  }
  set(x, y, out);
}

namespace {

struct WriteBuffer {
  std::vector<std::uint8_t> bytes;
};

void png_write_cb(png_structp png, png_bytep data, png_size_t len) {
  auto* buf = static_cast<WriteBuffer*>(png_get_io_ptr(png));
  buf->bytes.insert(buf->bytes.end(), data, data + len);
}

void png_flush_cb(png_structp) {}

[[noreturn]] void png_error_cb(png_structp png, png_const_charp) { png_longjmp(png, 1); }

void png_warning_cb(png_structp, png_const_charp) {}

std::vector<std::uint8_t> encode(int width, int height, int color_type, int channels,
                                 const std::uint8_t* pixels) {
  if (width < 1 || height < 1) throw Error(Errc::InvalidArgument, "cannot encode an empty image");
  png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, png_error_cb, png_warning_cb);
  if (!png) throw Error(Errc::IoError, "png_create_write_struct failed");
  png_infop info = png_create_info_struct(png);
  WriteBuffer buf;
  if (!info || setjmp(png_jmpbuf(png))) {
    png_destroy_write_struct(&png, &info);
    throw Error(Errc::IoError, "PNG encoding failed");
  }
  png_set_write_fn(png, &buf, png_write_cb, png_flush_cb);
  png_set_compression_level(png, 6);
  png_set_IHDR(png, info, width, height, 8, color_type, PNG_INTERLACE_NONE,
               PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
  png_write_info(png, info);
  const std::size_t stride = static_cast<std::size_t>(width) * channels;
  for (int y = 0; y < height; ++y) {
    png_write_row(png, const_cast<png_bytep>(pixels + y * stride));
  }
  png_write_end(png, nullptr);
  png_destroy_write_struct(&png, &info);
  return std::move(buf.bytes);
}

struct ReadBuffer {
  const std::vector<std::uint8_t>* bytes;
  std::size_t pos = 0;
};

void png_read_cb(png_structp png, png_bytep out, png_size_t len) {
  auto* buf = static_cast<ReadBuffer*>(png_get_io_ptr(png));
  if (buf->pos + len > buf->bytes->size()) png_error(png, "truncated PNG");
  std::memcpy(out, buf->bytes->data() + buf->pos, len);
  buf->pos += len;
}

struct Decoded {
  int width = 0;
  int height = 0;
  int channels = 0;
  std::vector<std::uint8_t> pixels;
};

// Decodes to 8-bit gray (1 channel) or RGB (3 channels); alpha is dropped and
// palettes expanded. `gray_only` rejects anything not stored as 8-bit gray.
Decoded decode(const std::vector<std::uint8_t>& bytes, bool gray_only) {
  if (bytes.size() < 8 || png_sig_cmp(bytes.data(), 0, 8) != 0) {
    throw Error(Errc::UnsupportedFormat, "not a PNG file");
  }
  png_structp png = png_create_read_struct(PNG_LIBPNG_VER_STRING, nullptr, png_error_cb, png_warning_cb);
  if (!png) throw Error(Errc::IoError, "png_create_read_struct failed");
  png_infop info = png_create_info_struct(png);
  ReadBuffer buf{&bytes, 0};
  Decoded out;
  // Declared ahead of setjmp so a longjmp never skips a constructor.
  std::vector<png_bytep> rows;
  if (!info || setjmp(png_jmpbuf(png))) {
    png_destroy_read_struct(&png, &info, nullptr);
    throw Error(Errc::UnsupportedFormat, "PNG decoding failed");
  }
  png_set_read_fn(png, &buf, png_read_cb);
  png_read_info(png, info);
  const int color = png_get_color_type(png, info);
  const int depth = png_get_bit_depth(png, info);
  if (gray_only && (color != PNG_COLOR_TYPE_GRAY || depth != 8)) {
    png_destroy_read_struct(&png, &info, nullptr);
    throw Error(Errc::UnsupportedFormat, "expected an 8-bit single-channel PNG");
  }
  if (depth == 16) png_set_strip_16(png);
  if (color == PNG_COLOR_TYPE_PALETTE) png_set_palette_to_rgb(png);
  if (color == PNG_COLOR_TYPE_GRAY && depth < 8) png_set_expand_gray_1_2_4_to_8(png);
  if (color & PNG_COLOR_MASK_ALPHA) png_set_strip_alpha(png);
  if (png_get_valid(png, info, PNG_INFO_tRNS)) png_set_strip_alpha(png);
  if (!gray_only && (color == PNG_COLOR_TYPE_GRAY || color == PNG_COLOR_TYPE_GRAY_ALPHA)) {
    png_set_gray_to_rgb(png);
  }
  png_read_update_info(png, info);
  out.width = static_cast<int>(png_get_image_width(png, info));
  out.height = static_cast<int>(png_get_image_height(png, info));
  out.channels = png_get_channels(png, info);
  const std::size_t stride = png_get_rowbytes(png, info);
  out.pixels.resize(stride * out.height);
  rows.resize(out.height);
  for (int y = 0; y < out.height; ++y) rows[y] = out.pixels.data() + y * stride;
  png_read_image(png, rows.data());
  png_read_end(png, nullptr);
  png_destroy_read_struct(&png, &info, nullptr);
  return out;
}

}  // namespace

std::vector<std::uint8_t> encode_png(const RgbImage& img) {
  return encode(img.width(), img.height(), PNG_COLOR_TYPE_RGB, 3, img.data().data());
}

std::vector<std::uint8_t> encode_png(const GrayImage& img) {
  if (img.pixels.size() != static_cast<std::size_t>(img.width) * img.height) {
    throw Error(Errc::InvalidArgument, "gray image pixel count mismatch");
  }
  return encode(img.width, img.height, PNG_COLOR_TYPE_GRAY, 1, img.pixels.data());
}

RgbImage decode_png_rgb(const std::vector<std::uint8_t>& bytes) {
  Decoded d = decode(bytes, false);
  if (d.channels != 3) throw Error(Errc::UnsupportedFormat, "unexpected channel layout");
  RgbImage img(d.width, d.height);
  img.data() = std::move(d.pixels);
  return img;
}

GrayImage decode_png_gray(const std::vector<std::uint8_t>& bytes) {
  Decoded d = decode(bytes, true);
  if (d.channels != 1) throw Error(Errc::UnsupportedFormat, "expected a single-channel PNG");
  return {d.width, d.height, std::move(d.pixels)};
}

std::vector<std::uint8_t> read_file_bytes(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(Errc::MissingFile, path);
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

void write_file_bytes(const std::string& path, const std::vector<std::uint8_t>& bytes) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error(Errc::IoError, "cannot open for writing: " + path);
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw Error(Errc::IoError, "write failed: " + path);
}

RgbImage load_rgb(const std::string& path) { return decode_png_rgb(read_file_bytes(path)); }

void save_png(const std::string& path, const RgbImage& img) { write_file_bytes(path, encode_png(img)); }

void save_png(const std::string& path, const GrayImage& img) { write_file_bytes(path, encode_png(img)); }

std::string base64_encode(const std::vector<std::uint8_t>& bytes) {
  static constexpr char kAlphabet[] =
      "ABCDEFGHIJKLMNOPQRSTUVWXYZabcdefghijklmnopqrstuvwxyz0123456789+/";
  std::string out;
  out.reserve((bytes.size() + 2) / 3 * 4);
  std::size_t i = 0;
  for (; i + 2 < bytes.size(); i += 3) {
    const std::uint32_t v = (bytes[i] << 16) | (bytes[i + 1] << 8) | bytes[i + 2];
    out += kAlphabet[(v >> 18) & 63];
    out += kAlphabet[(v >> 12) & 63];
    out += kAlphabet[(v >> 6) & 63];
    out += kAlphabet[v & 63];
  }
  if (i < bytes.size()) {
    std::uint32_t v = bytes[i] << 16;
    if (i + 1 < bytes.size()) v |= bytes[i + 1] << 8;
    out += kAlphabet[(v >> 18) & 63];
    out += kAlphabet[(v >> 12) & 63];
    out += i + 1 < bytes.size() ? kAlphabet[(v >> 6) & 63] : '=';
    out += '=';
  }
  return out;
}

std::string fnv1a_hex(const std::vector<std::uint8_t>& bytes) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (auto b : bytes) {
    h ^= b;
    h *= 0x100000001b3ULL;
  }
  static constexpr char kHex[] = "0123456789abcdef";
  std::string out(16, '0');
  for (int i = 15; i >= 0; --i) {
    out[i] = kHex[h & 15];
    h >>= 4;
  }
  return out;
}

GrayImage heatmap_to_gray(const AffordanceMap& map) {
  GrayImage g{map.width(), map.height(), std::vector<std::uint8_t>(map.size(), 0)};
  const double peak = map.max();
  if (peak <= 0.0) return g;
  const auto& v = map.values();
  for (std::size_t i = 0; i < v.size(); ++i) {
    g.pixels[i] = static_cast<std::uint8_t>(std::lround(255.0 * v[i] / peak));
  }
  return g;
}

}  // namespace afforda
