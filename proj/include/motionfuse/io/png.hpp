#pragma once

#include <png.h>

#include <cstdint>
#include <cstdio>
#include <memory>
#include <string>
#include <vector>

#include "motionfuse/core/error.hpp"

namespace mfuse::io {

struct Image8 {
  int height = 0, width = 0, channels = 0;
  std::vector<std::uint8_t> data;  // row-major, interleaved
};

struct Image16 {
  int height = 0, width = 0;
  std::vector<std::uint16_t> data;
};

namespace detail {

struct FileCloser {
  void operator()(std::FILE* f) const {
    if (f) std::fclose(f);
  }
};
using FilePtr = std::unique_ptr<std::FILE, FileCloser>;

inline FilePtr open_file(const std::string& path, const char* mode) {
  FilePtr f(std::fopen(path.c_str(), mode));
  check(f != nullptr, ErrorCode::kIo, "cannot open '", path, "'");
  return f;
}

[[noreturn]] inline void png_error_fn(png_structp png, png_const_charp msg) {
  auto* text = static_cast<std::string*>(png_get_error_ptr(png));
  if (text) *text = msg;
  png_longjmp(png, 1);
}
inline void png_warning_fn(png_structp, png_const_charp) {}

// Rows are handed in as bytes already in PNG (big-endian for 16-bit) order.
inline void write_png(const std::string& path, int h, int w, int color_type, int depth,
                      const std::vector<std::uint8_t>& bytes) {
  FilePtr f = open_file(path, "wb");
  std::string err;
  png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, &err, png_error_fn, png_warning_fn);
  check(png != nullptr, ErrorCode::kIo, "png_create_write_struct failed");
  png_infop info = png_create_info_struct(png);
  const std::size_t row_bytes = bytes.size() / static_cast<std::size_t>(h);
  std::vector<png_bytep> rows(h);
  for (int y = 0; y < h; ++y) rows[y] = const_cast<png_bytep>(bytes.data() + row_bytes * y);
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_write_struct(&png, &info);
    fail(ErrorCode::kIo, "writing '", path, "': ", err);
  }
  png_init_io(png, f.get());
  png_set_IHDR(png, info, w, h, depth, color_type, PNG_INTERLACE_NONE, PNG_COMPRESSION_TYPE_DEFAULT,
               PNG_FILTER_TYPE_DEFAULT);
  png_write_info(png, info);
  png_write_image(png, rows.data());
  png_write_end(png, nullptr);
  png_destroy_write_struct(&png, &info);
}

struct RawPng {
  int h = 0, w = 0, channels = 0, depth = 0;
  std::vector<std::uint8_t> bytes;
};

inline RawPng read_png(const std::string& path) {
  FilePtr f = open_file(path, "rb");
  unsigned char sig[8];
  check(std::fread(sig, 1, 8, f.get()) == 8 && png_sig_cmp(sig, 0, 8) == 0, ErrorCode::kFormat, "'", path,
        "' is not a PNG file");
  std::string err;
  png_structp png = png_create_read_struct(PNG_LIBPNG_VER_STRING, &err, png_error_fn, png_warning_fn);
  check(png != nullptr, ErrorCode::kIo, "png_create_read_struct failed");
  png_infop info = png_create_info_struct(png);
  RawPng out;
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_read_struct(&png, &info, nullptr);
    fail(ErrorCode::kFormat, "reading '", path, "': ", err);
  }
  png_init_io(png, f.get());
  png_set_sig_bytes(png, 8);
  png_read_info(png, info);
  if (png_get_color_type(png, info) == PNG_COLOR_TYPE_PALETTE) png_set_palette_to_rgb(png);
  png_read_update_info(png, info);
  out.w = static_cast<int>(png_get_image_width(png, info));
  out.h = static_cast<int>(png_get_image_height(png, info));
  out.channels = png_get_channels(png, info);
  out.depth = png_get_bit_depth(png, info);
  const std::size_t row_bytes = png_get_rowbytes(png, info);
  out.bytes.resize(row_bytes * out.h);
  std::vector<png_bytep> rows(out.h);
  for (int y = 0; y < out.h; ++y) rows[y] = out.bytes.data() + row_bytes * y;
  png_read_image(png, rows.data());
  png_read_end(png, nullptr);
  png_destroy_read_struct(&png, &info, nullptr);
  return out;
}

}  // namespace detail

inline void write_png8(const std::string& path, const Image8& img) {
  check(img.channels == 1 || img.channels == 3, ErrorCode::kInvalidArgument, "write_png8: channels must be 1 or 3");
  check(img.data.size() == static_cast<std::size_t>(img.height) * img.width * img.channels,
        ErrorCode::kShapeMismatch, "write_png8: buffer size");
  detail::write_png(path, img.height, img.width, img.channels == 3 ? PNG_COLOR_TYPE_RGB : PNG_COLOR_TYPE_GRAY, 8,
                    img.data);
}

inline void write_png16(const std::string& path, const Image16& img) {
  check(img.data.size() == static_cast<std::size_t>(img.height) * img.width, ErrorCode::kShapeMismatch,
        "write_png16: buffer size");
  std::vector<std::uint8_t> bytes(img.data.size() * 2);
  for (std::size_t i = 0; i < img.data.size(); ++i) {
    bytes[2 * i] = static_cast<std::uint8_t>(img.data[i] >> 8);
    bytes[2 * i + 1] = static_cast<std::uint8_t>(img.data[i] & 0xFF);
  }
  detail::write_png(path, img.height, img.width, PNG_COLOR_TYPE_GRAY, 16, bytes);
}

inline Image8 read_png8(const std::string& path) {
  auto raw = detail::read_png(path);
  check(raw.depth == 8, ErrorCode::kFormat, "'", path, "': expected 8-bit PNG, got ", raw.depth, "-bit");
  return {raw.h, raw.w, raw.channels, std::move(raw.bytes)};
}

inline Image16 read_png16(const std::string& path) {
  auto raw = detail::read_png(path);
  check(raw.depth == 16 && raw.channels == 1, ErrorCode::kFormat, "'", path,
        "': expected single-channel 16-bit PNG");
  Image16 out{raw.h, raw.w, std::vector<std::uint16_t>(static_cast<std::size_t>(raw.h) * raw.w)};
  for (std::size_t i = 0; i < out.data.size(); ++i)
    out.data[i] = static_cast<std::uint16_t>((raw.bytes[2 * i] << 8) | raw.bytes[2 * i + 1]);
  return out;
}

}  // namespace mfuse::io
