#include "dtt/image_io.hpp"

#include <png.h>
#include <unistd.h>

#include <atomic>
#include <csetjmp>
#include <cstdio>
#include <cstring>
#include <memory>
#include <string>

#include "dtt/error.hpp"

namespace dtt {
namespace {

struct FileCloser {
  void operator()(std::FILE *f) const { std::fclose(f); }
};
using FilePtr = std::unique_ptr<std::FILE, FileCloser>;

FilePtr open_file(const std::filesystem::path &path, const char *mode) {
  FilePtr f(std::fopen(path.c_str(), mode));
  if (!f) throw IoError("cannot open '" + path.string() + "'");
  return f;
}

// libpng prints errors to stderr by default; keep the text for our own
// exception instead.
void on_png_error(png_structp png, png_const_charp message) {
  if (auto *text = static_cast<std::string *>(png_get_error_ptr(png))) *text = message;
  png_longjmp(png, 1);
}

void on_png_warning(png_structp, png_const_charp) {}

// Writes rows of already packed pixel bytes. Returns false on a libpng error.
bool encode(std::FILE *file, int width, int height, int bit_depth,
            int color_type, const std::uint8_t *pixels, std::size_t row_bytes) {
  png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr,
                                            on_png_error, on_png_warning);
  if (!png) return false;
  png_infop info = png_create_info_struct(png);
  if (!info) {
    png_destroy_write_struct(&png, nullptr);
    return false;
  }
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_write_struct(&png, &info);
    return false;
  }
  png_init_io(png, file);
  png_set_compression_level(png, 6);
  png_set_IHDR(png, info, static_cast<png_uint_32>(width),
               static_cast<png_uint_32>(height), bit_depth, color_type,
               PNG_INTERLACE_NONE, PNG_COMPRESSION_TYPE_DEFAULT,
               PNG_FILTER_TYPE_DEFAULT);
  png_write_info(png, info);
  // PNG stores 16-bit samples big-endian.
  if (bit_depth == 16) png_set_swap(png);
  for (int y = 0; y < height; ++y) {
    png_write_row(png, const_cast<png_bytep>(pixels + row_bytes * y));
  }
  png_write_end(png, nullptr);
  png_destroy_write_struct(&png, &info);
  return true;
}

struct Decoded {
  int width = 0;
  int height = 0;
  int bit_depth = 0;
  int color_type = 0;
  std::vector<std::uint8_t> bytes;
};

bool decode(std::FILE *file, Decoded &out, std::string &error) {
  png_structp png = png_create_read_struct(PNG_LIBPNG_VER_STRING, &error,
                                           on_png_error, on_png_warning);
  if (!png) return false;
  png_infop info = png_create_info_struct(png);
  if (!info) {
    png_destroy_read_struct(&png, nullptr, nullptr);
    return false;
  }
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_read_struct(&png, &info, nullptr);
    return false;
  }
  png_init_io(png, file);
  png_read_info(png, info);
  out.width = static_cast<int>(png_get_image_width(png, info));
  out.height = static_cast<int>(png_get_image_height(png, info));
  out.bit_depth = png_get_bit_depth(png, info);
  out.color_type = png_get_color_type(png, info);
  if (out.color_type == PNG_COLOR_TYPE_PALETTE) {
    png_set_palette_to_rgb(png);
    out.color_type = PNG_COLOR_TYPE_RGB;
  }
  if (out.bit_depth < 8) {
    png_set_packing(png);
    if (out.color_type == PNG_COLOR_TYPE_GRAY) png_set_expand_gray_1_2_4_to_8(png);
    out.bit_depth = 8;
  }
  if (out.bit_depth == 16) png_set_swap(png);
  png_read_update_info(png, info);
  const std::size_t row_bytes = png_get_rowbytes(png, info);
  out.bytes.resize(row_bytes * static_cast<std::size_t>(out.height));
  for (int y = 0; y < out.height; ++y) {
    png_read_row(png, out.bytes.data() + row_bytes * y, nullptr);
  }
  png_read_end(png, nullptr);
  png_destroy_read_struct(&png, &info, nullptr);
  return true;
}

Decoded read_any(const std::filesystem::path &path) {
  FilePtr f = open_file(path, "rb");
  Decoded d;
  std::string error;
  if (!decode(f.get(), d, error)) {
    throw IoError("malformed PNG '" + path.string() + "'" + (error.empty() ? "" : ": " + error));
  }
  return d;
}

void write_any(const std::filesystem::path &path, int width, int height,
               int bit_depth, int color_type, const std::uint8_t *pixels,
               std::size_t row_bytes) {
  // Written beside the target and renamed over it, so readers never see a
  // partial image.
  static std::atomic<unsigned> counter{0};
  std::filesystem::path tmp = path;
  tmp += ".tmp." + std::to_string(::getpid()) + "." + std::to_string(counter++);
  {
    FilePtr f = open_file(tmp, "wb");
    const bool ok = encode(f.get(), width, height, bit_depth, color_type, pixels, row_bytes);
    if (!ok || std::fflush(f.get()) != 0) {
      f.reset();
      std::filesystem::remove(tmp);
      throw IoError("failed to write PNG '" + path.string() + "'");
    }
  }
  std::error_code ec;
  std::filesystem::rename(tmp, path, ec);
  if (ec) {
    std::filesystem::remove(tmp);
    throw IoError("cannot replace '" + path.string() + "': " + ec.message());
  }
}

void check_size(int width, int height, std::size_t have, std::size_t per_pixel) {
  if (width <= 0 || height <= 0 ||
      have != static_cast<std::size_t>(width) * height * per_pixel) {
    throw InputError("image buffer does not match its dimensions");
  }
}

}  // namespace

void write_png(const std::filesystem::path &path, const RgbImage &image) {
  check_size(image.width, image.height, image.data.size(), 3);
  write_any(path, image.width, image.height, 8, PNG_COLOR_TYPE_RGB,
            image.data.data(), static_cast<std::size_t>(image.width) * 3);
}

void write_png(const std::filesystem::path &path, const MaskImage &image) {
  check_size(image.width, image.height, image.data.size(), 1);
  write_any(path, image.width, image.height, 8, PNG_COLOR_TYPE_GRAY,
            image.data.data(), static_cast<std::size_t>(image.width));
}

void write_png(const std::filesystem::path &path, const DepthFrame &depth) {
  check_size(depth.width, depth.height, depth.raw.size(), 1);
  write_any(path, depth.width, depth.height, 16, PNG_COLOR_TYPE_GRAY,
            reinterpret_cast<const std::uint8_t *>(depth.raw.data()),
            static_cast<std::size_t>(depth.width) * 2);
}

RgbImage read_rgb_png(const std::filesystem::path &path) {
  Decoded d = read_any(path);
  if (d.bit_depth != 8 || d.color_type != PNG_COLOR_TYPE_RGB) {
    throw InputError("'" + path.string() + "' is not an 8-bit RGB PNG");
  }
  return {d.width, d.height, std::move(d.bytes)};
}

MaskImage read_mask_png(const std::filesystem::path &path) {
  Decoded d = read_any(path);
  if (d.bit_depth != 8 || d.color_type != PNG_COLOR_TYPE_GRAY) {
    throw InputError("'" + path.string() + "' is not an 8-bit single-channel PNG");
  }
  return {d.width, d.height, std::move(d.bytes)};
}

DepthFrame read_depth_png(const std::filesystem::path &path) {
  Decoded d = read_any(path);
  if (d.bit_depth != 16 || d.color_type != PNG_COLOR_TYPE_GRAY) {
    throw InputError("'" + path.string() + "' is not a 16-bit single-channel PNG");
  }
  DepthFrame depth;
  depth.width = d.width;
  depth.height = d.height;
  depth.raw.resize(static_cast<std::size_t>(d.width) * d.height);
  std::memcpy(depth.raw.data(), d.bytes.data(), d.bytes.size());
  return depth;
}

}  // namespace dtt
