#include "aqsplat/image_io.hpp"

#include "aqsplat/errors.hpp"

#include <png.h>

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <memory>
#include <vector>

namespace aqsp {
namespace {

static_assert(std::endian::native == std::endian::little, "raw float dumps assume a little-endian host");

struct FileCloser {
  void operator()(std::FILE* f) const { std::fclose(f); }
};
using FilePtr = std::unique_ptr<std::FILE, FileCloser>;

std::uint8_t to_byte(double v) {
  return static_cast<std::uint8_t>(std::lround(std::clamp(v, 0.0, 1.0) * 255.0));
}

}  // namespace

void write_png(const std::string& path, const ImageBuffer& image) {
  if (image.channels != 1 && image.channels != 3) throw UsageError("write_png: need 1 or 3 channels");
  FilePtr file(std::fopen(path.c_str(), "wb"));
  if (!file) throw std::runtime_error("cannot open " + path + " for writing");
  png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  png_infop info = png ? png_create_info_struct(png) : nullptr;
  if (!info) {
    png_destroy_write_struct(&png, nullptr);
    throw std::runtime_error("libpng initialization failed");
  }
  std::vector<std::uint8_t> bytes(image.data.size());
  std::transform(image.data.begin(), image.data.end(), bytes.begin(), to_byte);
  std::vector<png_bytep> rows(static_cast<std::size_t>(image.height));
  for (int y = 0; y < image.height; ++y) {
    rows[y] = bytes.data() + static_cast<std::size_t>(y) * image.width * image.channels;
  }
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_write_struct(&png, &info);
    throw std::runtime_error("failed writing " + path);
  }
  png_init_io(png, file.get());
  png_set_IHDR(png, info, image.width, image.height, 8, image.channels == 3 ? PNG_COLOR_TYPE_RGB : PNG_COLOR_TYPE_GRAY,
               PNG_INTERLACE_NONE, PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
  png_write_info(png, info);
  png_write_image(png, rows.data());
  png_write_end(png, nullptr);
  png_destroy_write_struct(&png, &info);
}

ImageBuffer read_png(const std::string& path) {
  FilePtr file(std::fopen(path.c_str(), "rb"));
  if (!file) throw MissingFileError("missing image file: " + path);
  png_byte sig[8];
  if (std::fread(sig, 1, 8, file.get()) != 8 || png_sig_cmp(sig, 0, 8) != 0) {
    throw MalformedRecordError("not a PNG file: " + path);
  }
  png_structp png = png_create_read_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  png_infop info = png ? png_create_info_struct(png) : nullptr;
  if (!info) {
    png_destroy_read_struct(&png, nullptr, nullptr);
    throw std::runtime_error("libpng initialization failed");
  }
  ImageBuffer out;
  std::vector<std::uint8_t> bytes;
  std::vector<png_bytep> rows;
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_read_struct(&png, &info, nullptr);
    throw MalformedRecordError("corrupt PNG: " + path);
  }
  png_init_io(png, file.get());
  png_set_sig_bytes(png, 8);
  png_read_info(png, info);
  png_set_strip_16(png);
  png_set_strip_alpha(png);
  png_set_packing(png);
  png_set_palette_to_rgb(png);
  png_set_expand_gray_1_2_4_to_8(png);
  png_read_update_info(png, info);
  const int w = static_cast<int>(png_get_image_width(png, info));
  const int h = static_cast<int>(png_get_image_height(png, info));
  const int ch = png_get_channels(png, info);
  bytes.resize(static_cast<std::size_t>(w) * h * ch);
  rows.resize(static_cast<std::size_t>(h));
  for (int y = 0; y < h; ++y) rows[y] = bytes.data() + static_cast<std::size_t>(y) * w * ch;
  png_read_image(png, rows.data());
  png_read_end(png, nullptr);
  png_destroy_read_struct(&png, &info, nullptr);
  out = ImageBuffer(w, h, ch);
  for (std::size_t k = 0; k < bytes.size(); ++k) out.data[k] = bytes[k] / 255.0;
  return out;
}

ImageBuffer quantize_8bit(const ImageBuffer& image) {
  ImageBuffer out = image;
  for (double& v : out.data) v = to_byte(v) / 255.0;
  return out;
}

void write_f32(const std::string& path, const ImageBuffer& image) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw std::runtime_error("cannot open " + path + " for writing");
  std::vector<float> values(image.data.begin(), image.data.end());
  f.write(reinterpret_cast<const char*>(values.data()), static_cast<std::streamsize>(values.size() * sizeof(float)));
  if (!f) throw std::runtime_error("failed writing " + path);
}

ImageBuffer read_f32(const std::string& path, int width, int height, int channels) {
  std::ifstream f(path, std::ios::binary | std::ios::ate);
  if (!f) throw MissingFileError("missing raw float file: " + path);
  const auto bytes = static_cast<std::size_t>(f.tellg());
  ImageBuffer out(width, height, channels);
  if (bytes != out.data.size() * sizeof(float)) {
    throw SizeMismatchError(path + ": expected " + std::to_string(out.data.size() * sizeof(float)) + " bytes, found " +
                            std::to_string(bytes));
  }
  f.seekg(0);
  std::vector<float> values(out.data.size());
  f.read(reinterpret_cast<char*>(values.data()), static_cast<std::streamsize>(bytes));
  std::copy(values.begin(), values.end(), out.data.begin());
  return out;
}

}  // namespace aqsp
