#include "ect/png_io.hpp"

#include <png.h>

#include <cstdio>
#include <cstring>
#include <memory>
#include <vector>

namespace ect::png {

namespace {

struct FileCloser {
  void operator()(std::FILE* f) const {
    if (f) std::fclose(f);
  }
};
using FilePtr = std::unique_ptr<std::FILE, FileCloser>;

struct Decoded {
  std::vector<std::vector<png_byte>> rows;
  png_uint_32 width = 0, height = 0;
  int bit_depth = 0;
  int channels = 0;
};

// Reads any PNG normalized to either GRAY (keep16=true allows 16-bit) or RGB8.
Decoded decode(const std::string& path, bool want_rgb, bool keep16) {
  FilePtr fp(std::fopen(path.c_str(), "rb"));
  if (!fp) throw IoError("png: cannot open " + path);

  png_byte header[8];
  if (std::fread(header, 1, 8, fp.get()) != 8 || png_sig_cmp(header, 0, 8))
    throw IoError("png: not a PNG file: " + path);

  png_structp png_ptr = png_create_read_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  if (!png_ptr) throw IoError("png: read struct alloc failed");
  png_infop info_ptr = png_create_info_struct(png_ptr);
  if (!info_ptr) {
    png_destroy_read_struct(&png_ptr, nullptr, nullptr);
    throw IoError("png: info struct alloc failed");
  }
  Decoded out;
  if (setjmp(png_jmpbuf(png_ptr))) {
    png_destroy_read_struct(&png_ptr, &info_ptr, nullptr);
    throw IoError("png: corrupt file: " + path);
  }
  png_init_io(png_ptr, fp.get());
  png_set_sig_bytes(png_ptr, 8);
  png_read_info(png_ptr, info_ptr);

  int color_type = png_get_color_type(png_ptr, info_ptr);
  int depth = png_get_bit_depth(png_ptr, info_ptr);

  if (color_type == PNG_COLOR_TYPE_PALETTE) png_set_palette_to_rgb(png_ptr);
  if (color_type == PNG_COLOR_TYPE_GRAY && depth < 8) png_set_expand_gray_1_2_4_to_8(png_ptr);
  if (png_get_valid(png_ptr, info_ptr, PNG_INFO_tRNS)) png_set_tRNS_to_alpha(png_ptr);
  png_set_strip_alpha(png_ptr);
  if (want_rgb) {
    if (color_type == PNG_COLOR_TYPE_GRAY || color_type == PNG_COLOR_TYPE_GRAY_ALPHA)
      png_set_gray_to_rgb(png_ptr);
    png_set_strip_16(png_ptr);
  } else {
    if (color_type == PNG_COLOR_TYPE_RGB || color_type == PNG_COLOR_TYPE_RGB_ALPHA ||
        color_type == PNG_COLOR_TYPE_PALETTE)
      png_set_rgb_to_gray_fixed(png_ptr, 1, -1, -1);
    if (!keep16) png_set_strip_16(png_ptr);
    png_set_swap(png_ptr);  // 16-bit PNG data is big-endian on disk
  }
  png_read_update_info(png_ptr, info_ptr);

  out.width = png_get_image_width(png_ptr, info_ptr);
  out.height = png_get_image_height(png_ptr, info_ptr);
  out.bit_depth = png_get_bit_depth(png_ptr, info_ptr);
  out.channels = png_get_channels(png_ptr, info_ptr);

  const size_t rowbytes = png_get_rowbytes(png_ptr, info_ptr);
  out.rows.assign(out.height, std::vector<png_byte>(rowbytes));
  std::vector<png_bytep> row_ptrs(out.height);
  for (png_uint_32 y = 0; y < out.height; ++y) row_ptrs[y] = out.rows[y].data();
  png_read_image(png_ptr, row_ptrs.data());
  png_read_end(png_ptr, nullptr);
  png_destroy_read_struct(&png_ptr, &info_ptr, nullptr);
  return out;
}

void encode(const std::string& path, int width, int height, int color_type, int depth,
            const std::vector<std::vector<png_byte>>& rows) {
  FilePtr fp(std::fopen(path.c_str(), "wb"));
  if (!fp) throw IoError("png: cannot open for write " + path);
  png_structp png_ptr = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  if (!png_ptr) throw IoError("png: write struct alloc failed");
  png_infop info_ptr = png_create_info_struct(png_ptr);
  if (!info_ptr) {
    png_destroy_write_struct(&png_ptr, nullptr);
    throw IoError("png: info struct alloc failed");
  }
  if (setjmp(png_jmpbuf(png_ptr))) {
    png_destroy_write_struct(&png_ptr, &info_ptr);
    throw IoError("png: write failed: " + path);
  }
  png_init_io(png_ptr, fp.get());
  png_set_IHDR(png_ptr, info_ptr, static_cast<png_uint_32>(width),
               static_cast<png_uint_32>(height), depth, color_type, PNG_INTERLACE_NONE,
               PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
  png_write_info(png_ptr, info_ptr);
  if (depth == 16) png_set_swap(png_ptr);
  std::vector<png_bytep> row_ptrs(rows.size());
  for (size_t y = 0; y < rows.size(); ++y)
    row_ptrs[y] = const_cast<png_bytep>(rows[y].data());
  png_write_image(png_ptr, row_ptrs.data());
  png_write_end(png_ptr, nullptr);
  png_destroy_write_struct(&png_ptr, &info_ptr);
}

png_byte quantize8(Real v) {
  const Real r = std::round(v);
  return static_cast<png_byte>(std::min<Real>(std::max<Real>(r, 0), 255));
}

}  // namespace

MatX read_gray8(const std::string& path) {
  Decoded d = decode(path, false, false);
  MatX m(d.height, d.width);
  for (png_uint_32 y = 0; y < d.height; ++y)
    for (png_uint_32 x = 0; x < d.width; ++x) m(y, x) = d.rows[y][x];
  return m;
}

MatX read_gray16(const std::string& path) {
  Decoded d = decode(path, false, true);
  MatX m(d.height, d.width);
  if (d.bit_depth == 16) {
    for (png_uint_32 y = 0; y < d.height; ++y) {
      const auto* p = reinterpret_cast<const std::uint16_t*>(d.rows[y].data());
      for (png_uint_32 x = 0; x < d.width; ++x) m(y, x) = p[x];
    }
  } else {
    for (png_uint_32 y = 0; y < d.height; ++y)
      for (png_uint_32 x = 0; x < d.width; ++x) m(y, x) = d.rows[y][x] * 257.0;
  }
  return m;
}

Image<Real> read_rgb8(const std::string& path) {
  Decoded d = decode(path, true, false);
  Image<Real> img;
  for (auto& c : img.ch) c.resize(d.height, d.width);
  for (png_uint_32 y = 0; y < d.height; ++y)
    for (png_uint_32 x = 0; x < d.width; ++x)
      for (int c = 0; c < 3; ++c) img.ch[static_cast<size_t>(c)](y, x) = d.rows[y][3 * x + c] / 255.0;
  return img;
}

void write_gray8(const std::string& path, const MatX& values01) {
  MatX raw = values01 * 255.0;
  write_gray8_raw(path, raw);
}

void write_gray8_raw(const std::string& path, const MatX& values) {
  const int h = static_cast<int>(values.rows());
  const int w = static_cast<int>(values.cols());
  std::vector<std::vector<png_byte>> rows(static_cast<size_t>(h),
                                          std::vector<png_byte>(static_cast<size_t>(w)));
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) rows[static_cast<size_t>(y)][static_cast<size_t>(x)] = quantize8(values(y, x));
  encode(path, w, h, PNG_COLOR_TYPE_GRAY, 8, rows);
}

void write_gray16(const std::string& path, const MatX& values) {
  const int h = static_cast<int>(values.rows());
  const int w = static_cast<int>(values.cols());
  std::vector<std::vector<png_byte>> rows(static_cast<size_t>(h),
                                          std::vector<png_byte>(static_cast<size_t>(w) * 2));
  for (int y = 0; y < h; ++y) {
    auto* p = reinterpret_cast<std::uint16_t*>(rows[static_cast<size_t>(y)].data());
    for (int x = 0; x < w; ++x) {
      const Real r = std::round(values(y, x));
      p[x] = static_cast<std::uint16_t>(std::min<Real>(std::max<Real>(r, 0), 65535));
    }
  }
  encode(path, w, h, PNG_COLOR_TYPE_GRAY, 16, rows);
}

void write_rgb8(const std::string& path, const Image<Real>& image) {
  const int h = image.height();
  const int w = image.width();
  std::vector<std::vector<png_byte>> rows(static_cast<size_t>(h),
                                          std::vector<png_byte>(static_cast<size_t>(w) * 3));
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x)
      for (int c = 0; c < 3; ++c)
        rows[static_cast<size_t>(y)][static_cast<size_t>(3 * x + c)] =
            quantize8(image.ch[static_cast<size_t>(c)](y, x) * 255.0);
  encode(path, w, h, PNG_COLOR_TYPE_RGB, 8, rows);
}

}  // namespace ect::png
