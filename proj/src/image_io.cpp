#include "tsr/image_io.hpp"

#include <png.h>

#include <cmath>
#include <cstdio>
#include <memory>
#include <vector>

namespace tsr::io {

namespace {

struct FileCloser {
  void operator()(std::FILE* f) const {
    if (f) std::fclose(f);
  }
};
using FilePtr = std::unique_ptr<std::FILE, FileCloser>;

[[noreturn]] void png_fail(png_structp, png_const_charp msg) { throw Error(ErrorCode::IoError, msg); }
void png_warn(png_structp, png_const_charp) {}

}  // namespace

nn::Tensor<float> read_png(const std::filesystem::path& path) {
  FilePtr file(std::fopen(path.c_str(), "rb"));
  if (!file) throw Error(ErrorCode::IoError, "cannot open " + path.string());
  png_structp png = png_create_read_struct(PNG_LIBPNG_VER_STRING, nullptr, png_fail, png_warn);
  png_infop info = png ? png_create_info_struct(png) : nullptr;
  if (!info) {
    png_destroy_read_struct(&png, nullptr, nullptr);
    throw Error(ErrorCode::IoError, "libpng init failed");
  }
  std::vector<png_byte> pixels;
  std::size_t width = 0;
  std::size_t height = 0;
  try {
    png_init_io(png, file.get());
    png_read_info(png, info);
    const png_byte color = png_get_color_type(png, info);
    if (png_get_bit_depth(png, info) == 16) png_set_strip_16(png);
    if (color == PNG_COLOR_TYPE_PALETTE) png_set_palette_to_rgb(png);
    if (color == PNG_COLOR_TYPE_GRAY || color == PNG_COLOR_TYPE_GRAY_ALPHA) {
      if (png_get_bit_depth(png, info) < 8) png_set_expand_gray_1_2_4_to_8(png);
      png_set_gray_to_rgb(png);
    }
    if (color & PNG_COLOR_MASK_ALPHA) png_set_strip_alpha(png);
    if (png_get_valid(png, info, PNG_INFO_tRNS)) png_set_strip_alpha(png);
    png_read_update_info(png, info);
    width = png_get_image_width(png, info);
    height = png_get_image_height(png, info);
    const std::size_t stride = png_get_rowbytes(png, info);
    if (stride != width * 3) throw Error(ErrorCode::IoError, "unsupported PNG layout in " + path.string());
    pixels.resize(stride * height);
    std::vector<png_bytep> rows(height);
    for (std::size_t r = 0; r < height; ++r) rows[r] = pixels.data() + r * stride;
    png_read_image(png, rows.data());
    png_read_end(png, nullptr);
  } catch (...) {
    png_destroy_read_struct(&png, &info, nullptr);
    throw;
  }
  png_destroy_read_struct(&png, &info, nullptr);
  nn::Tensor<float> out({height, width, 3});
  for (std::size_t i = 0; i < pixels.size(); ++i) out[i] = static_cast<float>(pixels[i]) / 255.0f;
  return out;
}

void write_png(const std::filesystem::path& path, const nn::Tensor<float>& image) {
  if (image.rank() != 3 || (image.dim(2) != 3 && image.dim(2) != 1)) {
    throw Error(ErrorCode::ShapeMismatch, "write_png expects [H, W, 3] or [H, W, 1]");
  }
  const std::size_t height = image.dim(0);
  const std::size_t width = image.dim(1);
  const std::size_t channels = image.dim(2);
  std::vector<png_byte> pixels(image.size());
  for (std::size_t i = 0; i < image.size(); ++i) {
    const float v = std::clamp(image[i], 0.0f, 1.0f);
    pixels[i] = static_cast<png_byte>(std::lround(v * 255.0f));
  }
  const std::filesystem::path tmp = path.string() + ".tmp";
  {
    FilePtr file(std::fopen(tmp.c_str(), "wb"));
    if (!file) throw Error(ErrorCode::IoError, "cannot write " + tmp.string());
    png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, png_fail, png_warn);
    png_infop info = png ? png_create_info_struct(png) : nullptr;
    if (!info) {
      png_destroy_write_struct(&png, nullptr);
      throw Error(ErrorCode::IoError, "libpng init failed");
    }
    try {
      png_init_io(png, file.get());
      png_set_IHDR(png, info, static_cast<png_uint_32>(width), static_cast<png_uint_32>(height), 8,
                   channels == 3 ? PNG_COLOR_TYPE_RGB : PNG_COLOR_TYPE_GRAY, PNG_INTERLACE_NONE,
                   PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
      png_write_info(png, info);
      for (std::size_t r = 0; r < height; ++r) png_write_row(png, pixels.data() + r * width * channels);
      png_write_end(png, nullptr);
    } catch (...) {
      png_destroy_write_struct(&png, &info);
      throw;
    }
    png_destroy_write_struct(&png, &info);
  }
  std::error_code ec;
  std::filesystem::rename(tmp, path, ec);
  if (ec) throw Error(ErrorCode::IoError, "rename " + tmp.string() + ": " + ec.message());
}

nn::Tensor<float> resize_bilinear(const nn::Tensor<float>& image, std::size_t height, std::size_t width) {
  if (image.rank() != 3) throw Error(ErrorCode::ShapeMismatch, "resize expects [H, W, C]");
  const std::size_t h0 = image.dim(0);
  const std::size_t w0 = image.dim(1);
  const std::size_t c = image.dim(2);
  if (h0 == height && w0 == width) return image;
  nn::Tensor<float> out({height, width, c});
  const double sy = static_cast<double>(h0) / static_cast<double>(height);
  const double sx = static_cast<double>(w0) / static_cast<double>(width);
  for (std::size_t y = 0; y < height; ++y) {
    const double fy = std::clamp((static_cast<double>(y) + 0.5) * sy - 0.5, 0.0, static_cast<double>(h0 - 1));
    const auto y0 = static_cast<std::size_t>(fy);
    const std::size_t y1 = std::min(y0 + 1, h0 - 1);
    const double ty = fy - static_cast<double>(y0);
    for (std::size_t x = 0; x < width; ++x) {
      const double fx = std::clamp((static_cast<double>(x) + 0.5) * sx - 0.5, 0.0, static_cast<double>(w0 - 1));
      const auto x0 = static_cast<std::size_t>(fx);
      const std::size_t x1 = std::min(x0 + 1, w0 - 1);
      const double tx = fx - static_cast<double>(x0);
      for (std::size_t k = 0; k < c; ++k) {
        const double top = image.at(y0, x0, k) * (1.0 - tx) + image.at(y0, x1, k) * tx;
        const double bot = image.at(y1, x0, k) * (1.0 - tx) + image.at(y1, x1, k) * tx;
        out.at(y, x, k) = static_cast<float>(top * (1.0 - ty) + bot * ty);
      }
    }
  }
  return out;
}

nn::Tensor<float> load_image(const std::filesystem::path& path, std::size_t resolution) {
  return resize_bilinear(read_png(path), resolution, resolution);
}

}  // namespace tsr::io
