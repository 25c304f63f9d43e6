#include "wdci/image_io.hpp"

#include <png.h>

#include <algorithm>
#include <cmath>
#include <cstring>
#include <vector>

#include "wdci/errors.hpp"

WDCI_NAMESPACE_BEGIN

namespace {

std::uint8_t to_byte(real v) {
  const double c = std::clamp(static_cast<double>(v), 0.0, 1.0);
  return static_cast<std::uint8_t>(std::lround(c * 255.0));
}

}  // namespace

Tensor read_png(const std::string& path) {
  png_image img;
  std::memset(&img, 0, sizeof(img));
  img.version = PNG_IMAGE_VERSION;
  if (!png_image_begin_read_from_file(&img, path.c_str())) {
    throw IoError("cannot read PNG '" + path + "': " + img.message);
  }
  img.format = PNG_FORMAT_RGB;
  std::vector<std::uint8_t> buf(PNG_IMAGE_SIZE(img));
  if (!png_image_finish_read(&img, nullptr, buf.data(), 0, nullptr)) {
    png_image_free(&img);
    throw IoError("cannot decode PNG '" + path + "': " + img.message);
  }
  const int H = static_cast<int>(img.height), W = static_cast<int>(img.width);
  Tensor out({1, 3, H, W});
  for (int y = 0; y < H; ++y)
    for (int x = 0; x < W; ++x)
      for (int c = 0; c < 3; ++c) {
        out.at(0, c, y, x) = static_cast<real>(buf[(static_cast<std::size_t>(y) * W + x) * 3 + c] / 255.0);
      }
  return out;
}

void write_png(const std::string& path, const Tensor& image) {
  if (image.n() != 1 || (image.c() != 1 && image.c() != 3)) {
    throw ShapeError("write_png expects (1, 1|3, H, W), got " + image.shape().str());
  }
  const int H = image.h(), W = image.w(), C = image.c();
  std::vector<std::uint8_t> buf(static_cast<std::size_t>(H) * W * C);
  for (int y = 0; y < H; ++y)
    for (int x = 0; x < W; ++x)
      for (int c = 0; c < C; ++c) {
        buf[(static_cast<std::size_t>(y) * W + x) * C + c] = to_byte(image.at(0, c, y, x));
      }
  png_image img;
  std::memset(&img, 0, sizeof(img));
  img.version = PNG_IMAGE_VERSION;
  img.width = static_cast<png_uint_32>(W);
  img.height = static_cast<png_uint_32>(H);
  img.format = C == 3 ? PNG_FORMAT_RGB : PNG_FORMAT_GRAY;
  if (!png_image_write_to_file(&img, path.c_str(), 0, buf.data(), 0, nullptr)) {
    throw IoError("cannot write PNG '" + path + "': " + img.message);
  }
}

Tensor quantize_8bit(const Tensor& image) {
  Tensor out = image;
  for (real& v : out.values()) v = static_cast<real>(to_byte(v) / 255.0);
  return out;
}

WDCI_NAMESPACE_END
