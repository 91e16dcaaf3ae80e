#include "cowmask/png_io.hpp"

#include <png.h>

#include <cmath>
#include <cstring>

#include "cowmask/error.hpp"

namespace cowmask {

void write_png(const std::filesystem::path& path, const PngImage& image) {
  if (image.channels != 1 && image.channels != 3)
    throw DataError(DataErrorKind::format, "PNG export supports 1 or 3 channels");
  if (image.pixels.size() != static_cast<std::size_t>(image.width) * image.height * image.channels)
    throw ShapeError("PNG pixel buffer size mismatch");
  png_image img;
  std::memset(&img, 0, sizeof img);
  img.version = PNG_IMAGE_VERSION;
  img.width = static_cast<png_uint_32>(image.width);
  img.height = static_cast<png_uint_32>(image.height);
  img.format = image.channels == 1 ? PNG_FORMAT_GRAY : PNG_FORMAT_RGB;
  if (!png_image_write_to_file(&img, path.string().c_str(), 0, image.pixels.data(), 0, nullptr))
    throw DataError(DataErrorKind::io, "PNG write failed for " + path.string() + ": " + img.message);
}

PngImage read_png(const std::filesystem::path& path) {
  png_image img;
  std::memset(&img, 0, sizeof img);
  img.version = PNG_IMAGE_VERSION;
  if (!png_image_begin_read_from_file(&img, path.string().c_str()))
    throw DataError(DataErrorKind::format, "cannot read PNG " + path.string() + ": " + img.message);
  const bool colour = (img.format & PNG_FORMAT_FLAG_COLOR) != 0;
  img.format = colour ? PNG_FORMAT_RGB : PNG_FORMAT_GRAY;
  PngImage out;
  out.width = static_cast<int>(img.width);
  out.height = static_cast<int>(img.height);
  out.channels = colour ? 3 : 1;
  out.pixels.resize(PNG_IMAGE_SIZE(img));
  if (!png_image_finish_read(&img, nullptr, out.pixels.data(), 0, nullptr)) {
    png_image_free(&img);
    throw DataError(DataErrorKind::format, "PNG decode failed for " + path.string());
  }
  return out;
}

PngImage mask_to_png(const Mask& mask) {
  PngImage out;
  out.width = mask.width();
  out.height = mask.height();
  out.channels = 1;
  out.pixels.reserve(mask.plane.size());
  for (double v : mask.plane.values)
    out.pixels.push_back(static_cast<std::uint8_t>(std::lround(v * 255.0)));
  return out;
}

}  // namespace cowmask
