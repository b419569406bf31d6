#pragma once

// PNG conventions.
//
// Masks: 8-bit RGB. Artery sets R=255, vein sets B=255, a crossing sets both,
// background is black; G is always 0. Any other colour, or a non-RGB file,
// is non-conformant.
//
// Raw samples: 8-bit grayscale, artery channel and vein channel side by side
// (width 2W), value v in [-1, 1] stored as round((v + 1) / 2 * 255).

#include <png.h>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "vesselgen/error.hpp"
#include "vesselgen/mask.hpp"
#include "vesselgen/numerics/tensor.hpp"

namespace vesselgen::io {

namespace detail {

inline void write_png(const std::filesystem::path& path, std::uint32_t width, std::uint32_t height,
                      std::uint32_t format, const std::vector<std::uint8_t>& bytes) {
  png_image image{};
  image.version = PNG_IMAGE_VERSION;
  image.width = width;
  image.height = height;
  image.format = format;
  if (!png_image_write_to_file(&image, path.c_str(), 0, bytes.data(), 0, nullptr)) {
    const std::string msg = image.message;
    png_image_free(&image);
    throw IoError("cannot write " + path.string() + ": " + msg);
  }
}

}  // namespace detail

inline void write_mask_png(const std::filesystem::path& path, const AVMask& mask) {
  std::vector<std::uint8_t> rgb(mask.pixels() * 3, 0);
  for (std::size_t i = 0; i < mask.pixels(); ++i) {
    rgb[3 * i] = mask.artery()[i] ? 255 : 0;
    rgb[3 * i + 2] = mask.vein()[i] ? 255 : 0;
  }
  detail::write_png(path, std::uint32_t(mask.width()), std::uint32_t(mask.height()),
                    PNG_FORMAT_RGB, rgb);
}

/// Reads a mask in the RGB convention. Throws FormatError for anything that
/// does not conform, IoError if the file cannot be read at all.
inline AVMask read_mask_png(const std::filesystem::path& path) {
  png_image image{};
  image.version = PNG_IMAGE_VERSION;
  if (!png_image_begin_read_from_file(&image, path.c_str())) {
    const std::string msg = image.message;
    png_image_free(&image);
    throw FormatError("cannot read " + path.string() + " as PNG: " + msg);
  }
  if (image.format != PNG_FORMAT_RGB) {
    png_image_free(&image);
    throw FormatError(path.string() + " is not an 8-bit RGB PNG");
  }
  std::vector<std::uint8_t> rgb(PNG_IMAGE_SIZE(image));
  if (!png_image_finish_read(&image, nullptr, rgb.data(), 0, nullptr)) {
    const std::string msg = image.message;
    png_image_free(&image);
    throw FormatError("cannot decode " + path.string() + ": " + msg);
  }
  AVMask mask(image.width, image.height);
  for (std::size_t i = 0; i < mask.pixels(); ++i) {
    const auto r = rgb[3 * i], g = rgb[3 * i + 1], b = rgb[3 * i + 2];
    if (g != 0 || (r != 0 && r != 255) || (b != 0 && b != 255)) {
      throw FormatError(path.string() + ": pixel " + std::to_string(i) + " has colour (" +
                        std::to_string(r) + "," + std::to_string(g) + "," + std::to_string(b) +
                        ") outside the mask convention");
    }
    mask.artery()[i] = r ? 1 : 0;
    mask.vein()[i] = b ? 1 : 0;
  }
  return mask;
}

inline std::uint8_t signal_to_byte(double v) {
  const double clamped = std::min(1.0, std::max(-1.0, v));
  return std::uint8_t(std::lround((clamped + 1.0) / 2.0 * 255.0));
}

/// Writes sample b of a Bx2xHxW tensor in the raw grayscale convention.
inline void write_raw_sample_png(const std::filesystem::path& path, const Tensor& samples,
                                 std::size_t b) {
  const std::size_t h = samples.dim(2), w = samples.dim(3);
  std::vector<std::uint8_t> gray(2 * w * h);
  for (std::size_t y = 0; y < h; ++y)
    for (std::size_t c = 0; c < 2; ++c)
      for (std::size_t x = 0; x < w; ++x)
        gray[y * 2 * w + c * w + x] = signal_to_byte(samples.at(b, c, y, x));
  detail::write_png(path, std::uint32_t(2 * w), std::uint32_t(h), PNG_FORMAT_GRAY, gray);
}

}  // namespace vesselgen::io
