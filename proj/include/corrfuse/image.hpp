#pragma once

// 8-bit RGB images, masks and label maps as PNG files (libpng simplified API;
// its writer emits no timestamps, so identical pixels give identical files).

#include <array>
#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include <png.h>

#include "corrfuse/error.hpp"
#include "corrfuse/featmap.hpp"

namespace corrfuse {

using Rgb = std::array<std::uint8_t, 3>;

struct Image {
  int height = 0;
  int width = 0;
  std::vector<std::uint8_t> rgb;  // row-major, 3 bytes per pixel

  Image() = default;
  Image(int h, int w, Rgb fill = {0, 0, 0}) : height(h), width(w), rgb(static_cast<std::size_t>(h) * w * 3) {
    require(h >= 1 && w >= 1, "image dims must be >= 1");
    for (std::size_t i = 0; i < rgb.size(); i += 3) {
      rgb[i] = fill[0];
      rgb[i + 1] = fill[1];
      rgb[i + 2] = fill[2];
    }
  }

  Rgb at(int index) const noexcept {
    const std::size_t i = static_cast<std::size_t>(index) * 3;
    return {rgb[i], rgb[i + 1], rgb[i + 2]};
  }
  Rgb at(int row, int col) const noexcept { return at(row * width + col); }
  void set(int index, Rgb c) noexcept {
    const std::size_t i = static_cast<std::size_t>(index) * 3;
    rgb[i] = c[0];
    rgb[i + 1] = c[1];
    rgb[i + 2] = c[2];
  }
  void set(int row, int col, Rgb c) noexcept { set(row * width + col, c); }

  bool operator==(const Image&) const = default;
};

namespace detail {

inline std::vector<std::uint8_t> read_png_pixels(const std::filesystem::path& path, std::uint32_t format, int& h, int& w) {
  png_image image{};
  image.version = PNG_IMAGE_VERSION;
  if (!png_image_begin_read_from_file(&image, path.string().c_str())) {
    fail(std::filesystem::exists(path) ? ErrorKind::kFormat : ErrorKind::kIo,
         "cannot read PNG " + path.string() + ": " + image.message);
  }
  image.format = format;
  std::vector<std::uint8_t> pixels(PNG_IMAGE_SIZE(image));
  if (!png_image_finish_read(&image, nullptr, pixels.data(), 0, nullptr)) {
    png_image_free(&image);
    fail(ErrorKind::kFormat, "cannot decode PNG " + path.string() + ": " + image.message);
  }
  h = static_cast<int>(image.height);
  w = static_cast<int>(image.width);
  return pixels;
}

inline void write_png_pixels(const std::filesystem::path& path, const std::uint8_t* pixels, int h, int w,
                             std::uint32_t format, const void* colormap = nullptr, int colormap_entries = 0) {
  png_image image{};
  image.version = PNG_IMAGE_VERSION;
  image.width = static_cast<png_uint_32>(w);
  image.height = static_cast<png_uint_32>(h);
  image.format = format;
  image.colormap_entries = static_cast<png_uint_32>(colormap_entries);
  if (!png_image_write_to_file(&image, path.string().c_str(), 0, pixels, 0, colormap)) {
    fail(ErrorKind::kIo, "cannot write PNG " + path.string() + ": " + image.message);
  }
}

}  // namespace detail

inline Image read_png(const std::filesystem::path& path) {
  Image img;
  img.rgb = detail::read_png_pixels(path, PNG_FORMAT_RGB, img.height, img.width);
  return img;
}

inline void write_png(const Image& img, const std::filesystem::path& path) {
  detail::write_png_pixels(path, img.rgb.data(), img.height, img.width, PNG_FORMAT_RGB);
}

/// Single-channel mask PNG; any nonzero gray value is inside.
inline Mask read_mask_png(const std::filesystem::path& path) {
  int h = 0, w = 0;
  const auto gray = detail::read_png_pixels(path, PNG_FORMAT_GRAY, h, w);
  Mask mask(h, w);
  for (std::size_t i = 0; i < gray.size(); ++i) mask.bits[i] = gray[i] != 0 ? 1 : 0;
  return mask;
}

inline void write_mask_png(const Mask& mask, const std::filesystem::path& path) {
  std::vector<std::uint8_t> gray(mask.bits.size());
  for (std::size_t i = 0; i < gray.size(); ++i) gray[i] = mask.bits[i] ? 255 : 0;
  detail::write_png_pixels(path, gray.data(), mask.height, mask.width, PNG_FORMAT_GRAY);
}

/// Label grid as a palette-indexed PNG; label i uses palette[i].
inline void write_label_png(const std::vector<int>& labels, int h, int w, const std::vector<Rgb>& palette,
                            const std::filesystem::path& path) {
  require(labels.size() == static_cast<std::size_t>(h) * w, "label grid size mismatch");
  require(!palette.empty() && palette.size() <= 256, "palette must hold 1..256 colors");
  std::vector<std::uint8_t> index(labels.size());
  for (std::size_t i = 0; i < labels.size(); ++i) {
    require(labels[i] >= 0 && static_cast<std::size_t>(labels[i]) < palette.size(), "label outside palette");
    index[i] = static_cast<std::uint8_t>(labels[i]);
  }
  std::vector<std::uint8_t> colormap;
  for (const auto& c : palette) colormap.insert(colormap.end(), c.begin(), c.end());
  detail::write_png_pixels(path, index.data(), h, w, PNG_FORMAT_RGB_COLORMAP, colormap.data(),
                           static_cast<int>(palette.size()));
}

/// Nearest-neighbour enlargement by an integer factor.
inline Image upscale_nearest(const Image& img, int factor) {
  require(factor >= 1, "upscale factor must be >= 1");
  if (factor == 1) return img;
  Image out(img.height * factor, img.width * factor);
  for (int r = 0; r < out.height; ++r) {
    for (int c = 0; c < out.width; ++c) out.set(r, c, img.at(r / factor, c / factor));
  }
  return out;
}

}  // namespace corrfuse
