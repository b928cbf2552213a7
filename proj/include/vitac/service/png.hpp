#pragma once

// Needs libpng at link time; only the command-line tool includes this.

#include "vitac/tactile/sensor.hpp"

#include <png.h>

#include <filesystem>

namespace vitac {

struct RgbImage {
  int width = 0, height = 0;
  std::vector<std::uint8_t> pixels;  // row-major, 3 bytes per pixel

  RgbImage(int w, int h, std::uint8_t fill = 255) : width(w), height(h), pixels(std::size_t(3) * w * h, fill) {}

  void set(int x, int y, std::array<std::uint8_t, 3> c) {
    if (x < 0 || y < 0 || x >= width || y >= height) return;
    std::copy(c.begin(), c.end(), pixels.begin() + 3 * (std::size_t(y) * width + x));
  }
};

inline void write_png(const std::filesystem::path& path, const RgbImage& img) {
  png_image image{};
  image.version = PNG_IMAGE_VERSION;
  image.width = static_cast<png_uint_32>(img.width);
  image.height = static_cast<png_uint_32>(img.height);
  image.format = PNG_FORMAT_RGB;
  if (!png_image_write_to_file(&image, path.c_str(), 0, img.pixels.data(), 3 * img.width, nullptr))
    throw Error("png-write", "cannot write '" + path.string() + "': " + image.message);
}

/// Marker flow of both sensors side by side: initial positions in blue,
/// current in red, joined by a gray line. Invalid markers are skipped.
inline RgbImage marker_scatter(const MarkerFlow& left, const MarkerFlow& right, int width, int height) {
  RgbImage img(2 * width + 4, height);
  for (int y = 0; y < height; ++y)
    for (int x = width; x < width + 4; ++x) img.set(x, y, {0, 0, 0});
  const auto line = [&](Vec2 a, Vec2 b, int x0) {
    const int n = 1 + static_cast<int>(std::ceil((b - a).norm()));
    for (int i = 0; i <= n; ++i) {
      const Vec2 p = a + (b - a) * (double(i) / n);
      img.set(x0 + static_cast<int>(std::lround(p.x())), static_cast<int>(std::lround(p.y())), {160, 160, 160});
    }
  };
  const auto dot = [&](Vec2 p, int x0, std::array<std::uint8_t, 3> c) {
    const int cx = x0 + static_cast<int>(std::lround(p.x())), cy = static_cast<int>(std::lround(p.y()));
    for (int dy = -1; dy <= 1; ++dy)
      for (int dx = -1; dx <= 1; ++dx) img.set(cx + dx, cy + dy, c);
  };
  int x0 = 0;
  for (const MarkerFlow* f : {&left, &right}) {
    for (int i = 0; i < f->size(); ++i) {
      if (!f->valid[i]) continue;
      line(f->initial[i], f->current[i], x0);
      dot(f->initial[i], x0, {30, 60, 220});
      dot(f->current[i], x0, {220, 30, 30});
    }
    x0 += width + 4;
  }
  return img;
}

}  // namespace vitac
