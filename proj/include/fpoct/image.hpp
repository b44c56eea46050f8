#pragma once

#include <cstdint>
#include <filesystem>
#include <vector>

#include "fpoct/geometry.hpp"

namespace fpoct {

/// Linear RGB, row-major, channels interleaved, values in [0, 1].
struct Image {
  int width = 0;
  int height = 0;
  std::vector<float> rgb;

  Image() = default;
  Image(int w, int h, const Vec3& fill = Vec3::Zero());

  size_t pixel_count() const { return static_cast<size_t>(width) * static_cast<size_t>(height); }
  float& at(int x, int y, int c) { return rgb[(static_cast<size_t>(y) * width + x) * 3 + c]; }
  float at(int x, int y, int c) const { return rgb[(static_cast<size_t>(y) * width + x) * 3 + c]; }
  void set(int x, int y, const Vec3& c);
  Vec3 get(int x, int y) const;
};

/// Binary mask, row-major.
struct Mask {
  int width = 0;
  int height = 0;
  std::vector<uint8_t> bits;

  Mask() = default;
  Mask(int w, int h) : width(w), height(h), bits(static_cast<size_t>(w) * static_cast<size_t>(h), 0) {}
  bool at(int x, int y) const { return bits[static_cast<size_t>(y) * width + x] != 0; }
  void set(int x, int y, bool v) { bits[static_cast<size_t>(y) * width + x] = v ? 1 : 0; }
  size_t count() const;
  /// Max filter with a (2r+1)^2 square.
  Mask dilated(int radius) const;
};

/// 8-bit RGB PNG. Values are clamped and rounded.
void write_png(const std::filesystem::path& path, const Image& img);
void write_png(const std::filesystem::path& path, const Mask& mask);
/// Reads 8-bit gray/RGB/RGBA PNGs into linear [0,1] floats.
Image read_png(const std::filesystem::path& path);

/// Raw dump: width, height as u32 little-endian, then row-major f32 RGB (little-endian).
void write_raw(const std::filesystem::path& path, const Image& img);
Image read_raw(const std::filesystem::path& path);

}  // namespace fpoct
