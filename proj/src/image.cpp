#include "fpoct/image.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>

#include <png.h>

#include "fpoct/error.hpp"

namespace fpoct {

namespace {

uint8_t to_byte(float v) { return static_cast<uint8_t>(std::lround(std::clamp(v, 0.0f, 1.0f) * 255.0f)); }

void put_u32(std::vector<char>& out, uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xFFu));
}

uint32_t get_u32(const unsigned char* p) {
  return static_cast<uint32_t>(p[0]) | (static_cast<uint32_t>(p[1]) << 8) | (static_cast<uint32_t>(p[2]) << 16) |
         (static_cast<uint32_t>(p[3]) << 24);
}

void write_png_bytes(const std::filesystem::path& path, int w, int h, png_uint_32 format,
                     const std::vector<uint8_t>& bytes) {
  png_image image;
  std::memset(&image, 0, sizeof image);
  image.version = PNG_IMAGE_VERSION;
  image.width = static_cast<png_uint_32>(w);
  image.height = static_cast<png_uint_32>(h);
  image.format = format;
  if (!png_image_write_to_file(&image, path.c_str(), 0, bytes.data(), 0, nullptr)) {
    throw data_error("cannot write PNG " + path.string() + ": " + image.message);
  }
}

}  // namespace

Image::Image(int w, int h, const Vec3& fill) : width(w), height(h), rgb(static_cast<size_t>(w) * h * 3) {
  for (size_t i = 0; i < pixel_count(); ++i) {
    rgb[3 * i] = static_cast<float>(fill.x());
    rgb[3 * i + 1] = static_cast<float>(fill.y());
    rgb[3 * i + 2] = static_cast<float>(fill.z());
  }
}

void Image::set(int x, int y, const Vec3& c) {
  float* p = &at(x, y, 0);
  p[0] = static_cast<float>(c.x());
  p[1] = static_cast<float>(c.y());
  p[2] = static_cast<float>(c.z());
}

Vec3 Image::get(int x, int y) const { return {at(x, y, 0), at(x, y, 1), at(x, y, 2)}; }

size_t Mask::count() const {
  return static_cast<size_t>(std::count_if(bits.begin(), bits.end(), [](uint8_t b) { return b != 0; }));
}

Mask Mask::dilated(int radius) const {
  Mask out(width, height);
  for (int y = 0; y < height; ++y) {
    for (int x = 0; x < width; ++x) {
      if (!at(x, y)) continue;
      for (int dy = -radius; dy <= radius; ++dy)
        for (int dx = -radius; dx <= radius; ++dx) {
          const int xx = x + dx, yy = y + dy;
          if (xx >= 0 && yy >= 0 && xx < width && yy < height) out.set(xx, yy, true);
        }
    }
  }
  return out;
}

void write_png(const std::filesystem::path& path, const Image& img) {
  std::vector<uint8_t> bytes(img.rgb.size());
  std::transform(img.rgb.begin(), img.rgb.end(), bytes.begin(), to_byte);
  write_png_bytes(path, img.width, img.height, PNG_FORMAT_RGB, bytes);
}

void write_png(const std::filesystem::path& path, const Mask& mask) {
  std::vector<uint8_t> bytes(mask.bits.size());
  std::transform(mask.bits.begin(), mask.bits.end(), bytes.begin(), [](uint8_t b) -> uint8_t { return b ? 255 : 0; });
  write_png_bytes(path, mask.width, mask.height, PNG_FORMAT_GRAY, bytes);
}

Image read_png(const std::filesystem::path& path) {
  png_image image;
  std::memset(&image, 0, sizeof image);
  image.version = PNG_IMAGE_VERSION;
  if (!png_image_begin_read_from_file(&image, path.c_str()))
    throw data_error("cannot read PNG " + path.string() + ": " + image.message);
  image.format = PNG_FORMAT_RGB;
  std::vector<uint8_t> bytes(PNG_IMAGE_SIZE(image));
  if (!png_image_finish_read(&image, nullptr, bytes.data(), 0, nullptr)) {
    png_image_free(&image);
    throw data_error("cannot decode PNG " + path.string() + ": " + image.message);
  }
  Image img(static_cast<int>(image.width), static_cast<int>(image.height));
  std::transform(bytes.begin(), bytes.end(), img.rgb.begin(), [](uint8_t b) { return b / 255.0f; });
  return img;
}

void write_raw(const std::filesystem::path& path, const Image& img) {
  std::vector<char> out;
  out.reserve(8 + img.rgb.size() * 4);
  put_u32(out, static_cast<uint32_t>(img.width));
  put_u32(out, static_cast<uint32_t>(img.height));
  for (float v : img.rgb) put_u32(out, std::bit_cast<uint32_t>(v));
  std::ofstream f(path, std::ios::binary);
  if (!f) throw data_error("cannot open " + path.string() + " for writing");
  f.write(out.data(), static_cast<std::streamsize>(out.size()));
  if (!f) throw data_error("failed writing " + path.string());
}

Image read_raw(const std::filesystem::path& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw data_error("cannot open " + path.string());
  std::vector<unsigned char> bytes((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());
  if (bytes.size() < 8) throw data_error("raw image " + path.string() + " is truncated");
  const uint32_t w = get_u32(bytes.data());
  const uint32_t h = get_u32(bytes.data() + 4);
  const uint64_t expected = 8 + uint64_t{w} * h * 12;
  if (w == 0 || h == 0 || bytes.size() != expected) throw data_error("raw image " + path.string() + " has bad size");
  Image img(static_cast<int>(w), static_cast<int>(h));
  for (size_t i = 0; i < img.rgb.size(); ++i) img.rgb[i] = std::bit_cast<float>(get_u32(bytes.data() + 8 + 4 * i));
  return img;
}

}  // namespace fpoct
