#pragma once

// RGB float images and binary Netpbm I/O (P6 color, P5 gray, Pf depth).

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "aqua/error.hpp"
#include "aqua/geometry.hpp"

namespace aqua {

struct Image {
  int width = 0;
  int height = 0;
  std::vector<Vec3> pixels;  // row-major

  Image() = default;
  Image(int w, int h, const Vec3& fill = Vec3::Zero())
      : width(w), height(h), pixels(static_cast<std::size_t>(w) * h, fill) {}

  std::size_t size() const { return pixels.size(); }
  Vec3& at(int row, int col) { return pixels[static_cast<std::size_t>(row) * width + col]; }
  const Vec3& at(int row, int col) const { return pixels[static_cast<std::size_t>(row) * width + col]; }
};

inline std::uint8_t to_byte(double v) {
  return static_cast<std::uint8_t>(std::lround(std::clamp(v, 0.0, 1.0) * 255.0));
}

/// Snaps every channel to the nearest 8-bit level.
inline Image quantize8(const Image& img) {
  Image out = img;
  for (auto& p : out.pixels)
    for (int c = 0; c < 3; ++c) p[c] = to_byte(p[c]) / 255.0;
  return out;
}

namespace detail {

inline std::ofstream open_out(const std::filesystem::path& path) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream os(path, std::ios::binary);
  if (!os) throw Error("cannot open '" + path.string() + "' for writing");
  return os;
}

// Reads a Netpbm header: magic, width, height and (for P5/P6) maxval, or
// scale for Pf. Comments are not supported.
struct PnmHeader {
  std::string magic;
  int width = 0;
  int height = 0;
  double max_or_scale = 0.0;
};

inline PnmHeader read_header(std::istream& is, const std::filesystem::path& path) {
  PnmHeader h;
  if (!(is >> h.magic >> h.width >> h.height >> h.max_or_scale))
    throw CorruptArtifact("'" + path.string() + "': malformed image header");
  is.get();  // single whitespace before the raster
  if (h.width <= 0 || h.height <= 0) throw CorruptArtifact("'" + path.string() + "': bad dimensions");
  return h;
}

inline std::ifstream open_in(const std::filesystem::path& path) {
  if (!std::filesystem::exists(path)) throw MissingInput("missing file '" + path.string() + "'");
  std::ifstream is(path, std::ios::binary);
  if (!is) throw MissingInput("cannot open '" + path.string() + "'");
  return is;
}

}  // namespace detail

inline void write_ppm(const std::filesystem::path& path, const Image& img) {
  auto os = detail::open_out(path);
  os << "P6\n" << img.width << ' ' << img.height << "\n255\n";
  std::vector<std::uint8_t> raw(img.size() * 3);
  for (std::size_t i = 0; i < img.size(); ++i)
    for (int c = 0; c < 3; ++c) raw[3 * i + c] = to_byte(img.pixels[i][c]);
  os.write(reinterpret_cast<const char*>(raw.data()), static_cast<std::streamsize>(raw.size()));
}

inline Image read_ppm(const std::filesystem::path& path) {
  auto is = detail::open_in(path);
  const auto h = detail::read_header(is, path);
  if (h.magic != "P6" || h.max_or_scale != 255) throw CorruptArtifact("'" + path.string() + "' is not an 8-bit P6 file");
  Image img(h.width, h.height);
  std::vector<std::uint8_t> raw(img.size() * 3);
  if (!is.read(reinterpret_cast<char*>(raw.data()), static_cast<std::streamsize>(raw.size())))
    throw CorruptArtifact("'" + path.string() + "': truncated raster");
  for (std::size_t i = 0; i < img.size(); ++i)
    for (int c = 0; c < 3; ++c) img.pixels[i][c] = raw[3 * i + c] / 255.0;
  return img;
}

/// Gray mask: nonzero bytes are written as 255.
inline void write_pgm(const std::filesystem::path& path, int width, int height,
                      const std::vector<std::uint8_t>& mask) {
  auto os = detail::open_out(path);
  os << "P5\n" << width << ' ' << height << "\n255\n";
  std::vector<std::uint8_t> raw(mask.size());
  for (std::size_t i = 0; i < mask.size(); ++i) raw[i] = mask[i] ? 255 : 0;
  os.write(reinterpret_cast<const char*>(raw.data()), static_cast<std::streamsize>(raw.size()));
}

/// Gray image with values in [0,1], for visualization.
inline void write_pgm_gray(const std::filesystem::path& path, int width, int height,
                           const std::vector<double>& values) {
  auto os = detail::open_out(path);
  os << "P5\n" << width << ' ' << height << "\n255\n";
  std::vector<std::uint8_t> raw(values.size());
  for (std::size_t i = 0; i < values.size(); ++i) raw[i] = to_byte(values[i]);
  os.write(reinterpret_cast<const char*>(raw.data()), static_cast<std::streamsize>(raw.size()));
}

inline std::vector<std::uint8_t> read_pgm(const std::filesystem::path& path, int& width, int& height) {
  auto is = detail::open_in(path);
  const auto h = detail::read_header(is, path);
  if (h.magic != "P5" || h.max_or_scale != 255) throw CorruptArtifact("'" + path.string() + "' is not an 8-bit P5 file");
  width = h.width;
  height = h.height;
  std::vector<std::uint8_t> raw(static_cast<std::size_t>(width) * height);
  if (!is.read(reinterpret_cast<char*>(raw.data()), static_cast<std::streamsize>(raw.size())))
    throw CorruptArtifact("'" + path.string() + "': truncated raster");
  for (auto& v : raw) v = v ? 1 : 0;
  return raw;
}

/// Single-channel little-endian PFM, rows stored bottom-to-top.
inline void write_pfm(const std::filesystem::path& path, int width, int height,
                      const std::vector<double>& values) {
  auto os = detail::open_out(path);
  os << "Pf\n" << width << ' ' << height << "\n-1.0\n";
  std::vector<float> row(static_cast<std::size_t>(width));
  for (int r = height - 1; r >= 0; --r) {
    for (int c = 0; c < width; ++c) row[c] = static_cast<float>(values[static_cast<std::size_t>(r) * width + c]);
    os.write(reinterpret_cast<const char*>(row.data()), static_cast<std::streamsize>(row.size() * sizeof(float)));
  }
}

}  // namespace aqua
