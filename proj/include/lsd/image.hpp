#pragma once

#include <Eigen/Core>

#include <algorithm>
#include <array>
#include <cstdint>
#include <filesystem>
#include <string>

namespace lsd {

/// Row-major 2D plane; rows index image v / grid y, cols index image u / grid x.
template <typename T>
using Plane = Eigen::Array<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

using GrayImage = Plane<std::uint8_t>;
using FloatImage = Plane<float>;
using Mask = Plane<std::uint8_t>;
using Grid = Plane<double>;

using Rgb = std::array<std::uint8_t, 3>;

/// Planar 8-bit RGB image.
struct RgbImage {
  Plane<std::uint8_t> r, g, b;

  RgbImage() = default;
  RgbImage(Eigen::Index rows, Eigen::Index cols) : r(rows, cols), g(rows, cols), b(rows, cols) {}

  Eigen::Index rows() const { return r.rows(); }
  Eigen::Index cols() const { return r.cols(); }

  Rgb at(Eigen::Index row, Eigen::Index col) const { return {r(row, col), g(row, col), b(row, col)}; }
  void set(Eigen::Index row, Eigen::Index col, const Rgb& c) {
    r(row, col) = c[0];
    g(row, col) = c[1];
    b(row, col) = c[2];
  }
  void fill(const Rgb& c) {
    r.setConstant(c[0]);
    g.setConstant(c[1]);
    b.setConstant(c[2]);
  }
  bool operator==(const RgbImage& o) const {
    return rows() == o.rows() && cols() == o.cols() && (r == o.r).all() && (g == o.g).all() &&
           (b == o.b).all();
  }
};

// File formats. PGM/PBM are binary (P5/P4), 16-bit PGM samples are big-endian
// per the netpbm convention. PNG goes through libpng.

void write_pgm(const std::filesystem::path& path, const GrayImage& img);
void write_pgm16(const std::filesystem::path& path, const Plane<std::uint16_t>& img);
GrayImage read_pgm(const std::filesystem::path& path);
Plane<std::uint16_t> read_pgm16(const std::filesystem::path& path);

/// 1-bit mask file; nonzero mask entries are written as black (1) pixels.
void write_pbm(const std::filesystem::path& path, const Mask& mask);
Mask read_pbm(const std::filesystem::path& path);

void write_png(const std::filesystem::path& path, const RgbImage& img);
void write_png(const std::filesystem::path& path, const GrayImage& img);
RgbImage read_png(const std::filesystem::path& path);

/// Linearly maps a float raster to 8 bits over [lo, hi]; non-finite values map to 255.
GrayImage to_gray8(const FloatImage& img, float lo, float hi);

/// Writes through a sibling temporary file and renames it into place.
void write_text_atomic(const std::filesystem::path& path, const std::string& content);

}  // namespace lsd
