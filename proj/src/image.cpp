#include "lsd/image.hpp"

#include <png.h>

#include <cmath>
#include <cstdio>
#include <fstream>
#include <memory>
#include <sstream>
#include <stdexcept>
#include <vector>

namespace lsd {

namespace fs = std::filesystem;

namespace {

fs::path temp_sibling(const fs::path& path) {
  auto tmp = path;
  tmp += ".tmp";
  return tmp;
}

template <typename Fn>
void write_atomic(const fs::path& path, Fn&& body) {
  const auto tmp = temp_sibling(path);
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw std::runtime_error("cannot open for writing: " + tmp.string());
    body(out);
    out.flush();
    if (!out) throw std::runtime_error("write failed: " + tmp.string());
  }
  fs::rename(tmp, path);
}

struct NetpbmHeader {
  std::string magic;
  int width = 0;
  int height = 0;
  int maxval = 1;
};

// Skips whitespace and '#' comments between header tokens.
int read_header_int(std::istream& in) {
  int c = in.peek();
  while (c != EOF) {
    if (c == '#') {
      std::string line;
      std::getline(in, line);
    } else if (std::isspace(c)) {
      in.get();
    } else {
      break;
    }
    c = in.peek();
  }
  int value = 0;
  if (!(in >> value)) throw std::runtime_error("malformed netpbm header");
  return value;
}

NetpbmHeader read_netpbm_header(std::istream& in, bool has_maxval) {
  NetpbmHeader h;
  in >> h.magic;
  h.width = read_header_int(in);
  h.height = read_header_int(in);
  if (has_maxval) h.maxval = read_header_int(in);
  in.get();  // single whitespace before raster
  if (!in || h.width <= 0 || h.height <= 0) throw std::runtime_error("malformed netpbm header");
  return h;
}

}  // namespace

void write_pgm(const fs::path& path, const GrayImage& img) {
  write_atomic(path, [&](std::ostream& out) {
    out << "P5\n" << img.cols() << " " << img.rows() << "\n255\n";
    out.write(reinterpret_cast<const char*>(img.data()), static_cast<std::streamsize>(img.size()));
  });
}

void write_pgm16(const fs::path& path, const Plane<std::uint16_t>& img) {
  write_atomic(path, [&](std::ostream& out) {
    out << "P5\n" << img.cols() << " " << img.rows() << "\n65535\n";
    std::vector<unsigned char> buf(static_cast<std::size_t>(img.size()) * 2);
    for (Eigen::Index i = 0; i < img.size(); ++i) {
      const auto v = img.data()[i];
      buf[2 * i] = static_cast<unsigned char>(v >> 8);
      buf[2 * i + 1] = static_cast<unsigned char>(v & 0xFF);
    }
    out.write(reinterpret_cast<const char*>(buf.data()), static_cast<std::streamsize>(buf.size()));
  });
}

GrayImage read_pgm(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open: " + path.string());
  const auto h = read_netpbm_header(in, true);
  if (h.magic != "P5" || h.maxval > 255) throw std::runtime_error("not an 8-bit PGM: " + path.string());
  GrayImage img(h.height, h.width);
  in.read(reinterpret_cast<char*>(img.data()), static_cast<std::streamsize>(img.size()));
  if (!in) throw std::runtime_error("truncated PGM: " + path.string());
  return img;
}

Plane<std::uint16_t> read_pgm16(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open: " + path.string());
  const auto h = read_netpbm_header(in, true);
  if (h.magic != "P5" || h.maxval < 256) throw std::runtime_error("not a 16-bit PGM: " + path.string());
  Plane<std::uint16_t> img(h.height, h.width);
  std::vector<unsigned char> buf(static_cast<std::size_t>(img.size()) * 2);
  in.read(reinterpret_cast<char*>(buf.data()), static_cast<std::streamsize>(buf.size()));
  if (!in) throw std::runtime_error("truncated PGM: " + path.string());
  for (Eigen::Index i = 0; i < img.size(); ++i)
    img.data()[i] = static_cast<std::uint16_t>((buf[2 * i] << 8) | buf[2 * i + 1]);
  return img;
}

void write_pbm(const fs::path& path, const Mask& mask) {
  write_atomic(path, [&](std::ostream& out) {
    out << "P4\n" << mask.cols() << " " << mask.rows() << "\n";
    const auto row_bytes = static_cast<std::size_t>((mask.cols() + 7) / 8);
    std::vector<unsigned char> row(row_bytes);
    for (Eigen::Index y = 0; y < mask.rows(); ++y) {
      std::fill(row.begin(), row.end(), 0);
      for (Eigen::Index x = 0; x < mask.cols(); ++x)
        if (mask(y, x)) row[x / 8] |= static_cast<unsigned char>(0x80 >> (x % 8));
      out.write(reinterpret_cast<const char*>(row.data()), static_cast<std::streamsize>(row_bytes));
    }
  });
}

Mask read_pbm(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open: " + path.string());
  const auto h = read_netpbm_header(in, false);
  if (h.magic != "P4") throw std::runtime_error("not a binary PBM: " + path.string());
  Mask mask(h.height, h.width);
  const auto row_bytes = static_cast<std::size_t>((h.width + 7) / 8);
  std::vector<unsigned char> row(row_bytes);
  for (int y = 0; y < h.height; ++y) {
    in.read(reinterpret_cast<char*>(row.data()), static_cast<std::streamsize>(row_bytes));
    if (!in) throw std::runtime_error("truncated PBM: " + path.string());
    for (int x = 0; x < h.width; ++x) mask(y, x) = (row[x / 8] >> (7 - x % 8)) & 1;
  }
  return mask;
}

namespace {

void write_png_rows(const fs::path& path, int width, int height, int color_type,
                    const std::vector<png_bytep>& rows) {
  const auto tmp = temp_sibling(path);
  std::unique_ptr<FILE, int (*)(FILE*)> fp(std::fopen(tmp.c_str(), "wb"), &std::fclose);
  if (!fp) throw std::runtime_error("cannot open for writing: " + tmp.string());
  png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  png_infop info = png_create_info_struct(png);
  if (!png || !info) throw std::runtime_error("libpng init failed");
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_write_struct(&png, &info);
    throw std::runtime_error("libpng write failed: " + path.string());
  }
  png_init_io(png, fp.get());
  png_set_IHDR(png, info, static_cast<png_uint_32>(width), static_cast<png_uint_32>(height), 8,
               color_type, PNG_INTERLACE_NONE, PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
  png_set_compression_level(png, 3);
  png_write_info(png, info);
  png_write_image(png, const_cast<png_bytepp>(rows.data()));
  png_write_end(png, nullptr);
  png_destroy_write_struct(&png, &info);
  fp.reset();
  fs::rename(tmp, path);
}

}  // namespace

void write_png(const fs::path& path, const RgbImage& img) {
  const auto w = static_cast<int>(img.cols());
  const auto h = static_cast<int>(img.rows());
  std::vector<png_byte> buf(static_cast<std::size_t>(w) * h * 3);
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) {
      auto* p = &buf[(static_cast<std::size_t>(y) * w + x) * 3];
      p[0] = img.r(y, x);
      p[1] = img.g(y, x);
      p[2] = img.b(y, x);
    }
  std::vector<png_bytep> rows(h);
  for (int y = 0; y < h; ++y) rows[y] = &buf[static_cast<std::size_t>(y) * w * 3];
  write_png_rows(path, w, h, PNG_COLOR_TYPE_RGB, rows);
}

void write_png(const fs::path& path, const GrayImage& img) {
  const auto w = static_cast<int>(img.cols());
  const auto h = static_cast<int>(img.rows());
  std::vector<png_bytep> rows(h);
  for (int y = 0; y < h; ++y) rows[y] = const_cast<png_bytep>(img.data() + static_cast<std::size_t>(y) * w);
  write_png_rows(path, w, h, PNG_COLOR_TYPE_GRAY, rows);
}

RgbImage read_png(const fs::path& path) {
  png_image image{};
  image.version = PNG_IMAGE_VERSION;
  if (!png_image_begin_read_from_file(&image, path.c_str()))
    throw std::runtime_error("cannot read PNG " + path.string() + ": " + image.message);
  image.format = PNG_FORMAT_RGB;
  std::vector<png_byte> buf(PNG_IMAGE_SIZE(image));
  if (!png_image_finish_read(&image, nullptr, buf.data(), 0, nullptr))
    throw std::runtime_error("cannot decode PNG " + path.string() + ": " + image.message);
  const auto w = static_cast<Eigen::Index>(image.width);
  const auto h = static_cast<Eigen::Index>(image.height);
  RgbImage img(h, w);
  for (Eigen::Index y = 0; y < h; ++y)
    for (Eigen::Index x = 0; x < w; ++x) {
      const auto* p = &buf[static_cast<std::size_t>(y * w + x) * 3];
      img.set(y, x, {p[0], p[1], p[2]});
    }
  return img;
}

GrayImage to_gray8(const FloatImage& img, float lo, float hi) {
  GrayImage out(img.rows(), img.cols());
  const float span = hi > lo ? hi - lo : 1.0f;
  for (Eigen::Index i = 0; i < img.size(); ++i) {
    const float v = img.data()[i];
    if (!std::isfinite(v)) {
      out.data()[i] = 255;
      continue;
    }
    const float t = std::clamp((v - lo) / span, 0.0f, 1.0f);
    out.data()[i] = static_cast<std::uint8_t>(std::lround(t * 255.0f));
  }
  return out;
}

void write_text_atomic(const fs::path& path, const std::string& content) {
  write_atomic(path, [&](std::ostream& out) { out << content; });
}

}  // namespace lsd
