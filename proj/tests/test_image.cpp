#include "lsd/image.hpp"
#include "test_util.hpp"

#include <doctest.h>

#include <fstream>
#include <limits>

using namespace lsd;

TEST_CASE("pgm 8 and 16 bit round trip") {
  test::TempDir dir("image_pgm");
  Rng rng(3);
  GrayImage g(17, 23);
  for (Eigen::Index i = 0; i < g.size(); ++i) g(i) = static_cast<std::uint8_t>(rng.index(256));
  write_pgm(dir / "a.pgm", g);
  CHECK((read_pgm(dir / "a.pgm") == g).all());

  Plane<std::uint16_t> w(9, 31);
  for (Eigen::Index i = 0; i < w.size(); ++i) w(i) = static_cast<std::uint16_t>(rng.index(65536));
  w(0, 0) = 65535;
  w(0, 1) = 256;
  write_pgm16(dir / "b.pgm", w);
  CHECK((read_pgm16(dir / "b.pgm") == w).all());

  // big-endian samples: 256 is bytes 01 00
  std::ifstream in(dir / "b.pgm", std::ios::binary);
  std::string content((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  const auto data = content.substr(content.size() - 2 * static_cast<std::size_t>(w.size()));
  CHECK(static_cast<unsigned char>(data[2]) == 0x01);
  CHECK(static_cast<unsigned char>(data[3]) == 0x00);
}

TEST_CASE("pbm round trip with unaligned width") {
  test::TempDir dir("image_pbm");
  Rng rng(5);
  for (Eigen::Index cols : {1, 7, 8, 9, 33}) {
    const Mask m = test::random_mask(rng, 5, cols, 0.5);
    write_pbm(dir / "m.pbm", m);
    CHECK((read_pbm(dir / "m.pbm") == m).all());
  }
}

TEST_CASE("png round trip") {
  test::TempDir dir("image_png");
  Rng rng(7);
  const RgbImage img = test::random_image(rng, 12, 19);
  write_png(dir / "x.png", img);
  CHECK(read_png(dir / "x.png") == img);
}

TEST_CASE("readers reject malformed files") {
  test::TempDir dir("image_bad");
  {
    std::ofstream(dir / "bad.pgm") << "P2\n2 2\n255\n0 0 0 0\n";
  }
  CHECK_THROWS(read_pgm(dir / "bad.pgm"));
  CHECK_THROWS(read_pgm(dir / "missing.pgm"));
  CHECK_THROWS(read_png(dir / "bad.pgm"));
}

TEST_CASE("to_gray8 maps range and non-finite values") {
  FloatImage f(1, 4);
  f << 0.0f, 5.0f, 10.0f, std::numeric_limits<float>::infinity();
  const GrayImage g = to_gray8(f, 0.0f, 10.0f);
  CHECK(g(0, 0) == 0);
  CHECK(g(0, 2) == 255);
  CHECK(std::abs(static_cast<int>(g(0, 1)) - 128) <= 1);
  CHECK(g(0, 3) == 255);
}

TEST_CASE("write_text_atomic replaces content and leaves no temporary") {
  test::TempDir dir("image_atomic");
  write_text_atomic(dir / "t.txt", "first");
  write_text_atomic(dir / "t.txt", "second");
  std::ifstream in(dir / "t.txt");
  std::string s;
  std::getline(in, s);
  CHECK(s == "second");
  int files = 0;
  for ([[maybe_unused]] const auto& e : std::filesystem::directory_iterator(dir.path())) ++files;
  CHECK(files == 1);
}
