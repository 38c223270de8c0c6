#include <doctest.h>

#include <cstring>

#include "naveval/image_io.hpp"
#include "testutil.hpp"

using namespace naveval;
using namespace testutil;

TEST_SUITE("image_io") {

TEST_CASE("ppm round trip preserves every byte") {
  TempDir dir("ppm");
  const RgbImage img = pattern_rgb(7, 5, 3);
  write_ppm(dir.file("a.ppm"), img);
  const RgbImage back = read_ppm(dir.file("a.ppm"));
  CHECK(back.width == 7);
  CHECK(back.height == 5);
  CHECK(back.pixels == img.pixels);
}

TEST_CASE("ppm header accepts comments and rejects other formats") {
  TempDir dir("ppm_hdr");
  write_file(dir.file("c.ppm"),
             "P6\n# a comment\n2 1\n# another\n255\nabcdef");
  const RgbImage img = read_ppm(dir.file("c.ppm"));
  CHECK(img.width == 2);
  CHECK(img.height == 1);
  CHECK(img.at(0, 0)[0] == 'a');

  write_file(dir.file("p5.ppm"), "P5\n2 1\n255\nab");
  CHECK_THROWS_AS(read_ppm(dir.file("p5.ppm")), ImageError);
  write_file(dir.file("hi.ppm"), "P6\n1 1\n65535\nabcdef");
  CHECK_THROWS_AS(read_ppm(dir.file("hi.ppm")), ImageError);
  write_file(dir.file("short.ppm"), "P6\n2 2\n255\nabc");
  CHECK_THROWS_AS(read_ppm(dir.file("short.ppm")), ImageError);
}

TEST_CASE("pfm round trip preserves float depth exactly") {
  TempDir dir("pfm");
  DepthImage img = pattern_depth(6, 4, 1);
  img.values[5] = std::numeric_limits<float>::quiet_NaN();
  img.values[6] = -2.5f;  // invalid depth but a legal stored float
  write_pfm(dir.file("d.pfm"), img);
  const DepthImage back = read_pfm(dir.file("d.pfm"));
  CHECK(back.width == 6);
  CHECK(back.height == 4);
  for (std::size_t i = 0; i < img.values.size(); ++i) {
    if (std::isnan(img.values[i])) {
      CHECK(std::isnan(back.values[i]));
    } else {
      CHECK(back.values[i] == img.values[i]);
    }
  }
}

TEST_CASE("pfm rows are stored bottom up") {
  TempDir dir("pfm_rows");
  DepthImage img;
  img.width = 2;
  img.height = 2;
  img.values = {1.0f, 2.0f, 3.0f, 4.0f};  // row 0 is {1,2}
  write_pfm(dir.file("r.pfm"), img);

  const std::string bytes = read_file(dir.file("r.pfm"));
  const std::size_t data = bytes.find("-1.0\n") + 5;
  float first = 0.0f;
  std::memcpy(&first, bytes.data() + data, 4);
  // the file starts with the bottom row, i.e. logical row 1
  CHECK(first == 3.0f);

  const DepthImage back = read_pfm(dir.file("r.pfm"));
  CHECK(back.values == img.values);
}

TEST_CASE("pfm rejects color variant and big endian scales") {
  TempDir dir("pfm_rej");
  write_file(dir.file("pf3.pfm"), "PF\n1 1\n-1.0\n0123456789ab");
  CHECK_THROWS_AS(read_pfm(dir.file("pf3.pfm")), ImageError);
  write_file(dir.file("be.pfm"), "Pf\n1 1\n1.0\n0123");
  CHECK_THROWS_AS(read_pfm(dir.file("be.pfm")), ImageError);
  write_file(dir.file("trunc.pfm"), "Pf\n2 2\n-1.0\n01234567");
  CHECK_THROWS_AS(read_pfm(dir.file("trunc.pfm")), ImageError);
}

TEST_CASE("pgm masks round trip and select pixels") {
  TempDir dir("pgm");
  MaskImage mask;
  mask.width = 3;
  mask.height = 2;
  mask.values = {0, 255, 0, 7, 0, 1};
  write_pgm(dir.file("m.pgm"), mask);
  const MaskImage back = read_pgm(dir.file("m.pgm"));
  CHECK(back.width == 3);
  CHECK(back.height == 2);
  CHECK(back.values == mask.values);
}

TEST_CASE("readers name the offending file") {
  CHECK_THROWS_WITH_AS(read_ppm("/nonexistent/x.ppm"),
                       doctest::Contains("x.ppm"), ImageError);
  CHECK_THROWS_WITH_AS(read_pfm("/nonexistent/x.pfm"),
                       doctest::Contains("x.pfm"), ImageError);
  CHECK_THROWS_WITH_AS(read_pgm("/nonexistent/x.pgm"),
                       doctest::Contains("x.pgm"), ImageError);
}

}  // TEST_SUITE
