#include <cmath>
#include <cstdio>
#include <filesystem>
#include <limits>
#include <stdexcept>

#include "doctest.h"
#include "rsrect/common.hpp"
#include "rsrect/image.hpp"
#include "rsrect/png_io.hpp"

using namespace rsrect;

namespace {

std::string temp_png(const char* tag) {
  auto dir = std::filesystem::temp_directory_path() / "rsrect_test_image";
  std::filesystem::create_directories(dir);
  return (dir / (std::string(tag) + ".png")).string();
}

}  // namespace

TEST_CASE("image: layout is row-major channel-interleaved") {
  Image img(2, 3, 3);
  img.at(1, 2, 1) = 0.75f;
  CHECK(img.data.size() == 18);
  CHECK(img.data[(1 * 3 + 2) * 3 + 1] == 0.75f);
  CHECK(img.at(0, 0, 0) == 0.0f);
  CHECK_THROWS_AS(Image(2, 3, 2), std::invalid_argument);
}

TEST_CASE("image: validate rejects non-finite values") {
  Image img(2, 2, 1, 0.5f);
  CHECK_NOTHROW(img.validate());
  img.at(0, 1, 0) = std::numeric_limits<float>::quiet_NaN();
  CHECK_THROWS_AS(img.validate(), std::invalid_argument);
  img.at(0, 1, 0) = std::numeric_limits<float>::infinity();
  CHECK_THROWS_AS(img.validate(), std::invalid_argument);
}

TEST_CASE("image: center offset puts the origin mid-frame") {
  CHECK(center_offset(64) == doctest::Approx(31.5));
  CHECK(center_offset(5) == doctest::Approx(2.0));
  CHECK(center_offset(1) == doctest::Approx(0.0));
}

TEST_CASE("mask: zero exactly where the channel sum is zero") {
  Image img(2, 2, 3, 0.0f);
  img.at(0, 0, 0) = 0.2f;  // one channel set
  img.at(0, 1, 0) = 0.1f;
  img.at(0, 1, 1) = 0.1f;
  img.at(0, 1, 2) = 0.1f;
  // (1,0) and (1,1) stay all-zero
  VisibilityMask m = mask_from_image(img);
  CHECK(m.at(0, 0) == 1);
  CHECK(m.at(0, 1) == 1);
  CHECK(m.at(1, 0) == 0);
  CHECK(m.at(1, 1) == 0);
  CHECK(m.count_zeros() == 2);
  CHECK(m.count_ones() == 2);
}

TEST_CASE("mask: intersect is the logical and") {
  VisibilityMask a(1, 3, 1), b(1, 3, 1);
  a.at(0, 0) = 0;
  b.at(0, 2) = 0;
  VisibilityMask c = mask_intersect(a, b);
  CHECK(c.at(0, 0) == 0);
  CHECK(c.at(0, 1) == 1);
  CHECK(c.at(0, 2) == 0);
}

TEST_CASE("mask: image round trip preserves the pattern") {
  VisibilityMask m(3, 2, 1);
  m.at(1, 0) = 0;
  m.at(2, 1) = 0;
  VisibilityMask back = mask_from_image(mask_to_image(m));
  REQUIRE(back.height == m.height);
  REQUIRE(back.width == m.width);
  for (int i = 0; i < m.height; ++i)
    for (int j = 0; j < m.width; ++j) CHECK(back.at(i, j) == m.at(i, j));
}

TEST_CASE("image: center crop extracts the middle window") {
  // fill with a position code so any indexing slip is visible
  Image img(6, 8, 1);
  for (int i = 0; i < 6; ++i)
    for (int j = 0; j < 8; ++j) img.at(i, j, 0) = float(i * 100 + j);
  Image crop = center_crop(img, 4, 4);
  REQUIRE(crop.height == 4);
  REQUIRE(crop.width == 4);
  for (int i = 0; i < 4; ++i)
    for (int j = 0; j < 4; ++j) CHECK(crop.at(i, j, 0) == float((i + 1) * 100 + (j + 2)));
}

TEST_CASE("image: full-size center crop is the identity") {
  Rng rng(17);
  Image img(5, 7, 3);
  for (auto& v : img.data) v = float(rng.uniform());
  Image crop = center_crop(img, 5, 7);
  CHECK(crop.data == img.data);
}

TEST_CASE("psnr: matches a scalar reference computation") {
  Rng rng(29);
  Image a(9, 11, 3), b(9, 11, 3);
  for (auto& v : a.data) v = float(rng.uniform());
  for (auto& v : b.data) v = float(rng.uniform());
  VisibilityMask m(9, 11, 1);
  for (auto& v : m.data) v = uint8_t(rng.below(4) != 0);  // knock out ~25%

  double se = 0.0;
  size_t n = 0;
  for (int i = 0; i < 9; ++i) {
    for (int j = 0; j < 11; ++j) {
      if (!m.at(i, j)) continue;
      for (int k = 0; k < 3; ++k) {
        double d = double(a.at(i, j, k)) - double(b.at(i, j, k));
        se += d * d;
        ++n;
      }
    }
  }
  double expect = 10.0 * std::log10(1.0 / (se / double(n)));
  CHECK(psnr_masked(a, b, m) == doctest::Approx(expect).epsilon(1e-9));
}

TEST_CASE("psnr: identical images hit the 100 dB cap") {
  Image a(4, 4, 3, 0.25f);
  VisibilityMask m(4, 4, 1);
  CHECK(psnr_masked(a, a, m) == doctest::Approx(100.0));
}

TEST_CASE("psnr: mask excludes the differing pixels") {
  Image a(4, 4, 1, 0.5f);
  Image b = a;
  b.at(2, 2, 0) = 0.9f;
  VisibilityMask m(4, 4, 1);
  CHECK(psnr_masked(a, b, m) < 40.0);
  m.at(2, 2) = 0;
  CHECK(psnr_masked(a, b, m) == doctest::Approx(100.0));
}

TEST_CASE("png: round trip quantizes to half a step at worst") {
  Rng rng(41);
  Image img(10, 6, 3);
  for (auto& v : img.data) v = float(rng.uniform());
  std::string path = temp_png("roundtrip");
  save_png(path, img);
  Image back = load_png(path);
  REQUIRE(back.same_shape(img));
  float worst = 0.0f;
  for (size_t i = 0; i < img.data.size(); ++i)
    worst = std::max(worst, std::abs(img.data[i] - back.data[i]));
  CHECK(worst <= 0.5f / 255.0f + 1e-6f);
}

TEST_CASE("png: zero bytes load with the 1/255 floor") {
  Image img(3, 3, 1, 0.0f);
  img.at(1, 1, 0) = 1.0f;
  std::string path = temp_png("floor");
  save_png(path, img);
  Image back = load_png(path);
  CHECK(back.at(0, 0, 0) == doctest::Approx(1.0 / 255.0));
  CHECK(back.at(1, 1, 0) == doctest::Approx(1.0));
  // consequence: a loaded image never trips the zero-intensity mask rule
  CHECK(mask_from_image(back).count_zeros() == 0);
}

TEST_CASE("png: gray images keep one channel") {
  Image img(4, 5, 1, 0.5f);
  std::string path = temp_png("gray");
  save_png(path, img);
  Image back = load_png(path);
  CHECK(back.channels == 1);
  CHECK(back.height == 4);
  CHECK(back.width == 5);
}
