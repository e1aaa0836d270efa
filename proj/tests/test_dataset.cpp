#include <cmath>
#include <filesystem>
#include <fstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "doctest.h"
#include "rsrect/common.hpp"
#include "rsrect/dataset.hpp"
#include "rsrect/image.hpp"
#include "rsrect/motion.hpp"
#include "rsrect/warp.hpp"

using namespace rsrect;

namespace {

namespace fs = std::filesystem;

fs::path fresh_dir(const char* tag) {
  fs::path dir = fs::temp_directory_path() / "rsrect_test_dataset" / tag;
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

std::vector<char> file_bytes(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  REQUIRE(bool(in));
  return std::vector<char>(std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>());
}

}  // namespace

TEST_CASE("crop margin scales the 50-at-256 reference") {
  CHECK(dataset_pad(256) == 50);
  CHECK(dataset_pad(64) == 13);
  CHECK(dataset_pad(32) == 7);
  CHECK(dataset_pad(128) == 25);
  // rounded up, never down
  for (int r = 8; r <= 512; r += 8) {
    CHECK(dataset_pad(r) * 256 >= r * 50);
    CHECK((dataset_pad(r) - 1) * 256 < r * 50);
  }
}

TEST_CASE("clean images are positive, bounded, and deterministic") {
  Image a = synth_clean_image(64, 5);
  Image b = synth_clean_image(64, 5);
  Image c = synth_clean_image(64, 6);
  CHECK(a.height == 64);
  CHECK(a.width == 64);
  CHECK(a.channels == 3);
  CHECK(a.data == b.data);
  CHECK(a.data != c.data);
  float lo = 1.0f, hi = 0.0f;
  for (float v : a.data) {
    lo = std::min(lo, v);
    hi = std::max(hi, v);
  }
  CHECK(lo >= 1.0f / 255.0f);
  CHECK(hi <= 1.0f);
  CHECK(hi > 0.3f);  // not degenerate
  CHECK_THROWS_AS(synth_clean_image(2, 1), std::invalid_argument);
}

TEST_CASE("clean image borders sit at the dark floor") {
  Image img = synth_clean_image(96, 17);
  for (int t = 0; t < 96; ++t) {
    for (int k = 0; k < 3; ++k) {
      CHECK(img.at(0, t, k) == doctest::Approx(0.02).epsilon(1e-6));
      CHECK(img.at(95, t, k) == doctest::Approx(0.02).epsilon(1e-6));
      CHECK(img.at(t, 0, k) == doctest::Approx(0.02).epsilon(1e-6));
      CHECK(img.at(t, 95, k) == doctest::Approx(0.02).epsilon(1e-6));
    }
  }
}

TEST_CASE("fade depth controls where the content starts") {
  // with an explicit fade_from, everything deeper than fade_from + ramp is
  // untouched; a larger fade_from darkens a wider band
  Image wide = synth_clean_image(96, 23, 30.0);
  Image narrow = synth_clean_image(96, 23, 6.0);
  // pixels deeper than 30 + 8 from every border agree between the two
  for (int i = 40; i < 56; ++i) {
    for (int j = 40; j < 56; ++j) {
      for (int k = 0; k < 3; ++k) {
        CHECK(wide.at(i, j, k) == narrow.at(i, j, k));
      }
    }
  }
  // the band between 8 and 14 is dark only in the wide fade
  double wide_sum = 0.0, narrow_sum = 0.0;
  for (int j = 20; j < 76; ++j) {
    wide_sum += wide.at(10, j, 0);
    narrow_sum += narrow.at(10, j, 0);
  }
  CHECK(wide_sum < 0.05 * 56.0);
  CHECK(narrow_sum > wide_sum);
}

TEST_CASE("make_sample slices the padded curve and reparameterizes the trajectory") {
  const int r = 64;
  const int p = dataset_pad(r);
  const int R = r + 2 * p;
  MotionRanges ranges;
  Image clean = synth_clean_image(R, 31);
  TrainSample s = make_sample(clean, r, 77, ranges);

  CHECK(s.gs.height == r);
  CHECK(s.rs.height == r);
  CHECK(s.curve.rows() == r);
  CHECK(s.seed == 77);

  // cropped row i carries the motion of padded row i + p
  MotionCurve curve_pad = eval_trajectory(random_trajectory(77, ranges), R);
  for (int i = 0; i < r; ++i) {
    CHECK(s.curve.t_x[size_t(i)] == doctest::Approx(curve_pad.t_x[size_t(i + p)]).epsilon(1e-12));
    CHECK(s.curve.r_z[size_t(i)] == doctest::Approx(curve_pad.r_z[size_t(i + p)]).epsilon(1e-12));
  }
  // the stored trajectory reproduces the cropped curve on its own axis
  MotionCurve from_traj = eval_trajectory(s.traj, r);
  for (int i = 0; i < r; ++i) {
    CHECK(from_traj.t_x[size_t(i)] == doctest::Approx(s.curve.t_x[size_t(i)]).epsilon(1e-9));
    CHECK(from_traj.r_z[size_t(i)] == doctest::Approx(s.curve.r_z[size_t(i)]).epsilon(1e-9));
  }
}

TEST_CASE("make_sample rejects undersized inputs by name") {
  const int r = 64;
  const int R = r + 2 * dataset_pad(r);
  Image small = synth_clean_image(R - 1, 3);
  bool threw = false;
  try {
    make_sample(small, r, 1, {});
  } catch (const std::invalid_argument& e) {
    threw = true;
    CHECK(std::string(e.what()).find("90x90") != std::string::npos);
  }
  CHECK(threw);
}

TEST_CASE("samples reproduce their distorted image and leave no holes") {
  const int r = 64;
  const int R = r + 2 * dataset_pad(r);
  MotionRanges ranges;
  for (uint64_t seed : {1u, 2u, 3u, 4u, 5u}) {
    Image clean = synth_clean_image(R, mix_seed(seed, 40));
    TrainSample s = make_sample(clean, r, mix_seed(seed, 41), ranges);
    CHECK(sample_reproduction_error(s) <= 1e-6);
    // the crop margin absorbs the warp: every cropped RS pixel is live
    int holes = 0;
    for (int i = 0; i < r; ++i) {
      for (int j = 0; j < r; ++j) {
        if (!s.rs_mask.at(i, j)) ++holes;
      }
    }
    CHECK(holes == 0);
  }
}

TEST_CASE("generate_dataset writes a loadable, reproducible corpus") {
  fs::path dir_a = fresh_dir("gen_a");
  fs::path dir_b = fresh_dir("gen_b");
  MotionRanges ranges;
  std::string man_a = generate_dataset(dir_a.string(), 2, 3, 64, 99, ranges);
  std::string man_b = generate_dataset(dir_b.string(), 2, 3, 64, 99, ranges);

  auto recs = load_manifest(man_a);
  REQUIRE(recs.size() == 6);

  // same seed, two runs: identical manifests and identical image bytes
  CHECK(file_bytes(man_a) == file_bytes(man_b));
  CHECK(file_bytes(dir_a / "img000_gs.png") == file_bytes(dir_b / "img000_gs.png"));
  CHECK(file_bytes(dir_a / "img001_m002_rs.png") == file_bytes(dir_b / "img001_m002_rs.png"));
  CHECK(file_bytes(dir_a / "img000_m001_motion.csv") ==
        file_bytes(dir_b / "img000_m001_motion.csv"));

  // a different seed changes the data
  fs::path dir_c = fresh_dir("gen_c");
  generate_dataset(dir_c.string(), 2, 3, 64, 100, ranges);
  CHECK(file_bytes(man_a) != file_bytes(dir_c / "manifest.jsonl"));

  CHECK_THROWS_AS(generate_dataset(dir_a.string(), 0, 3, 64, 1, ranges), std::invalid_argument);
}

TEST_CASE("loaded samples satisfy the invariants up to 8-bit quantization") {
  fs::path dir = fresh_dir("load");
  MotionRanges ranges;
  std::string man = generate_dataset(dir.string(), 1, 2, 64, 7, ranges);
  auto recs = load_manifest(man);
  REQUIRE(recs.size() == 2);

  for (const auto& rec : recs) {
    TrainSample s = load_sample(rec, 64);
    CHECK(s.gs.height == 64);
    CHECK(s.rs.channels == 3);
    CHECK(s.curve.rows() == 64);
    // both images quantized to 1/255 steps; bilinear taps keep the error
    // inside one step plus the original invariant
    CHECK(sample_reproduction_error(s) <= 1.0 / 255.0 + 2e-6);
    int holes = 0;
    for (int i = 0; i < 64; ++i) {
      for (int j = 0; j < 64; ++j) {
        if (!s.rs_mask.at(i, j)) ++holes;
      }
    }
    CHECK(holes == 0);
    // stored trajectory matches the stored curve
    MotionCurve from_traj = eval_trajectory(s.traj, 64);
    for (int i = 0; i < 64; ++i) {
      CHECK(std::abs(from_traj.t_x[size_t(i)] - s.curve.t_x[size_t(i)]) < 1e-9);
    }
  }

  CHECK_THROWS_AS(load_sample(recs[0], 32), std::runtime_error);
}

TEST_CASE("manifest parsing reports bad lines and missing files") {
  fs::path dir = fresh_dir("badman");
  fs::path man = dir / "manifest.jsonl";
  {
    std::ofstream out(man, std::ios::binary);
    out << R"({"gs":"a.png","rs":"b.png","motion":"c.csv","trajectory":)"
        << R"({"degree":2,"coeffs_tx":[0,0,0],"coeffs_rz":[0,0,0],)"
        << R"x("normalization":"s=i/(r-1)"},"seed":1})x" << "\n";
    out << "not json\n";
  }
  bool threw = false;
  try {
    load_manifest(man.string());
  } catch (const std::runtime_error& e) {
    threw = true;
    CHECK(std::string(e.what()).find("line 2") != std::string::npos);
  }
  CHECK(threw);
  CHECK_THROWS_AS(load_manifest((dir / "absent.jsonl").string()), std::runtime_error);
}
