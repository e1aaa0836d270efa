#pragma once

// Analytic rectification with known motion. For each clean-geometry pixel
// the scanline that imaged it satisfies the consistency condition
//   x_rs = x_gs*cos(rz(x_rs)) - y_gs*sin(rz(x_rs)) + tx(x_rs)
// which is solved per pixel by fixed-point iteration from x_rs = x_gs.
// Smooth motions make the iteration a contraction; pixels that fail to
// converge (or land far outside the frame) are masked, not extrapolated.

#include <string>
#include <vector>

#include "rsrect/image.hpp"
#include "rsrect/motion.hpp"
#include "rsrect/warp.hpp"

namespace rsrect {

// Fractional source-row index per target pixel, in array-index space:
// zero motion gives data(i,j) = i. Entries are clamped to [-r/2, 3r/2].
struct RowMap {
  int size = 0;
  std::vector<float> data;

  RowMap() = default;
  explicit RowMap(int r, float fill = 0.0f) : size(r), data(size_t(r) * r, fill) {}

  float& at(int i, int j) { return data[size_t(i) * size + size_t(j)]; }
  float at(int i, int j) const { return data[size_t(i) * size + size_t(j)]; }

  static RowMap identity(int r);
};

struct RowMapResult {
  RowMap map;
  std::vector<uint8_t> converged;  // per pixel; 0 also marks out-of-window entries

  bool converged_at(int i, int j) const { return converged[size_t(i) * map.size + size_t(j)] != 0; }
  double converged_fraction() const;
};

RowMapResult row_map_fixed_point(const MotionCurve& motion, int r, int max_iters = 25,
                                 double tol = 1e-4);

// Target-to-source rectification: each target pixel looks up its source row,
// samples the motion there, applies the forward row-motion map and
// bilinear-samples the distorted image. Non-converged pixels come out zero.
WarpResult rectify_ts(const Image& rs, const MotionCurve& motion, const RowMapResult& rowmap);

// Flat little-endian float32 payload behind an 8-byte header
// (magic "RMAP", u16 size, u16 reserved). Test-fixture format.
void save_rowmap(const std::string& path, const RowMap& map);
RowMap load_rowmap(const std::string& path);

}  // namespace rsrect
