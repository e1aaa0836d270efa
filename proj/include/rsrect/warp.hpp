#pragma once

// Row-motion warps. A distorted-image coordinate relates to the clean
// (global-shutter) coordinate through the per-row motion of the scanline
// it lies on:
//   x_rs = x_gs*cos(rz) - y_gs*sin(rz) + tx
//   y_rs = x_gs*sin(rz) + y_gs*cos(rz)
// with (tx, rz) looked up at row x_rs. The map is a rotation about the
// image center followed by a shift along the scanline axis, so it has a
// closed-form inverse per row.

#include <utility>

#include "rsrect/image.hpp"
#include "rsrect/motion.hpp"

namespace rsrect {

// Forward map: clean coordinate -> distorted coordinate, given the motion
// of the target row.
PixelCoord row_motion_forward(const PixelCoord& p_gs, double t_x, double r_z);

// Exact algebraic inverse: distorted coordinate -> clean coordinate.
// row_motion_forward(row_motion_inverse(p)) == p to ~1e-15 in double.
PixelCoord row_motion_inverse(const PixelCoord& p_rs, double t_x, double r_z);

// 4-neighbor bilinear interpolation at a centered coordinate. Out-of-bounds
// neighbors contribute zero; fully out-of-bounds points return zero. Total
// over all inputs. `out` receives img.channels values.
void bilinear_sample(const Image& img, const PixelCoord& p, float* out);

struct WarpResult {
  Image image;
  VisibilityMask mask;
};

// Target-to-source gather: for every integer distorted pixel, invert that
// row's motion and bilinear-sample the clean image. Mask is 0 exactly where
// all channels of the result are 0.
WarpResult warp_rs_from_gs(const Image& gs, const MotionCurve& motion);

// Source-to-target scatter rectification: each distorted pixel is pushed
// through the per-row inverse map to the nearest integer clean-geometry
// location. Unfilled targets are 0 in the returned mask ("holes");
// collisions resolve last-writer-wins in row-major source order.
WarpResult scatter_st_rectify(const Image& rs, const MotionCurve& motion);

}  // namespace rsrect
