#include "rsrect/warp.hpp"

#include <cmath>
#include <stdexcept>

#include "rsrect/common.hpp"

namespace rsrect {

PixelCoord row_motion_forward(const PixelCoord& p_gs, double t_x, double r_z) {
  double c = std::cos(r_z), s = std::sin(r_z);
  return {p_gs.x * c - p_gs.y * s + t_x, p_gs.x * s + p_gs.y * c};
}

PixelCoord row_motion_inverse(const PixelCoord& p_rs, double t_x, double r_z) {
  double c = std::cos(r_z), s = std::sin(r_z);
  double dx = p_rs.x - t_x;
  return {dx * c + p_rs.y * s, -dx * s + p_rs.y * c};
}

void bilinear_sample(const Image& img, const PixelCoord& p, float* out) {
  double u = p.x + center_offset(img.height);
  double v = p.y + center_offset(img.width);
  if (!std::isfinite(u) || !std::isfinite(v)) {  // zero-fill, like any miss
    for (int k = 0; k < img.channels; ++k) out[k] = 0.0f;
    return;
  }
  int i0 = int(std::floor(u));
  int j0 = int(std::floor(v));
  double fu = u - double(i0);
  double fv = v - double(j0);
  double w00 = (1.0 - fu) * (1.0 - fv);
  double w01 = (1.0 - fu) * fv;
  double w10 = fu * (1.0 - fv);
  double w11 = fu * fv;
  const int C = img.channels;
  double acc[3] = {0.0, 0.0, 0.0};
  auto add = [&](int i, int j, double w) {
    if (w == 0.0 || i < 0 || i >= img.height || j < 0 || j >= img.width) return;
    const float* px = &img.data[(size_t(i) * img.width + size_t(j)) * C];
    for (int k = 0; k < C; ++k) acc[k] += w * px[k];
  };
  add(i0, j0, w00);
  add(i0, j0 + 1, w01);
  add(i0 + 1, j0, w10);
  add(i0 + 1, j0 + 1, w11);
  for (int k = 0; k < C; ++k) out[k] = float(acc[k]);
}

WarpResult warp_rs_from_gs(const Image& gs, const MotionCurve& motion) {
  gs.validate();
  motion.validate();
  if (motion.rows() != gs.height) {
    throw std::invalid_argument("warp_rs_from_gs: motion rows must match image height");
  }
  WarpResult res;
  res.image = Image(gs.height, gs.width, gs.channels);
  double cx = center_offset(gs.height);
  double cy = center_offset(gs.width);
  parallel_for(gs.height, [&](int64_t i0, int64_t i1) {
    for (int64_t i = i0; i < i1; ++i) {
      double tx = motion.t_x[i];
      double rz = motion.r_z[i];
      for (int j = 0; j < gs.width; ++j) {
        PixelCoord p_rs{double(i) - cx, double(j) - cy};
        PixelCoord p_gs = row_motion_inverse(p_rs, tx, rz);
        bilinear_sample(gs, p_gs, &res.image.at(int(i), j, 0));
      }
    }
  });
  res.mask = mask_from_image(res.image);
  return res;
}

WarpResult scatter_st_rectify(const Image& rs, const MotionCurve& motion) {
  rs.validate();
  motion.validate();
  if (motion.rows() != rs.height) {
    throw std::invalid_argument("scatter_st_rectify: motion rows must match image height");
  }
  WarpResult res;
  res.image = Image(rs.height, rs.width, rs.channels);
  VisibilityMask filled(rs.height, rs.width, 0);
  double cx = center_offset(rs.height);
  double cy = center_offset(rs.width);
  // scatter order is the logical row-major scan; last writer wins
  for (int i = 0; i < rs.height; ++i) {
    double tx = motion.t_x[i];
    double rz = motion.r_z[i];
    for (int j = 0; j < rs.width; ++j) {
      PixelCoord p_rs{double(i) - cx, double(j) - cy};
      PixelCoord p_gs = row_motion_inverse(p_rs, tx, rz);
      long ti = std::lround(p_gs.x + cx);
      long tj = std::lround(p_gs.y + cy);
      if (ti < 0 || ti >= rs.height || tj < 0 || tj >= rs.width) continue;
      for (int k = 0; k < rs.channels; ++k) {
        res.image.at(int(ti), int(tj), k) = rs.at(i, j, k);
      }
      filled.at(int(ti), int(tj)) = 1;
    }
  }
  res.mask = filled;
  return res;
}

}  // namespace rsrect
