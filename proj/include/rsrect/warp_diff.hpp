#pragma once

// Differentiable counterparts of the two warps used in training. Gradients
// flow to the per-row motion curves (and, for rectification, the row map);
// images are treated as constants. Geometry is evaluated in double and cast
// to T once per output value, so the float instantiations reproduce the
// analytic warps bit for bit.

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <vector>

#include "rsrect/common.hpp"
#include "rsrect/image.hpp"
#include "rsrect/tensor.hpp"

namespace rsrect {

namespace detail {

// Bilinear read at (u, v) in array coordinates with zero fill outside.
// val/du/dv hold per-channel value and partials w.r.t. the sample point.
template <typename T>
inline void bilinear_tap(const Tensor<T>& img, int n, double u, double v, double* val, double* du,
                         double* dv) {
  if (!std::isfinite(u) || !std::isfinite(v)) {  // zero-fill, like any miss
    for (int k = 0; k < img.c; ++k) {
      val[k] = 0.0;
      if (du) du[k] = 0.0;
      if (dv) dv[k] = 0.0;
    }
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
  const int C = img.c;
  for (int k = 0; k < C; ++k) {
    double p00 = 0.0, p01 = 0.0, p10 = 0.0, p11 = 0.0;
    if (i0 >= 0 && i0 < img.h) {
      if (j0 >= 0 && j0 < img.w) p00 = double(img.at(n, i0, j0, k));
      if (j0 + 1 >= 0 && j0 + 1 < img.w) p01 = double(img.at(n, i0, j0 + 1, k));
    }
    if (i0 + 1 >= 0 && i0 + 1 < img.h) {
      if (j0 >= 0 && j0 < img.w) p10 = double(img.at(n, i0 + 1, j0, k));
      if (j0 + 1 >= 0 && j0 + 1 < img.w) p11 = double(img.at(n, i0 + 1, j0 + 1, k));
    }
    val[k] = w00 * p00 + w01 * p01 + w10 * p10 + w11 * p11;
    if (du) du[k] = (1.0 - fv) * (p10 - p00) + fv * (p11 - p01);
    if (dv) dv[k] = (1.0 - fu) * (p01 - p00) + fu * (p11 - p10);
  }
}

template <typename T>
inline void check_motion_pair(const Tensor<T>& img, const Tensor<T>& tx, const Tensor<T>& rz) {
  if (img.h != img.w) throw std::invalid_argument("diff warp: image must be square");
  if (tx.n != img.n || rz.n != img.n || tx.h != 1 || tx.w != 1 || rz.h != 1 || rz.w != 1 ||
      tx.c != img.h || rz.c != img.h) {
    throw std::invalid_argument("diff warp: motion tensors must be (n,1,1,r)");
  }
}

// Linear interpolation of a length-r per-row curve at fractional row a,
// clamped to the endpoints; mirrors the analytic motion sampler.
struct CurveTap {
  double value;
  int k0, k1;     // source entries (equal at the clamped ends)
  double w0, w1;  // d value / d entry
  double slope;   // d value / d a (zero at the clamped ends)
};

template <typename T>
inline CurveTap curve_tap(const Tensor<T>& curve, int n, int r, double a) {
  CurveTap tap;
  if (!(a > 0.0)) {  // negated so a NaN row map clamps instead of indexing wild
    tap.value = double(curve.at(n, 0, 0, 0));
    tap.k0 = tap.k1 = 0;
    tap.w0 = 1.0;
    tap.w1 = 0.0;
    tap.slope = 0.0;
    return tap;
  }
  if (a >= double(r - 1)) {
    tap.value = double(curve.at(n, 0, 0, r - 1));
    tap.k0 = tap.k1 = r - 1;
    tap.w0 = 1.0;
    tap.w1 = 0.0;
    tap.slope = 0.0;
    return tap;
  }
  int k = int(std::floor(a));
  double f = a - double(k);
  double v0 = double(curve.at(n, 0, 0, k));
  double v1 = double(curve.at(n, 0, 0, k + 1));
  tap.value = v0 + f * (v1 - v0);
  tap.k0 = k;
  tap.k1 = k + 1;
  tap.w0 = 1.0 - f;
  tap.w1 = f;
  tap.slope = v1 - v0;
  return tap;
}

}  // namespace detail

// ---------------------------------------------------------------------------
// regeneration warp: truth-to-sensed gather, differentiable in (t_x, r_z)

template <typename T>
struct RegenWarpCache {
  bool valid = false;
  Tensor<T> gs, tx, rz;
};

template <typename T>
Tensor<T> warp_gs_to_rs_diff(const Tensor<T>& gs, const Tensor<T>& tx, const Tensor<T>& rz,
                             RegenWarpCache<T>* cache) {
  detail::check_motion_pair(gs, tx, rz);
  int r = gs.h;
  Tensor<T> out(gs.n, r, r, gs.c);
  double c = center_offset(r);
  parallel_for(gs.n, [&](int64_t n0, int64_t n1) {
    double val[4];
    for (int64_t nn = n0; nn < n1; ++nn) {
      for (int i = 0; i < r; ++i) {
        double t = double(tx.at(int(nn), 0, 0, i));
        double th = double(rz.at(int(nn), 0, 0, i));
        double cs = std::cos(th), sn = std::sin(th);
        double x_rs = double(i) - c;
        for (int j = 0; j < r; ++j) {
          double y_rs = double(j) - c;
          double dx = x_rs - t;
          double x_gs = dx * cs + y_rs * sn;
          double y_gs = -dx * sn + y_rs * cs;
          detail::bilinear_tap(gs, int(nn), x_gs + c, y_gs + c, val, nullptr, nullptr);
          for (int k = 0; k < gs.c; ++k) out.at(int(nn), i, j, k) = T(val[k]);
        }
      }
    }
  });
  if (cache) {
    cache->gs = gs;
    cache->tx = tx;
    cache->rz = rz;
    cache->valid = true;
  }
  return out;
}

template <typename T>
void warp_gs_to_rs_bwd(const RegenWarpCache<T>& cache, const Tensor<T>& gout, Tensor<T>& gtx,
                       Tensor<T>& grz) {
  if (!cache.valid) throw std::logic_error("warp_gs_to_rs_bwd: forward cache missing");
  const Tensor<T>& gs = cache.gs;
  int r = gs.h;
  gtx = Tensor<T>(gs.n, 1, 1, r);
  grz = Tensor<T>(gs.n, 1, 1, r);
  double c = center_offset(r);
  parallel_for(gs.n, [&](int64_t n0, int64_t n1) {
    double val[4], du[4], dv[4];
    for (int64_t nn = n0; nn < n1; ++nn) {
      for (int i = 0; i < r; ++i) {
        double t = double(cache.tx.at(int(nn), 0, 0, i));
        double th = double(cache.rz.at(int(nn), 0, 0, i));
        double cs = std::cos(th), sn = std::sin(th);
        double x_rs = double(i) - c;
        double acc_t = 0.0, acc_th = 0.0;
        for (int j = 0; j < r; ++j) {
          double y_rs = double(j) - c;
          double dx = x_rs - t;
          double x_gs = dx * cs + y_rs * sn;
          double y_gs = -dx * sn + y_rs * cs;
          detail::bilinear_tap(gs, int(nn), x_gs + c, y_gs + c, val, du, dv);
          double gsx = 0.0, gsy = 0.0;
          for (int k = 0; k < gs.c; ++k) {
            double go = double(gout.at(int(nn), i, j, k));
            gsx += go * du[k];
            gsy += go * dv[k];
          }
          // d x_gs/d t = -cos, d y_gs/d t = sin; d x_gs/d th = y_gs, d y_gs/d th = -x_gs
          acc_t += gsx * (-cs) + gsy * sn;
          acc_th += gsx * y_gs + gsy * (-x_gs);
        }
        gtx.at(int(nn), 0, 0, i) = T(acc_t);
        grz.at(int(nn), 0, 0, i) = T(acc_th);
      }
    }
  });
}

// ---------------------------------------------------------------------------
// rectification warp: row map -> motion at the mapped row -> forward row
// motion -> bilinear gather; differentiable in (t_x, r_z, row map)

template <typename T>
struct RectWarpCache {
  bool valid = false;
  Tensor<T> rs, tx, rz, rowmap;
};

template <typename T>
Tensor<T> rectify_diff(const Tensor<T>& rs, const Tensor<T>& tx, const Tensor<T>& rz,
                       const Tensor<T>& rowmap, RectWarpCache<T>* cache) {
  detail::check_motion_pair(rs, tx, rz);
  int r = rs.h;
  if (rowmap.n != rs.n || rowmap.h != r || rowmap.w != r || rowmap.c != 1) {
    throw std::invalid_argument("rectify_diff: row map must be (n,r,r,1)");
  }
  Tensor<T> out(rs.n, r, r, rs.c);
  double c = center_offset(r);
  parallel_for(rs.n, [&](int64_t n0, int64_t n1) {
    double val[4];
    for (int64_t nn = n0; nn < n1; ++nn) {
      for (int i = 0; i < r; ++i) {
        double x_gs = double(i) - c;
        for (int j = 0; j < r; ++j) {
          double y_gs = double(j) - c;
          double a = double(rowmap.at(int(nn), i, j, 0));
          auto tt = detail::curve_tap(tx, int(nn), r, a);
          auto tth = detail::curve_tap(rz, int(nn), r, a);
          double cs = std::cos(tth.value), sn = std::sin(tth.value);
          double x_rs = x_gs * cs - y_gs * sn + tt.value;
          double y_rs = x_gs * sn + y_gs * cs;
          detail::bilinear_tap(rs, int(nn), x_rs + c, y_rs + c, val, nullptr, nullptr);
          for (int k = 0; k < rs.c; ++k) out.at(int(nn), i, j, k) = T(val[k]);
        }
      }
    }
  });
  if (cache) {
    cache->rs = rs;
    cache->tx = tx;
    cache->rz = rz;
    cache->rowmap = rowmap;
    cache->valid = true;
  }
  return out;
}

template <typename T>
void rectify_diff_bwd(const RectWarpCache<T>& cache, const Tensor<T>& gout, Tensor<T>& gtx,
                      Tensor<T>& grz, Tensor<T>& growmap) {
  if (!cache.valid) throw std::logic_error("rectify_diff_bwd: forward cache missing");
  const Tensor<T>& rs = cache.rs;
  int r = rs.h;
  gtx = Tensor<T>(rs.n, 1, 1, r);
  grz = Tensor<T>(rs.n, 1, 1, r);
  growmap = Tensor<T>(rs.n, r, r, 1);
  double c = center_offset(r);
  // curve entries are shared across output pixels, so each sample is reduced
  // serially in scan order; samples are independent
  parallel_for(rs.n, [&](int64_t n0, int64_t n1) {
    double val[4], du[4], dv[4];
    std::vector<double> at(size_t(r), 0.0), ath(size_t(r), 0.0);
    for (int64_t nn = n0; nn < n1; ++nn) {
      std::fill(at.begin(), at.end(), 0.0);
      std::fill(ath.begin(), ath.end(), 0.0);
      for (int i = 0; i < r; ++i) {
        double x_gs = double(i) - c;
        for (int j = 0; j < r; ++j) {
          double y_gs = double(j) - c;
          double a = double(cache.rowmap.at(int(nn), i, j, 0));
          auto tt = detail::curve_tap(cache.tx, int(nn), r, a);
          auto tth = detail::curve_tap(cache.rz, int(nn), r, a);
          double cs = std::cos(tth.value), sn = std::sin(tth.value);
          double x_rs = x_gs * cs - y_gs * sn + tt.value;
          double y_rs = x_gs * sn + y_gs * cs;
          detail::bilinear_tap(rs, int(nn), x_rs + c, y_rs + c, val, du, dv);
          double gsx = 0.0, gsy = 0.0;
          for (int k = 0; k < rs.c; ++k) {
            double go = double(gout.at(int(nn), i, j, k));
            gsx += go * du[k];
            gsy += go * dv[k];
          }
          // d x_rs/d t = 1, d y_rs/d t = 0; d x_rs/d th = -y_rs, d y_rs/d th = x_rs - t
          double g_t = gsx;
          double g_th = gsx * (-y_rs) + gsy * (x_rs - tt.value);
          at[tt.k0] += g_t * tt.w0;
          at[tt.k1] += g_t * tt.w1;
          ath[tth.k0] += g_th * tth.w0;
          ath[tth.k1] += g_th * tth.w1;
          growmap.at(int(nn), i, j, 0) = T(g_t * tt.slope + g_th * tth.slope);
        }
      }
      for (int i = 0; i < r; ++i) {
        gtx.at(int(nn), 0, 0, i) = T(at[i]);
        grz.at(int(nn), 0, 0, i) = T(ath[i]);
      }
    }
  });
}

}  // namespace rsrect
