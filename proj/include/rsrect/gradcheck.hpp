#pragma once

// Central-finite-difference verification of every differentiable operation,
// instantiable at float or double. Each check perturbs a parameter group
// along random directions (plus per-coordinate probes at double precision),
// realizes the perturbed values in T, and compares the loss delta against
// the analytic inner product with the realized step, which removes step
// quantization from the error budget. Pixels feeding warp losses are chosen
// off the bilinear lattice so the perturbation never crosses a kink.

#include <cmath>
#include <functional>
#include <string>
#include <vector>

#include "rsrect/layers.hpp"
#include "rsrect/losses.hpp"
#include "rsrect/model.hpp"
#include "rsrect/motion.hpp"
#include "rsrect/tensor.hpp"
#include "rsrect/warp_diff.hpp"

namespace rsrect {

struct GradCheckResult {
  std::string name;
  double max_rel_err = 0.0;
  double tol = 0.0;
  bool pass = false;
};

// tolerances and step sizes per precision
template <typename T>
struct FdPolicy;

template <>
struct FdPolicy<float> {
  static constexpr double h = 1e-2;
  static constexpr double tol = 1e-3;
  static constexpr double tau = 0.05;    // small-signal floor as a fraction of scale
  static constexpr double floor_abs = 1e-4;
  static constexpr int coord_probes = 0;  // directional only at float
  static constexpr const char* label = "f32";
};

template <>
struct FdPolicy<double> {
  static constexpr double h = 4e-5;
  static constexpr double tol = 1e-6;
  static constexpr double tau = 1e-3;
  static constexpr double floor_abs = 1e-8;
  static constexpr int coord_probes = 20;
  static constexpr const char* label = "f64";
};

namespace detail {

// max rel err of directional + per-coordinate central differences for one
// parameter group; loss() re-evaluates the scalar after in-place edits of p
template <typename T>
double fd_group_err(std::vector<T>& p, const std::vector<double>& g,
                    const std::function<double()>& loss, Rng& rng) {
  using P = FdPolicy<T>;
  const size_t n = p.size();
  std::vector<T> p0 = p;
  double worst = 0.0;

  auto rel = [](double fd, double an, double scale) {
    double denom = std::max({std::abs(fd), std::abs(an), P::tau * scale, P::floor_abs});
    return std::abs(fd - an) / denom;
  };

  for (int dir = 0; dir < 3; ++dir) {
    std::vector<T> pp(n), pm(n);
    for (size_t i = 0; i < n; ++i) {
      double d = rng.uniform(-1.0, 1.0);
      pp[i] = T(double(p0[i]) + P::h * d);
      pm[i] = T(double(p0[i]) - P::h * d);
    }
    p = pp;
    double fplus = loss();
    p = pm;
    double fminus = loss();
    p = p0;
    double an = 0.0, scale = 0.0;
    for (size_t i = 0; i < n; ++i) {
      double step = double(pp[i]) - double(pm[i]);
      an += g[i] * step;
      scale += std::abs(g[i] * step);
    }
    worst = std::max(worst, rel(fplus - fminus, an, scale));
  }

  if (P::coord_probes > 0 && n > 0) {
    double gmax = 0.0;
    for (double v : g) gmax = std::max(gmax, std::abs(v));
    int probes = int(std::min<size_t>(P::coord_probes, n));
    for (int c = 0; c < probes; ++c) {
      size_t i = size_t(rng.uniform(0.0, 1.0) * double(n));
      if (i >= n) i = n - 1;
      T vp = T(double(p0[i]) + P::h);
      T vm = T(double(p0[i]) - P::h);
      double step = double(vp) - double(vm);
      if (step == 0.0) continue;
      p[i] = vp;
      double fplus = loss();
      p[i] = vm;
      double fminus = loss();
      p[i] = p0[i];
      double fd = (fplus - fminus) / step;
      worst = std::max(worst, rel(fd, g[i], gmax));
    }
  }
  return worst;
}

template <typename T>
std::vector<double> to_doubles(const std::vector<T>& v) {
  return std::vector<double>(v.begin(), v.end());
}

// smooth low-order random curve over rows, kept well inside the sampling
// safety band used by the pixel selector
inline std::vector<double> smooth_curve(int r, double amp, Rng& rng) {
  double c0 = rng.uniform(-amp, amp);
  double c1 = rng.uniform(-amp, amp);
  double c2 = rng.uniform(-amp, amp);
  std::vector<double> out(static_cast<size_t>(r));
  for (int i = 0; i < r; ++i) {
    double s = r > 1 ? double(i) / double(r - 1) : 0.0;
    out[size_t(i)] = c0 + c1 * s + c2 * s * s;
  }
  return out;
}

inline bool in_band(double x, double margin) {
  double f = x - std::floor(x);
  return f >= margin && f <= 1.0 - margin;
}

}  // namespace detail

// ---------------------------------------------------------------------------
// individual checks; each returns max rel err over its parameter groups

template <typename T>
void gc_record(std::vector<GradCheckResult>& out, const std::string& name, double err) {
  GradCheckResult r;
  r.name = std::string(FdPolicy<T>::label) + "." + name;
  r.max_rel_err = err;
  r.tol = FdPolicy<T>::tol;
  r.pass = err < r.tol;
  out.push_back(r);
}

template <typename T>
void gradcheck_conv(std::vector<GradCheckResult>& out, uint64_t seed) {
  Rng rng(mix_seed(seed, 1));
  ConvLayer<T> layer(3, 4, 2);
  layer.init_he(rng);
  Tensor<T> in(2, 6, 6, 3);
  for (auto& v : in.v) v = T(rng.uniform(-1.0, 1.0));
  Tensor<T> w;  // fixed upstream weights
  {
    Tensor<T> probe = conv2d_fwd(layer, in);
    w = Tensor<T>(probe.n, probe.h, probe.w, probe.c);
    for (auto& v : w.v) v = T(rng.uniform(-1.0, 1.0));
  }
  const double N = double(w.v.size());
  auto loss = [&]() {
    Tensor<T> o = conv2d_fwd(layer, in);
    double s = 0.0;
    for (size_t i = 0; i < o.v.size(); ++i) s += double(w.v[i]) * double(o.v[i]);
    return s / N;
  };
  Tensor<T> gout = w;
  for (auto& v : gout.v) v = T(double(v) / N);
  Tensor<T> gin;
  ConvGrads<T> grads;
  conv2d_bwd(layer, in, gout, gin, grads);
  gc_record<T>(out, "conv.kernel",
               detail::fd_group_err(layer.kernel, detail::to_doubles(grads.kernel), loss, rng));
  gc_record<T>(out, "conv.bias",
               detail::fd_group_err(layer.bias, detail::to_doubles(grads.bias), loss, rng));
  gc_record<T>(out, "conv.input",
               detail::fd_group_err(in.v, detail::to_doubles(gin.v), loss, rng));
}

template <typename T>
void gradcheck_batchnorm(std::vector<GradCheckResult>& out, uint64_t seed) {
  Rng rng(mix_seed(seed, 2));
  BatchNorm<T> bn(5);
  for (auto& v : bn.gamma) v = T(rng.uniform(0.5, 1.5));
  for (auto& v : bn.beta) v = T(rng.uniform(-0.3, 0.3));
  Tensor<T> in(3, 4, 4, 5);
  for (auto& v : in.v) v = T(rng.uniform(0.2, 1.8));
  Tensor<T> w(3, 4, 4, 5);
  for (auto& v : w.v) v = T(rng.uniform(-1.0, 1.0));
  const double N = double(w.v.size());
  auto loss = [&]() {
    BatchNorm<T> bn_copy = bn;  // keep running stats unchanged across evals
    Tensor<T> o = batchnorm_fwd(bn_copy, in, true, (BnCache<T>*)nullptr);
    double s = 0.0;
    for (size_t i = 0; i < o.v.size(); ++i) s += double(w.v[i]) * double(o.v[i]);
    return s / N;
  };
  BatchNorm<T> bn_fwd = bn;
  BnCache<T> cache;
  batchnorm_fwd(bn_fwd, in, true, &cache);
  Tensor<T> gout = w;
  for (auto& v : gout.v) v = T(double(v) / N);
  Tensor<T> gin;
  BnGrads<T> grads;
  batchnorm_bwd(bn, cache, gout, gin, grads);
  gc_record<T>(out, "batchnorm.gamma",
               detail::fd_group_err(bn.gamma, detail::to_doubles(grads.gamma), loss, rng));
  gc_record<T>(out, "batchnorm.beta",
               detail::fd_group_err(bn.beta, detail::to_doubles(grads.beta), loss, rng));
  gc_record<T>(out, "batchnorm.input",
               detail::fd_group_err(in.v, detail::to_doubles(gin.v), loss, rng));
}

template <typename T>
void gradcheck_fc(std::vector<GradCheckResult>& out, uint64_t seed) {
  Rng rng(mix_seed(seed, 3));
  FCLayer<T> fc(2 * 3 * 4, 7);
  fc.init_he(rng);
  Tensor<T> in(2, 2, 3, 4);
  for (auto& v : in.v) v = T(rng.uniform(-1.0, 1.0));
  Tensor<T> w(2, 1, 1, 7);
  for (auto& v : w.v) v = T(rng.uniform(-1.0, 1.0));
  const double N = double(w.v.size());
  auto loss = [&]() {
    Tensor<T> o = fc_fwd(fc, in);
    double s = 0.0;
    for (size_t i = 0; i < o.v.size(); ++i) s += double(w.v[i]) * double(o.v[i]);
    return s / N;
  };
  Tensor<T> gout = w;
  for (auto& v : gout.v) v = T(double(v) / N);
  Tensor<T> gin;
  FCGrads<T> grads;
  fc_bwd(fc, in, gout, gin, grads);
  gc_record<T>(out, "fc.weight",
               detail::fd_group_err(fc.weight, detail::to_doubles(grads.weight), loss, rng));
  gc_record<T>(out, "fc.bias",
               detail::fd_group_err(fc.bias, detail::to_doubles(grads.bias), loss, rng));
  gc_record<T>(out, "fc.input", detail::fd_group_err(in.v, detail::to_doubles(gin.v), loss, rng));
}

template <typename T>
void gradcheck_relu(std::vector<GradCheckResult>& out, uint64_t seed) {
  Rng rng(mix_seed(seed, 4));
  Tensor<T> in(2, 5, 5, 3);
  for (auto& v : in.v) {
    double x = rng.uniform(0.05, 1.0);
    v = T(rng.uniform(-1.0, 1.0) < 0.0 ? -x : x);  // bounded away from the kink
  }
  Tensor<T> w(2, 5, 5, 3);
  for (auto& v : w.v) v = T(rng.uniform(-1.0, 1.0));
  const double N = double(w.v.size());
  auto loss = [&]() {
    Tensor<T> o = relu_fwd(in);
    double s = 0.0;
    for (size_t i = 0; i < o.v.size(); ++i) s += double(w.v[i]) * double(o.v[i]);
    return s / N;
  };
  Tensor<T> gout = w;
  for (auto& v : gout.v) v = T(double(v) / N);
  Tensor<T> gin = relu_bwd(in, gout);
  gc_record<T>(out, "relu.input",
               detail::fd_group_err(in.v, detail::to_doubles(gin.v), loss, rng));
}

// regeneration warp: gradients w.r.t. t_x and r_z
template <typename T>
void gradcheck_regen_warp(std::vector<GradCheckResult>& out, uint64_t seed) {
  Rng rng(mix_seed(seed, 5));
  const int r = 16;
  Tensor<T> gs(1, r, r, 3);
  for (auto& v : gs.v) v = T(rng.uniform(0.1, 1.0));
  Tensor<T> tx(1, 1, 1, r), rz(1, 1, 1, r);
  Tensor<T> w(1, r, r, 3);
  double c = center_offset(r);
  // upstream weights only on pixels whose sample point sits safely off the
  // bilinear lattice and strictly inside the image under any in-budget
  // perturbation; redraw the curves until enough pixels qualify
  for (uint64_t attempt = 0;; ++attempt) {
    Rng arng(mix_seed(seed, 5, attempt + 1));
    // a sizeable rotation keeps the sample points spread off the lattice in
    // both axes (with r_z near 0 every in-row coordinate stays integer and
    // the off-lattice selector finds nothing)
    auto ct = detail::smooth_curve(r, 1.2, arng);
    auto cz = detail::smooth_curve(r, 0.15, arng);
    for (int i = 0; i < r; ++i) {
      tx.at(0, 0, 0, i) = T(ct[size_t(i)] + 0.37);
      rz.at(0, 0, 0, i) = T(cz[size_t(i)] + 0.25);
    }
    int live = 0;
    for (int i = 0; i < r; ++i) {
      double t = double(tx.at(0, 0, 0, i)), th = double(rz.at(0, 0, 0, i));
      double cs = std::cos(th), sn = std::sin(th);
      for (int j = 0; j < r; ++j) {
        double dx = double(i) - c - t, y_rs = double(j) - c;
        double u = dx * cs + y_rs * sn + c;
        double v = -dx * sn + y_rs * cs + c;
        bool ok = detail::in_band(u, 0.25) && detail::in_band(v, 0.25) && u > 1.0 &&
                  u < double(r - 2) && v > 1.0 && v < double(r - 2);
        for (int k = 0; k < 3; ++k) w.at(0, i, j, k) = ok ? T(arng.uniform(-1.0, 1.0)) : T(0);
        if (ok) ++live;
      }
    }
    if (live >= 16) break;
    if (attempt == 31) throw std::logic_error("gradcheck_regen_warp: too few admissible pixels");
  }
  const double N = double(w.v.size());
  auto loss = [&]() {
    Tensor<T> o = warp_gs_to_rs_diff(gs, tx, rz, (RegenWarpCache<T>*)nullptr);
    double s = 0.0;
    for (size_t i = 0; i < o.v.size(); ++i) s += double(w.v[i]) * double(o.v[i]);
    return s / N;
  };
  RegenWarpCache<T> cache;
  warp_gs_to_rs_diff(gs, tx, rz, &cache);
  Tensor<T> gout = w;
  for (auto& v : gout.v) v = T(double(v) / N);
  Tensor<T> gtx, grz;
  warp_gs_to_rs_bwd(cache, gout, gtx, grz);
  gc_record<T>(out, "regen_warp.t_x",
               detail::fd_group_err(tx.v, detail::to_doubles(gtx.v), loss, rng));
  gc_record<T>(out, "regen_warp.r_z",
               detail::fd_group_err(rz.v, detail::to_doubles(grz.v), loss, rng));
}

// rectification warp: gradients w.r.t. t_x, r_z, and the row map
template <typename T>
void gradcheck_rect_warp(std::vector<GradCheckResult>& out, uint64_t seed) {
  Rng rng(mix_seed(seed, 6));
  const int r = 16;
  Tensor<T> rs(1, r, r, 3);
  for (auto& v : rs.v) v = T(rng.uniform(0.1, 1.0));
  Tensor<T> tx(1, 1, 1, r), rz(1, 1, 1, r);
  Tensor<T> rowmap(1, r, r, 1);
  Tensor<T> w(1, r, r, 3);
  double c = center_offset(r);
  for (uint64_t attempt = 0;; ++attempt) {
    Rng arng(mix_seed(seed, 6, attempt + 1));
    auto ct = detail::smooth_curve(r, 1.2, arng);
    auto cz = detail::smooth_curve(r, 0.15, arng);
    for (int i = 0; i < r; ++i) {
      tx.at(0, 0, 0, i) = T(ct[size_t(i)] + 0.37);
      rz.at(0, 0, 0, i) = T(cz[size_t(i)] + 0.25);
    }
    for (int i = 0; i < r; ++i) {
      for (int j = 0; j < r; ++j) {
        // fractional rows near the identity, clear of the endpoint clamps
        double a = std::min(std::max(double(i) + arng.uniform(-0.45, 0.45), 1.3), double(r) - 2.3);
        rowmap.at(0, i, j, 0) = T(a);
      }
    }
    int live = 0;
    for (int i = 0; i < r; ++i) {
      for (int j = 0; j < r; ++j) {
        double a = double(rowmap.at(0, i, j, 0));
        auto tt = detail::curve_tap(tx, 0, r, a);
        auto tth = detail::curve_tap(rz, 0, r, a);
        double cs = std::cos(tth.value), sn = std::sin(tth.value);
        double x_gs = double(i) - c, y_gs = double(j) - c;
        double u = x_gs * cs - y_gs * sn + tt.value + c;
        double v = x_gs * sn + y_gs * cs + c;
        bool ok = detail::in_band(a, 0.25) && detail::in_band(u, 0.25) && detail::in_band(v, 0.25) &&
                  u > 1.0 && u < double(r - 2) && v > 1.0 && v < double(r - 2);
        for (int k = 0; k < 3; ++k) w.at(0, i, j, k) = ok ? T(arng.uniform(-1.0, 1.0)) : T(0);
        if (ok) ++live;
      }
    }
    if (live >= 16) break;
    if (attempt == 31) throw std::logic_error("gradcheck_rect_warp: too few admissible pixels");
  }
  const double N = double(w.v.size());
  auto loss = [&]() {
    Tensor<T> o = rectify_diff(rs, tx, rz, rowmap, (RectWarpCache<T>*)nullptr);
    double s = 0.0;
    for (size_t i = 0; i < o.v.size(); ++i) s += double(w.v[i]) * double(o.v[i]);
    return s / N;
  };
  RectWarpCache<T> cache;
  rectify_diff(rs, tx, rz, rowmap, &cache);
  Tensor<T> gout = w;
  for (auto& v : gout.v) v = T(double(v) / N);
  Tensor<T> gtx, grz, growmap;
  rectify_diff_bwd(cache, gout, gtx, grz, growmap);
  gc_record<T>(out, "rect_warp.t_x",
               detail::fd_group_err(tx.v, detail::to_doubles(gtx.v), loss, rng));
  gc_record<T>(out, "rect_warp.r_z",
               detail::fd_group_err(rz.v, detail::to_doubles(grz.v), loss, rng));
  gc_record<T>(out, "rect_warp.rowmap",
               detail::fd_group_err(rowmap.v, detail::to_doubles(growmap.v), loss, rng));
}

// the four loss terms, each isolated through its weight
template <typename T>
void gradcheck_losses(std::vector<GradCheckResult>& out, uint64_t seed) {
  Rng rng(mix_seed(seed, 7));
  const int r = 8;
  Tensor<T> rs(1, r, r, 3), gs(1, r, r, 3), rect(1, r, r, 3), regen(1, r, r, 3);
  // strictly positive so the masks stay full under perturbation
  for (auto* t : {&rs, &gs, &rect, &regen}) {
    for (auto& v : t->v) v = T(rng.uniform(0.1, 1.0));
  }
  const char* names[4] = {"loss.rec_mse", "loss.reg_mse", "loss.rec_edge", "loss.reg_edge"};
  for (int term = 0; term < 4; ++term) {
    LossWeights w{};
    w.l1 = term == 0 ? 1.0 : 0.0;
    w.l2 = term == 1 ? 1.0 : 0.0;
    w.l3 = term == 2 ? 1.0 : 0.0;
    w.l4 = term == 3 ? 1.0 : 0.0;
    auto loss = [&]() { return total_loss(rs, gs, rect, regen, w, (Tensor<T>*)nullptr, (Tensor<T>*)nullptr).total; };
    Tensor<T> grect, gregen;
    total_loss(rs, gs, rect, regen, w, &grect, &gregen);
    bool rect_branch = (term == 0 || term == 2);
    std::vector<T>& param = rect_branch ? rect.v : regen.v;
    Tensor<T>& g = rect_branch ? grect : gregen;
    gc_record<T>(out, names[term], detail::fd_group_err(param, detail::to_doubles(g.v), loss, rng));
  }
}

// trajectory projection: least-squares fit then evaluation is linear in the
// curve, so the backward map is the transposed projection matrix
template <typename T>
void gradcheck_projection(std::vector<GradCheckResult>& out, uint64_t seed) {
  Rng rng(mix_seed(seed, 8));
  const int r = 12, degree = 3;
  std::vector<double> P = trajectory_projection_matrix(r, degree);
  std::vector<T> curve(static_cast<size_t>(r));
  for (auto& v : curve) v = T(rng.uniform(-2.0, 2.0));
  std::vector<double> w(static_cast<size_t>(r));
  for (auto& v : w) v = rng.uniform(-1.0, 1.0);
  auto loss = [&]() {
    MotionCurve mc(r);
    for (int i = 0; i < r; ++i) mc.t_x[size_t(i)] = double(curve[size_t(i)]);
    MotionCurve sm = eval_trajectory(fit_trajectory(mc, degree), r);
    double s = 0.0;
    for (int i = 0; i < r; ++i) s += w[size_t(i)] * sm.t_x[size_t(i)];
    return s / double(r);
  };
  std::vector<double> g(size_t(r), 0.0);
  for (int i = 0; i < r; ++i) {
    for (int k = 0; k < r; ++k) {
      g[size_t(i)] += P[size_t(k) * r + i] * w[size_t(k)] / double(r);
    }
  }
  gc_record<T>(out, "projection.curve", detail::fd_group_err(curve, g, loss, rng));
}

template <typename T>
std::vector<GradCheckResult> run_gradcheck_suite(uint64_t seed) {
  std::vector<GradCheckResult> out;
  gradcheck_conv<T>(out, seed);
  gradcheck_batchnorm<T>(out, seed);
  gradcheck_fc<T>(out, seed);
  gradcheck_relu<T>(out, seed);
  gradcheck_regen_warp<T>(out, seed);
  gradcheck_rect_warp<T>(out, seed);
  gradcheck_losses<T>(out, seed);
  gradcheck_projection<T>(out, seed);
  return out;
}

}  // namespace rsrect
