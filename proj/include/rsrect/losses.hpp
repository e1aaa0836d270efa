#pragma once

// Masked MSE, Sobel edge responses, and the weighted four-term training
// loss. Masks follow the zero-intensity rule: a pixel participates iff the
// channel sum of the *predicted* warped image is nonzero. Masks are treated
// as constants in the backward pass.

#include <cmath>
#include <stdexcept>

#include "rsrect/image.hpp"
#include "rsrect/tensor.hpp"

namespace rsrect {

struct LossWeights {
  double l1 = 1.0;   // rectification MSE
  double l2 = 1.0;   // regeneration MSE
  double l3 = 0.5;   // rectification edge
  double l4 = 0.5;   // regeneration edge
};

struct LossTerms {
  double total = 0.0;
  double rec_mse = 0.0;
  double reg_mse = 0.0;
  double rec_edge = 0.0;
  double reg_edge = 0.0;
};

// single-channel mask per pixel: 0 iff the channel sum is exactly zero
template <typename T>
Tensor<T> tensor_mask(const Tensor<T>& img) {
  Tensor<T> m(img.n, img.h, img.w, 1);
  for (int n = 0; n < img.n; ++n) {
    for (int i = 0; i < img.h; ++i) {
      for (int j = 0; j < img.w; ++j) {
        T s = T(0);
        for (int k = 0; k < img.c; ++k) s += img.at(n, i, j, k);
        m.at(n, i, j, 0) = (s == T(0)) ? T(0) : T(1);
      }
    }
  }
  return m;
}

// || pred - mask (x) target ||^2 / (n h w c); mask is (n,h,w,1), broadcast
// over channels and held constant; optional gradient w.r.t. pred
template <typename T>
double masked_mse(const Tensor<T>& pred, const Tensor<T>& target, const Tensor<T>& mask,
                  Tensor<T>* grad = nullptr) {
  if (pred.n != target.n || pred.h != target.h || pred.w != target.w || pred.c != target.c) {
    throw std::invalid_argument("masked_mse: pred/target shapes differ");
  }
  if (mask.n != pred.n || mask.h != pred.h || mask.w != pred.w || mask.c != 1) {
    throw std::invalid_argument("masked_mse: mask must be (n,h,w,1)");
  }
  const double N = double(pred.v.size());
  if (grad) *grad = Tensor<T>(pred.n, pred.h, pred.w, pred.c);
  double acc = 0.0;
  for (int n = 0; n < pred.n; ++n) {
    for (int i = 0; i < pred.h; ++i) {
      for (int j = 0; j < pred.w; ++j) {
        double m = double(mask.at(n, i, j, 0));
        for (int k = 0; k < pred.c; ++k) {
          double d = double(pred.at(n, i, j, k)) - m * double(target.at(n, i, j, k));
          acc += d * d;
          if (grad) grad->at(n, i, j, k) = T(2.0 * d / N);
        }
      }
    }
  }
  return acc / N;
}

// ---------------------------------------------------------------------------
// Sobel: per-channel horizontal-gradient and vertical-gradient responses
// with zero padding, stacked as [0..C) horizontal, [C..2C) vertical

namespace detail {
// separable weights: smooth (1,2,1) and difference (-1,0,1)
constexpr double kSm[3] = {1.0, 2.0, 1.0};
constexpr double kDf[3] = {-1.0, 0.0, 1.0};
}  // namespace detail

template <typename T>
Tensor<T> sobel_edges_t(const Tensor<T>& img) {
  Tensor<T> out(img.n, img.h, img.w, 2 * img.c);
  for (int n = 0; n < img.n; ++n) {
    for (int i = 0; i < img.h; ++i) {
      for (int j = 0; j < img.w; ++j) {
        for (int k = 0; k < img.c; ++k) {
          double gx = 0.0, gy = 0.0;
          for (int di = -1; di <= 1; ++di) {
            int ii = i + di;
            if (ii < 0 || ii >= img.h) continue;
            for (int dj = -1; dj <= 1; ++dj) {
              int jj = j + dj;
              if (jj < 0 || jj >= img.w) continue;
              double v = double(img.at(n, ii, jj, k));
              gx += detail::kSm[di + 1] * detail::kDf[dj + 1] * v;
              gy += detail::kDf[di + 1] * detail::kSm[dj + 1] * v;
            }
          }
          out.at(n, i, j, k) = T(gx);
          out.at(n, i, j, img.c + k) = T(gy);
        }
      }
    }
  }
  return out;
}

// transpose of sobel_edges_t: maps a gradient on the 2C-channel edge image
// back to a gradient on the C-channel input
template <typename T>
Tensor<T> sobel_edges_bwd_t(const Tensor<T>& gedges) {
  if (gedges.c % 2 != 0) throw std::invalid_argument("sobel_edges_bwd_t: odd channel count");
  int C = gedges.c / 2;
  Tensor<T> gin(gedges.n, gedges.h, gedges.w, C);
  for (int n = 0; n < gedges.n; ++n) {
    for (int i = 0; i < gedges.h; ++i) {
      for (int j = 0; j < gedges.w; ++j) {
        for (int k = 0; k < C; ++k) {
          // input pixel (i,j) contributed to output (i-di, j-dj) with the
          // same stencil weight
          double acc = 0.0;
          for (int di = -1; di <= 1; ++di) {
            int oi = i - di;
            if (oi < 0 || oi >= gedges.h) continue;
            for (int dj = -1; dj <= 1; ++dj) {
              int oj = j - dj;
              if (oj < 0 || oj >= gedges.w) continue;
              acc += detail::kSm[di + 1] * detail::kDf[dj + 1] * double(gedges.at(n, oi, oj, k));
              acc += detail::kDf[di + 1] * detail::kSm[dj + 1] * double(gedges.at(n, oi, oj, C + k));
            }
          }
          gin.at(n, i, j, k) = T(acc);
        }
      }
    }
  }
  return gin;
}

// ---------------------------------------------------------------------------
// four-term total: lambda1 * rect MSE + lambda2 * regen MSE
//                + lambda3 * rect edge MSE + lambda4 * regen edge MSE

template <typename T>
LossTerms total_loss(const Tensor<T>& rs, const Tensor<T>& gs, const Tensor<T>& rect,
                     const Tensor<T>& regen, const LossWeights& w, Tensor<T>* grect = nullptr,
                     Tensor<T>* gregen = nullptr) {
  LossTerms lt;
  Tensor<T> m_rec = tensor_mask(rect);
  Tensor<T> m_reg = tensor_mask(regen);

  Tensor<T> g1, g2, g3e, g4e;
  lt.rec_mse = masked_mse(rect, gs, m_rec, grect ? &g1 : nullptr);
  lt.reg_mse = masked_mse(regen, rs, m_reg, gregen ? &g2 : nullptr);

  Tensor<T> e_rect = sobel_edges_t(rect);
  Tensor<T> e_gs = sobel_edges_t(gs);
  Tensor<T> e_regen = sobel_edges_t(regen);
  Tensor<T> e_rs = sobel_edges_t(rs);
  lt.rec_edge = masked_mse(e_rect, e_gs, m_rec, grect ? &g3e : nullptr);
  lt.reg_edge = masked_mse(e_regen, e_rs, m_reg, gregen ? &g4e : nullptr);

  lt.total = w.l1 * lt.rec_mse + w.l2 * lt.reg_mse + w.l3 * lt.rec_edge + w.l4 * lt.reg_edge;

  if (grect) {
    Tensor<T> g3 = sobel_edges_bwd_t(g3e);
    *grect = Tensor<T>(rect.n, rect.h, rect.w, rect.c);
    for (size_t idx = 0; idx < grect->v.size(); ++idx) {
      grect->v[idx] = T(w.l1 * double(g1.v[idx]) + w.l3 * double(g3.v[idx]));
    }
  }
  if (gregen) {
    Tensor<T> g4 = sobel_edges_bwd_t(g4e);
    *gregen = Tensor<T>(regen.n, regen.h, regen.w, regen.c);
    for (size_t idx = 0; idx < gregen->v.size(); ++idx) {
      gregen->v[idx] = T(w.l2 * double(g2.v[idx]) + w.l4 * double(g4.v[idx]));
    }
  }
  return lt;
}

// ---------------------------------------------------------------------------
// Image-facing wrappers

inline double masked_mse(const Image& pred, const Image& target, const VisibilityMask& mask,
                         Image* grad = nullptr) {
  pred.validate();
  target.validate();
  if (pred.height != mask.height || pred.width != mask.width) {
    throw std::invalid_argument("masked_mse: mask size mismatch");
  }
  Tensor<float> tp = image_to_tensor<float>(pred);
  Tensor<float> tt = image_to_tensor<float>(target);
  Tensor<float> tm(1, pred.height, pred.width, 1);
  for (int i = 0; i < pred.height; ++i) {
    for (int j = 0; j < pred.width; ++j) tm.at(0, i, j, 0) = float(mask.at(i, j));
  }
  Tensor<float> tg;
  double v = masked_mse(tp, tt, tm, grad ? &tg : nullptr);
  if (grad) {
    *grad = Image(pred.height, pred.width, pred.channels);
    grad->data = tg.v;
  }
  return v;
}

}  // namespace rsrect
