#pragma once

// Layer kit: 3x3 convolution (pad 1, configurable stride), batch
// normalization, fully connected, ReLU. Forward plus reverse-mode
// backward for each; all loops are laid out so the innermost axis is
// the contiguous channel/output axis.
//
// Parameter-gradient accumulation runs per batch sample into private
// buffers that are summed in sample order, so results do not depend on
// the thread count.

#include <cmath>
#include <stdexcept>
#include <string>
#include <vector>

#include "rsrect/common.hpp"
#include "rsrect/tensor.hpp"

namespace rsrect {

// ---------------------------------------------------------------------------
// convolution

template <typename T>
struct ConvLayer {
  int in_c = 0, out_c = 0, stride = 1;
  std::vector<T> kernel;  // [ky][kx][ci][co], 3x3
  std::vector<T> bias;    // [co]

  ConvLayer() = default;
  ConvLayer(int ic, int oc, int s) : in_c(ic), out_c(oc), stride(s) {
    kernel.assign(size_t(9) * ic * oc, T(0));
    bias.assign(size_t(oc), T(0));
  }

  void init_he(Rng& rng) {
    double limit = std::sqrt(6.0 / (9.0 * in_c));
    for (T& k : kernel) k = T(rng.uniform(-limit, limit));
    for (T& b : bias) b = T(0);
  }

  static int out_size(int in, int stride) { return (in - 1) / stride + 1; }
};

template <typename T>
struct ConvGrads {
  std::vector<T> kernel, bias;
};

template <typename T>
Tensor<T> conv2d_fwd(const ConvLayer<T>& L, const Tensor<T>& in) {
  if (in.c != L.in_c) throw std::invalid_argument("conv2d_fwd: channel mismatch");
  const int oh = ConvLayer<T>::out_size(in.h, L.stride);
  const int ow = ConvLayer<T>::out_size(in.w, L.stride);
  const int ic = L.in_c, oc = L.out_c, s = L.stride;
  Tensor<T> out(in.n, oh, ow, oc);
  parallel_for(int64_t(in.n) * oh, [&](int64_t b, int64_t e) {
    for (int64_t idx = b; idx < e; ++idx) {
      const int nn = int(idx / oh);
      const int oy = int(idx % oh);
      for (int ox = 0; ox < ow; ++ox) {
        T* acc = out.ptr(nn, oy, ox);
        for (int co = 0; co < oc; ++co) acc[co] = L.bias[co];
        for (int ky = 0; ky < 3; ++ky) {
          const int iy = oy * s + ky - 1;
          if (iy < 0 || iy >= in.h) continue;
          for (int kx = 0; kx < 3; ++kx) {
            const int ix = ox * s + kx - 1;
            if (ix < 0 || ix >= in.w) continue;
            const T* ip = in.ptr(nn, iy, ix);
            const T* kp = &L.kernel[size_t(ky * 3 + kx) * ic * oc];
            for (int ci = 0; ci < ic; ++ci) {
              const T a = ip[ci];
              const T* kr = kp + size_t(ci) * oc;
              for (int co = 0; co < oc; ++co) acc[co] += a * kr[co];
            }
          }
        }
      }
    }
  });
  return out;
}

// Backward. gin has the input's shape; gk/gb accumulate (caller zeroes).
template <typename T>
void conv2d_bwd(const ConvLayer<T>& L, const Tensor<T>& in, const Tensor<T>& gout,
                Tensor<T>& gin, ConvGrads<T>& g) {
  const int oh = gout.h, ow = gout.w, ic = L.in_c, oc = L.out_c, s = L.stride;
  gin = Tensor<T>(in.n, in.h, in.w, in.c);
  if (g.kernel.size() != L.kernel.size()) g.kernel.assign(L.kernel.size(), T(0));
  if (g.bias.size() != L.bias.size()) g.bias.assign(L.bias.size(), T(0));

  // kernel transposed to [ky][kx][co][ci] so the input-gradient scatter
  // has a contiguous inner loop
  std::vector<T> kt(L.kernel.size());
  for (int kk = 0; kk < 9; ++kk) {
    const T* src = &L.kernel[size_t(kk) * ic * oc];
    T* dst = &kt[size_t(kk) * ic * oc];
    for (int ci = 0; ci < ic; ++ci) {
      for (int co = 0; co < oc; ++co) dst[size_t(co) * ic + ci] = src[size_t(ci) * oc + co];
    }
  }

  std::vector<ConvGrads<T>> partial(in.n);
  parallel_for(in.n, [&](int64_t nb, int64_t ne) {
    for (int64_t nn = nb; nn < ne; ++nn) {
      ConvGrads<T>& pg = partial[nn];
      pg.kernel.assign(L.kernel.size(), T(0));
      pg.bias.assign(L.bias.size(), T(0));
      for (int oy = 0; oy < oh; ++oy) {
        for (int ox = 0; ox < ow; ++ox) {
          const T* go = gout.ptr(int(nn), oy, ox);
          for (int co = 0; co < oc; ++co) pg.bias[co] += go[co];
          for (int ky = 0; ky < 3; ++ky) {
            const int iy = oy * s + ky - 1;
            if (iy < 0 || iy >= in.h) continue;
            for (int kx = 0; kx < 3; ++kx) {
              const int ix = ox * s + kx - 1;
              if (ix < 0 || ix >= in.w) continue;
              const T* ip = in.ptr(int(nn), iy, ix);
              T* gi = gin.ptr(int(nn), iy, ix);
              T* gk = &pg.kernel[size_t(ky * 3 + kx) * ic * oc];
              const T* ktp = &kt[size_t(ky * 3 + kx) * ic * oc];
              for (int co = 0; co < oc; ++co) {
                const T a = go[co];
                const T* kr = ktp + size_t(co) * ic;
                for (int ci = 0; ci < ic; ++ci) gi[ci] += a * kr[ci];
              }
              for (int ci = 0; ci < ic; ++ci) {
                const T a = ip[ci];
                T* gr = gk + size_t(ci) * oc;
                for (int co = 0; co < oc; ++co) gr[co] += a * go[co];
              }
            }
          }
        }
      }
    }
  });
  for (int nn = 0; nn < in.n; ++nn) {  // fixed reduction order
    for (size_t i = 0; i < g.kernel.size(); ++i) g.kernel[i] += partial[nn].kernel[i];
    for (size_t i = 0; i < g.bias.size(); ++i) g.bias[i] += partial[nn].bias[i];
  }
}

// ---------------------------------------------------------------------------
// batch normalization (stats over n*h*w per channel)

template <typename T>
struct BatchNorm {
  std::vector<T> gamma, beta;
  std::vector<T> run_mean, run_var;
  T eps = T(1e-5);
  T momentum = T(0.9);

  BatchNorm() = default;
  explicit BatchNorm(int channels)
      : gamma(channels, T(1)), beta(channels, T(0)),
        run_mean(channels, T(0)), run_var(channels, T(1)) {}

  int channels() const { return int(gamma.size()); }
};

template <typename T>
struct BnCache {
  Tensor<T> xhat;
  std::vector<T> invstd;
};

template <typename T>
struct BnGrads {
  std::vector<T> gamma, beta;
};

template <typename T>
Tensor<T> batchnorm_fwd(BatchNorm<T>& bn, const Tensor<T>& in, bool training,
                        BnCache<T>* cache) {
  const int C = bn.channels();
  if (in.c != C) throw std::invalid_argument("batchnorm_fwd: channel mismatch");
  const int64_t rows = int64_t(in.n) * in.h * in.w;
  Tensor<T> out(in.n, in.h, in.w, in.c);
  std::vector<T> mean(C, T(0)), var(C, T(0)), invstd(C, T(0));
  if (training) {
    for (int64_t r = 0; r < rows; ++r) {
      const T* p = &in.v[size_t(r) * C];
      for (int k = 0; k < C; ++k) mean[k] += p[k];
    }
    for (int k = 0; k < C; ++k) mean[k] /= T(rows);
    for (int64_t r = 0; r < rows; ++r) {
      const T* p = &in.v[size_t(r) * C];
      for (int k = 0; k < C; ++k) {
        T d = p[k] - mean[k];
        var[k] += d * d;
      }
    }
    for (int k = 0; k < C; ++k) var[k] /= T(rows);
    for (int k = 0; k < C; ++k) {
      bn.run_mean[k] = bn.momentum * bn.run_mean[k] + (T(1) - bn.momentum) * mean[k];
      bn.run_var[k] = bn.momentum * bn.run_var[k] + (T(1) - bn.momentum) * var[k];
    }
  } else {
    mean = bn.run_mean;
    var = bn.run_var;
  }
  for (int k = 0; k < C; ++k) invstd[k] = T(1) / std::sqrt(var[k] + bn.eps);
  if (cache) {
    cache->xhat = Tensor<T>(in.n, in.h, in.w, in.c);
    cache->invstd = invstd;
  }
  parallel_for(rows, [&](int64_t b, int64_t e) {
    for (int64_t r = b; r < e; ++r) {
      const T* p = &in.v[size_t(r) * C];
      T* q = &out.v[size_t(r) * C];
      T* xh = cache ? &cache->xhat.v[size_t(r) * C] : nullptr;
      for (int k = 0; k < C; ++k) {
        T xhat = (p[k] - mean[k]) * invstd[k];
        if (xh) xh[k] = xhat;
        q[k] = bn.gamma[k] * xhat + bn.beta[k];
      }
    }
  });
  return out;
}

// Training-mode backward through the batch statistics.
template <typename T>
void batchnorm_bwd(const BatchNorm<T>& bn, const BnCache<T>& cache, const Tensor<T>& gout,
                   Tensor<T>& gin, BnGrads<T>& g) {
  const int C = bn.channels();
  const int64_t rows = int64_t(gout.n) * gout.h * gout.w;
  if (cache.xhat.size() != gout.size()) throw std::invalid_argument("batchnorm_bwd: missing cache");
  gin = Tensor<T>(gout.n, gout.h, gout.w, gout.c);
  if (g.gamma.size() != size_t(C)) g.gamma.assign(C, T(0));
  if (g.beta.size() != size_t(C)) g.beta.assign(C, T(0));
  std::vector<T> sum_g(C, T(0)), sum_gx(C, T(0));
  for (int64_t r = 0; r < rows; ++r) {
    const T* go = &gout.v[size_t(r) * C];
    const T* xh = &cache.xhat.v[size_t(r) * C];
    for (int k = 0; k < C; ++k) {
      sum_g[k] += go[k];
      sum_gx[k] += go[k] * xh[k];
    }
  }
  for (int k = 0; k < C; ++k) {
    g.beta[k] += sum_g[k];
    g.gamma[k] += sum_gx[k];
  }
  const T invrows = T(1) / T(rows);
  parallel_for(rows, [&](int64_t b, int64_t e) {
    for (int64_t r = b; r < e; ++r) {
      const T* go = &gout.v[size_t(r) * C];
      const T* xh = &cache.xhat.v[size_t(r) * C];
      T* gi = &gin.v[size_t(r) * C];
      for (int k = 0; k < C; ++k) {
        gi[k] = bn.gamma[k] * cache.invstd[k] *
                (go[k] - invrows * sum_g[k] - xh[k] * invrows * sum_gx[k]);
      }
    }
  });
}

// ---------------------------------------------------------------------------
// fully connected

template <typename T>
struct FCLayer {
  int in_n = 0, out_n = 0;
  std::vector<T> weight;  // [in][out]
  std::vector<T> bias;

  FCLayer() = default;
  FCLayer(int in, int out) : in_n(in), out_n(out) {
    weight.assign(size_t(in) * out, T(0));
    bias.assign(size_t(out), T(0));
  }

  void init_he(Rng& rng) {
    double limit = std::sqrt(6.0 / double(in_n));
    for (T& w : weight) w = T(rng.uniform(-limit, limit));
    for (T& b : bias) b = T(0);
  }
};

template <typename T>
struct FCGrads {
  std::vector<T> weight, bias;
};

// Input is flattened to (n, h*w*c).
template <typename T>
Tensor<T> fc_fwd(const FCLayer<T>& L, const Tensor<T>& in) {
  const int64_t feat = int64_t(in.h) * in.w * in.c;
  if (feat != L.in_n) throw std::invalid_argument("fc_fwd: feature size mismatch");
  Tensor<T> out(in.n, 1, 1, L.out_n);
  for (int nn = 0; nn < in.n; ++nn) {
    const T* x = &in.v[size_t(nn) * feat];
    T* y = out.ptr(nn, 0, 0);
    for (int o = 0; o < L.out_n; ++o) y[o] = L.bias[o];
    for (int i = 0; i < L.in_n; ++i) {
      const T a = x[i];
      const T* wr = &L.weight[size_t(i) * L.out_n];
      for (int o = 0; o < L.out_n; ++o) y[o] += a * wr[o];
    }
  }
  return out;
}

template <typename T>
void fc_bwd(const FCLayer<T>& L, const Tensor<T>& in, const Tensor<T>& gout, Tensor<T>& gin,
            FCGrads<T>& g) {
  const int64_t feat = int64_t(in.h) * in.w * in.c;
  gin = Tensor<T>(in.n, in.h, in.w, in.c);
  if (g.weight.size() != L.weight.size()) g.weight.assign(L.weight.size(), T(0));
  if (g.bias.size() != L.bias.size()) g.bias.assign(L.bias.size(), T(0));
  for (int nn = 0; nn < in.n; ++nn) {
    const T* x = &in.v[size_t(nn) * feat];
    const T* go = gout.ptr(nn, 0, 0);
    T* gi = &gin.v[size_t(nn) * feat];
    for (int o = 0; o < L.out_n; ++o) g.bias[o] += go[o];
    for (int i = 0; i < L.in_n; ++i) {
      const T* wr = &L.weight[size_t(i) * L.out_n];
      T* gw = &g.weight[size_t(i) * L.out_n];
      T acc = T(0);
      const T a = x[i];
      for (int o = 0; o < L.out_n; ++o) {
        acc += go[o] * wr[o];
        gw[o] += a * go[o];
      }
      gi[i] = acc;
    }
  }
}

// ---------------------------------------------------------------------------
// ReLU

template <typename T>
Tensor<T> relu_fwd(const Tensor<T>& in) {
  Tensor<T> out(in.n, in.h, in.w, in.c);
  for (size_t i = 0; i < in.v.size(); ++i) out.v[i] = in.v[i] > T(0) ? in.v[i] : T(0);
  return out;
}

// `pre` is the ReLU input (or equivalently its output: same sign pattern).
template <typename T>
Tensor<T> relu_bwd(const Tensor<T>& pre, const Tensor<T>& gout) {
  if (!pre.same_shape(gout)) throw std::invalid_argument("relu_bwd: shape mismatch");
  Tensor<T> gin(gout.n, gout.h, gout.w, gout.c);
  for (size_t i = 0; i < gout.v.size(); ++i) gin.v[i] = pre.v[i] > T(0) ? gout.v[i] : T(0);
  return gin;
}

}  // namespace rsrect
