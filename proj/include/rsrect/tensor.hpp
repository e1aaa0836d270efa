#pragma once

#include <cstdint>
#include <stdexcept>
#include <vector>

#include "rsrect/image.hpp"

namespace rsrect {

// Dense NHWC tensor. Kept deliberately small: fixed rank 4, row-major,
// scalar type float for training and double for gradient verification.
template <typename T>
struct Tensor {
  int n = 0, h = 0, w = 0, c = 0;
  std::vector<T> v;

  Tensor() = default;
  Tensor(int n_, int h_, int w_, int c_, T fill = T(0))
      : n(n_), h(h_), w(w_), c(c_), v(size_t(n_) * h_ * w_ * c_, fill) {}

  int64_t size() const { return int64_t(v.size()); }

  T& at(int in, int ih, int iw, int ic) {
    return v[((size_t(in) * h + ih) * w + iw) * c + ic];
  }
  T at(int in, int ih, int iw, int ic) const {
    return v[((size_t(in) * h + ih) * w + iw) * c + ic];
  }
  T* ptr(int in, int ih, int iw) { return &v[((size_t(in) * h + ih) * w + iw) * c]; }
  const T* ptr(int in, int ih, int iw) const { return &v[((size_t(in) * h + ih) * w + iw) * c]; }

  bool same_shape(const Tensor& o) const {
    return n == o.n && h == o.h && w == o.w && c == o.c;
  }
  void fill(T x) { std::fill(v.begin(), v.end(), x); }
};

template <typename T>
Tensor<T> image_to_tensor(const Image& img) {
  Tensor<T> t(1, img.height, img.width, img.channels);
  for (size_t i = 0; i < img.data.size(); ++i) t.v[i] = T(img.data[i]);
  return t;
}

template <typename T>
Image tensor_to_image(const Tensor<T>& t, int sample = 0) {
  if (sample < 0 || sample >= t.n) throw std::invalid_argument("tensor_to_image: bad sample");
  Image img(t.h, t.w, t.c);
  size_t stride = size_t(t.h) * t.w * t.c;
  for (size_t i = 0; i < stride; ++i) img.data[i] = float(t.v[size_t(sample) * stride + i]);
  return img;
}

}  // namespace rsrect
