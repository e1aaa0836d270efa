#include "rsrect/image.hpp"

#include <cmath>
#include <stdexcept>

namespace rsrect {

Image::Image(int h, int w, int c, float fill)
    : height(h), width(w), channels(c), data(size_t(h) * w * c, fill) {
  if (h < 0 || w < 0 || (c != 0 && c != 1 && c != 3)) {
    throw std::invalid_argument("Image: bad dimensions");
  }
  if (!std::isfinite(fill)) throw std::invalid_argument("Image: non-finite fill");
}

Image::Image(int h, int w, int c, std::vector<float> values)
    : height(h), width(w), channels(c), data(std::move(values)) {
  if (c != 1 && c != 3) throw std::invalid_argument("Image: channels must be 1 or 3");
  if (data.size() != size_t(h) * w * c) {
    throw std::invalid_argument("Image: data length does not match shape");
  }
  validate();
}

void Image::validate() const {
  for (float v : data) {
    if (!std::isfinite(v)) {
      throw std::invalid_argument("Image: non-finite intensity");
    }
  }
}

VisibilityMask::VisibilityMask(int h, int w, uint8_t fill)
    : height(h), width(w), data(size_t(h) * w, fill) {}

size_t VisibilityMask::count_zeros() const {
  size_t n = 0;
  for (uint8_t v : data) n += (v == 0);
  return n;
}

size_t VisibilityMask::count_ones() const { return data.size() - count_zeros(); }

VisibilityMask mask_from_image(const Image& img) {
  VisibilityMask m(img.height, img.width);
  for (int i = 0; i < img.height; ++i) {
    for (int j = 0; j < img.width; ++j) {
      float s = 0.0f;
      for (int k = 0; k < img.channels; ++k) s += img.at(i, j, k);
      m.at(i, j) = (s == 0.0f) ? 0 : 1;
    }
  }
  return m;
}

VisibilityMask mask_intersect(const VisibilityMask& a, const VisibilityMask& b) {
  if (a.height != b.height || a.width != b.width) {
    throw std::invalid_argument("mask_intersect: shape mismatch");
  }
  VisibilityMask m(a.height, a.width);
  for (size_t i = 0; i < m.data.size(); ++i) m.data[i] = a.data[i] & b.data[i];
  return m;
}

Image center_crop(const Image& img, int out_h, int out_w) {
  if (out_h > img.height || out_w > img.width || out_h <= 0 || out_w <= 0) {
    throw std::invalid_argument("center_crop: output larger than input");
  }
  int off_i = (img.height - out_h) / 2;
  int off_j = (img.width - out_w) / 2;
  Image out(out_h, out_w, img.channels);
  for (int i = 0; i < out_h; ++i) {
    for (int j = 0; j < out_w; ++j) {
      for (int k = 0; k < img.channels; ++k) {
        out.at(i, j, k) = img.at(i + off_i, j + off_j, k);
      }
    }
  }
  return out;
}

double psnr_masked(const Image& a, const Image& b, const VisibilityMask& m) {
  if (!a.same_shape(b) || a.height != m.height || a.width != m.width) {
    throw std::invalid_argument("psnr_masked: shape mismatch");
  }
  double se = 0.0;
  size_t n = 0;
  for (int i = 0; i < a.height; ++i) {
    for (int j = 0; j < a.width; ++j) {
      if (!m.at(i, j)) continue;
      for (int k = 0; k < a.channels; ++k) {
        double d = double(a.at(i, j, k)) - double(b.at(i, j, k));
        se += d * d;
      }
      n += size_t(a.channels);
    }
  }
  if (n == 0) return 0.0;
  double mse = se / double(n);
  if (mse < 1e-10) mse = 1e-10;
  return -10.0 * std::log10(mse);
}

Image mask_to_image(const VisibilityMask& m) {
  Image out(m.height, m.width, 1);
  for (int i = 0; i < m.height; ++i) {
    for (int j = 0; j < m.width; ++j) out.at(i, j, 0) = float(m.at(i, j));
  }
  return out;
}

}  // namespace rsrect
