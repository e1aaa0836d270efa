#pragma once

// Dense intensity grid plus the coordinate and visibility conventions the
// warping code relies on. The scanline (readout) axis is x and maps to the
// array row index i; the in-row axis is y and maps to the column index j.
// Both are measured in pixels from the image center:
//   i = x + (h-1)/2,  j = y + (w-1)/2
// so in-plane rotation acts about the optical center.

#include <cstdint>
#include <string>
#include <vector>

namespace rsrect {

struct Image {
  int height = 0;
  int width = 0;
  int channels = 0;
  std::vector<float> data;  // row-major, channel-interleaved, [0,1]

  Image() = default;
  Image(int h, int w, int c, float fill = 0.0f);
  Image(int h, int w, int c, std::vector<float> values);  // validates

  float& at(int i, int j, int k) {
    return data[(size_t(i) * width + size_t(j)) * channels + size_t(k)];
  }
  float at(int i, int j, int k) const {
    return data[(size_t(i) * width + size_t(j)) * channels + size_t(k)];
  }

  bool same_shape(const Image& o) const {
    return height == o.height && width == o.width && channels == o.channels;
  }
  bool square() const { return height == width; }

  // Throws std::invalid_argument on any non-finite intensity.
  void validate() const;
};

// Real-valued pixel coordinate, centered. x runs along scanlines (rows).
struct PixelCoord {
  double x = 0.0;
  double y = 0.0;
};

struct VisibilityMask {
  int height = 0;
  int width = 0;
  std::vector<uint8_t> data;  // {0,1}; 0 = invalid/outside

  VisibilityMask() = default;
  VisibilityMask(int h, int w, uint8_t fill = 1);

  uint8_t& at(int i, int j) { return data[size_t(i) * width + size_t(j)]; }
  uint8_t at(int i, int j) const { return data[size_t(i) * width + size_t(j)]; }

  size_t count_zeros() const;
  size_t count_ones() const;
};

inline double center_offset(int n) { return (n - 1) * 0.5; }

// Mask is 0 exactly where the per-pixel channel sum is 0.
VisibilityMask mask_from_image(const Image& img);

VisibilityMask mask_intersect(const VisibilityMask& a, const VisibilityMask& b);

Image center_crop(const Image& img, int out_h, int out_w);

// PSNR (peak 1.0) over mask==1 pixels, all channels. The MSE is floored at
// 1e-10, capping the result at 100 dB so logs stay finite.
double psnr_masked(const Image& a, const Image& b, const VisibilityMask& m);

// Converts a mask to a gray image (0/1 intensities) for writing out.
Image mask_to_image(const VisibilityMask& m);

}  // namespace rsrect
