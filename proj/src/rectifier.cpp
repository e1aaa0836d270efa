#include "rsrect/rectifier.hpp"

#include <cmath>
#include <cstring>
#include <fstream>
#include <stdexcept>

#include "rsrect/common.hpp"

namespace rsrect {

RowMap RowMap::identity(int r) {
  RowMap m(r);
  for (int i = 0; i < r; ++i) {
    for (int j = 0; j < r; ++j) m.at(i, j) = float(i);
  }
  return m;
}

double RowMapResult::converged_fraction() const {
  if (converged.empty()) return 0.0;
  size_t n = 0;
  for (uint8_t v : converged) n += (v != 0);
  return double(n) / double(converged.size());
}

RowMapResult row_map_fixed_point(const MotionCurve& motion, int r, int max_iters, double tol) {
  motion.validate();
  if (motion.rows() != r) {
    throw std::invalid_argument("row_map_fixed_point: motion rows must equal r");
  }
  if (max_iters < 1) throw std::invalid_argument("row_map_fixed_point: max_iters must be >= 1");
  if (!(tol > 0.0)) throw std::invalid_argument("row_map_fixed_point: tol must be positive");

  RowMapResult res;
  res.map = RowMap(r);
  res.converged.assign(size_t(r) * r, 0);
  double c = center_offset(r);
  double lo = -0.5 * r, hi = 1.5 * r;

  parallel_for(r, [&](int64_t i0, int64_t i1) {
    for (int64_t i = i0; i < i1; ++i) {
      double x_gs = double(i) - c;
      for (int j = 0; j < r; ++j) {
        double y_gs = double(j) - c;
        double x = x_gs;  // centered candidate scanline
        bool ok = false;
        for (int it = 0; it < max_iters; ++it) {
          auto [tx, rz] = sample_motion_at(motion, x + c);
          double xn = x_gs * std::cos(rz) - y_gs * std::sin(rz) + tx;
          double step = std::abs(xn - x);
          x = xn;
          if (step < tol) {
            ok = true;
            break;
          }
        }
        double row = x + c;
        if (row < lo) {
          row = lo;
          ok = false;
        } else if (row > hi) {
          row = hi;
          ok = false;
        }
        res.map.at(int(i), j) = float(row);
        res.converged[size_t(i) * r + j] = ok ? 1 : 0;
      }
    }
  });
  return res;
}

WarpResult rectify_ts(const Image& rs, const MotionCurve& motion, const RowMapResult& rowmap) {
  rs.validate();
  motion.validate();
  if (!rs.square() || rs.height != rowmap.map.size || motion.rows() != rs.height) {
    throw std::invalid_argument("rectify_ts: image, motion, and row map sizes must agree");
  }
  int r = rs.height;
  WarpResult res;
  res.image = Image(r, r, rs.channels);
  double c = center_offset(r);
  parallel_for(r, [&](int64_t i0, int64_t i1) {
    for (int64_t i = i0; i < i1; ++i) {
      for (int j = 0; j < r; ++j) {
        if (!rowmap.converged_at(int(i), j)) continue;  // stays zero
        double src_row = rowmap.map.at(int(i), j);
        auto [tx, rz] = sample_motion_at(motion, src_row);
        PixelCoord p_gs{double(i) - c, double(j) - c};
        PixelCoord p_rs = row_motion_forward(p_gs, tx, rz);
        bilinear_sample(rs, p_rs, &res.image.at(int(i), j, 0));
      }
    }
  });
  res.mask = mask_from_image(res.image);
  return res;
}

void save_rowmap(const std::string& path, const RowMap& map) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write row map: " + path);
  char header[8] = {'R', 'M', 'A', 'P', 0, 0, 0, 0};
  uint16_t r = uint16_t(map.size);
  header[4] = char(r & 0xff);
  header[5] = char((r >> 8) & 0xff);
  out.write(header, 8);
  for (float v : map.data) {
    uint32_t bits;
    std::memcpy(&bits, &v, 4);
    char le[4] = {char(bits & 0xff), char((bits >> 8) & 0xff), char((bits >> 16) & 0xff),
                  char((bits >> 24) & 0xff)};
    out.write(le, 4);
  }
}

RowMap load_rowmap(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open row map: " + path);
  char header[8];
  if (!in.read(header, 8) || std::memcmp(header, "RMAP", 4) != 0) {
    throw std::runtime_error("row map: bad header in " + path);
  }
  uint16_t r = uint16_t(uint8_t(header[4])) | uint16_t(uint16_t(uint8_t(header[5])) << 8);
  RowMap map{int(r)};
  for (float& v : map.data) {
    char le[4];
    if (!in.read(le, 4)) throw std::runtime_error("row map: truncated payload in " + path);
    uint32_t bits = uint32_t(uint8_t(le[0])) | (uint32_t(uint8_t(le[1])) << 8) |
                    (uint32_t(uint8_t(le[2])) << 16) | (uint32_t(uint8_t(le[3])) << 24);
    std::memcpy(&v, &bits, 4);
  }
  return map;
}

}  // namespace rsrect
