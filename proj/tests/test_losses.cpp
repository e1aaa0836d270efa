#include <cmath>
#include <stdexcept>
#include <vector>

#include "doctest.h"
#include "rsrect/common.hpp"
#include "rsrect/image.hpp"
#include "rsrect/losses.hpp"
#include "rsrect/tensor.hpp"
#include "rsrect/warp.hpp"

using namespace rsrect;

namespace {

Tensor<double> random_tensor(int n, int h, int w, int c, uint64_t seed, double lo = 0.0,
                             double hi = 1.0) {
  Tensor<double> t(n, h, w, c);
  Rng rng(seed);
  for (auto& v : t.v) v = rng.uniform(lo, hi);
  return t;
}

// independent scalar oracle: sum of squared residuals over every element,
// divided by the full element count
double mse_oracle(const Tensor<double>& pred, const Tensor<double>& target,
                  const Tensor<double>& mask) {
  double acc = 0.0;
  for (int n = 0; n < pred.n; ++n) {
    for (int i = 0; i < pred.h; ++i) {
      for (int j = 0; j < pred.w; ++j) {
        for (int k = 0; k < pred.c; ++k) {
          double d = pred.at(n, i, j, k) - mask.at(n, i, j, 0) * target.at(n, i, j, k);
          acc += d * d;
        }
      }
    }
  }
  return acc / double(pred.v.size());
}

// explicit 3x3 kernels, written out rather than built from the separable
// factors the implementation uses
double conv3_oracle(const Tensor<double>& img, int n, int i, int j, int k,
                    const double kern[3][3]) {
  double acc = 0.0;
  for (int di = -1; di <= 1; ++di) {
    for (int dj = -1; dj <= 1; ++dj) {
      int ii = i + di, jj = j + dj;
      if (ii < 0 || ii >= img.h || jj < 0 || jj >= img.w) continue;
      acc += kern[di + 1][dj + 1] * img.at(n, ii, jj, k);
    }
  }
  return acc;
}

constexpr double kGx[3][3] = {{-1, 0, 1}, {-2, 0, 2}, {-1, 0, 1}};
constexpr double kGy[3][3] = {{-1, -2, -1}, {0, 0, 0}, {1, 2, 1}};

}  // namespace

TEST_CASE("masked mse matches the scalar oracle") {
  Tensor<double> pred = random_tensor(2, 5, 7, 3, 61);
  Tensor<double> target = random_tensor(2, 5, 7, 3, 62);
  Tensor<double> mask(2, 5, 7, 1, 1.0);
  Rng rng(63);
  for (auto& v : mask.v) v = rng.uniform() < 0.3 ? 0.0 : 1.0;

  double got = masked_mse(pred, target, mask);
  CHECK(got == doctest::Approx(mse_oracle(pred, target, mask)).epsilon(1e-14));
}

TEST_CASE("a uniform 0.01 offset under a full mask gives 1e-4") {
  Tensor<double> target = random_tensor(1, 6, 6, 3, 64, 0.1, 0.9);
  Tensor<double> pred = target;
  for (auto& v : pred.v) v += 0.01;
  Tensor<double> mask(1, 6, 6, 1, 1.0);
  CHECK(masked_mse(pred, target, mask) == doctest::Approx(1e-4).epsilon(1e-10));
}

TEST_CASE("masked pixels with zero prediction contribute nothing") {
  Tensor<double> target = random_tensor(1, 8, 8, 1, 65);
  Tensor<double> pred = target;
  Tensor<double> mask(1, 8, 8, 1, 1.0);
  // zero out a block in the prediction and mask it away; the loss must
  // ignore whatever the target holds there
  for (int i = 2; i < 5; ++i) {
    for (int j = 3; j < 6; ++j) {
      pred.at(0, i, j, 0) = 0.0;
      mask.at(0, i, j, 0) = 0.0;
    }
  }
  CHECK(masked_mse(pred, target, mask) == doctest::Approx(0.0));
  // changing the target inside the masked block does not move the loss
  Tensor<double> target2 = target;
  for (int i = 2; i < 5; ++i) {
    for (int j = 3; j < 6; ++j) target2.at(0, i, j, 0) = 123.0;
  }
  CHECK(masked_mse(pred, target2, mask) == doctest::Approx(0.0));
}

TEST_CASE("masked mse gradient is 2 d / N and passes finite differences") {
  Tensor<double> pred = random_tensor(1, 4, 5, 3, 66);
  Tensor<double> target = random_tensor(1, 4, 5, 3, 67);
  Tensor<double> mask(1, 4, 5, 1, 1.0);
  mask.at(0, 1, 2, 0) = 0.0;

  Tensor<double> grad;
  masked_mse(pred, target, mask, &grad);
  const double N = double(pred.v.size());
  for (int i = 0; i < 4; ++i) {
    for (int j = 0; j < 5; ++j) {
      for (int k = 0; k < 3; ++k) {
        double d = pred.at(0, i, j, k) - mask.at(0, i, j, 0) * target.at(0, i, j, k);
        CHECK(grad.at(0, i, j, k) == doctest::Approx(2.0 * d / N).epsilon(1e-12));
      }
    }
  }

  const double h = 1e-6;
  Rng rng(68);
  for (int trial = 0; trial < 10; ++trial) {
    size_t idx = size_t(rng.uniform() * double(pred.v.size()));
    Tensor<double> pp = pred, pm = pred;
    pp.v[idx] += h;
    pm.v[idx] -= h;
    double fd = (masked_mse(pp, target, mask) - masked_mse(pm, target, mask)) / (2.0 * h);
    CHECK(grad.v[idx] == doctest::Approx(fd).epsilon(1e-7));
  }
}

TEST_CASE("masked mse validates shapes") {
  Tensor<double> a(1, 4, 4, 3), b(1, 4, 5, 3), m(1, 4, 4, 1), m3(1, 4, 4, 3);
  CHECK_THROWS_AS(masked_mse(a, b, m), std::invalid_argument);
  CHECK_THROWS_AS(masked_mse(a, a, m3), std::invalid_argument);
}

TEST_CASE("tensor mask follows the zero-channel-sum rule") {
  Tensor<float> img(1, 3, 3, 3);
  for (auto& v : img.v) v = 0.25f;
  img.at(0, 0, 0, 0) = img.at(0, 0, 0, 1) = img.at(0, 0, 0, 2) = 0.0f;
  // opposite-sign channels also sum to zero
  img.at(0, 1, 1, 0) = 0.5f;
  img.at(0, 1, 1, 1) = -0.5f;
  img.at(0, 1, 1, 2) = 0.0f;
  Tensor<float> m = tensor_mask(img);
  CHECK(m.at(0, 0, 0, 0) == 0.0f);
  CHECK(m.at(0, 1, 1, 0) == 0.0f);
  CHECK(m.at(0, 2, 2, 0) == 1.0f);
  CHECK(m.c == 1);
}

TEST_CASE("sobel responses match explicit 3x3 kernels") {
  Tensor<double> img = random_tensor(2, 6, 7, 3, 71);
  Tensor<double> edges = sobel_edges_t(img);
  REQUIRE(edges.c == 6);
  for (int n = 0; n < 2; ++n) {
    for (int i = 0; i < 6; ++i) {
      for (int j = 0; j < 7; ++j) {
        for (int k = 0; k < 3; ++k) {
          CHECK(edges.at(n, i, j, k) ==
                doctest::Approx(conv3_oracle(img, n, i, j, k, kGx)).epsilon(1e-12));
          CHECK(edges.at(n, i, j, 3 + k) ==
                doctest::Approx(conv3_oracle(img, n, i, j, k, kGy)).epsilon(1e-12));
        }
      }
    }
  }
}

TEST_CASE("sobel hand example on a 3x3 ramp") {
  Tensor<double> img(1, 3, 3, 1);
  for (int i = 0; i < 3; ++i) {
    for (int j = 0; j < 3; ++j) img.at(0, i, j, 0) = double(3 * i + j);
  }
  Tensor<double> e = sobel_edges_t(img);
  CHECK(e.at(0, 1, 1, 0) == doctest::Approx(8.0));   // horizontal response
  CHECK(e.at(0, 1, 1, 1) == doctest::Approx(24.0));  // vertical response
  CHECK(e.at(0, 0, 0, 0) == doctest::Approx(6.0));   // zero-padded corner
}

TEST_CASE("constant image has zero sobel response away from the border") {
  Tensor<double> img(1, 8, 8, 1, 0.7);
  Tensor<double> e = sobel_edges_t(img);
  for (int i = 1; i < 7; ++i) {
    for (int j = 1; j < 7; ++j) {
      CHECK(e.at(0, i, j, 0) == doctest::Approx(0.0));
      CHECK(e.at(0, i, j, 1) == doctest::Approx(0.0));
    }
  }
}

TEST_CASE("sobel backward is the adjoint of the forward") {
  // <S x, y> == <x, S^T y> for random x, y
  for (uint64_t seed : {72u, 73u}) {
    Tensor<double> x = random_tensor(1, 5, 6, 3, seed, -1.0, 1.0);
    Tensor<double> y = random_tensor(1, 5, 6, 6, seed + 10, -1.0, 1.0);
    Tensor<double> sx = sobel_edges_t(x);
    Tensor<double> sty = sobel_edges_bwd_t(y);
    double lhs = 0.0, rhs = 0.0;
    for (size_t i = 0; i < sx.v.size(); ++i) lhs += sx.v[i] * y.v[i];
    for (size_t i = 0; i < x.v.size(); ++i) rhs += x.v[i] * sty.v[i];
    CHECK(lhs == doctest::Approx(rhs).epsilon(1e-12));
  }
  Tensor<double> odd(1, 4, 4, 3);
  CHECK_THROWS_AS(sobel_edges_bwd_t(odd), std::invalid_argument);
}

TEST_CASE("total loss equals the weighted sum of independently computed terms") {
  Tensor<float> rs(1, 8, 8, 3), gs(1, 8, 8, 3), rect(1, 8, 8, 3), regen(1, 8, 8, 3);
  Rng rng(75);
  for (auto& v : rs.v) v = float(rng.uniform(0.05, 1.0));
  for (auto& v : gs.v) v = float(rng.uniform(0.05, 1.0));
  for (auto& v : rect.v) v = float(rng.uniform(0.0, 1.0));
  for (auto& v : regen.v) v = float(rng.uniform(0.0, 1.0));
  // a few exact zeros so the masks are nontrivial
  for (int j = 0; j < 8; ++j) {
    for (int k = 0; k < 3; ++k) {
      rect.at(0, 0, j, k) = 0.0f;
      regen.at(0, 7, j, k) = 0.0f;
    }
  }

  Tensor<float> m_rec = tensor_mask(rect);
  Tensor<float> m_reg = tensor_mask(regen);
  double t1 = masked_mse(rect, gs, m_rec);
  double t2 = masked_mse(regen, rs, m_reg);
  double t3 = masked_mse(sobel_edges_t(rect), sobel_edges_t(gs), m_rec);
  double t4 = masked_mse(sobel_edges_t(regen), sobel_edges_t(rs), m_reg);

  LossWeights w;  // 1, 1, 0.5, 0.5
  LossTerms lt = total_loss(rs, gs, rect, regen, w);
  CHECK(lt.rec_mse == doctest::Approx(t1).epsilon(1e-6));
  CHECK(lt.reg_mse == doctest::Approx(t2).epsilon(1e-6));
  CHECK(lt.rec_edge == doctest::Approx(t3).epsilon(1e-6));
  CHECK(lt.reg_edge == doctest::Approx(t4).epsilon(1e-6));
  CHECK(lt.total ==
        doctest::Approx(1.0 * t1 + 1.0 * t2 + 0.5 * t3 + 0.5 * t4).epsilon(1e-6));

  // one-hot weights isolate each term
  LossTerms only1 = total_loss(rs, gs, rect, regen, LossWeights{1.0, 0.0, 0.0, 0.0});
  CHECK(only1.total == doctest::Approx(t1).epsilon(1e-6));
  LossTerms only3 = total_loss(rs, gs, rect, regen, LossWeights{0.0, 0.0, 1.0, 0.0});
  CHECK(only3.total == doctest::Approx(t3).epsilon(1e-6));
  LossTerms only4 = total_loss(rs, gs, rect, regen, LossWeights{0.0, 0.0, 0.0, 1.0});
  CHECK(only4.total == doctest::Approx(t4).epsilon(1e-6));
}

TEST_CASE("total loss gradients assemble the per-term gradients") {
  Tensor<double> rs = random_tensor(1, 6, 6, 3, 81, 0.05, 1.0);
  Tensor<double> gs = random_tensor(1, 6, 6, 3, 82, 0.05, 1.0);
  Tensor<double> rect = random_tensor(1, 6, 6, 3, 83);
  Tensor<double> regen = random_tensor(1, 6, 6, 3, 84);

  LossWeights w{0.7, 1.3, 0.25, 0.45};
  Tensor<double> grect, gregen;
  total_loss(rs, gs, rect, regen, w, &grect, &gregen);

  Tensor<double> m_rec = tensor_mask(rect);
  Tensor<double> m_reg = tensor_mask(regen);
  Tensor<double> g1, g2, g3e, g4e;
  masked_mse(rect, gs, m_rec, &g1);
  masked_mse(regen, rs, m_reg, &g2);
  masked_mse(sobel_edges_t(rect), sobel_edges_t(gs), m_rec, &g3e);
  masked_mse(sobel_edges_t(regen), sobel_edges_t(rs), m_reg, &g4e);
  Tensor<double> g3 = sobel_edges_bwd_t(g3e);
  Tensor<double> g4 = sobel_edges_bwd_t(g4e);

  for (size_t i = 0; i < grect.v.size(); ++i) {
    CHECK(grect.v[i] == doctest::Approx(w.l1 * g1.v[i] + w.l3 * g3.v[i]).epsilon(1e-12));
    CHECK(gregen.v[i] == doctest::Approx(w.l2 * g2.v[i] + w.l4 * g4.v[i]).epsilon(1e-12));
  }
}

TEST_CASE("total loss gradient passes finite differences in double") {
  Tensor<double> rs = random_tensor(1, 5, 5, 3, 85, 0.05, 1.0);
  Tensor<double> gs = random_tensor(1, 5, 5, 3, 86, 0.05, 1.0);
  Tensor<double> rect = random_tensor(1, 5, 5, 3, 87, 0.1, 1.0);
  Tensor<double> regen = random_tensor(1, 5, 5, 3, 88, 0.1, 1.0);

  LossWeights w;
  Tensor<double> grect, gregen;
  total_loss(rs, gs, rect, regen, w, &grect, &gregen);

  // keep perturbations away from zero so the masks stay constant
  const double h = 1e-6;
  Rng rng(89);
  for (int trial = 0; trial < 8; ++trial) {
    size_t idx = size_t(rng.uniform() * double(rect.v.size()));
    Tensor<double> rp = rect, rm = rect;
    rp.v[idx] += h;
    rm.v[idx] -= h;
    double fp = total_loss(rs, gs, rp, regen, w).total;
    double fm = total_loss(rs, gs, rm, regen, w).total;
    CHECK(grect.v[idx] == doctest::Approx((fp - fm) / (2.0 * h)).epsilon(1e-6));

    Tensor<double> qp = regen, qm = regen;
    qp.v[idx] += h;
    qm.v[idx] -= h;
    fp = total_loss(rs, gs, rect, qp, w).total;
    fm = total_loss(rs, gs, rect, qm, w).total;
    CHECK(gregen.v[idx] == doctest::Approx((fp - fm) / (2.0 * h)).epsilon(1e-6));
  }
}

TEST_CASE("image-facing masked mse agrees with the tensor version") {
  Image pred(6, 6, 3), target(6, 6, 3);
  Rng rng(91);
  for (auto& v : pred.data) v = float(rng.uniform(0.0, 1.0));
  for (auto& v : target.data) v = float(rng.uniform(0.0, 1.0));
  for (int k = 0; k < 3; ++k) pred.at(2, 2, k) = 0.0f;

  VisibilityMask mask = mask_from_image(pred);
  double got = masked_mse(pred, target, mask);

  Tensor<float> tp = image_to_tensor<float>(pred);
  Tensor<float> tt = image_to_tensor<float>(target);
  Tensor<float> tm = tensor_mask(tp);
  CHECK(got == doctest::Approx(masked_mse(tp, tt, tm)).epsilon(1e-12));

  Image grad;
  masked_mse(pred, target, mask, &grad);
  CHECK(grad.height == 6);
  CHECK(grad.channels == 3);
  const double N = double(pred.data.size());
  double d = double(pred.at(0, 0, 0)) - double(target.at(0, 0, 0));
  CHECK(double(grad.at(0, 0, 0)) == doctest::Approx(2.0 * d / N).epsilon(1e-5));
}
