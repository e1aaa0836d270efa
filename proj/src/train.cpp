#include "rsrect/train.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <stdexcept>

#include "rsrect/common.hpp"
#include "rsrect/warp.hpp"
#include "rsrect/warp_diff.hpp"

namespace rsrect {

namespace {

struct Batch {
  Tensor<float> rs, gs, tx, rz;  // images and ground-truth curves
  int n = 0;
};

Batch pack(const std::vector<TrainSample>& samples, const std::vector<int>& order, size_t start,
           int bmax, int r) {
  int n = int(std::min(size_t(bmax), order.size() - start));
  Batch b;
  b.n = n;
  b.rs = Tensor<float>(n, r, r, 3);
  b.gs = Tensor<float>(n, r, r, 3);
  b.tx = Tensor<float>(n, 1, 1, r);
  b.rz = Tensor<float>(n, 1, 1, r);
  for (int bi = 0; bi < n; ++bi) {
    const TrainSample& s = samples[size_t(order[start + size_t(bi)])];
    if (s.rs.height != r || s.rs.width != r || s.rs.channels != 3) {
      throw std::invalid_argument("pack: samples must be r x r x 3");
    }
    size_t stride = size_t(r) * r * 3;
    std::copy(s.rs.data.begin(), s.rs.data.end(), b.rs.v.begin() + size_t(bi) * stride);
    std::copy(s.gs.data.begin(), s.gs.data.end(), b.gs.v.begin() + size_t(bi) * stride);
    for (int i = 0; i < r; ++i) {
      b.tx.at(bi, 0, 0, i) = float(s.curve.t_x[size_t(i)]);
      b.rz.at(bi, 0, 0, i) = float(s.curve.r_z[size_t(i)]);
    }
  }
  return b;
}

std::vector<int> shuffled(int n, Rng& rng) {
  std::vector<int> order(static_cast<size_t>(n));
  for (int i = 0; i < n; ++i) order[size_t(i)] = i;
  for (int i = n - 1; i > 0; --i) {
    std::swap(order[size_t(i)], order[rng.below(uint32_t(i + 1))]);
  }
  return order;
}

// per-sample curve transform by the symmetric projection matrix
Tensor<float> apply_projection(const std::vector<double>& P, const Tensor<float>& in) {
  int r = in.c;
  Tensor<float> out(in.n, 1, 1, r);
  for (int nn = 0; nn < in.n; ++nn) {
    for (int i = 0; i < r; ++i) {
      double acc = 0.0;
      const double* row = &P[size_t(i) * r];
      for (int k = 0; k < r; ++k) acc += row[k] * double(in.at(nn, 0, 0, k));
      out.at(nn, 0, 0, i) = float(acc);
    }
  }
  return out;
}

double curve_se(const Tensor<float>& pred, const Tensor<float>& target) {
  double se = 0.0;
  for (size_t i = 0; i < pred.v.size(); ++i) {
    double d = double(pred.v[i]) - double(target.v[i]);
    se += d * d;
  }
  return se;
}

// parameter refs excluding the row block (pretraining leaves it untouched)
template <typename Refs>
Refs motion_only(const Refs& all) {
  Refs out;
  for (const auto& ref : all) {
    if (ref.name.rfind("row", 0) != 0) out.push_back(ref);
  }
  return out;
}

}  // namespace

double motion_regression_loss(const ModelParams<float>& model,
                              const std::vector<TrainSample>& samples, int batch) {
  if (samples.empty()) throw std::invalid_argument("motion_regression_loss: empty sample set");
  ModelParams<float> copy = model;  // batch-stat forwards must not disturb running stats
  int r = model.r;
  std::vector<int> order(samples.size());
  for (size_t i = 0; i < samples.size(); ++i) order[i] = int(i);
  double se = 0.0;
  int64_t count = 0;
  for (size_t start = 0; start < order.size(); start += size_t(batch)) {
    Batch b = pack(samples, order, start, batch, r);
    auto [txp, rzp] = motion_block_fwd(copy, b.rs, true, (MotionBlockCache<float>*)nullptr);
    se += curve_se(txp, b.tx) + curve_se(rzp, b.rz);
    count += int64_t(2) * b.n * r;
  }
  return se / double(count);
}

PretrainStats pretrain_motion(ModelParams<float>& model, const std::vector<TrainSample>& samples,
                              const PretrainConfig& cfg) {
  if (samples.empty()) throw std::invalid_argument("pretrain_motion: empty sample set");
  int r = model.r;
  PretrainStats stats;
  stats.initial_loss = motion_regression_loss(model, samples, cfg.batch);
  AdamState<float> st;
  Rng rng(mix_seed(cfg.seed, 0x70726574726e));
  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    std::vector<int> order = shuffled(int(samples.size()), rng);
    double epoch_se = 0.0;
    int64_t epoch_cnt = 0;
    for (size_t start = 0; start < order.size(); start += size_t(cfg.batch)) {
      Batch b = pack(samples, order, start, cfg.batch, r);
      MotionBlockCache<float> cache;
      auto [txp, rzp] = motion_block_fwd(model, b.rs, true, &cache);
      double se = curve_se(txp, b.tx) + curve_se(rzp, b.rz);
      epoch_se += se;
      epoch_cnt += int64_t(2) * b.n * r;
      float inv = 1.0f / float(int64_t(b.n) * r);
      Tensor<float> gtx(b.n, 1, 1, r), grz(b.n, 1, 1, r);
      for (size_t i = 0; i < gtx.v.size(); ++i) {
        gtx.v[i] = (txp.v[i] - b.tx.v[i]) * inv;
        grz.v[i] = (rzp.v[i] - b.rz.v[i]) * inv;
      }
      ModelGrads<float> g(model);
      motion_block_bwd(model, cache, gtx, grz, g);
      auto params = motion_only(param_list(model));
      auto grads = motion_only(grad_list(g));
      adam_step(cfg.adam, st, params, grads);
    }
    stats.epoch_loss.push_back(epoch_se / double(epoch_cnt));
  }
  stats.final_loss = motion_regression_loss(model, samples, cfg.batch);
  return stats;
}

namespace {

struct StepOutput {
  LossTerms lt;
  Tensor<float> rect;
};

// shared forward for the training graph; backward buffers only when grads
// are requested
StepOutput training_step_forward(ModelParams<float>& model, const Batch& b,
                                 const std::vector<double>& P, const TrainConfig& cfg,
                                 ModelGrads<float>* grads) {
  MotionBlockCache<float> mc;
  RowBlockCache<float> rc;
  auto [txr, rzr] = motion_block_fwd(model, b.rs, true, grads ? &mc : nullptr);
  Tensor<float> txs = cfg.smooth_trajectory ? apply_projection(P, txr) : txr;
  Tensor<float> rzs = cfg.smooth_trajectory ? apply_projection(P, rzr) : rzr;
  Tensor<float> rowmap = row_block_fwd(model, b.rs, true, grads ? &rc : nullptr);

  RectWarpCache<float> rcache;
  RegenWarpCache<float> gcache;
  StepOutput out;
  out.rect = rectify_diff(b.rs, txs, rzs, rowmap, grads ? &rcache : nullptr);
  Tensor<float> regen = warp_gs_to_rs_diff(b.gs, txs, rzs, grads ? &gcache : nullptr);
  Tensor<float> grect, gregen;
  out.lt = total_loss(b.rs, b.gs, out.rect, regen, cfg.weights, grads ? &grect : nullptr,
                      grads ? &gregen : nullptr);
  if (!grads) return out;

  Tensor<float> gtx1, grz1, growmap, gtx2, grz2;
  rectify_diff_bwd(rcache, grect, gtx1, grz1, growmap);
  warp_gs_to_rs_bwd(gcache, gregen, gtx2, grz2);
  for (size_t i = 0; i < gtx1.v.size(); ++i) {
    gtx1.v[i] += gtx2.v[i];
    grz1.v[i] += grz2.v[i];
  }
  Tensor<float> gtxr = cfg.smooth_trajectory ? apply_projection(P, gtx1) : gtx1;
  Tensor<float> grzr = cfg.smooth_trajectory ? apply_projection(P, grz1) : grz1;
  motion_block_bwd(model, mc, gtxr, grzr, *grads);
  row_block_bwd(model, rc, growmap, *grads);
  return out;
}

}  // namespace

double end_to_end_loss(const ModelParams<float>& model, const std::vector<TrainSample>& samples,
                       const TrainConfig& cfg) {
  if (samples.empty()) throw std::invalid_argument("end_to_end_loss: empty sample set");
  ModelParams<float> copy = model;
  int r = model.r;
  std::vector<double> P =
      cfg.smooth_trajectory ? trajectory_projection_matrix(r, cfg.traj_degree) : std::vector<double>();
  std::vector<int> order(samples.size());
  for (size_t i = 0; i < samples.size(); ++i) order[i] = int(i);
  double total = 0.0;
  int64_t count = 0;
  for (size_t start = 0; start < order.size(); start += size_t(cfg.batch)) {
    Batch b = pack(samples, order, start, cfg.batch, r);
    StepOutput so = training_step_forward(copy, b, P, cfg, nullptr);
    total += so.lt.total * b.n;
    count += b.n;
  }
  return total / double(count);
}

TrainStats train_end_to_end(ModelParams<float>& model, const std::vector<TrainSample>& samples,
                            const TrainConfig& cfg) {
  if (samples.empty()) throw std::invalid_argument("train_end_to_end: empty sample set");
  int r = model.r;
  std::vector<double> P =
      cfg.smooth_trajectory ? trajectory_projection_matrix(r, cfg.traj_degree) : std::vector<double>();

  TrainStats stats;
  stats.initial_total = end_to_end_loss(model, samples, cfg);

  std::ofstream metrics;
  if (!cfg.metrics_path.empty()) {
    metrics.open(cfg.metrics_path, std::ios::binary);
    if (!metrics) throw std::runtime_error("cannot write metrics: " + cfg.metrics_path);
    metrics << "epoch,step,L_total,L_rec_mse,L_reg_mse,L_rec_edge,L_reg_edge,psnr_masked\n";
  }

  AdamState<float> st;
  Rng rng(mix_seed(cfg.seed, 0x747261696e));
  ModelParams<float> last_good = model;
  int64_t step = 0;
  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    std::vector<int> order = shuffled(int(samples.size()), rng);
    double epoch_total = 0.0;
    int64_t epoch_n = 0;
    for (size_t start = 0; start < order.size(); start += size_t(cfg.batch)) {
      Batch b = pack(samples, order, start, cfg.batch, r);
      ModelGrads<float> g(model);
      StepOutput so = training_step_forward(model, b, P, cfg, &g);
      if (!std::isfinite(so.lt.total)) {
        if (!cfg.checkpoint_path.empty()) checkpoint_save(cfg.checkpoint_path, last_good);
        throw std::runtime_error("train_end_to_end: non-finite loss at step " +
                                 std::to_string(step));
      }
      auto params = param_list(model);
      auto grads = grad_list(g);
      try {
        adam_step(cfg.adam, st, params, grads);
      } catch (const std::runtime_error&) {
        // non-finite gradients: keep the state before the failed update
        if (!cfg.checkpoint_path.empty()) checkpoint_save(cfg.checkpoint_path, last_good);
        throw;
      }
      last_good = model;

      double psnr = 0.0;
      for (int bi = 0; bi < b.n; ++bi) {
        Image rect_img = tensor_to_image(so.rect, bi);
        Image gs_img = tensor_to_image(b.gs, bi);
        psnr += psnr_masked(rect_img, gs_img, mask_from_image(rect_img));
      }
      psnr /= double(b.n);

      if (metrics.is_open()) {
        char line[256];
        std::snprintf(line, sizeof(line), "%d,%lld,%.9g,%.9g,%.9g,%.9g,%.9g,%.9g\n", epoch,
                      (long long)step, so.lt.total, so.lt.rec_mse, so.lt.reg_mse, so.lt.rec_edge,
                      so.lt.reg_edge, psnr);
        metrics << line;
      }
      epoch_total += so.lt.total * b.n;
      epoch_n += b.n;
      ++step;
    }
    double mean_total = epoch_total / double(epoch_n);
    stats.epoch_total.push_back(mean_total);
    stats.epochs_run = epoch + 1;
    if (cfg.stop_at_reduction > 0.0 &&
        mean_total <= (1.0 - cfg.stop_at_reduction) * stats.initial_total) {
      break;
    }
  }
  stats.final_total = end_to_end_loss(model, samples, cfg);
  return stats;
}

InferenceResult rectify_with_model(ModelParams<float>& model, const Image& rs, bool smooth,
                                   int degree) {
  rs.validate();
  if (rs.height != model.r || rs.width != model.r) {
    throw std::invalid_argument("rectify_with_model: image size does not match the model");
  }
  Image rs3 = rs;
  if (rs.channels == 1) {
    rs3 = Image(rs.height, rs.width, 3);
    for (int i = 0; i < rs.height; ++i) {
      for (int j = 0; j < rs.width; ++j) {
        for (int k = 0; k < 3; ++k) rs3.at(i, j, k) = rs.at(i, j, 0);
      }
    }
  } else if (rs.channels != 3) {
    throw std::invalid_argument("rectify_with_model: expects 1- or 3-channel input");
  }
  int r = model.r;
  Tensor<float> X = image_to_tensor<float>(rs3);
  auto [txp, rzp] = motion_block_fwd(model, X, false, (MotionBlockCache<float>*)nullptr);
  InferenceResult res;
  res.curve = MotionCurve(r);
  for (int i = 0; i < r; ++i) {
    res.curve.t_x[size_t(i)] = double(txp.at(0, 0, 0, i));
    res.curve.r_z[size_t(i)] = double(rzp.at(0, 0, 0, i));
  }
  if (smooth) res.curve = eval_trajectory(fit_trajectory(res.curve, degree), r);

  Tensor<float> rowmap_t = row_block_fwd(model, X, false, (RowBlockCache<float>*)nullptr);
  RowMapResult rmr;
  rmr.map = RowMap(r);
  rmr.converged.assign(size_t(r) * r, 1);
  for (int i = 0; i < r; ++i) {
    for (int j = 0; j < r; ++j) rmr.map.at(i, j) = rowmap_t.at(0, i, j, 0);
  }
  res.rowmap = rmr.map;
  WarpResult wr = rectify_ts(rs, res.curve, rmr);
  res.rect = std::move(wr.image);
  res.mask = std::move(wr.mask);
  return res;
}

}  // namespace rsrect
