#pragma once

// Motion-regression pretraining and the end-to-end loop: motion block ->
// cubic trajectory smoothing -> row block -> differentiable rectification,
// plus the regeneration branch, under the four-term loss. All state is
// float; geometry inside the warps stays double.

#include <cstdint>
#include <string>
#include <vector>

#include "rsrect/adam.hpp"
#include "rsrect/dataset.hpp"
#include "rsrect/losses.hpp"
#include "rsrect/model.hpp"
#include "rsrect/rectifier.hpp"

namespace rsrect {

struct PretrainConfig {
  int epochs = 5;
  int batch = 4;
  AdamConfig adam;
  uint64_t seed = 0;
};

struct PretrainStats {
  double initial_loss = 0.0;  // dataset loss before the first update
  double final_loss = 0.0;    // same measurement after training
  std::vector<double> epoch_loss;  // mean per-step training loss
};

// Mean squared error of the raw motion-block curves against ground truth,
// t_x and r_z equally weighted, measured with batch statistics on a copy of
// the model (running stats are untouched).
double motion_regression_loss(const ModelParams<float>& model,
                              const std::vector<TrainSample>& samples, int batch);

// Regresses ground-truth curves with ADAM; the row block is untouched.
PretrainStats pretrain_motion(ModelParams<float>& model, const std::vector<TrainSample>& samples,
                              const PretrainConfig& cfg);

struct TrainConfig {
  int epochs = 200;
  int batch = 4;
  AdamConfig adam;
  LossWeights weights;
  bool smooth_trajectory = true;
  int traj_degree = 3;
  uint64_t seed = 0;
  std::string metrics_path;     // CSV; empty = no log
  std::string checkpoint_path;  // last-good checkpoint for NaN aborts; empty = none
  double stop_at_reduction = 0.0;  // e.g. 0.9 stops once epoch loss <= 10% of initial
};

struct TrainStats {
  double initial_total = 0.0;
  double final_total = 0.0;
  int epochs_run = 0;
  std::vector<double> epoch_total;
};

// Dataset L_total under the training-graph forward (batch statistics on a
// model copy); used for the before/after comparisons.
double end_to_end_loss(const ModelParams<float>& model, const std::vector<TrainSample>& samples,
                       const TrainConfig& cfg);

// Full loop; emits one metrics row per step. Throws on a non-finite loss or
// gradient after saving the last good checkpoint (when a path is configured).
TrainStats train_end_to_end(ModelParams<float>& model, const std::vector<TrainSample>& samples,
                            const TrainConfig& cfg);

struct InferenceResult {
  MotionCurve curve;  // smoothed when smoothing is on
  RowMap rowmap;
  Image rect;
  VisibilityMask mask;
};

// Inference-mode rectification: motion block -> optional cubic fit -> row
// block -> analytic rectification with the predicted curve and row map.
// Gray inputs are replicated to three channels for the network.
InferenceResult rectify_with_model(ModelParams<float>& model, const Image& rs, bool smooth = true,
                                   int degree = 3);

}  // namespace rsrect
