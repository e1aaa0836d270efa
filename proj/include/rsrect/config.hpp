#pragma once

// Run configuration: defaults follow the declared training recipe
// (lr 0.001, betas 0.9/0.99, lambdas 1,1,0.5,0.5). A JSON config file can
// override any field; command-line flags override the file. Angles are
// degrees in the file and on the CLI, radians internally.

#include <cstdint>
#include <string>

#include "rsrect/adam.hpp"
#include "rsrect/losses.hpp"
#include "rsrect/motion.hpp"

namespace rsrect {

struct RunConfig {
  int r = 64;
  uint64_t seed = 1;
  MotionRanges ranges;  // defaults: 10 px, 4 deg
  LossWeights weights;
  AdamConfig adam;
  std::string dataset_dir = "dataset";
  std::string checkpoint = "model.ckpt";
  std::string out_dir = ".";
  int degree = 3;   // trajectory fit degree in the learned path
  int threads = 0;  // 0 = hardware concurrency
  int batch = 4;
  int epochs = 200;
  bool smooth_trajectory = true;
};

// Environment variable naming the default config file.
inline const char* config_env_var() { return "RSRECT_CONFIG"; }

// Parses a JSON config; unknown keys are rejected, absent keys keep their
// defaults from `base`.
RunConfig load_config(const std::string& path, const RunConfig& base = RunConfig());

}  // namespace rsrect
