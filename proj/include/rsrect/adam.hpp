#pragma once

// ADAM with bias correction. Moment buffers are kept per parameter group in
// the shared enumeration order, so optimizer state survives checkpointing a
// model and re-listing its parameters.

#include <cmath>
#include <stdexcept>
#include <string>
#include <vector>

#include "rsrect/model.hpp"

namespace rsrect {

struct AdamConfig {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.99;
  double eps = 1e-8;
};

template <typename T>
struct AdamState {
  int64_t step = 0;
  std::vector<std::vector<double>> m, v;

  void init(const std::vector<ParamRef<T>>& params) {
    step = 0;
    m.clear();
    v.clear();
    for (const auto& p : params) {
      m.emplace_back(p.values->size(), 0.0);
      v.emplace_back(p.values->size(), 0.0);
    }
  }
};

template <typename T>
void adam_step(const AdamConfig& cfg, AdamState<T>& st, std::vector<ParamRef<T>>& params,
               std::vector<ParamRef<T>>& grads) {
  if (params.size() != grads.size()) throw std::invalid_argument("adam_step: list size mismatch");
  if (st.m.size() != params.size()) st.init(params);
  st.step += 1;
  double bc1 = 1.0 - std::pow(cfg.beta1, double(st.step));
  double bc2 = 1.0 - std::pow(cfg.beta2, double(st.step));
  for (size_t p = 0; p < params.size(); ++p) {
    std::vector<T>& w = *params[p].values;
    const std::vector<T>& g = *grads[p].values;
    if (w.size() != g.size()) {
      throw std::invalid_argument("adam_step: size mismatch in " + params[p].name);
    }
    std::vector<double>& mp = st.m[p];
    std::vector<double>& vp = st.v[p];
    for (size_t i = 0; i < w.size(); ++i) {
      double gi = double(g[i]);
      if (!std::isfinite(gi)) {
        throw std::runtime_error("adam_step: non-finite gradient in " + params[p].name);
      }
      mp[i] = cfg.beta1 * mp[i] + (1.0 - cfg.beta1) * gi;
      vp[i] = cfg.beta2 * vp[i] + (1.0 - cfg.beta2) * gi * gi;
      double mhat = mp[i] / bc1;
      double vhat = vp[i] / bc2;
      w[i] = T(double(w[i]) - cfg.lr * mhat / (std::sqrt(vhat) + cfg.eps));
    }
  }
}

}  // namespace rsrect
