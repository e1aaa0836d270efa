#pragma once

// The two learned blocks. The motion block maps an r x r x 3 image to two
// length-r vectors (per-row translation and rotation) through a shared
// 3-conv base and two conv+FC heads. The row block maps the image to an
// r x r grid of fractional source rows: a 5-conv residual added to the
// matrix A(i,j) = i. Every conv is followed by batch normalization; ReLU
// everywhere except the final output layers.

#include <array>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "json.hpp"
#include "rsrect/layers.hpp"

namespace rsrect {

template <typename T>
struct ConvStage {
  ConvLayer<T> conv;
  BatchNorm<T> bn;
  bool relu = true;
};

template <typename T>
struct MotionHead {
  std::array<ConvStage<T>, 3> convs;  // stride 2 each
  FCLayer<T> fc1, fc2;                // fc2 output length r, linear
};

template <typename T>
struct ModelParams {
  int r = 0;
  uint64_t init_seed = 0;
  std::array<ConvStage<T>, 3> base;
  MotionHead<T> tx_head, rz_head;
  std::array<ConvStage<T>, 5> row_block;

  static ModelParams<T> create(int r, uint64_t seed);
  static int head_spatial(int r) {
    int s = r;
    for (int i = 0; i < 3; ++i) s = ConvLayer<T>::out_size(s, 2);
    return s;
  }
};

namespace detail {
constexpr int kBaseCh[4] = {3, 16, 32, 32};
constexpr int kHeadCh[4] = {32, 32, 16, 8};
constexpr int kRowCh[6] = {3, 16, 32, 32, 16, 1};
constexpr int kFcHidden = 256;
}  // namespace detail

template <typename T>
ModelParams<T> ModelParams<T>::create(int r, uint64_t seed) {
  if (r < 8) throw std::invalid_argument("ModelParams: r must be >= 8");
  ModelParams<T> m;
  m.r = r;
  m.init_seed = seed;
  Rng rng(mix_seed(seed, 0x6d6f64656c));
  auto make_stage = [&](int ic, int oc, int stride, bool relu) {
    ConvStage<T> st;
    st.conv = ConvLayer<T>(ic, oc, stride);
    st.conv.init_he(rng);
    st.bn = BatchNorm<T>(oc);
    st.relu = relu;
    return st;
  };
  for (int i = 0; i < 3; ++i) {
    m.base[i] = make_stage(detail::kBaseCh[i], detail::kBaseCh[i + 1], 1, true);
  }
  int hs = head_spatial(r);
  int feat = hs * hs * detail::kHeadCh[3];
  for (MotionHead<T>* head : {&m.tx_head, &m.rz_head}) {
    for (int i = 0; i < 3; ++i) {
      head->convs[i] = make_stage(detail::kHeadCh[i], detail::kHeadCh[i + 1], 2, true);
    }
    head->fc1 = FCLayer<T>(feat, detail::kFcHidden);
    head->fc1.init_he(rng);
    head->fc2 = FCLayer<T>(detail::kFcHidden, r);
    head->fc2.init_he(rng);
  }
  for (int i = 0; i < 5; ++i) {
    m.row_block[i] = make_stage(detail::kRowCh[i], detail::kRowCh[i + 1], 1, i < 4);
  }
  return m;
}

// ---------------------------------------------------------------------------
// gradient mirrors

template <typename T>
struct StageGrads {
  ConvGrads<T> conv;
  BnGrads<T> bn;
};

template <typename T>
struct HeadGrads {
  std::array<StageGrads<T>, 3> convs;
  FCGrads<T> fc1, fc2;
};

template <typename T>
struct ModelGrads {
  std::array<StageGrads<T>, 3> base;
  HeadGrads<T> tx_head, rz_head;
  std::array<StageGrads<T>, 5> row_block;

  explicit ModelGrads(const ModelParams<T>& m) {
    auto size_stage = [](StageGrads<T>& g, const ConvStage<T>& st) {
      g.conv.kernel.assign(st.conv.kernel.size(), T(0));
      g.conv.bias.assign(st.conv.bias.size(), T(0));
      g.bn.gamma.assign(st.bn.gamma.size(), T(0));
      g.bn.beta.assign(st.bn.beta.size(), T(0));
    };
    for (int i = 0; i < 3; ++i) size_stage(base[i], m.base[i]);
    for (int i = 0; i < 5; ++i) size_stage(row_block[i], m.row_block[i]);
    auto size_head = [&](HeadGrads<T>& g, const MotionHead<T>& h) {
      for (int i = 0; i < 3; ++i) size_stage(g.convs[i], h.convs[i]);
      g.fc1.weight.assign(h.fc1.weight.size(), T(0));
      g.fc1.bias.assign(h.fc1.bias.size(), T(0));
      g.fc2.weight.assign(h.fc2.weight.size(), T(0));
      g.fc2.bias.assign(h.fc2.bias.size(), T(0));
    };
    size_head(tx_head, m.tx_head);
    size_head(rz_head, m.rz_head);
  }
};

// ---------------------------------------------------------------------------
// parameter enumeration (fixed order shared by the optimizer, checkpoints,
// and gradient checks)

template <typename T>
struct ParamRef {
  std::string name;
  std::vector<T>* values;
};

namespace detail {

template <typename T>
void list_stage(const std::string& prefix, ConvStage<T>& st, bool with_running,
                std::vector<ParamRef<T>>& out) {
  out.push_back({prefix + ".kernel", &st.conv.kernel});
  out.push_back({prefix + ".bias", &st.conv.bias});
  out.push_back({prefix + ".bn.gamma", &st.bn.gamma});
  out.push_back({prefix + ".bn.beta", &st.bn.beta});
  if (with_running) {
    out.push_back({prefix + ".bn.run_mean", &st.bn.run_mean});
    out.push_back({prefix + ".bn.run_var", &st.bn.run_var});
  }
}

template <typename T>
void list_stage_grads(const std::string& prefix, StageGrads<T>& g, std::vector<ParamRef<T>>& out) {
  out.push_back({prefix + ".kernel", &g.conv.kernel});
  out.push_back({prefix + ".bias", &g.conv.bias});
  out.push_back({prefix + ".bn.gamma", &g.bn.gamma});
  out.push_back({prefix + ".bn.beta", &g.bn.beta});
}

}  // namespace detail

template <typename T>
std::vector<ParamRef<T>> param_list(ModelParams<T>& m, bool with_running = false) {
  std::vector<ParamRef<T>> out;
  for (int i = 0; i < 3; ++i) detail::list_stage("base" + std::to_string(i), m.base[i], with_running, out);
  const char* head_names[2] = {"tx_head", "rz_head"};
  MotionHead<T>* heads[2] = {&m.tx_head, &m.rz_head};
  for (int hidx = 0; hidx < 2; ++hidx) {
    std::string hn = head_names[hidx];
    for (int i = 0; i < 3; ++i) {
      detail::list_stage(hn + ".conv" + std::to_string(i), heads[hidx]->convs[i], with_running, out);
    }
    out.push_back({hn + ".fc1.weight", &heads[hidx]->fc1.weight});
    out.push_back({hn + ".fc1.bias", &heads[hidx]->fc1.bias});
    out.push_back({hn + ".fc2.weight", &heads[hidx]->fc2.weight});
    out.push_back({hn + ".fc2.bias", &heads[hidx]->fc2.bias});
  }
  for (int i = 0; i < 5; ++i) detail::list_stage("row" + std::to_string(i), m.row_block[i], with_running, out);
  return out;
}

template <typename T>
std::vector<ParamRef<T>> grad_list(ModelGrads<T>& g) {
  std::vector<ParamRef<T>> out;
  for (int i = 0; i < 3; ++i) detail::list_stage_grads("base" + std::to_string(i), g.base[i], out);
  const char* head_names[2] = {"tx_head", "rz_head"};
  HeadGrads<T>* heads[2] = {&g.tx_head, &g.rz_head};
  for (int hidx = 0; hidx < 2; ++hidx) {
    std::string hn = head_names[hidx];
    for (int i = 0; i < 3; ++i) detail::list_stage_grads(hn + ".conv" + std::to_string(i), heads[hidx]->convs[i], out);
    out.push_back({hn + ".fc1.weight", &heads[hidx]->fc1.weight});
    out.push_back({hn + ".fc1.bias", &heads[hidx]->fc1.bias});
    out.push_back({hn + ".fc2.weight", &heads[hidx]->fc2.weight});
    out.push_back({hn + ".fc2.bias", &heads[hidx]->fc2.bias});
  }
  for (int i = 0; i < 5; ++i) detail::list_stage_grads("row" + std::to_string(i), g.row_block[i], out);
  return out;
}

// ---------------------------------------------------------------------------
// forward / backward

template <typename T>
struct StageCache {
  Tensor<T> conv_in;
  BnCache<T> bn;
  Tensor<T> relu_in;  // bn output, kept only when the stage has a ReLU
};

template <typename T>
Tensor<T> stage_fwd(ConvStage<T>& st, const Tensor<T>& in, bool training, StageCache<T>* cache) {
  Tensor<T> z = conv2d_fwd(st.conv, in);
  Tensor<T> b = batchnorm_fwd(st.bn, z, training, cache ? &cache->bn : nullptr);
  if (cache) cache->conv_in = in;
  if (!st.relu) return b;
  if (cache) cache->relu_in = b;
  return relu_fwd(b);
}

template <typename T>
Tensor<T> stage_bwd(const ConvStage<T>& st, const StageCache<T>& cache, const Tensor<T>& gout,
                    StageGrads<T>& g) {
  Tensor<T> gb = st.relu ? relu_bwd(cache.relu_in, gout) : gout;
  Tensor<T> gz;
  batchnorm_bwd(st.bn, cache.bn, gb, gz, g.bn);
  Tensor<T> gin;
  conv2d_bwd(st.conv, cache.conv_in, gz, gin, g.conv);
  return gin;
}

template <typename T>
struct HeadCache {
  std::array<StageCache<T>, 3> convs;
  Tensor<T> fc1_in;   // conv3 output
  Tensor<T> fc1_out;  // pre-ReLU
  Tensor<T> fc2_in;   // post-ReLU
};

template <typename T>
Tensor<T> head_fwd(MotionHead<T>& head, const Tensor<T>& features, bool training,
                   HeadCache<T>* cache) {
  Tensor<T> x = features;
  for (int i = 0; i < 3; ++i) {
    x = stage_fwd(head.convs[i], x, training, cache ? &cache->convs[i] : nullptr);
  }
  if (cache) cache->fc1_in = x;
  Tensor<T> h = fc_fwd(head.fc1, x);
  if (cache) cache->fc1_out = h;
  Tensor<T> hr = relu_fwd(h);
  if (cache) cache->fc2_in = hr;
  return fc_fwd(head.fc2, hr);
}

template <typename T>
Tensor<T> head_bwd(const MotionHead<T>& head, const HeadCache<T>& cache, const Tensor<T>& gout,
                   HeadGrads<T>& g) {
  Tensor<T> ghr;
  fc_bwd(head.fc2, cache.fc2_in, gout, ghr, g.fc2);
  Tensor<T> gh = relu_bwd(cache.fc1_out, ghr);
  Tensor<T> gx;
  fc_bwd(head.fc1, cache.fc1_in, gh, gx, g.fc1);
  for (int i = 2; i >= 0; --i) {
    gx = stage_bwd(head.convs[i], cache.convs[i], gx, g.convs[i]);
  }
  return gx;
}

template <typename T>
struct MotionBlockCache {
  std::array<StageCache<T>, 3> base;
  Tensor<T> features;  // base output feeding both heads
  HeadCache<T> tx, rz;
};

// img: (n, r, r, 3). Returns per-sample raw curves, shape (n, 1, 1, r) each.
template <typename T>
std::pair<Tensor<T>, Tensor<T>> motion_block_fwd(ModelParams<T>& m, const Tensor<T>& img,
                                                 bool training, MotionBlockCache<T>* cache) {
  if (img.h != m.r || img.w != m.r || img.c != 3) {
    throw std::invalid_argument("motion_block_fwd: input must be r x r x 3");
  }
  Tensor<T> x = img;
  for (int i = 0; i < 3; ++i) x = stage_fwd(m.base[i], x, training, cache ? &cache->base[i] : nullptr);
  if (cache) cache->features = x;
  Tensor<T> tx = head_fwd(m.tx_head, x, training, cache ? &cache->tx : nullptr);
  Tensor<T> rz = head_fwd(m.rz_head, x, training, cache ? &cache->rz : nullptr);
  return {std::move(tx), std::move(rz)};
}

template <typename T>
void motion_block_bwd(const ModelParams<T>& m, const MotionBlockCache<T>& cache,
                      const Tensor<T>& gtx, const Tensor<T>& grz, ModelGrads<T>& g) {
  Tensor<T> gf_tx = head_bwd(m.tx_head, cache.tx, gtx, g.tx_head);
  Tensor<T> gf_rz = head_bwd(m.rz_head, cache.rz, grz, g.rz_head);
  for (size_t i = 0; i < gf_tx.v.size(); ++i) gf_tx.v[i] += gf_rz.v[i];
  Tensor<T> gx = std::move(gf_tx);
  for (int i = 2; i >= 0; --i) gx = stage_bwd(m.base[i], cache.base[i], gx, g.base[i]);
}

template <typename T>
struct RowBlockCache {
  std::array<StageCache<T>, 5> stages;
  std::vector<uint8_t> unclamped;  // per output element
};

// img: (n, r, r, 3) -> fractional source rows (n, r, r, 1): A(i,j)=i plus
// the learned residual, clamped to [-r/2, 3r/2].
template <typename T>
Tensor<T> row_block_fwd(ModelParams<T>& m, const Tensor<T>& img, bool training,
                        RowBlockCache<T>* cache) {
  if (img.h != m.r || img.w != m.r || img.c != 3) {
    throw std::invalid_argument("row_block_fwd: input must be r x r x 3");
  }
  Tensor<T> x = img;
  for (int i = 0; i < 5; ++i) {
    x = stage_fwd(m.row_block[i], x, training, cache ? &cache->stages[i] : nullptr);
  }
  const T lo = T(-0.5) * T(m.r), hi = T(1.5) * T(m.r);
  if (cache) cache->unclamped.assign(x.v.size(), 1);
  for (int nn = 0; nn < x.n; ++nn) {
    for (int i = 0; i < x.h; ++i) {
      for (int j = 0; j < x.w; ++j) {
        T& v = x.at(nn, i, j, 0);
        v += T(i);
        if (v < lo || v > hi) {
          if (cache) cache->unclamped[((size_t(nn) * x.h + i) * x.w + j)] = 0;
          v = v < lo ? lo : hi;
        }
      }
    }
  }
  return x;
}

template <typename T>
void row_block_bwd(const ModelParams<T>& m, const RowBlockCache<T>& cache, const Tensor<T>& gout,
                   ModelGrads<T>& g) {
  Tensor<T> gx = gout;
  for (size_t i = 0; i < gx.v.size(); ++i) {
    if (!cache.unclamped[i]) gx.v[i] = T(0);
  }
  for (int i = 4; i >= 0; --i) gx = stage_bwd(m.row_block[i], cache.stages[i], gx, g.row_block[i]);
}

// ---------------------------------------------------------------------------
// checkpoints: one-line JSON header, then little-endian float32 payload in
// header-declared order

template <typename T>
void checkpoint_save(const std::string& path, ModelParams<T>& m) {
  auto refs = param_list(m, /*with_running=*/true);
  nlohmann::json header;
  header["format"] = 1;
  header["r"] = m.r;
  header["init_seed"] = m.init_seed;
  nlohmann::json tensors = nlohmann::json::array();
  for (auto& ref : refs) tensors.push_back({{"name", ref.name}, {"size", ref.values->size()}});
  header["tensors"] = tensors;
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write checkpoint: " + path);
  out << header.dump() << "\n";
  for (auto& ref : refs) {
    for (T x : *ref.values) {
      float f = float(x);
      uint32_t bits;
      std::memcpy(&bits, &f, 4);
      char le[4] = {char(bits & 0xff), char((bits >> 8) & 0xff), char((bits >> 16) & 0xff),
                    char((bits >> 24) & 0xff)};
      out.write(le, 4);
    }
  }
}

template <typename T>
ModelParams<T> checkpoint_load(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open checkpoint: " + path);
  std::string line;
  if (!std::getline(in, line)) throw std::runtime_error("checkpoint: missing header: " + path);
  nlohmann::json header = nlohmann::json::parse(line);
  if (header.at("format").get<int>() != 1) throw std::runtime_error("checkpoint: unknown format");
  int r = header.at("r").get<int>();
  uint64_t seed = header.at("init_seed").get<uint64_t>();
  ModelParams<T> m = ModelParams<T>::create(r, seed);
  auto refs = param_list(m, /*with_running=*/true);
  auto tensors = header.at("tensors");
  if (tensors.size() != refs.size()) throw std::runtime_error("checkpoint: tensor list mismatch");
  for (size_t t = 0; t < refs.size(); ++t) {
    if (tensors[t].at("name").get<std::string>() != refs[t].name ||
        tensors[t].at("size").get<size_t>() != refs[t].values->size()) {
      throw std::runtime_error("checkpoint: tensor mismatch at " + refs[t].name);
    }
    for (T& x : *refs[t].values) {
      char le[4];
      if (!in.read(le, 4)) throw std::runtime_error("checkpoint: truncated payload");
      uint32_t bits = uint32_t(uint8_t(le[0])) | (uint32_t(uint8_t(le[1])) << 8) |
                      (uint32_t(uint8_t(le[2])) << 16) | (uint32_t(uint8_t(le[3])) << 24);
      float f;
      std::memcpy(&f, &bits, 4);
      x = T(f);
    }
  }
  return m;
}

}  // namespace rsrect
