#pragma once

#include <cstddef>
#include <optional>
#include <string>
#include <tuple>
#include <vector>

#include "kvshield/matrix.hpp"

namespace kvshield {

enum class Precision { f32, f64 };

inline std::size_t scalar_bytes(Precision p) { return p == Precision::f32 ? 4 : 8; }
inline const char* precision_name(Precision p) { return p == Precision::f32 ? "f32" : "f64"; }

struct ModelConfig {
  std::size_t d_model = 0;
  std::size_t num_heads = 0;
  std::size_t head_dim = 0;
  std::size_t num_layers = 1;
  std::size_t num_kv_heads = 0;  // size calculator only; the engine is MHA (== num_heads)
  Precision precision = Precision::f32;

  void validate() const {
    if (d_model == 0 || num_heads == 0 || head_dim == 0 || num_layers == 0 || num_kv_heads == 0)
      throw ShapeError("ModelConfig: all counts must be >= 1");
    if (num_heads * head_dim != d_model)
      throw ShapeError("ModelConfig: num_heads * head_dim != d_model");
  }

  // The compute engine does not support grouped-query shapes.
  void validate_for_engine() const {
    validate();
    if (num_kv_heads != num_heads)
      throw ShapeError("ModelConfig: engine requires num_kv_heads == num_heads");
  }
};

inline ModelConfig make_config(std::size_t d_model, std::size_t num_heads,
                               std::size_t num_layers = 1,
                               Precision precision = Precision::f32) {
  ModelConfig cfg;
  cfg.d_model = d_model;
  cfg.num_heads = num_heads;
  cfg.head_dim = d_model / num_heads;
  cfg.num_layers = num_layers;
  cfg.num_kv_heads = num_heads;
  cfg.precision = precision;
  cfg.validate_for_engine();
  return cfg;
}

// Q/K/V (and optional output) projections of one layer. `permuted` records
// whether the column permutation has been applied to w_q/w_k/w_v; w_o is
// applied after the inverse permutation and is never permuted.
template <typename Scalar>
struct AttentionWeights {
  Mat<Scalar> w_q, w_k, w_v;
  std::optional<Mat<Scalar>> w_o;
  bool permuted = false;
};

// Per-layer growing K and V matrices. Each decode step appends exactly one
// row per layer; `permuted` marks which world's values these are.
template <typename Scalar>
class KVCache {
 public:
  KVCache() = default;
  KVCache(std::size_t num_layers, std::size_t d_model, bool permuted)
      : d_model_(d_model), permuted_(permuted) {
    layers_.resize(num_layers);
    for (auto& l : layers_) {
      l.k = Mat<Scalar>(0, d_model);
      l.v = Mat<Scalar>(0, d_model);
    }
  }

  std::size_t num_layers() const { return layers_.size(); }
  std::size_t d_model() const { return d_model_; }
  bool permuted() const { return permuted_; }
  std::size_t rows(std::size_t layer) const { return at(layer).k.rows; }

  const Mat<Scalar>& k(std::size_t layer) const { return at(layer).k; }
  const Mat<Scalar>& v(std::size_t layer) const { return at(layer).v; }

  void append(std::size_t layer, const Mat<Scalar>& k_row, const Mat<Scalar>& v_row) {
    auto& l = at_mut(layer);
    if (k_row.rows != 1 || v_row.rows != 1 || k_row.cols != d_model_ || v_row.cols != d_model_)
      throw ShapeError("KVCache::append: rows must be 1x" + std::to_string(d_model_));
    append_row(l.k, k_row);
    append_row(l.v, v_row);
  }

 private:
  struct LayerKV {
    Mat<Scalar> k, v;
  };

  const LayerKV& at(std::size_t layer) const {
    if (layer >= layers_.size()) throw ShapeError("KVCache: layer out of range");
    return layers_[layer];
  }
  LayerKV& at_mut(std::size_t layer) {
    if (layer >= layers_.size()) throw ShapeError("KVCache: layer out of range");
    return layers_[layer];
  }

  std::vector<LayerKV> layers_;
  std::size_t d_model_ = 0;
  bool permuted_ = false;
};

template <typename Scalar>
std::tuple<Mat<Scalar>, Mat<Scalar>, Mat<Scalar>> qkv_project(const Mat<Scalar>& x,
                                                              const AttentionWeights<Scalar>& w) {
  if (x.rows != 1 || x.cols != w.w_q.rows)
    throw ShapeError("qkv_project: x must be 1x" + std::to_string(w.w_q.rows));
  return {matmul(x, w.w_q), matmul(x, w.w_k), matmul(x, w.w_v)};
}

template <typename Scalar>
void append_kv(KVCache<Scalar>& cache, std::size_t layer, const Mat<Scalar>& k,
               const Mat<Scalar>& v) {
  cache.append(layer, k, v);
}

// Scaled dot-product attention of one query row over the cached rows, split
// per head: a_h = softmax(q_h K_h^T / sqrt(head_dim)) V_h, concatenated over
// heads. Causal masking is implicit: K and V hold only past rows.
template <typename Scalar>
Mat<Scalar> scaled_dot_attention(const Mat<Scalar>& q, const Mat<Scalar>& K,
                                 const Mat<Scalar>& V, std::size_t num_heads) {
  if (num_heads == 0) throw ShapeError("scaled_dot_attention: zero heads");
  const std::size_t d = q.cols;
  const std::size_t n = K.rows;
  if (q.rows != 1 || K.cols != d || V.cols != d || V.rows != n || n == 0)
    throw ShapeError("scaled_dot_attention: inconsistent shapes");
  if (d % num_heads != 0)
    throw ShapeError("scaled_dot_attention: d_model not divisible by num_heads");
  const std::size_t hd = d / num_heads;
  const Scalar inv_scale = Scalar(1) / std::sqrt(static_cast<Scalar>(hd));

  Mat<Scalar> out(1, d);
  for (std::size_t h = 0; h < num_heads; ++h) {
    const std::size_t off = h * hd;
    Mat<Scalar> scores(1, n);
    for (std::size_t i = 0; i < n; ++i) {
      Scalar acc = Scalar(0);
      for (std::size_t t = 0; t < hd; ++t) acc += q.at(0, off + t) * K.at(i, off + t);
      scores.at(0, i) = acc * inv_scale;
    }
    const Mat<Scalar> probs = row_softmax(scores);
    for (std::size_t i = 0; i < n; ++i) {
      const Scalar p = probs.at(0, i);
      for (std::size_t c = 0; c < hd; ++c) out.at(0, off + c) += p * V.at(i, off + c);
    }
  }
  return out;
}

// One autoregressive step of the unprotected engine: project, append to the
// cache, attend over the full cache, then the output projection if present.
template <typename Scalar>
Mat<Scalar> decode_step_plain(const Mat<Scalar>& x, const AttentionWeights<Scalar>& w,
                              KVCache<Scalar>& cache, std::size_t layer,
                              std::size_t num_heads) {
  if (w.permuted || cache.permuted())
    throw WorldMismatchError("decode_step_plain: permuted inputs in the plain path");
  auto [q, k, v] = qkv_project(x, w);
  append_kv(cache, layer, k, v);
  Mat<Scalar> a = scaled_dot_attention(q, cache.k(layer), cache.v(layer), num_heads);
  if (w.w_o) a = matmul(a, *w.w_o);
  return a;
}

// Stacked plain decoder: layer i+1 consumes layer i's attention output.
template <typename Scalar>
class PlainSession {
 public:
  PlainSession(ModelConfig cfg, std::vector<AttentionWeights<Scalar>> weights)
      : cfg_(cfg), weights_(std::move(weights)),
        cache_(cfg.num_layers, cfg.d_model, /*permuted=*/false) {
    cfg_.validate_for_engine();
    if (weights_.size() != cfg_.num_layers)
      throw ShapeError("PlainSession: need one weight set per layer");
  }

  Mat<Scalar> step(const Mat<Scalar>& x) {
    Mat<Scalar> h = x;
    for (std::size_t layer = 0; layer < cfg_.num_layers; ++layer)
      h = decode_step_plain(h, weights_[layer], cache_, layer, cfg_.num_heads);
    return h;
  }

  const ModelConfig& config() const { return cfg_; }
  const KVCache<Scalar>& cache() const { return cache_; }
  const std::vector<AttentionWeights<Scalar>>& weights() const { return weights_; }

 private:
  ModelConfig cfg_;
  std::vector<AttentionWeights<Scalar>> weights_;
  KVCache<Scalar> cache_;
};

// Seeded random weights for tests and demos, scaled 1/sqrt(d) so stacked
// projections neither blow up nor vanish.
template <typename Scalar>
std::vector<AttentionWeights<Scalar>> random_weights(std::uint64_t seed, const ModelConfig& cfg,
                                                     bool with_output_proj = true) {
  Rng rng(seed);
  const double s = 1.0 / std::sqrt(static_cast<double>(cfg.d_model));
  std::vector<AttentionWeights<Scalar>> out;
  out.reserve(cfg.num_layers);
  for (std::size_t layer = 0; layer < cfg.num_layers; ++layer) {
    AttentionWeights<Scalar> w;
    w.w_q = random_matrix<Scalar>(rng, cfg.d_model, cfg.d_model, -s, s);
    w.w_k = random_matrix<Scalar>(rng, cfg.d_model, cfg.d_model, -s, s);
    w.w_v = random_matrix<Scalar>(rng, cfg.d_model, cfg.d_model, -s, s);
    if (with_output_proj)
      w.w_o = random_matrix<Scalar>(rng, cfg.d_model, cfg.d_model, -s, s);
    out.push_back(std::move(w));
  }
  return out;
}

}  // namespace kvshield
