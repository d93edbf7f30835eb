#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "kvshield/attention.hpp"
#include "kvshield/keystore.hpp"
#include "kvshield/permutation.hpp"

namespace kvshield {

// ── Two-world partition ──────────────────────────────────────────────────
//
// The TEE is simulated as an in-process partition with an auditable channel:
//
//   secure world (SecureWorldContext)     insecure world (InsecureWorldState)
//   ----------------------------------    -----------------------------------
//   per-layer PermutationKey              permuted w_q/w_k/w_v (w_o plain)
//   trusted-memory budget accountant      permuted KV cache
//   inverse permutation of a^p            q^p/k^p/v^p projections, softmax,
//                                         attention output a^p
//
// Init: each layer's q/k/v weight columns are permuted under that layer's
// key, block by block so the secure working set stays inside the budget.
// The permuted copies are the only weights the insecure world ever holds.
//
// Runtime, per layer per token: the insecure world projects, appends to the
// permuted cache and computes the permuted attention output a^p; a^p crosses
// to the secure world, is inverse-permuted to a, and a crosses back. Those
// two activation rows are the only per-token traffic on the channel.
//
// The contract is structural: no operation of InsecureWorldState returns or
// stores a key or an unpermuted K/V row, so a leak of everything the
// insecure world holds yields only permuted data.

// Tracks simulated trusted-memory use. Persistent bytes model what stays
// resident in the TEE (the keys); transient bytes model per-operation
// working sets. Any charge that would exceed the budget throws.
class BudgetAccountant {
 public:
  explicit BudgetAccountant(std::uint64_t budget_bytes) : budget_(budget_bytes) {}

  void add_persistent(std::uint64_t bytes);
  void charge(std::uint64_t bytes);
  void release(std::uint64_t bytes);

  std::uint64_t budget() const { return budget_; }
  std::uint64_t current() const { return persistent_ + transient_; }
  std::uint64_t peak() const { return peak_; }

 private:
  std::uint64_t budget_ = 0;
  std::uint64_t persistent_ = 0;
  std::uint64_t transient_ = 0;
  std::uint64_t peak_ = 0;
};

// Keystore plus budget; the only place inverse permutation happens.
class SecureWorldContext {
 public:
  explicit SecureWorldContext(std::uint64_t budget_bytes, std::size_t chunk_rows = 0)
      : chunk_rows_(chunk_rows), accountant_(budget_bytes) {}

  static SecureWorldContext from_keystore(const Keystore& ks, std::uint64_t budget_bytes,
                                          std::size_t chunk_rows = 0);

  void install_key(PermutationKey key);  // appends as the next layer's key
  const PermutationKey& key(std::size_t layer) const;
  std::size_t num_keys() const { return keys_.size(); }

  std::size_t chunk_rows() const { return chunk_rows_; }
  BudgetAccountant& accountant() { return accountant_; }
  const BudgetAccountant& accountant() const { return accountant_; }

  Keystore export_keystore(const std::string& model_id) const;

 private:
  std::vector<PermutationKey> keys_;
  std::size_t chunk_rows_ = 0;  // 0 = derive from the budget at init
  BudgetAccountant accountant_;
};

enum class Direction { insecure_to_secure, secure_to_insecure };
enum class PayloadKind { permuted_weights, activation };

const char* direction_name(Direction d);
const char* payload_kind_name(PayloadKind k);

struct ChannelEntry {
  std::size_t step = 0;
  std::size_t layer = 0;
  Direction direction = Direction::insecure_to_secure;
  PayloadKind kind = PayloadKind::activation;
  std::uint64_t bytes = 0;
};

// Audit log of every secure<->insecure transfer.
class WorldChannel {
 public:
  void record(const ChannelEntry& e) { entries_.push_back(e); }
  const std::vector<ChannelEntry>& entries() const { return entries_; }

  std::size_t activation_transfers(std::size_t layer, std::size_t step) const;
  std::string to_jsonl() const;
  void export_jsonl(const std::string& path) const;

 private:
  std::vector<ChannelEntry> entries_;
};

enum class EngineKind { plain, shielded };

inline const char* engine_kind_name(EngineKind k) {
  return k == EngineKind::plain ? "plain" : "shielded";
}

// The attacker's view: whatever KV the leaked world held, copied verbatim.
template <typename Scalar>
struct LeakSnapshot {
  std::size_t layer = 0;
  Mat<Scalar> k_leaked;
  Mat<Scalar> v_leaked;
  EngineKind engine_kind = EngineKind::plain;

  bool empty() const { return k_leaked.rows == 0; }
  std::size_t seq_len() const { return k_leaked.rows; }
};

// Copies exactly what the given cache holds at `layer`; never touches any
// key. An empty cache yields the empty-snapshot marker.
template <typename Scalar>
LeakSnapshot<Scalar> leak_kv(const KVCache<Scalar>& cache, std::size_t layer) {
  LeakSnapshot<Scalar> snap;
  snap.layer = layer;
  snap.k_leaked = cache.k(layer);
  snap.v_leaked = cache.v(layer);
  snap.engine_kind = cache.permuted() ? EngineKind::shielded : EngineKind::plain;
  return snap;
}

// Everything the insecure world holds. Holds no PermutationKey and no
// plaintext K/V by construction.
template <typename Scalar>
struct InsecureWorldState {
  ModelConfig cfg;
  std::vector<AttentionWeights<Scalar>> weights;  // permuted == true
  KVCache<Scalar> cache;                          // permuted == true
  Mat<Scalar> scratch_attention;                  // last a^p handed to the TEE

  // Enumerates every matrix reachable from this state, for structural
  // leakage audits.
  template <typename Fn>
  void visit_matrices(Fn&& fn) const {
    for (std::size_t l = 0; l < weights.size(); ++l) {
      fn("w_q[" + std::to_string(l) + "]", weights[l].w_q);
      fn("w_k[" + std::to_string(l) + "]", weights[l].w_k);
      fn("w_v[" + std::to_string(l) + "]", weights[l].w_v);
      if (weights[l].w_o) fn("w_o[" + std::to_string(l) + "]", *weights[l].w_o);
    }
    for (std::size_t l = 0; l < cache.num_layers(); ++l) {
      fn("cache.K[" + std::to_string(l) + "]", cache.k(l));
      fn("cache.V[" + std::to_string(l) + "]", cache.v(l));
    }
    if (!scratch_attention.empty()) fn("scratch_attention", scratch_attention);
  }
};

// Largest row block whose init working set (block + permuted block) fits
// half the budget; throws if even one row does not fit the whole budget.
std::size_t default_chunk_rows(std::size_t d_model, std::size_t scalar_size,
                               std::uint64_t budget_bytes);

// Column-permutes a weight matrix block by block, charging each block's
// working set (source block + permuted block) to the accountant.
template <typename Scalar>
Mat<Scalar> permute_weight_chunked(const Mat<Scalar>& w, const PermutationKey& key,
                                   std::size_t chunk_rows, BudgetAccountant& acct) {
  if (chunk_rows == 0) throw BudgetError("permute_weight_chunked: chunk_rows must be >= 1");
  Mat<Scalar> out(w.rows, w.cols);
  for (std::size_t r0 = 0; r0 < w.rows; r0 += chunk_rows) {
    const std::size_t nrows = std::min(chunk_rows, w.rows - r0);
    const std::uint64_t block_bytes =
        static_cast<std::uint64_t>(nrows) * w.cols * sizeof(Scalar);
    acct.charge(2 * block_bytes);
    for (std::size_t i = r0; i < r0 + nrows; ++i) {
      const Scalar* src = &w.data[i * w.cols];
      Scalar* dst = &out.data[i * w.cols];
      for (std::size_t j = 0; j < w.cols; ++j) dst[j] = src[key.map()[j]];
    }
    acct.release(2 * block_bytes);
  }
  return out;
}

// Init phase: permute each layer's q/k/v weight columns under that layer's
// key inside the secure world, release the plaintext weights, and hand the
// permuted copies to the insecure world. Keys stay in ctx only.
template <typename Scalar>
InsecureWorldState<Scalar> shield_init_with_keys(std::vector<AttentionWeights<Scalar>> w_plain,
                                                 std::vector<PermutationKey> keys,
                                                 const ModelConfig& cfg, SecureWorldContext& ctx,
                                                 WorldChannel& channel) {
  cfg.validate_for_engine();
  if (w_plain.size() != cfg.num_layers || keys.size() != cfg.num_layers)
    throw ShapeError("shield_init: need one weight set and one key per layer");
  if (ctx.num_keys() != 0)
    throw WorldMismatchError("shield_init: secure context already holds keys");

  const std::uint64_t weight_bytes =
      static_cast<std::uint64_t>(cfg.d_model) * cfg.d_model * sizeof(Scalar);
  const std::size_t chunk = ctx.chunk_rows() != 0
                                ? ctx.chunk_rows()
                                : default_chunk_rows(cfg.d_model, sizeof(Scalar),
                                                     ctx.accountant().budget());

  InsecureWorldState<Scalar> world;
  world.cfg = cfg;
  world.cache = KVCache<Scalar>(cfg.num_layers, cfg.d_model, /*permuted=*/true);
  world.weights.reserve(cfg.num_layers);

  for (std::size_t layer = 0; layer < cfg.num_layers; ++layer) {
    AttentionWeights<Scalar>& w = w_plain[layer];
    if (w.permuted) throw WorldMismatchError("shield_init: weights already permuted");
    if (w.w_q.rows != cfg.d_model || w.w_q.cols != cfg.d_model)
      throw ShapeError("shield_init: weight dims do not match the config");
    if (keys[layer].dim() != cfg.d_model)
      throw ShapeError("shield_init: key dim does not match d_model");

    ctx.install_key(std::move(keys[layer]));
    const PermutationKey& key = ctx.key(layer);

    AttentionWeights<Scalar> wp;
    wp.w_q = permute_weight_chunked(w.w_q, key, chunk, ctx.accountant());
    wp.w_k = permute_weight_chunked(w.w_k, key, chunk, ctx.accountant());
    wp.w_v = permute_weight_chunked(w.w_v, key, chunk, ctx.accountant());
    wp.w_o = std::move(w.w_o);  // applied after inverse permutation; never permuted
    wp.permuted = true;
    world.weights.push_back(std::move(wp));

    channel.record({0, layer, Direction::secure_to_insecure, PayloadKind::permuted_weights,
                    weight_bytes});
    channel.record({0, layer, Direction::secure_to_insecure, PayloadKind::permuted_weights,
                    weight_bytes});
    channel.record({0, layer, Direction::secure_to_insecure, PayloadKind::permuted_weights,
                    weight_bytes});

    w = AttentionWeights<Scalar>{};  // plaintext weights released
  }
  return world;
}

template <typename Scalar>
InsecureWorldState<Scalar> shield_init(std::vector<AttentionWeights<Scalar>> w_plain,
                                       const std::vector<std::uint64_t>& seeds,
                                       const ModelConfig& cfg, SecureWorldContext& ctx,
                                       WorldChannel& channel) {
  if (seeds.size() != cfg.num_layers)
    throw ShapeError("shield_init: need one seed per layer");
  std::vector<PermutationKey> keys;
  keys.reserve(seeds.size());
  for (const auto s : seeds)
    keys.push_back(generate_head_aligned_key(s, cfg.num_heads, cfg.head_dim));
  return shield_init_with_keys(std::move(w_plain), std::move(keys), cfg, ctx, channel);
}

// Runtime phase, one layer of one token. The insecure world computes
// q^p/k^p/v^p, grows the permuted cache and produces a^p; the secure world
// inverse-permutes a^p to a. Exactly one transfer each way is logged.
template <typename Scalar>
Mat<Scalar> shielded_decode_step(const Mat<Scalar>& x, InsecureWorldState<Scalar>& world,
                                 SecureWorldContext& ctx, WorldChannel& channel,
                                 std::size_t layer) {
  if (layer >= world.weights.size()) throw ShapeError("shielded_decode_step: layer out of range");
  const AttentionWeights<Scalar>& w = world.weights[layer];
  if (!w.permuted || !world.cache.permuted())
    throw WorldMismatchError("shielded_decode_step: plain data in the shielded path");

  // insecure world
  auto [qp, kp, vp] = qkv_project(x, w);
  append_kv(world.cache, layer, kp, vp);
  Mat<Scalar> ap =
      scaled_dot_attention(qp, world.cache.k(layer), world.cache.v(layer), world.cfg.num_heads);
  world.scratch_attention = ap;

  const std::size_t step = world.cache.rows(layer) - 1;
  const std::uint64_t row_bytes = static_cast<std::uint64_t>(world.cfg.d_model) * sizeof(Scalar);
  channel.record({step, layer, Direction::insecure_to_secure, PayloadKind::activation, row_bytes});

  // secure world: undo the column permutation; working set is a^p plus a
  ctx.accountant().charge(2 * row_bytes);
  Mat<Scalar> a = apply_columns(ap, invert(ctx.key(layer)));
  ctx.accountant().release(2 * row_bytes);
  channel.record({step, layer, Direction::secure_to_insecure, PayloadKind::activation, row_bytes});

  if (w.w_o) a = matmul(a, *w.w_o);
  return a;
}

// Per-artifact trusted-memory feasibility (attention vector, one weight
// matrix, whole-model KV at a given sequence length).
struct BudgetEntry {
  std::string kind;
  std::uint64_t bytes = 0;
  bool fits = false;
  std::string note;
};

struct BudgetReport {
  std::uint64_t budget = 0;
  std::vector<BudgetEntry> entries;
};

BudgetReport budget_check(const ModelConfig& cfg, const SecureWorldContext& ctx,
                          std::size_t seq_len = 1000);

// Owns both worlds and the channel; drives the stacked shielded decoder.
template <typename Scalar>
class ShieldedSession {
 public:
  ShieldedSession(const ModelConfig& cfg, std::vector<AttentionWeights<Scalar>> plain_weights,
                  const std::vector<std::uint64_t>& seeds, std::uint64_t budget_bytes,
                  std::size_t chunk_rows = 0)
      : ctx_(budget_bytes, chunk_rows),
        world_(shield_init<Scalar>(std::move(plain_weights), seeds, cfg, ctx_, channel_)) {}

  // Test hook: run with caller-chosen keys (identity keys make the shield a
  // bit-exact no-op).
  ShieldedSession(const ModelConfig& cfg, std::vector<AttentionWeights<Scalar>> plain_weights,
                  std::vector<PermutationKey> keys, std::uint64_t budget_bytes,
                  std::size_t chunk_rows = 0)
      : ctx_(budget_bytes, chunk_rows),
        world_(shield_init_with_keys<Scalar>(std::move(plain_weights), std::move(keys), cfg,
                                             ctx_, channel_)) {}

  Mat<Scalar> step(const Mat<Scalar>& x) {
    Mat<Scalar> h = x;
    for (std::size_t layer = 0; layer < world_.cfg.num_layers; ++layer)
      h = shielded_decode_step(h, world_, ctx_, channel_, layer);
    return h;
  }

  const InsecureWorldState<Scalar>& world() const { return world_; }
  InsecureWorldState<Scalar>& world() { return world_; }
  SecureWorldContext& ctx() { return ctx_; }
  const SecureWorldContext& ctx() const { return ctx_; }
  WorldChannel& channel() { return channel_; }
  const WorldChannel& channel() const { return channel_; }

 private:
  SecureWorldContext ctx_;
  WorldChannel channel_;
  InsecureWorldState<Scalar> world_;
};

}  // namespace kvshield
