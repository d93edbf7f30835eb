#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cstdio>
#include <sstream>

#include <json.hpp>

#include "kvshield/attack.hpp"
#include "kvshield/bench.hpp"
#include "kvshield/shield.hpp"
#include "oracles.hpp"

using namespace kvshield;

namespace {

template <typename S>
std::vector<PermutationKey> identity_keys(const ModelConfig& cfg) {
  return std::vector<PermutationKey>(cfg.num_layers, PermutationKey::identity(cfg.d_model));
}

constexpr std::uint64_t kMiB = 1ull << 20;

}  // namespace

TEST_CASE("budget accountant tracks peak and rejects overdrafts") {
  BudgetAccountant acct(100);
  acct.add_persistent(10);
  acct.charge(60);
  CHECK(acct.current() == 70);
  acct.release(60);
  CHECK(acct.current() == 10);
  CHECK(acct.peak() == 70);
  CHECK_THROWS_AS(acct.charge(95), BudgetError);
}

TEST_CASE("default chunk rows fit half the budget") {
  // one f32 row of d=4096 is 16 KiB; two blocks must fit 16 MiB
  CHECK(default_chunk_rows(4096, 4, 32 * kMiB) == 512);
  CHECK(default_chunk_rows(8, 8, 1024) == 4);
  CHECK_THROWS_AS(default_chunk_rows(4096, 4, 8 * 1024), BudgetError);
}

TEST_CASE_TEMPLATE("shield_init with identity keys is a no-op on the weights", S, float,
                   double) {
  const auto cfg = make_config(8, 2, 2);
  const auto plain = random_weights<S>(3, cfg);
  SecureWorldContext ctx(32 * kMiB);
  WorldChannel channel;
  const auto world =
      shield_init_with_keys<S>(plain, identity_keys<S>(cfg), cfg, ctx, channel);
  for (std::size_t l = 0; l < cfg.num_layers; ++l) {
    CHECK(world.weights[l].permuted);
    CHECK(bit_equal(world.weights[l].w_q, plain[l].w_q));
    CHECK(bit_equal(world.weights[l].w_k, plain[l].w_k));
    CHECK(bit_equal(world.weights[l].w_v, plain[l].w_v));
  }
}

TEST_CASE("shield_init permutes columns block-preservingly") {
  const auto cfg = make_config(8, 2);
  const auto plain = random_weights<double>(5, cfg);
  SecureWorldContext ctx(32 * kMiB);
  WorldChannel channel;
  const auto world = shield_init<double>(plain, {11}, cfg, ctx, channel);

  const auto& key = ctx.key(0);
  REQUIRE(key.head_layout().has_value());
  CHECK(preserves_head_blocks(key, *key.head_layout()));
  CHECK(oracle::columns_multiset_equal(world.weights[0].w_q, plain[0].w_q));
  CHECK(oracle::columns_multiset_equal(world.weights[0].w_k, plain[0].w_k));
  CHECK(oracle::columns_multiset_equal(world.weights[0].w_v, plain[0].w_v));
  // the permuted copy is the gather of the plaintext columns under the key
  CHECK(bit_equal(world.weights[0].w_q, apply_columns(plain[0].w_q, key)));
  // w_o crosses untouched
  CHECK(bit_equal(*world.weights[0].w_o, *plain[0].w_o));
}

TEST_CASE("4096-dim f32 weight permutation under 32 MiB requires chunking and stays inside") {
  ModelConfig cfg = make_config(4096, 32, 1);
  const std::uint64_t budget = 32 * kMiB;
  // the full matrix alone is 64 MiB, twice the budget
  CHECK(std::uint64_t(4096) * 4096 * sizeof(float) == 64 * kMiB);

  SecureWorldContext ctx(budget);  // chunk_rows derived from the budget
  WorldChannel channel;
  std::vector<AttentionWeights<float>> plain(1);
  plain[0].w_q = Mat<float>::identity(4096);
  plain[0].w_k = Mat<float>::identity(4096);
  plain[0].w_v = Mat<float>::identity(4096);
  CHECK_NOTHROW(shield_init<float>(std::move(plain), {1}, cfg, ctx, channel));
  CHECK(ctx.accountant().peak() <= budget);

  // a chunk whose working set exceeds the budget is rejected by the accountant
  SecureWorldContext big_chunk(budget, /*chunk_rows=*/4096);
  WorldChannel channel2;
  std::vector<AttentionWeights<float>> plain2(1);
  plain2[0].w_q = Mat<float>::identity(4096);
  plain2[0].w_k = Mat<float>::identity(4096);
  plain2[0].w_v = Mat<float>::identity(4096);
  CHECK_THROWS_AS(shield_init<float>(std::move(plain2), {1}, cfg, big_chunk, channel2),
                  BudgetError);
}

TEST_CASE_TEMPLATE("identity-key shielded decode is bit-exact against plain", S, float,
                   double) {
  const auto cfg = make_config(8, 2, 2);
  const auto weights = random_weights<S>(31, cfg);
  PlainSession<S> plain(cfg, weights);
  ShieldedSession<S> shielded(cfg, weights, identity_keys<S>(cfg), 32 * kMiB);

  Rng rng(32);
  for (int t = 0; t < 8; ++t) {
    const Mat<S> x = random_matrix<S>(rng, 1, cfg.d_model);
    CHECK(bit_equal(shielded.step(x), plain.step(x)));
  }
}

TEST_CASE_TEMPLATE("shielded decode matches plain decode for head-aligned keys", S, float,
                   double) {
  const double tol = sizeof(S) == 4 ? 1e-5 : 1e-12;
  for (const std::size_t d : {16u, 64u}) {
    for (const std::size_t heads : {1u, 2u, 4u}) {
      const auto cfg = make_config(d, heads, 2);
      const auto weights = random_weights<S>(d * 131 + heads, cfg);
      PlainSession<S> plain(cfg, weights);
      ShieldedSession<S> shielded(cfg, weights,
                                  std::vector<std::uint64_t>{d + heads, 2 * d + heads},
                                  32 * kMiB);
      Rng rng(d * 7 + heads);
      double worst = 0.0;
      for (int t = 0; t < 16; ++t) {
        const Mat<S> x = random_matrix<S>(rng, 1, cfg.d_model);
        worst = std::max(worst, max_abs_diff(shielded.step(x), plain.step(x)));
      }
      CAPTURE(d);
      CAPTURE(heads);
      CHECK(worst <= tol);
    }
  }
}

TEST_CASE("a non-head-aligned key breaks multi-head equivalence") {
  const auto cfg = make_config(16, 2);
  int broken = 0;
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    PermutationKey key = generate_key(seed, cfg.d_model);  // unconstrained d x d
    if (preserves_head_blocks(key, HeadLayout{cfg.num_heads, cfg.head_dim})) continue;

    const auto weights = random_weights<double>(seed + 100, cfg);
    PlainSession<double> plain(cfg, weights);
    ShieldedSession<double> shielded(cfg, weights, {key}, 32 * kMiB);
    Rng rng(seed + 200);
    double worst = 0.0;
    for (int t = 0; t < 4; ++t) {
      const MatD x = random_matrix<double>(rng, 1, cfg.d_model);
      worst = std::max(worst, max_abs_diff(shielded.step(x), plain.step(x)));
    }
    if (worst > 1e-2) ++broken;
  }
  CHECK(broken >= 9);
}

TEST_CASE("score invariance: permuted and plain attention scores agree") {
  const auto cfg = make_config(16, 2);
  const auto weights = random_weights<double>(55, cfg, /*with_output_proj=*/false);
  const auto key = generate_head_aligned_key(9, cfg.num_heads, cfg.head_dim);

  PlainSession<double> plain(cfg, weights);
  ShieldedSession<double> shielded(cfg, weights, {key}, 32 * kMiB);

  Rng rng(56);
  KVCache<double> plain_cache(1, cfg.d_model, false);
  for (int t = 0; t < 6; ++t) {
    const MatD x = random_matrix<double>(rng, 1, cfg.d_model);
    shielded.step(x);
    auto [q, k, v] = qkv_project(x, weights[0]);
    append_kv(plain_cache, 0, k, v);

    const MatD qp = apply_columns(q, key);
    const MatD scores_p = matmul(qp, transpose(shielded.world().cache.k(0)));
    const MatD scores = matmul(q, transpose(plain_cache.k(0)));
    CHECK(max_abs_diff(scores_p, scores) < 1e-12);
  }
}

TEST_CASE_TEMPLATE("leak_kv returns exactly what each world holds", S, float, double) {
  const auto cfg = make_config(8, 2);
  const auto weights = random_weights<S>(60, cfg);

  SUBCASE("plain engine leaks plaintext KV verbatim") {
    PlainSession<S> plain(cfg, weights);
    Rng rng(61);
    for (int t = 0; t < 4; ++t) plain.step(random_matrix<S>(rng, 1, cfg.d_model));
    const auto snap = leak_kv(plain.cache(), 0);
    CHECK(snap.engine_kind == EngineKind::plain);
    CHECK(bit_equal(snap.k_leaked, plain.cache().k(0)));
    CHECK(bit_equal(snap.v_leaked, plain.cache().v(0)));
  }

  SUBCASE("identity-key shielded leak equals the plaintext KV") {
    PlainSession<S> plain(cfg, weights);
    ShieldedSession<S> shielded(cfg, weights, identity_keys<S>(cfg), 32 * kMiB);
    Rng rng(62);
    for (int t = 0; t < 4; ++t) {
      const Mat<S> x = random_matrix<S>(rng, 1, cfg.d_model);
      plain.step(x);
      shielded.step(x);
    }
    const auto snap = leak_kv(shielded.world().cache, 0);
    CHECK(snap.engine_kind == EngineKind::shielded);
    CHECK(bit_equal(snap.k_leaked, plain.cache().k(0)));
  }

  SUBCASE("random-key shielded leak is a column shuffle of the plaintext KV") {
    PlainSession<S> plain(cfg, weights);
    ShieldedSession<S> shielded(cfg, weights, std::vector<std::uint64_t>{77}, 32 * kMiB);
    Rng rng(63);
    for (int t = 0; t < 4; ++t) {
      const Mat<S> x = random_matrix<S>(rng, 1, cfg.d_model);
      plain.step(x);
      shielded.step(x);
    }
    const auto snap = leak_kv(shielded.world().cache, 0);
    CHECK(oracle::columns_multiset_equal(snap.k_leaked, plain.cache().k(0)));
    CHECK(oracle::columns_multiset_equal(snap.v_leaked, plain.cache().v(0)));
    CHECK_FALSE(bit_equal(snap.k_leaked, plain.cache().k(0)));
  }

  SUBCASE("an empty cache leaks the empty-snapshot marker") {
    PlainSession<S> plain(cfg, weights);
    const auto snap = leak_kv(plain.cache(), 0);
    CHECK(snap.empty());
    CHECK(snap.seq_len() == 0);
  }
}

TEST_CASE("no plaintext K/V is reachable from the insecure world") {
  const auto cfg = make_config(16, 2, 2);
  const auto weights = random_weights<double>(70, cfg);
  PlainSession<double> plain(cfg, weights);
  ShieldedSession<double> shielded(cfg, weights, std::vector<std::uint64_t>{71, 72},
                                   32 * kMiB);

  Rng rng(73);
  for (int t = 0; t < 5; ++t) {
    const MatD x = random_matrix<double>(rng, 1, cfg.d_model);
    plain.step(x);
    shielded.step(x);
  }

  for (std::size_t l = 0; l < cfg.num_layers; ++l) {
    REQUIRE_FALSE(shielded.ctx().key(l).is_identity());
    const MatD& k_true = plain.cache().k(l);
    const MatD& v_true = plain.cache().v(l);
    shielded.world().visit_matrices([&](const std::string& name, const MatD& m) {
      if (m.same_shape(k_true)) {
        CAPTURE(name);
        CHECK(max_abs_diff(m, k_true) > 1e-9);
        CHECK(max_abs_diff(m, v_true) > 1e-9);
      }
    });
  }
}

TEST_CASE_TEMPLATE("channel carries exactly two activation rows per layer per token", S,
                   float, double) {
  const auto cfg = make_config(8, 2, 3);
  const auto weights = random_weights<S>(80, cfg);
  ShieldedSession<S> shielded(cfg, weights, std::vector<std::uint64_t>{1, 2, 3}, 32 * kMiB);

  Rng rng(81);
  const std::size_t tokens = 4;
  for (std::size_t t = 0; t < tokens; ++t) shielded.step(random_matrix<S>(rng, 1, cfg.d_model));

  for (std::size_t t = 0; t < tokens; ++t)
    for (std::size_t l = 0; l < cfg.num_layers; ++l)
      CHECK(shielded.channel().activation_transfers(l, t) == 2);

  std::size_t to_secure = 0, to_insecure = 0;
  for (const auto& e : shielded.channel().entries()) {
    if (e.kind != PayloadKind::activation) continue;
    CHECK(e.bytes == cfg.d_model * sizeof(S));
    (e.direction == Direction::insecure_to_secure ? to_secure : to_insecure) += 1;
  }
  CHECK(to_secure == tokens * cfg.num_layers);
  CHECK(to_insecure == tokens * cfg.num_layers);

  // jsonl export parses line by line
  std::istringstream lines(shielded.channel().to_jsonl());
  std::string line;
  std::size_t parsed = 0;
  while (std::getline(lines, line)) {
    const auto j = nlohmann::json::parse(line);
    CHECK(j.contains("direction"));
    ++parsed;
  }
  CHECK(parsed == shielded.channel().entries().size());
}

TEST_CASE("plain weights are rejected in the shielded path") {
  const auto cfg = make_config(8, 2);
  const auto weights = random_weights<double>(90, cfg);
  ShieldedSession<double> shielded(cfg, weights, identity_keys<double>(cfg), 32 * kMiB);
  shielded.world().weights[0].permuted = false;  // simulate a mixed-up world
  Rng rng(91);
  CHECK_THROWS_AS(shielded.step(random_matrix<double>(rng, 1, cfg.d_model)),
                  WorldMismatchError);
}

TEST_CASE("keystore round-trip drives an identical shielded session") {
  const auto cfg = make_config(8, 2, 2);
  const auto weights = random_weights<double>(95, cfg);
  ShieldedSession<double> first(cfg, weights, std::vector<std::uint64_t>{5, 6}, 32 * kMiB);

  const std::string path = "shield_keystore_test.json";
  save_keystore(first.ctx().export_keystore("toy"), path);
  const auto ks = load_keystore(path);
  SecureWorldContext restored = SecureWorldContext::from_keystore(ks, 32 * kMiB);
  CHECK(restored.num_keys() == 2);
  CHECK(restored.key(0) == first.ctx().key(0));
  CHECK(restored.key(1) == first.ctx().key(1));
  std::remove(path.c_str());
}

TEST_CASE("budget report flags what fits") {
  const auto* preset = find_model_preset("llama2-7b");
  REQUIRE(preset != nullptr);
  SecureWorldContext ctx(32 * kMiB);
  const BudgetReport report = budget_check(preset->config, ctx, /*seq_len=*/1000);

  REQUIRE(report.entries.size() == 3);
  CHECK(report.entries[0].kind == "attention_vector");
  CHECK(report.entries[0].bytes == 4096 * 4);  // 16 KiB
  CHECK(report.entries[0].fits);

  CHECK(report.entries[1].bytes == 64 * kMiB);
  CHECK_FALSE(report.entries[1].fits);
  CHECK(report.entries[1].note.find("chunking") != std::string::npos);

  // LLaMA2-7B at seq_len 1000: 1000 MiB of KV, far beyond any TZDRAM preset
  CHECK(report.entries[2].bytes == 1000 * kMiB);
  CHECK_FALSE(report.entries[2].fits);
}
