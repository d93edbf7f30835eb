#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "kvshield/bench.hpp"

using namespace kvshield;

TEST_CASE("kv_cache_size reproduces the published per-token sizes") {
  // LLaMA2-7B: 2 x 32 x 128 per layer, 32 layers -> 1 MiB per token
  CHECK(kv_cache_size({32, 128, 32, 1, 4}) == 1ull << 20);
  // ChatGLM3-6B: 2 x 2 x 128, 28 layers -> 56 KiB per token
  CHECK(kv_cache_size({2, 128, 28, 1, 4}) == 56ull << 10);
  // Qwen2-7B: 2 x 4 x 128, 28 layers -> 112 KiB per token
  CHECK(kv_cache_size({4, 128, 28, 1, 4}) == 112ull << 10);
}

TEST_CASE("kv_cache_size via the model presets") {
  auto query = [](const char* name, std::uint64_t seq) {
    const auto* p = find_model_preset(name);
    REQUIRE(p != nullptr);
    return kv_cache_size(
        {p->config.num_kv_heads, p->config.head_dim, p->config.num_layers, seq, 4});
  };
  CHECK(query("llama2-7b", 1) == 1ull << 20);
  CHECK(query("chatglm3-6b", 1) == 56ull << 10);
  CHECK(query("qwen2-7b", 1) == 112ull << 10);
  // a 1000-token conversation of LLaMA2-7B carries ~1000 MiB of KV
  CHECK(query("llama2-7b", 1000) == 1000ull << 20);
}

TEST_CASE("kv_cache_size is linear in seq_len and layer_num") {
  const KvSizeQuery base{8, 64, 16, 10, 4};
  const auto b = kv_cache_size(base);
  KvSizeQuery q = base;
  q.seq_len *= 2;
  CHECK(kv_cache_size(q) == 2 * b);
  q = base;
  q.layer_num *= 2;
  CHECK(kv_cache_size(q) == 2 * b);
}

TEST_CASE("kv_cache_size rejects zero fields") {
  CHECK_THROWS_AS(kv_cache_size({0, 128, 32, 1, 4}), ShapeError);
  CHECK_THROWS_AS(kv_cache_size({32, 128, 32, 0, 4}), ShapeError);
  CHECK_THROWS_AS(kv_cache_size({32, 128, 32, 1, 0}), ShapeError);
}

TEST_CASE("budget presets carry the published TZDRAM sizes") {
  REQUIRE(find_budget_preset("rk3399") != nullptr);
  CHECK(find_budget_preset("rk3399")->tzdram_bytes == 32ull << 20);
  CHECK(find_budget_preset("mt8173")->tzdram_bytes == 30ull << 20);
  CHECK(find_budget_preset("hikey960")->tzdram_bytes == 16ull << 20);
  CHECK(find_budget_preset("raspberry-pi-3")->tzdram_bytes == 15ull << 20);
  CHECK(find_budget_preset("no-such-chip") == nullptr);
}

TEST_CASE_TEMPLATE("bench_permute produces sane timing records", S, float, double) {
  const auto rec = bench_permute<S>(64, PermuteMethod::gather, PermuteTarget::weight,
                                    /*reps=*/8, /*warmup=*/2);
  CHECK(rec.d_model == 64);
  CHECK(rec.repetitions == 8);
  CHECK(rec.min_s >= 0.0);
  CHECK(rec.min_s <= rec.mean_s);
  CHECK(rec.mean_s <= rec.max_s);
}

TEST_CASE("bench_permute rejects bad arguments") {
  CHECK_THROWS_AS(bench_permute<float>(64, PermuteMethod::gather, PermuteTarget::weight, 0),
                  ShapeError);
  CHECK_THROWS_AS(
      bench_permute<double>(1u << 16, PermuteMethod::matrix_01, PermuteTarget::weight, 1),
      RefusalError);
}

TEST_CASE("gather beats the 0/1-matrix method and the gap grows with d") {
  auto min_time = [](std::size_t d, PermuteMethod m) {
    return bench_permute<float>(d, m, PermuteTarget::weight, /*reps=*/10, /*warmup=*/3).min_s;
  };
  const double ratio_small = min_time(64, PermuteMethod::matrix_01) /
                             min_time(64, PermuteMethod::gather);
  const double ratio_large = min_time(256, PermuteMethod::matrix_01) /
                             min_time(256, PermuteMethod::gather);
  CHECK(ratio_small > 1.0);   // O(d^3) matmul vs O(d^2) gather
  CHECK(ratio_large > ratio_small);
}

TEST_CASE("permuting a result vector is cheaper than permuting a weight matrix") {
  const auto weight = bench_permute<float>(256, PermuteMethod::gather, PermuteTarget::weight,
                                           /*reps=*/10, /*warmup=*/3);
  const auto result = bench_permute<float>(256, PermuteMethod::gather, PermuteTarget::result,
                                           /*reps=*/10, /*warmup=*/3);
  CHECK(result.min_s < weight.min_s);
}

TEST_CASE("chunked weight permutation is timed separately and stays correct") {
  const auto rec = bench_permute_chunked<float>(128, /*chunk_rows=*/16, /*reps=*/5,
                                                /*warmup=*/1);
  CHECK(rec.d_model == 128);
  CHECK(rec.chunk_rows == 16);
  CHECK(rec.min_s >= 0.0);
  CHECK(rec.min_s <= rec.mean_s);
  CHECK(rec.mean_s <= rec.max_s);
  CHECK(rec.to_json().find("permute_weight_chunked") != std::string::npos);
  CHECK_THROWS_AS(bench_permute_chunked<float>(128, 0, 5), ShapeError);
}

TEST_CASE("timed permutation values are seed-deterministic across runs") {
  Rng rng_a(5), rng_b(5);
  const auto in_a = random_matrix<float>(rng_a, 32, 32);
  const auto in_b = random_matrix<float>(rng_b, 32, 32);
  const auto key = generate_key(5, 32);
  CHECK(bit_equal(apply_columns(in_a, key), apply_columns(in_b, key)));
}

TEST_CASE("bench records round-trip through JSON") {
  const auto rec = bench_permute<float>(32, PermuteMethod::matrix_01, PermuteTarget::result,
                                        /*reps=*/3, /*warmup=*/1);
  const auto parsed = bench_record_from_json(rec.to_json());
  CHECK(parsed.operation == rec.operation);
  CHECK(parsed.d_model == rec.d_model);
  CHECK(parsed.method == rec.method);
  CHECK(parsed.repetitions == rec.repetitions);
  CHECK(parsed.mean_s == rec.mean_s);
  CHECK(parsed.min_s == rec.min_s);
  CHECK(parsed.max_s == rec.max_s);
}
