#pragma once

#include <chrono>
#include <cstdint>
#include <string>
#include <vector>

#include "kvshield/attention.hpp"
#include "kvshield/permutation.hpp"
#include "kvshield/shield.hpp"

namespace kvshield {

// K and V together, per token: 2 * kv_heads * head_dim scalars per layer.
struct KvSizeQuery {
  std::uint64_t kv_heads = 0;
  std::uint64_t head_dim = 0;
  std::uint64_t layer_num = 0;
  std::uint64_t seq_len = 0;
  std::uint64_t scalar_bytes = 4;
};

// Exact bytes: 2 * kv_heads * head_dim * layer_num * seq_len * scalar_bytes.
std::uint64_t kv_cache_size(const KvSizeQuery& q);

struct ModelPreset {
  std::string name;
  ModelConfig config;
};

// Published decoder shapes used by the size calculator and budget tables.
const std::vector<ModelPreset>& model_presets();
const ModelPreset* find_model_preset(const std::string& name);

struct BudgetPreset {
  std::string chip;
  std::uint64_t tzdram_bytes = 0;
};

// Trusted-memory capacities of common mobile SoCs.
const std::vector<BudgetPreset>& budget_presets();
const BudgetPreset* find_budget_preset(const std::string& chip);

enum class PermuteMethod { matrix_01, gather };
enum class PermuteTarget { weight, result };

const char* permute_method_name(PermuteMethod m);
const char* permute_target_name(PermuteTarget t);

struct BenchRecord {
  PermuteTarget operation = PermuteTarget::weight;
  std::size_t d_model = 0;
  PermuteMethod method = PermuteMethod::gather;
  std::size_t repetitions = 0;
  double mean_s = 0.0;
  double min_s = 0.0;
  double max_s = 0.0;

  std::string to_json() const;
};

BenchRecord bench_record_from_json(const std::string& line);

// Block-by-block weight permutation timing, reported separately from the
// unchunked gather because the secure-world init pays the blocking overhead.
struct ChunkedBenchRecord {
  std::size_t d_model = 0;
  std::size_t chunk_rows = 0;
  std::size_t repetitions = 0;
  double mean_s = 0.0;
  double min_s = 0.0;
  double max_s = 0.0;

  std::string to_json() const;
};

namespace detail {
// Guard: the 0/1-matrix path materializes two d x d buffers.
void check_bench_size(std::size_t d_model, PermuteMethod method, std::size_t scalar_size);
}  // namespace detail

// Times one permutation operation: a d x d weight (target=weight) or a 1 x d
// attention vector (target=result), permuted either by gather or by
// multiplying with the explicit 0/1 matrix. Both methods are verified
// bit-equal on the timed input before any timing is recorded.
template <typename Scalar>
BenchRecord bench_permute(std::size_t d_model, PermuteMethod method, PermuteTarget target,
                          std::size_t reps, std::size_t warmup = 5, std::uint64_t seed = 1) {
  if (reps == 0) throw ShapeError("bench_permute: reps must be >= 1");
  detail::check_bench_size(d_model, method, sizeof(Scalar));

  Rng rng(seed);
  const std::size_t rows = target == PermuteTarget::weight ? d_model : 1;
  const Mat<Scalar> input = random_matrix<Scalar>(rng, rows, d_model);
  const PermutationKey key = generate_key(seed, d_model);
  const Mat<Scalar> pm = to_matrix<Scalar>(key);

  if (!bit_equal(apply_columns(input, key), matmul(input, pm)))
    throw std::runtime_error("bench_permute: gather and 0/1-matrix paths disagree");

  volatile Scalar sink = Scalar(0);  // keep the permuted result live
  auto run_once = [&]() {
    if (method == PermuteMethod::gather) {
      const Mat<Scalar> out = apply_columns(input, key);
      sink = sink + out.data[0];
    } else {
      const Mat<Scalar> out = matmul(input, pm);
      sink = sink + out.data[0];
    }
  };

  for (std::size_t i = 0; i < warmup; ++i) run_once();

  BenchRecord rec;
  rec.operation = target;
  rec.d_model = d_model;
  rec.method = method;
  rec.repetitions = reps;
  rec.min_s = 1e300;
  double total = 0.0;
  for (std::size_t i = 0; i < reps; ++i) {
    const auto t0 = std::chrono::steady_clock::now();
    run_once();
    const auto t1 = std::chrono::steady_clock::now();
    const double s = std::chrono::duration<double>(t1 - t0).count();
    total += s;
    rec.min_s = std::min(rec.min_s, s);
    rec.max_s = std::max(rec.max_s, s);
  }
  rec.mean_s = total / static_cast<double>(reps);
  return rec;
}

template <typename Scalar>
ChunkedBenchRecord bench_permute_chunked(std::size_t d_model, std::size_t chunk_rows,
                                         std::size_t reps, std::size_t warmup = 5,
                                         std::uint64_t seed = 1) {
  if (reps == 0 || chunk_rows == 0)
    throw ShapeError("bench_permute_chunked: reps and chunk_rows must be >= 1");
  detail::check_bench_size(d_model, PermuteMethod::gather, sizeof(Scalar));

  Rng rng(seed);
  const Mat<Scalar> input = random_matrix<Scalar>(rng, d_model, d_model);
  const PermutationKey key = generate_key(seed, d_model);
  BudgetAccountant unlimited(~0ull);

  if (!bit_equal(permute_weight_chunked(input, key, chunk_rows, unlimited),
                 apply_columns(input, key)))
    throw std::runtime_error("bench_permute_chunked: chunked and whole-matrix paths disagree");

  volatile Scalar sink = Scalar(0);
  auto run_once = [&]() {
    const Mat<Scalar> out = permute_weight_chunked(input, key, chunk_rows, unlimited);
    sink = sink + out.data[0];
  };
  for (std::size_t i = 0; i < warmup; ++i) run_once();

  ChunkedBenchRecord rec;
  rec.d_model = d_model;
  rec.chunk_rows = chunk_rows;
  rec.repetitions = reps;
  rec.min_s = 1e300;
  double total = 0.0;
  for (std::size_t i = 0; i < reps; ++i) {
    const auto t0 = std::chrono::steady_clock::now();
    run_once();
    const auto t1 = std::chrono::steady_clock::now();
    const double s = std::chrono::duration<double>(t1 - t0).count();
    total += s;
    rec.min_s = std::min(rec.min_s, s);
    rec.max_s = std::max(rec.max_s, s);
  }
  rec.mean_s = total / static_cast<double>(reps);
  return rec;
}

}  // namespace kvshield
