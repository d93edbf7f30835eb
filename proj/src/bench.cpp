#include "kvshield/bench.hpp"

#include <json.hpp>

namespace kvshield {

std::uint64_t kv_cache_size(const KvSizeQuery& q) {
  if (q.kv_heads == 0 || q.head_dim == 0 || q.layer_num == 0 || q.seq_len == 0 ||
      q.scalar_bytes == 0)
    throw ShapeError("kv_cache_size: all query fields must be >= 1");
  return 2ull * q.kv_heads * q.head_dim * q.layer_num * q.seq_len * q.scalar_bytes;
}

namespace {

ModelConfig preset_config(std::size_t d_model, std::size_t num_heads, std::size_t head_dim,
                          std::size_t num_layers, std::size_t num_kv_heads) {
  ModelConfig cfg;
  cfg.d_model = d_model;
  cfg.num_heads = num_heads;
  cfg.head_dim = head_dim;
  cfg.num_layers = num_layers;
  cfg.num_kv_heads = num_kv_heads;
  cfg.precision = Precision::f32;
  return cfg;
}

}  // namespace

const std::vector<ModelPreset>& model_presets() {
  static const std::vector<ModelPreset> presets = {
      {"llama2-7b", preset_config(4096, 32, 128, 32, 32)},
      {"chatglm3-6b", preset_config(4096, 32, 128, 28, 2)},
      {"qwen2-7b", preset_config(3584, 28, 128, 28, 4)},
  };
  return presets;
}

const ModelPreset* find_model_preset(const std::string& name) {
  for (const auto& p : model_presets())
    if (p.name == name) return &p;
  return nullptr;
}

const std::vector<BudgetPreset>& budget_presets() {
  static const std::vector<BudgetPreset> presets = {
      {"rk3399", 32ull << 20},
      {"mt8173", 30ull << 20},
      {"hikey960", 16ull << 20},
      {"raspberry-pi-3", 15ull << 20},
  };
  return presets;
}

const BudgetPreset* find_budget_preset(const std::string& chip) {
  for (const auto& p : budget_presets())
    if (p.chip == chip) return &p;
  return nullptr;
}

const char* permute_method_name(PermuteMethod m) {
  return m == PermuteMethod::matrix_01 ? "matrix_01" : "gather";
}

const char* permute_target_name(PermuteTarget t) {
  return t == PermuteTarget::weight ? "permute_weight" : "permute_result";
}

std::string BenchRecord::to_json() const {
  nlohmann::json j{{"operation", permute_target_name(operation)},
                   {"d_model", d_model},
                   {"method", permute_method_name(method)},
                   {"repetitions", repetitions},
                   {"mean_s", mean_s},
                   {"min_s", min_s},
                   {"max_s", max_s}};
  return j.dump();
}

std::string ChunkedBenchRecord::to_json() const {
  nlohmann::json j{{"operation", "permute_weight_chunked"},
                   {"d_model", d_model},
                   {"chunk_rows", chunk_rows},
                   {"repetitions", repetitions},
                   {"mean_s", mean_s},
                   {"min_s", min_s},
                   {"max_s", max_s}};
  return j.dump();
}

BenchRecord bench_record_from_json(const std::string& line) {
  const auto j = nlohmann::json::parse(line);
  BenchRecord rec;
  rec.operation = j.at("operation").get<std::string>() == "permute_weight"
                      ? PermuteTarget::weight
                      : PermuteTarget::result;
  rec.d_model = j.at("d_model").get<std::size_t>();
  rec.method = j.at("method").get<std::string>() == "matrix_01" ? PermuteMethod::matrix_01
                                                                : PermuteMethod::gather;
  rec.repetitions = j.at("repetitions").get<std::size_t>();
  rec.mean_s = j.at("mean_s").get<double>();
  rec.min_s = j.at("min_s").get<double>();
  rec.max_s = j.at("max_s").get<double>();
  return rec;
}

namespace detail {

void check_bench_size(std::size_t d_model, PermuteMethod method, std::size_t scalar_size) {
  if (d_model == 0) throw ShapeError("bench_permute: d_model must be >= 1");
  // matrix_01 holds the input, the d x d 0/1 matrix and the product.
  const std::uint64_t cap = 4ull << 30;
  const std::uint64_t square = static_cast<std::uint64_t>(d_model) * d_model * scalar_size;
  if (method == PermuteMethod::matrix_01 && 3 * square > cap)
    throw RefusalError("bench_permute: d_model too large for the 0/1-matrix method");
  if (square > cap)
    throw RefusalError("bench_permute: d_model too large");
}

}  // namespace detail

}  // namespace kvshield
