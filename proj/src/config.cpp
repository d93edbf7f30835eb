#include "kvshield/config.hpp"

#include <fstream>
#include <stdexcept>

#include <json.hpp>

#include "kvshield/bench.hpp"

namespace kvshield {

std::uint64_t RunConfig::budget_bytes() const {
  const BudgetPreset* p = find_budget_preset(budget_preset);
  if (!p) throw std::runtime_error("unknown budget preset: " + budget_preset);
  return p->tzdram_bytes;
}

RunConfig default_run_config() {
  RunConfig cfg;
  cfg.model = make_config(/*d_model=*/64, /*num_heads=*/4, /*num_layers=*/2, Precision::f32);
  return cfg;
}

RunConfig load_run_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("config: cannot read " + path);
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw std::runtime_error("config: malformed JSON in " + path + ": " + e.what());
  }

  RunConfig cfg = default_run_config();
  try {
    if (j.contains("model")) {
      const auto& m = j["model"];
      ModelConfig mc;
      mc.d_model = m.at("d_model").get<std::size_t>();
      mc.num_heads = m.at("num_heads").get<std::size_t>();
      mc.head_dim = m.contains("head_dim") ? m["head_dim"].get<std::size_t>()
                                           : mc.d_model / mc.num_heads;
      mc.num_layers = m.value("num_layers", std::size_t{1});
      mc.num_kv_heads = m.value("num_kv_heads", mc.num_heads);
      const std::string prec = m.value("precision", std::string("f32"));
      if (prec != "f32" && prec != "f64")
        throw std::runtime_error("config: precision must be f32 or f64");
      mc.precision = prec == "f32" ? Precision::f32 : Precision::f64;
      mc.validate();
      cfg.model = mc;
    }
    cfg.seed = j.value("seed", cfg.seed);
    if (j.contains("seeds")) {
      cfg.layer_seeds = j["seeds"].get<std::vector<std::uint64_t>>();
      if (!j.contains("seed") && !cfg.layer_seeds.empty()) cfg.seed = cfg.layer_seeds[0];
    }
    if (j.contains("precision")) {  // top-level override of model.precision
      const std::string prec = j["precision"].get<std::string>();
      if (prec != "f32" && prec != "f64")
        throw std::runtime_error("config: precision must be f32 or f64");
      cfg.model.precision = prec == "f32" ? Precision::f32 : Precision::f64;
    }
    cfg.budget_preset = j.value("budget_preset", cfg.budget_preset);
    cfg.threshold = j.value("threshold", cfg.threshold);
  } catch (const nlohmann::json::exception& e) {
    throw std::runtime_error("config: bad field in " + path + ": " + e.what());
  }
  if (!find_budget_preset(cfg.budget_preset))
    throw std::runtime_error("config: unknown budget preset " + cfg.budget_preset);
  return cfg;
}

void save_run_config(const RunConfig& cfg, const std::string& path) {
  nlohmann::json j;
  j["model"] = {{"d_model", cfg.model.d_model},
                {"num_heads", cfg.model.num_heads},
                {"head_dim", cfg.model.head_dim},
                {"num_layers", cfg.model.num_layers},
                {"num_kv_heads", cfg.model.num_kv_heads},
                {"precision", precision_name(cfg.model.precision)}};
  j["seed"] = cfg.seed;
  if (!cfg.layer_seeds.empty()) j["seeds"] = cfg.layer_seeds;
  j["budget_preset"] = cfg.budget_preset;
  j["threshold"] = cfg.threshold;
  std::ofstream out(path);
  if (!out) throw std::runtime_error("config: cannot write " + path);
  out << j.dump(2) << "\n";
}

}  // namespace kvshield
