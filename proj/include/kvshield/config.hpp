#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "kvshield/attention.hpp"

namespace kvshield {

// Run-wide settings for the CLI: model shape, seeding, trusted-memory
// budget preset and the attack verdict threshold.
struct RunConfig {
  ModelConfig model;
  std::uint64_t seed = 42;
  std::vector<std::uint64_t> layer_seeds;  // per-layer key seeds; derived from seed when empty
  std::string budget_preset = "rk3399";
  double threshold = 0.99;

  std::uint64_t budget_bytes() const;
  std::uint64_t key_seed(std::size_t layer) const {
    return layer < layer_seeds.size() ? layer_seeds[layer] : seed + 1 + layer;
  }
};

RunConfig default_run_config();

// Throws std::runtime_error with a usage-oriented message on malformed input.
RunConfig load_run_config(const std::string& path);

void save_run_config(const RunConfig& cfg, const std::string& path);

}  // namespace kvshield
