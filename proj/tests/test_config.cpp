#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cstdio>
#include <fstream>

#include "kvshield/config.hpp"

using namespace kvshield;

namespace {

std::string write_temp(const std::string& text) {
  const std::string path = "config_test.json";
  std::ofstream out(path);
  out << text;
  return path;
}

}  // namespace

TEST_CASE("default config is engine-valid") {
  const RunConfig cfg = default_run_config();
  CHECK_NOTHROW(cfg.model.validate_for_engine());
  CHECK(cfg.budget_bytes() == 32ull << 20);
  CHECK(cfg.key_seed(0) == cfg.seed + 1);
  CHECK(cfg.key_seed(3) == cfg.seed + 4);
}

TEST_CASE("config files round-trip") {
  RunConfig cfg = default_run_config();
  cfg.model = make_config(32, 4, 3, Precision::f64);
  cfg.seed = 9;
  cfg.layer_seeds = {100, 200, 300};
  cfg.budget_preset = "hikey960";
  cfg.threshold = 0.95;

  const std::string path = "config_roundtrip.json";
  save_run_config(cfg, path);
  const RunConfig loaded = load_run_config(path);
  CHECK(loaded.model.d_model == 32);
  CHECK(loaded.model.num_heads == 4);
  CHECK(loaded.model.num_layers == 3);
  CHECK(loaded.model.precision == Precision::f64);
  CHECK(loaded.seed == 9);
  CHECK(loaded.layer_seeds == std::vector<std::uint64_t>{100, 200, 300});
  CHECK(loaded.key_seed(1) == 200);
  CHECK(loaded.budget_preset == "hikey960");
  CHECK(loaded.threshold == 0.95);
  std::remove(path.c_str());
}

TEST_CASE("partial configs inherit defaults") {
  const auto path = write_temp(R"({"model": {"d_model": 16, "num_heads": 2}})");
  const RunConfig cfg = load_run_config(path);
  CHECK(cfg.model.d_model == 16);
  CHECK(cfg.model.head_dim == 8);
  CHECK(cfg.model.num_layers == 1);
  CHECK(cfg.seed == 42);
  CHECK(cfg.budget_preset == "rk3399");
  std::remove(path.c_str());
}

TEST_CASE("a seeds array doubles as the base seed") {
  const auto path = write_temp(R"({"seeds": [5, 6, 7]})");
  const RunConfig cfg = load_run_config(path);
  CHECK(cfg.seed == 5);
  CHECK(cfg.key_seed(2) == 7);
  std::remove(path.c_str());
}

TEST_CASE("top-level precision overrides the model block") {
  const auto path =
      write_temp(R"({"model": {"d_model": 16, "num_heads": 2}, "precision": "f64"})");
  CHECK(load_run_config(path).model.precision == Precision::f64);
  std::remove(path.c_str());
}

TEST_CASE("malformed configs are rejected with a clear error") {
  CHECK_THROWS_WITH_AS(load_run_config("no_such_file.json"), doctest::Contains("cannot read"),
                       std::runtime_error);

  auto path = write_temp("{ not json");
  CHECK_THROWS_WITH_AS(load_run_config(path), doctest::Contains("malformed"),
                       std::runtime_error);

  path = write_temp(R"({"budget_preset": "sgx-enclave"})");
  CHECK_THROWS_WITH_AS(load_run_config(path), doctest::Contains("budget preset"),
                       std::runtime_error);

  path = write_temp(R"({"model": {"d_model": 17, "num_heads": 2}})");
  CHECK_THROWS(load_run_config(path));

  path = write_temp(R"({"precision": "f16"})");
  CHECK_THROWS_WITH_AS(load_run_config(path), doctest::Contains("precision"),
                       std::runtime_error);
  std::remove(path.c_str());
}
