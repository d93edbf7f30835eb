// kvshield CLI: demo runs, verification, KV-size tables, permutation
// benchmarks and trusted-memory budget reports.
#include <cinttypes>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "kvshield/attack.hpp"
#include "kvshield/bench.hpp"
#include "kvshield/config.hpp"
#include "kvshield/keystore.hpp"
#include "kvshield/shield.hpp"
#include "kvshield/weights_io.hpp"

using namespace kvshield;

namespace {

constexpr std::uint64_t kMiB = 1ull << 20;

std::string human_bytes(std::uint64_t b) {
  char buf[64];
  if (b >= (1ull << 30) && b % (1ull << 30) == 0)
    std::snprintf(buf, sizeof(buf), "%" PRIu64 " GiB", b >> 30);
  else if (b >= kMiB && b % kMiB == 0)
    std::snprintf(buf, sizeof(buf), "%" PRIu64 " MiB", b >> 20);
  else if (b >= 10 * kMiB)
    std::snprintf(buf, sizeof(buf), "%.1f MiB", double(b) / double(kMiB));
  else if (b >= 1024 && b % 1024 == 0)
    std::snprintf(buf, sizeof(buf), "%" PRIu64 " KiB", b >> 10);
  else if (b >= kMiB)
    std::snprintf(buf, sizeof(buf), "%.1f MiB", double(b) / double(kMiB));
  else
    std::snprintf(buf, sizeof(buf), "%" PRIu64 " B", b);
  return buf;
}

void ensure_dir(const std::string& dir) {
  if (!dir.empty()) std::filesystem::create_directories(dir);
}

void write_file(const std::string& dir, const std::string& name, const std::string& text) {
  if (dir.empty()) return;
  std::ofstream out(std::filesystem::path(dir) / name);
  out << text << "\n";
}

// ── verify ────────────────────────────────────────────────────────────────

template <typename S>
int run_verify(const RunConfig& rc, std::size_t seq_len, std::size_t num_seeds) {
  const double tol = rc.model.precision == Precision::f32 ? 1e-5 : 1e-12;
  std::printf("shield equivalence, %s, tolerance %g, %zu steps, %zu seeds\n",
              precision_name(rc.model.precision), tol, seq_len, num_seeds);
  std::printf("%8s %6s %12s %s\n", "d_model", "heads", "max|diff|", "result");

  bool all_pass = true;
  for (const std::size_t d : {16u, 64u, 256u}) {
    for (const std::size_t heads : {1u, 2u, 4u}) {
      double worst = 0.0;
      for (std::uint64_t seed = 0; seed < num_seeds; ++seed) {
        const auto cfg = make_config(d, heads, 2, rc.model.precision);
        const auto weights = random_weights<S>(rc.seed + seed * 97 + d + heads, cfg);
        PlainSession<S> plain(cfg, weights);
        ShieldedSession<S> shielded(
            cfg, weights,
            std::vector<std::uint64_t>{rc.seed + seed * 13 + 1, rc.seed + seed * 13 + 2},
            rc.budget_bytes());
        Rng rng(rc.seed + seed * 7 + d);
        for (std::size_t t = 0; t < seq_len; ++t) {
          const Mat<S> x = random_matrix<S>(rng, 1, d);
          worst = std::max(worst, max_abs_diff(shielded.step(x), plain.step(x)));
        }
      }
      const bool pass = worst <= tol;
      all_pass = all_pass && pass;
      std::printf("%8zu %6zu %12.3e %s\n", d, heads, worst, pass ? "PASS" : "FAIL");
    }
  }
  std::printf("verify: %s\n", all_pass ? "all PASS" : "FAILURES");
  return all_pass ? 0 : 1;
}

// ── attack-demo ───────────────────────────────────────────────────────────

template <typename S>
int run_attack_demo(const RunConfig& rc, const std::string& report_dir) {
  // single-layer victim: the attack scores reconstruction of the leaked
  // layer's attention outputs
  const auto cfg = make_config(rc.model.d_model, rc.model.num_heads, 1, rc.model.precision);
  const std::size_t steps = 16;

  const auto weights = random_weights<S>(rc.seed, cfg, /*with_output_proj=*/false);
  PermutationKey key = generate_head_aligned_key(rc.key_seed(0), cfg.num_heads, cfg.head_dim);
  for (std::uint64_t bump = 1; key.is_identity(); ++bump)
    key = generate_head_aligned_key(rc.key_seed(0) + bump, cfg.num_heads, cfg.head_dim);

  PlainSession<S> plain(cfg, weights);
  ShieldedSession<S> shielded(cfg, weights, {key}, rc.budget_bytes());

  Mat<S> queries(0, cfg.d_model), truth(0, cfg.d_model);
  Rng rng(rc.seed + 2);
  for (std::size_t t = 0; t < steps; ++t) {
    const Mat<S> x = random_matrix<S>(rng, 1, cfg.d_model);
    append_row(queries, matmul(x, weights[0].w_q));
    append_row(truth, plain.step(x));
    shielded.step(x);
  }

  const auto plain_snap = leak_kv(plain.cache(), 0);
  const auto shielded_snap = leak_kv(shielded.world().cache, 0);

  const auto plain_report = run_attack(plain_snap, queries, truth, cfg, rc.threshold);
  const auto shielded_report = run_attack(shielded_snap, queries, truth, cfg, rc.threshold);
  const auto true_key_report =
      run_attack(unpermute_snapshot(shielded_snap, key), queries, truth, cfg, rc.threshold);

  std::printf("victim: d_model=%zu heads=%zu steps=%zu %s, threshold %.2f\n", cfg.d_model,
              cfg.num_heads, steps, precision_name(cfg.precision), rc.threshold);
  std::printf("%-22s mean similarity %.6f  -> %s\n", "plain-engine leak:",
              plain_report.mean_similarity, verdict_name(plain_report.verdict));
  std::printf("%-22s mean similarity %.6f  -> %s\n", "shielded leak:",
              shielded_report.mean_similarity, verdict_name(shielded_report.verdict));
  std::printf("%-22s mean similarity %.6f  -> %s\n", "shielded + true key:",
              true_key_report.mean_similarity, verdict_name(true_key_report.verdict));

  if (rows_are_permutations(shielded_snap.k_leaked, plain_snap.k_leaked))
    std::printf("note: per-row value multisets of K/V survive the shield "
                "(permutation reorders, it does not mask values)\n");

  ensure_dir(report_dir);
  write_file(report_dir, "attack_plain.json", plain_report.to_json());
  write_file(report_dir, "attack_shielded.json", shielded_report.to_json());
  write_file(report_dir, "attack_true_key.json", true_key_report.to_json());
  if (!report_dir.empty())
    shielded.channel().export_jsonl(
        (std::filesystem::path(report_dir) / "channel_log.jsonl").string());

  const bool expected = plain_report.verdict == Verdict::reconstructed &&
                        shielded_report.verdict == Verdict::protected_ &&
                        true_key_report.verdict == Verdict::reconstructed;
  return expected ? 0 : 1;
}

// ── bench ─────────────────────────────────────────────────────────────────

template <typename S>
int run_bench(const std::vector<std::size_t>& dims, const std::string& method,
              std::size_t reps, std::size_t warmup, std::size_t chunk_rows,
              const std::string& report_dir) {
  std::vector<PermuteMethod> methods;
  if (method == "gather" || method == "both") methods.push_back(PermuteMethod::gather);
  if (method == "matrix_01" || method == "both") methods.push_back(PermuteMethod::matrix_01);
  if (methods.empty()) {
    std::fprintf(stderr, "bench: unknown method '%s'\n", method.c_str());
    return 2;
  }

  std::vector<std::string> json_lines;
  std::printf("%8s %-10s %-22s %6s %12s %12s %12s\n", "d_model", "method", "operation", "reps",
              "mean (s)", "min (s)", "max (s)");
  for (const std::size_t d : dims) {
    for (const PermuteMethod m : methods) {
      for (const PermuteTarget t : {PermuteTarget::weight, PermuteTarget::result}) {
        const auto rec = bench_permute<S>(d, m, t, reps, warmup);
        json_lines.push_back(rec.to_json());
        std::printf("%8zu %-10s %-22s %6zu %12.3e %12.3e %12.3e\n", rec.d_model,
                    permute_method_name(rec.method), permute_target_name(rec.operation),
                    rec.repetitions, rec.mean_s, rec.min_s, rec.max_s);
      }
    }
    if (chunk_rows > 0) {
      const auto rec = bench_permute_chunked<S>(d, std::min(chunk_rows, d), reps, warmup);
      json_lines.push_back(rec.to_json());
      char op[48];
      std::snprintf(op, sizeof(op), "permute_weight[%zu-row]", rec.chunk_rows);
      std::printf("%8zu %-10s %-22s %6zu %12.3e %12.3e %12.3e\n", rec.d_model, "gather", op,
                  rec.repetitions, rec.mean_s, rec.min_s, rec.max_s);
    }
  }

  if (!report_dir.empty()) {
    ensure_dir(report_dir);
    std::ofstream out(std::filesystem::path(report_dir) / "bench.jsonl");
    for (const auto& line : json_lines) out << line << "\n";
  }
  return 0;
}

// ── kv-size ───────────────────────────────────────────────────────────────

int run_kv_size(const std::string& preset, std::size_t seq_len) {
  std::vector<ModelPreset> rows;
  if (preset.empty()) {
    rows = model_presets();
  } else {
    const auto* p = find_model_preset(preset);
    if (!p) {
      std::fprintf(stderr, "kv-size: unknown preset '%s'\n", preset.c_str());
      return 2;
    }
    rows.push_back(*p);
  }

  std::printf("%-14s %-12s %6s %14s %18s\n", "model", "shape_kv", "layers", "per token",
              ("seq_len=" + std::to_string(seq_len)).c_str());
  for (const auto& row : rows) {
    const auto& c = row.config;
    const std::uint64_t per_token =
        kv_cache_size({c.num_kv_heads, c.head_dim, c.num_layers, 1, 4});
    const std::uint64_t total =
        kv_cache_size({c.num_kv_heads, c.head_dim, c.num_layers, seq_len, 4});
    char shape[32];
    std::snprintf(shape, sizeof(shape), "2x%zux%zu", c.num_kv_heads, c.head_dim);
    std::printf("%-14s %-12s %6zu %14s %18s\n", row.name.c_str(), shape, c.num_layers,
                human_bytes(per_token).c_str(), human_bytes(total).c_str());
  }
  return 0;
}

// ── budget ────────────────────────────────────────────────────────────────

int run_budget(const RunConfig& rc, const std::string& preset, std::size_t seq_len) {
  ModelConfig model = rc.model;
  std::string model_name = "config model";
  if (!preset.empty()) {
    const auto* p = find_model_preset(preset);
    if (!p) {
      std::fprintf(stderr, "budget: unknown preset '%s'\n", preset.c_str());
      return 2;
    }
    model = p->config;
    model_name = p->name;
  }

  SecureWorldContext ctx(rc.budget_bytes());
  const BudgetReport report = budget_check(model, ctx, seq_len);

  std::printf("model %s (d_model=%zu), budget %s (%s)\n", model_name.c_str(), model.d_model,
              rc.budget_preset.c_str(), human_bytes(report.budget).c_str());
  std::printf("%-22s %14s %6s %s\n", "artifact", "bytes", "fits", "note");
  for (const auto& e : report.entries)
    std::printf("%-22s %14s %6s %s\n", e.kind.c_str(), human_bytes(e.bytes).c_str(),
                e.fits ? "yes" : "NO", e.note.c_str());
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"KV-Shield: permutation-shielded attention with a leak-attack simulator"};
  app.require_subcommand(1);
  app.fallthrough();  // global options may follow the subcommand

  std::string config_path, report_dir, precision_flag, model_preset;
  std::optional<std::uint64_t> seed_flag;
  app.add_option("--config", config_path, "run configuration JSON");
  app.add_option("--report-dir", report_dir, "directory for JSON report files");
  app.add_option("--precision", precision_flag, "f32 or f64 (overrides config)")
      ->check(CLI::IsMember({"f32", "f64"}));
  app.add_option("--seed", seed_flag, "base seed (overrides config)");
  app.add_option("--preset", model_preset, "model preset: llama2-7b, chatglm3-6b, qwen2-7b");

  auto* verify = app.add_subcommand("verify", "shield-equivalence pass/fail matrix");
  std::size_t verify_seq = 64, verify_seeds = 3;
  verify->add_option("--seq-len", verify_seq, "steps per run");
  verify->add_option("--seeds", verify_seeds, "seeds per grid cell");

  auto* attack = app.add_subcommand("attack-demo", "replay the KV-leak attack on both engines");

  auto* bench = app.add_subcommand("bench", "permutation overhead benchmark");
  std::vector<std::size_t> bench_dims{768, 3584, 4096};
  std::string bench_method = "gather";
  std::size_t bench_reps = 30, bench_warmup = 5, bench_chunk = 0;
  bench->add_option("--dims", bench_dims, "model dimensions to time");
  bench->add_option("--method", bench_method, "gather, matrix_01 or both")
      ->check(CLI::IsMember({"gather", "matrix_01", "both"}));
  bench->add_option("--reps", bench_reps, "measured repetitions");
  bench->add_option("--warmup", bench_warmup, "warm-up repetitions");
  bench->add_option("--chunk-rows", bench_chunk,
                    "also time block-by-block weight permutation with this block size");

  auto* kv_size = app.add_subcommand("kv-size", "per-token and per-conversation KV sizes");
  std::size_t kv_seq = 1;
  kv_size->add_option("--seq-len", kv_seq, "sequence length");

  auto* budget = app.add_subcommand("budget", "trusted-memory feasibility report");
  std::size_t budget_seq = 1000;
  budget->add_option("--seq-len", budget_seq, "sequence length for the KV entry");

  CLI11_PARSE(app, argc, argv);

  try {
    RunConfig rc = config_path.empty() ? default_run_config() : load_run_config(config_path);
    if (!precision_flag.empty())
      rc.model.precision = precision_flag == "f32" ? Precision::f32 : Precision::f64;
    if (seed_flag) rc.seed = *seed_flag;

    const bool f32 = rc.model.precision == Precision::f32;
    if (verify->parsed())
      return f32 ? run_verify<float>(rc, verify_seq, verify_seeds)
                 : run_verify<double>(rc, verify_seq, verify_seeds);
    if (attack->parsed())
      return f32 ? run_attack_demo<float>(rc, report_dir)
                 : run_attack_demo<double>(rc, report_dir);
    if (bench->parsed())
      return f32 ? run_bench<float>(bench_dims, bench_method, bench_reps, bench_warmup,
                                    bench_chunk, report_dir)
                 : run_bench<double>(bench_dims, bench_method, bench_reps, bench_warmup,
                                     bench_chunk, report_dir);
    if (kv_size->parsed()) return run_kv_size(model_preset, kv_seq);
    if (budget->parsed()) return run_budget(rc, model_preset, budget_seq);
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 2;
  }
  return 0;
}
