#pragma once

#include <algorithm>
#include <cstdint>
#include <numeric>
#include <optional>
#include <string>
#include <vector>

#include "kvshield/shield.hpp"

namespace kvshield {

// Replay of the KV-leak attacker workflow: capture a snapshot mid-inference,
// feed it to an attacker-controlled attention module together with attacker
// queries, and score how well the victim's attention outputs come back.
//
// The attacker is granted maximal knowledge (architecture, weights, the
// victim's own queries), everything except the keystore. Protection claims
// measured this way are conservative.

template <typename Scalar>
double cosine_similarity(const Mat<Scalar>& a, const Mat<Scalar>& b) {
  if (!a.same_shape(b)) throw ShapeError("cosine_similarity: shape mismatch");
  double dot = 0.0, na = 0.0, nb = 0.0;
  for (std::size_t i = 0; i < a.data.size(); ++i) {
    dot += double(a.data[i]) * double(b.data[i]);
    na += double(a.data[i]) * double(a.data[i]);
    nb += double(b.data[i]) * double(b.data[i]);
  }
  if (na == 0.0 && nb == 0.0) return 1.0;
  if (na == 0.0 || nb == 0.0) return 0.0;
  return dot / (std::sqrt(na) * std::sqrt(nb));
}

enum class Verdict { reconstructed, protected_ };

inline const char* verdict_name(Verdict v) {
  return v == Verdict::reconstructed ? "reconstructed" : "protected";
}

struct ReconstructionReport {
  EngineKind engine_kind = EngineKind::plain;
  std::size_t d_model = 0;
  std::size_t num_heads = 0;
  std::size_t seq_len = 0;
  std::vector<double> per_step_similarity;
  double mean_similarity = 0.0;
  double max_abs_diff = 0.0;
  double threshold = 0.99;
  Verdict verdict = Verdict::protected_;

  std::string to_json() const;
};

ReconstructionReport reconstruction_report_from_json(const std::string& text);

// Attacker-side replay: for step i the attacker attends its query over the
// first i+1 leaked rows (the causal view the victim had) and compares the
// result to the victim's true attention output. Deterministic given inputs.
template <typename Scalar>
ReconstructionReport run_attack(const LeakSnapshot<Scalar>& snapshot,
                                const Mat<Scalar>& attacker_queries,
                                const Mat<Scalar>& victim_truth, const ModelConfig& cfg,
                                double threshold = 0.99) {
  if (attacker_queries.rows == 0 || attacker_queries.rows != victim_truth.rows ||
      attacker_queries.cols != cfg.d_model || victim_truth.cols != cfg.d_model)
    throw ShapeError("run_attack: query/truth shapes do not match the config");
  if (attacker_queries.rows > snapshot.seq_len())
    throw ShapeError("run_attack: more queries than leaked rows");

  ReconstructionReport report;
  report.engine_kind = snapshot.engine_kind;
  report.d_model = cfg.d_model;
  report.num_heads = cfg.num_heads;
  report.seq_len = attacker_queries.rows;
  report.threshold = threshold;

  double total = 0.0;
  for (std::size_t i = 0; i < attacker_queries.rows; ++i) {
    Mat<Scalar> k_pre(i + 1, cfg.d_model);
    Mat<Scalar> v_pre(i + 1, cfg.d_model);
    std::copy_n(snapshot.k_leaked.data.begin(), (i + 1) * cfg.d_model, k_pre.data.begin());
    std::copy_n(snapshot.v_leaked.data.begin(), (i + 1) * cfg.d_model, v_pre.data.begin());

    const Mat<Scalar> guess =
        scaled_dot_attention(row(attacker_queries, i), k_pre, v_pre, cfg.num_heads);
    const Mat<Scalar> truth = row(victim_truth, i);
    report.per_step_similarity.push_back(cosine_similarity(guess, truth));
    report.max_abs_diff = std::max(report.max_abs_diff, max_abs_diff(guess, truth));
    total += report.per_step_similarity.back();
  }
  report.mean_similarity = total / static_cast<double>(attacker_queries.rows);
  report.verdict =
      report.mean_similarity >= threshold ? Verdict::reconstructed : Verdict::protected_;
  return report;
}

// Attacker hypothesis "the victim's key was `key`": undo it on the snapshot.
template <typename Scalar>
LeakSnapshot<Scalar> unpermute_snapshot(const LeakSnapshot<Scalar>& snapshot,
                                        const PermutationKey& key) {
  LeakSnapshot<Scalar> out = snapshot;
  const PermutationKey inv = invert(key);
  out.k_leaked = apply_columns(snapshot.k_leaked, inv);
  out.v_leaked = apply_columns(snapshot.v_leaked, inv);
  return out;
}

// Every leaked row is a column shuffle of the true row, so the per-row value
// multisets survive the shield. Reported as an informational finding.
template <typename Scalar>
bool rows_are_permutations(const Mat<Scalar>& a, const Mat<Scalar>& b) {
  if (!a.same_shape(b)) return false;
  std::vector<Scalar> ra(a.cols), rb(a.cols);
  for (std::size_t i = 0; i < a.rows; ++i) {
    std::copy_n(a.data.begin() + i * a.cols, a.cols, ra.begin());
    std::copy_n(b.data.begin() + i * b.cols, b.cols, rb.begin());
    std::sort(ra.begin(), ra.end());
    std::sort(rb.begin(), rb.end());
    if (ra != rb) return false;
  }
  return true;
}

struct BruteForceResult {
  std::optional<PermutationKey> key;
  std::uint64_t tries = 0;
  double best_similarity = -1.0;
};

inline constexpr std::size_t kBruteForceDimCap = 8;

// Exhaustive d! search over candidate keys, scoring each by replay
// similarity; returns the argmax only if it uniquely exceeds the threshold.
// Demonstrates that recovery succeeds at desk scale and that the work
// factor is factorial in the permuted dimension.
template <typename Scalar>
BruteForceResult brute_force_key_recovery(const LeakSnapshot<Scalar>& snapshot,
                                          const Mat<Scalar>& attacker_queries,
                                          const Mat<Scalar>& victim_truth,
                                          const ModelConfig& cfg, double threshold = 0.999) {
  if (cfg.d_model > kBruteForceDimCap)
    throw RefusalError("brute_force_key_recovery: d_model " + std::to_string(cfg.d_model) +
                       " exceeds the factorial-search cap of " +
                       std::to_string(kBruteForceDimCap));

  std::vector<std::uint32_t> candidate(cfg.d_model);
  std::iota(candidate.begin(), candidate.end(), 0u);

  BruteForceResult result;
  std::size_t above_threshold = 0;
  std::optional<PermutationKey> best;
  do {
    const PermutationKey guess(candidate);
    const auto report = run_attack(unpermute_snapshot(snapshot, guess), attacker_queries,
                                   victim_truth, cfg, threshold);
    ++result.tries;
    if (report.mean_similarity > result.best_similarity) {
      result.best_similarity = report.mean_similarity;
      best = guess;
    }
    if (report.mean_similarity >= threshold) ++above_threshold;
  } while (std::next_permutation(candidate.begin(), candidate.end()));

  if (above_threshold == 1) result.key = best;
  return result;
}

}  // namespace kvshield
