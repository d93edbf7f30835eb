#include "kvshield/shield.hpp"

#include <fstream>
#include <sstream>

#include <json.hpp>

#include "kvshield/bench.hpp"

namespace kvshield {

void BudgetAccountant::add_persistent(std::uint64_t bytes) {
  persistent_ += bytes;
  if (current() > budget_)
    throw BudgetError("trusted memory budget exceeded: resident " + std::to_string(current()) +
                      " B > budget " + std::to_string(budget_) + " B");
  peak_ = std::max(peak_, current());
}

void BudgetAccountant::charge(std::uint64_t bytes) {
  transient_ += bytes;
  if (current() > budget_)
    throw BudgetError("trusted memory budget exceeded: working set " +
                      std::to_string(current()) + " B > budget " + std::to_string(budget_) +
                      " B");
  peak_ = std::max(peak_, current());
}

void BudgetAccountant::release(std::uint64_t bytes) {
  transient_ = bytes > transient_ ? 0 : transient_ - bytes;
}

SecureWorldContext SecureWorldContext::from_keystore(const Keystore& ks,
                                                     std::uint64_t budget_bytes,
                                                     std::size_t chunk_rows) {
  SecureWorldContext ctx(budget_bytes, chunk_rows);
  for (const auto& e : ks.layers) ctx.install_key(e.key);
  return ctx;
}

void SecureWorldContext::install_key(PermutationKey key) {
  accountant_.add_persistent(static_cast<std::uint64_t>(key.dim()) * sizeof(std::uint32_t));
  keys_.push_back(std::move(key));
}

const PermutationKey& SecureWorldContext::key(std::size_t layer) const {
  if (layer >= keys_.size()) throw ShapeError("SecureWorldContext: no key for layer");
  return keys_[layer];
}

Keystore SecureWorldContext::export_keystore(const std::string& model_id) const {
  Keystore ks;
  ks.model_id = model_id;
  for (std::size_t i = 0; i < keys_.size(); ++i) ks.layers.push_back({i, keys_[i]});
  return ks;
}

const char* direction_name(Direction d) {
  return d == Direction::insecure_to_secure ? "insecure_to_secure" : "secure_to_insecure";
}

const char* payload_kind_name(PayloadKind k) {
  return k == PayloadKind::permuted_weights ? "permuted_weights" : "activation";
}

std::size_t WorldChannel::activation_transfers(std::size_t layer, std::size_t step) const {
  std::size_t n = 0;
  for (const auto& e : entries_)
    if (e.kind == PayloadKind::activation && e.layer == layer && e.step == step) ++n;
  return n;
}

std::string WorldChannel::to_jsonl() const {
  std::ostringstream os;
  for (const auto& e : entries_) {
    nlohmann::json j{{"step", e.step},
                     {"layer", e.layer},
                     {"direction", direction_name(e.direction)},
                     {"kind", payload_kind_name(e.kind)},
                     {"bytes", e.bytes}};
    os << j.dump() << "\n";
  }
  return os.str();
}

void WorldChannel::export_jsonl(const std::string& path) const {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("channel log: cannot write " + path);
  out << to_jsonl();
}

std::size_t default_chunk_rows(std::size_t d_model, std::size_t scalar_size,
                               std::uint64_t budget_bytes) {
  const std::uint64_t row_bytes = static_cast<std::uint64_t>(d_model) * scalar_size;
  if (2 * row_bytes > budget_bytes)
    throw BudgetError("even a one-row block exceeds the trusted memory budget");
  const std::uint64_t rows = budget_bytes / 2 / (2 * row_bytes);
  return static_cast<std::size_t>(std::max<std::uint64_t>(1, rows));
}

BudgetReport budget_check(const ModelConfig& cfg, const SecureWorldContext& ctx,
                          std::size_t seq_len) {
  const std::uint64_t budget = ctx.accountant().budget();
  const std::uint64_t sbytes = scalar_bytes(cfg.precision);

  BudgetReport report;
  report.budget = budget;

  const std::uint64_t vec = static_cast<std::uint64_t>(cfg.d_model) * sbytes;
  report.entries.push_back({"attention_vector", vec, vec <= budget, ""});

  const std::uint64_t weight = static_cast<std::uint64_t>(cfg.d_model) * cfg.d_model * sbytes;
  std::string note;
  if (weight > budget) {
    try {
      note = "chunking required; default block = " +
             std::to_string(default_chunk_rows(cfg.d_model, sbytes, budget)) + " rows";
    } catch (const BudgetError&) {
      note = "infeasible: one row exceeds the budget";
    }
  }
  report.entries.push_back({"weight_matrix", weight, weight <= budget, note});

  const std::uint64_t kv = kv_cache_size(
      KvSizeQuery{cfg.num_kv_heads, cfg.head_dim, cfg.num_layers, seq_len, sbytes});
  report.entries.push_back({"kv_cache_seq" + std::to_string(seq_len), kv, kv <= budget, ""});

  return report;
}

}  // namespace kvshield
