#include "kvshield/keystore.hpp"

#include <fstream>
#include <sstream>
#include <stdexcept>

#include <json.hpp>

namespace kvshield {

namespace {

std::uint64_t fnv1a64(const std::string& bytes) {
  std::uint64_t h = 1469598103934665603ull;
  for (const unsigned char c : bytes) {
    h ^= c;
    h *= 1099511628211ull;
  }
  return h;
}

// Canonical payload string: field order is fixed so the checksum is stable.
std::string canonical_payload(const Keystore& ks) {
  std::ostringstream os;
  os << "model_id=" << ks.model_id << ";";
  for (const auto& e : ks.layers) {
    os << "layer=" << e.layer_index << ",dim=" << e.key.dim();
    if (const auto& hl = e.key.head_layout())
      os << ",heads=" << hl->num_heads << ",head_dim=" << hl->head_dim;
    os << ",map=";
    for (const auto v : e.key.map()) os << v << ".";
    os << ";";
  }
  return os.str();
}

}  // namespace

std::uint64_t keystore_checksum(const Keystore& ks) { return fnv1a64(canonical_payload(ks)); }

void save_keystore(const Keystore& ks, const std::string& path) {
  nlohmann::json j;
  j["version"] = kKeystoreVersion;
  j["model_id"] = ks.model_id;
  j["layers"] = nlohmann::json::array();
  for (const auto& e : ks.layers) {
    nlohmann::json layer;
    layer["layer_index"] = e.layer_index;
    layer["dim"] = e.key.dim();
    if (const auto& hl = e.key.head_layout())
      layer["head_layout"] = {{"num_heads", hl->num_heads}, {"head_dim", hl->head_dim}};
    else
      layer["head_layout"] = nullptr;
    layer["map"] = e.key.map();
    j["layers"].push_back(std::move(layer));
  }
  j["checksum"] = keystore_checksum(ks);

  std::ofstream out(path);
  if (!out) throw std::runtime_error("keystore: cannot write " + path);
  out << j.dump(2) << "\n";
}

Keystore load_keystore(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("keystore: cannot read " + path);
  nlohmann::json j;
  in >> j;

  if (j.at("version").get<int>() != kKeystoreVersion)
    throw std::runtime_error("keystore: unsupported version in " + path);

  Keystore ks;
  ks.model_id = j.at("model_id").get<std::string>();
  for (const auto& layer : j.at("layers")) {
    std::optional<HeadLayout> hl;
    if (!layer.at("head_layout").is_null())
      hl = HeadLayout{layer.at("head_layout").at("num_heads").get<std::size_t>(),
                      layer.at("head_layout").at("head_dim").get<std::size_t>()};
    // PermutationKey's constructor re-validates the bijection invariant.
    ks.layers.push_back(KeystoreEntry{
        layer.at("layer_index").get<std::size_t>(),
        PermutationKey(layer.at("map").get<std::vector<std::uint32_t>>(), hl)});
  }

  if (j.at("checksum").get<std::uint64_t>() != keystore_checksum(ks))
    throw std::runtime_error("keystore: checksum mismatch in " + path);
  return ks;
}

}  // namespace kvshield
