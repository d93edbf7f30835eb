#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "kvshield/permutation.hpp"

namespace kvshield {

// On-disk model of the TEE-sealed secret store: one permutation key per
// layer. The file is JSON with an integrity checksum over the payload.
// Only secure-world construction paths (SecureWorldContext) may read it;
// nothing in the insecure world ever holds a Keystore or a PermutationKey.
struct KeystoreEntry {
  std::size_t layer_index = 0;
  PermutationKey key = PermutationKey::identity(1);
};

struct Keystore {
  std::string model_id;
  std::vector<KeystoreEntry> layers;
};

inline constexpr int kKeystoreVersion = 1;

void save_keystore(const Keystore& ks, const std::string& path);

// Throws std::runtime_error on version mismatch, checksum mismatch, or a
// map that fails the bijection invariant.
Keystore load_keystore(const std::string& path);

// FNV-1a 64 over the canonical payload serialization; exposed for tests.
std::uint64_t keystore_checksum(const Keystore& ks);

}  // namespace kvshield
