#pragma once

#include <cstdint>
#include <optional>
#include <vector>

#include "kvshield/matrix.hpp"

namespace kvshield {

struct HeadLayout {
  std::size_t num_heads = 0;
  std::size_t head_dim = 0;
  bool operator==(const HeadLayout&) const = default;
};

// Secret permutation of the model-dimension indices. Canonical form is the
// index vector: map()[j] is the source column placed at output position j.
// The explicit 0/1 matrix is a derived view (to_matrix) kept for parity
// testing and as the benchmark's slow path; storage here is O(d) and
// application is O(n*d) gather instead of O(n*d^2) matmul.
//
// A key may carry a HeadLayout marker, meaning it maps every head-aligned
// index block onto some head-aligned block. Shielded multi-head attention
// is only output-preserving for such keys.
class PermutationKey {
 public:
  PermutationKey(std::vector<std::uint32_t> map, std::optional<HeadLayout> head_layout = {});

  static PermutationKey identity(std::size_t dim);

  std::size_t dim() const { return map_.size(); }
  const std::vector<std::uint32_t>& map() const { return map_; }
  const std::optional<HeadLayout>& head_layout() const { return head_layout_; }

  bool is_identity() const;
  bool operator==(const PermutationKey& o) const {
    return map_ == o.map_;  // layout marker is metadata, not identity
  }

 private:
  std::vector<std::uint32_t> map_;
  std::optional<HeadLayout> head_layout_;
};

// Uniformly random permutation from a seeded Fisher-Yates shuffle over
// std::mt19937_64 (portable; see rng.hpp). Same seed, same key, anywhere.
PermutationKey generate_key(std::uint64_t seed, std::size_t dim);

// Random permutation of whole heads composed with an independent random
// permutation inside each head. Result carries the HeadLayout marker.
PermutationKey generate_head_aligned_key(std::uint64_t seed, std::size_t num_heads,
                                         std::size_t head_dim);

// apply_columns(apply_columns(x, k), invert(k)) == x bit-exactly.
PermutationKey invert(const PermutationKey& key);

// Applying compose(a, b) equals applying a, then b.
PermutationKey compose(const PermutationKey& a, const PermutationKey& b);

// O(d) bijection check: every index in [0, d) appears exactly once.
bool is_bijection(const std::vector<std::uint32_t>& map);

// True when the key maps each head-aligned block onto one head-aligned block.
bool preserves_head_blocks(const PermutationKey& key, const HeadLayout& layout);

// Explicit d x d 0/1 matrix M with x * M == apply_columns(x, key).
template <typename Scalar>
Mat<Scalar> to_matrix(const PermutationKey& key) {
  const std::size_t d = key.dim();
  Mat<Scalar> m(d, d);
  for (std::size_t j = 0; j < d; ++j) m.at(key.map()[j], j) = Scalar(1);
  return m;
}

// Column reorder by gather: out(i, j) = in(i, map[j]). Pure data movement,
// bit-exact equal to matmul(m, to_matrix(key)).
template <typename Scalar>
Mat<Scalar> apply_columns(const Mat<Scalar>& m, const PermutationKey& key) {
  if (m.cols != key.dim())
    throw ShapeError("apply_columns: matrix has " + std::to_string(m.cols) +
                     " cols, key dim is " + std::to_string(key.dim()));
  Mat<Scalar> out(m.rows, m.cols);
  for (std::size_t i = 0; i < m.rows; ++i) {
    const Scalar* src = &m.data[i * m.cols];
    Scalar* dst = &out.data[i * m.cols];
    for (std::size_t j = 0; j < m.cols; ++j) dst[j] = src[key.map()[j]];
  }
  return out;
}

}  // namespace kvshield
