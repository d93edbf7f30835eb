#include "kvshield/permutation.hpp"

#include <numeric>
#include <string>

#include "kvshield/rng.hpp"

namespace kvshield {

namespace {

std::vector<std::uint32_t> fisher_yates(Rng& rng, std::size_t n) {
  std::vector<std::uint32_t> p(n);
  std::iota(p.begin(), p.end(), 0u);
  for (std::size_t j = n; j > 1; --j) {
    const std::size_t i = static_cast<std::size_t>(bounded(rng, j));
    std::swap(p[i], p[j - 1]);
  }
  return p;
}

}  // namespace

PermutationKey::PermutationKey(std::vector<std::uint32_t> map,
                               std::optional<HeadLayout> head_layout)
    : map_(std::move(map)), head_layout_(head_layout) {
  if (map_.empty()) throw ShapeError("PermutationKey: dim must be >= 1");
  if (!is_bijection(map_)) throw ShapeError("PermutationKey: map is not a bijection");
  if (head_layout_) {
    if (head_layout_->num_heads * head_layout_->head_dim != map_.size())
      throw ShapeError("PermutationKey: head layout does not cover dim");
    if (!preserves_head_blocks(*this, *head_layout_))
      throw ShapeError("PermutationKey: map does not preserve head blocks");
  }
}

PermutationKey PermutationKey::identity(std::size_t dim) {
  if (dim == 0) throw ShapeError("PermutationKey: dim must be >= 1");
  std::vector<std::uint32_t> m(dim);
  std::iota(m.begin(), m.end(), 0u);
  return PermutationKey(std::move(m));
}

bool PermutationKey::is_identity() const {
  for (std::size_t j = 0; j < map_.size(); ++j)
    if (map_[j] != j) return false;
  return true;
}

bool is_bijection(const std::vector<std::uint32_t>& map) {
  std::vector<bool> seen(map.size(), false);
  for (const std::uint32_t v : map) {
    if (v >= map.size() || seen[v]) return false;
    seen[v] = true;
  }
  return true;
}

bool preserves_head_blocks(const PermutationKey& key, const HeadLayout& layout) {
  if (layout.num_heads * layout.head_dim != key.dim()) return false;
  const auto& m = key.map();
  for (std::size_t h = 0; h < layout.num_heads; ++h) {
    const std::size_t src_head = m[h * layout.head_dim] / layout.head_dim;
    for (std::size_t t = 1; t < layout.head_dim; ++t)
      if (m[h * layout.head_dim + t] / layout.head_dim != src_head) return false;
  }
  return true;  // bijection on positions implies the block map is a bijection on heads
}

PermutationKey generate_key(std::uint64_t seed, std::size_t dim) {
  if (dim == 0) throw ShapeError("generate_key: dim must be >= 1");
  Rng rng(seed);
  return PermutationKey(fisher_yates(rng, dim));
}

PermutationKey generate_head_aligned_key(std::uint64_t seed, std::size_t num_heads,
                                         std::size_t head_dim) {
  if (num_heads == 0 || head_dim == 0)
    throw ShapeError("generate_head_aligned_key: counts must be >= 1");
  Rng rng(seed);
  const auto head_perm = fisher_yates(rng, num_heads);
  std::vector<std::uint32_t> map(num_heads * head_dim);
  for (std::size_t h = 0; h < num_heads; ++h) {
    const auto inner = fisher_yates(rng, head_dim);
    for (std::size_t t = 0; t < head_dim; ++t)
      map[h * head_dim + t] = static_cast<std::uint32_t>(head_perm[h] * head_dim + inner[t]);
  }
  return PermutationKey(std::move(map), HeadLayout{num_heads, head_dim});
}

PermutationKey invert(const PermutationKey& key) {
  std::vector<std::uint32_t> inv(key.dim());
  for (std::size_t j = 0; j < key.dim(); ++j)
    inv[key.map()[j]] = static_cast<std::uint32_t>(j);
  return PermutationKey(std::move(inv), key.head_layout());
}

PermutationKey compose(const PermutationKey& a, const PermutationKey& b) {
  if (a.dim() != b.dim())
    throw ShapeError("compose: dims " + std::to_string(a.dim()) + " vs " +
                     std::to_string(b.dim()));
  // apply(x, a) then apply(.., b) gathers x[a.map[b.map[j]]] at position j
  std::vector<std::uint32_t> m(a.dim());
  for (std::size_t j = 0; j < a.dim(); ++j) m[j] = a.map()[b.map()[j]];
  std::optional<HeadLayout> layout;
  if (a.head_layout() && a.head_layout() == b.head_layout()) layout = a.head_layout();
  return PermutationKey(std::move(m), layout);
}

}  // namespace kvshield
