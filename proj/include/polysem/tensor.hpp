#pragma once

// Fully symmetric tensors stored on canonical (non-decreasing) index tuples.

#include <algorithm>
#include <cstddef>
#include <cstdint>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace polysem {

using IndexTuple = std::vector<std::uint32_t>;

/// Binomial coefficient C(n, r) in 64-bit arithmetic (small arguments only).
constexpr std::uint64_t binomial(std::uint64_t n, std::uint64_t r) {
  if (r > n) return 0;
  r = std::min(r, n - r);
  std::uint64_t out = 1;
  for (std::uint64_t i = 1; i <= r; ++i) out = out * (n - r + i) / i;
  return out;
}

/// Number of non-decreasing tuples of length `order` over `dim` indices.
constexpr std::uint64_t canonical_count(std::uint64_t dim, std::uint64_t order) {
  return dim == 0 ? (order == 0 ? 1 : 0) : binomial(dim + order - 1, order);
}

/// All non-decreasing tuples of length `order` over 0..dim-1, lexicographic.
inline std::vector<IndexTuple> canonical_tuples(std::uint32_t dim, std::uint32_t order) {
  std::vector<IndexTuple> out;
  if (order == 0) return {IndexTuple{}};
  if (dim == 0) return out;
  out.reserve(canonical_count(dim, order));
  IndexTuple t(order, 0);
  for (;;) {
    out.push_back(t);
    std::int64_t pos = static_cast<std::int64_t>(order) - 1;
    while (pos >= 0 && t[pos] == dim - 1) --pos;
    if (pos < 0) break;
    const std::uint32_t v = t[pos] + 1;
    for (std::size_t q = pos; q < order; ++q) t[q] = v;
  }
  return out;
}

/// Number of distinct permutations of a tuple: order! / prod(multiplicity!).
inline std::uint64_t orbit_size(std::span<const std::uint32_t> tuple) {
  IndexTuple sorted(tuple.begin(), tuple.end());
  std::sort(sorted.begin(), sorted.end());
  std::uint64_t out = 1;
  std::uint64_t placed = 0;
  for (std::size_t i = 0; i < sorted.size();) {
    std::size_t j = i;
    while (j < sorted.size() && sorted[j] == sorted[i]) ++j;
    const std::uint64_t mult = j - i;
    out *= binomial(placed + mult, mult);
    placed += mult;
    i = j;
  }
  return out;
}

/// Symmetric tensor of a given order over `dim` variables holding T values.
/// Any permutation of an index tuple addresses the same stored entry.
template <typename T>
class MomentTensor {
 public:
  MomentTensor() = default;
  MomentTensor(std::uint32_t dim, std::uint32_t order)
      : dim_(dim), order_(order), entries_(canonical_count(dim, order)) {}

  [[nodiscard]] std::uint32_t dim() const { return dim_; }
  [[nodiscard]] std::uint32_t order() const { return order_; }
  [[nodiscard]] std::size_t size() const { return entries_.size(); }

  [[nodiscard]] std::vector<IndexTuple> tuples() const { return canonical_tuples(dim_, order_); }

  /// Position of the tuple (in any order) within canonical storage.
  [[nodiscard]] std::size_t rank(std::span<const std::uint32_t> tuple) const {
    if (tuple.size() != order_) throw std::invalid_argument("index tuple has wrong order");
    IndexTuple t(tuple.begin(), tuple.end());
    std::sort(t.begin(), t.end());
    std::size_t r = 0;
    std::uint32_t prev = 0;
    for (std::uint32_t p = 0; p < order_; ++p) {
      if (t[p] >= dim_) throw std::out_of_range("index " + std::to_string(t[p]) + " out of range");
      const std::uint32_t remaining = order_ - p - 1;
      for (std::uint32_t u = prev; u < t[p]; ++u) r += canonical_count(dim_ - u, remaining);
      prev = t[p];
    }
    return r;
  }

  T& at(std::span<const std::uint32_t> tuple) { return entries_[rank(tuple)]; }
  const T& at(std::span<const std::uint32_t> tuple) const { return entries_[rank(tuple)]; }
  T& operator[](const IndexTuple& tuple) { return at(tuple); }
  const T& operator[](const IndexTuple& tuple) const { return at(tuple); }

  /// Canonical-order storage; index i corresponds to tuples()[i].
  std::vector<T>& entries() { return entries_; }
  [[nodiscard]] const std::vector<T>& entries() const { return entries_; }

  friend bool operator==(const MomentTensor&, const MomentTensor&) = default;

 private:
  std::uint32_t dim_ = 0;
  std::uint32_t order_ = 0;
  std::vector<T> entries_;
};

}  // namespace polysem
