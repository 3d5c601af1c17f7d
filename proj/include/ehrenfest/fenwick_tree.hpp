#pragma once

#include <cstddef>
#include <span>
#include <vector>

namespace ehrenfest {

// Binary indexed tree over nonnegative weights with prefix-sum search.
//
// Incremental updates accumulate rounding in the internal partial sums, so
// the tree rebuilds itself from the stored leaf weights every
// kRebuildInterval updates.
class FenwickTree {
 public:
  static constexpr std::size_t kRebuildInterval = std::size_t{1} << 20;

  FenwickTree() = default;
  explicit FenwickTree(std::span<const double> weights) { assign(weights); }

  void assign(std::span<const double> weights) {
    leaf_.assign(weights.begin(), weights.end());
    rebuild();
  }

  std::size_t size() const { return leaf_.size(); }
  double weight(std::size_t i) const { return leaf_[i]; }
  double total() const { return total_; }
  std::size_t updates_since_rebuild() const { return updates_; }

  void set(std::size_t i, double w) {
    const double delta = w - leaf_[i];
    leaf_[i] = w;
    if (++updates_ >= kRebuildInterval) {
      rebuild();
      return;
    }
    for (std::size_t k = i + 1; k <= leaf_.size(); k += k & (~k + 1)) tree_[k] += delta;
    total_ += delta;
  }

  // Smallest i with prefix(i + 1) > u, for u in [0, total). Leaves of zero
  // weight are never returned.
  std::size_t find(double u) const {
    std::size_t pos = 0;
    for (std::size_t step = top_bit_; step != 0; step >>= 1) {
      const std::size_t next = pos + step;
      if (next <= leaf_.size() && tree_[next] <= u) {
        pos = next;
        u -= tree_[next];
      }
    }
    // Rounding can land on a zero-weight leaf or run past the end.
    if (pos >= leaf_.size()) pos = leaf_.size() - 1;
    while (leaf_[pos] <= 0.0 && pos > 0) --pos;
    while (leaf_[pos] <= 0.0 && pos + 1 < leaf_.size()) ++pos;
    return pos;
  }

  void rebuild() {
    const std::size_t n = leaf_.size();
    tree_.assign(n + 1, 0.0);
    for (std::size_t k = 1; k <= n; ++k) {
      tree_[k] += leaf_[k - 1];
      const std::size_t parent = k + (k & (~k + 1));
      if (parent <= n) tree_[parent] += tree_[k];
    }
    total_ = 0.0;
    for (double w : leaf_) total_ += w;
    top_bit_ = 1;
    while (top_bit_ * 2 <= n) top_bit_ *= 2;
    if (n == 0) top_bit_ = 0;
    updates_ = 0;
  }

 private:
  std::vector<double> leaf_;
  std::vector<double> tree_;
  double total_ = 0.0;
  std::size_t top_bit_ = 0;
  std::size_t updates_ = 0;
};

}  // namespace ehrenfest
