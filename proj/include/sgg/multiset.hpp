#pragma once

#include <algorithm>
#include <cstddef>
#include <map>
#include <string>

namespace sgg {

/// Element -> multiplicity map. Multiplicities are always >= 1; elements with
/// zero count are erased.
template <class Token>
class Multiset {
 public:
  using Counts = std::map<Token, std::size_t>;

  Multiset() = default;
  Multiset(std::initializer_list<std::pair<const Token, std::size_t>> init) {
    for (const auto& [token, count] : init) add(token, count);
  }

  void add(const Token& token, std::size_t count = 1) {
    if (count == 0) return;
    counts_[token] += count;
    size_ += count;
  }

  std::size_t count(const Token& token) const {
    auto it = counts_.find(token);
    return it == counts_.end() ? 0 : it->second;
  }

  /// |A| = sum of multiplicities.
  std::size_t cardinality() const { return size_; }
  std::size_t distinct() const { return counts_.size(); }
  bool empty() const { return size_ == 0; }

  const Counts& counts() const { return counts_; }
  auto begin() const { return counts_.begin(); }
  auto end() const { return counts_.end(); }

  friend bool operator==(const Multiset&, const Multiset&) = default;

 private:
  Counts counts_;
  std::size_t size_ = 0;
};

/// |A ∩ B| with min-multiplicity intersection.
template <class Token>
std::size_t intersection_size(const Multiset<Token>& a, const Multiset<Token>& b) {
  std::size_t total = 0;
  auto ia = a.begin();
  auto ib = b.begin();
  while (ia != a.end() && ib != b.end()) {
    if (ia->first < ib->first) {
      ++ia;
    } else if (ib->first < ia->first) {
      ++ib;
    } else {
      total += std::min(ia->second, ib->second);
      ++ia;
      ++ib;
    }
  }
  return total;
}

/// |A ∪ B| with max-multiplicity union.
template <class Token>
std::size_t union_size(const Multiset<Token>& a, const Multiset<Token>& b) {
  return a.cardinality() + b.cardinality() - intersection_size(a, b);
}

/// A ∖ B by multiplicity subtraction.
template <class Token>
Multiset<Token> difference(const Multiset<Token>& a, const Multiset<Token>& b) {
  Multiset<Token> out;
  for (const auto& [token, count] : a) {
    const std::size_t other = b.count(token);
    if (count > other) out.add(token, count - other);
  }
  return out;
}

}  // namespace sgg
