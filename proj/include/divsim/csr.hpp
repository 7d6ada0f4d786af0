#pragma once

#include <algorithm>
#include <cstdint>
#include <span>
#include <vector>

namespace divsim {

// Compressed adjacency lists: row i holds the out-arcs of source i.
template <typename T>
class Csr {
 public:
  Csr() : offsets_{0} {}

  explicit Csr(const std::vector<std::vector<T>>& rows) : offsets_{0} {
    for (const auto& r : rows) push_row(r);
  }

  void push_row(std::span<const T> row) {
    targets_.insert(targets_.end(), row.begin(), row.end());
    offsets_.push_back(static_cast<std::uint64_t>(targets_.size()));
  }
  void push_row(const std::vector<T>& row) { push_row(std::span<const T>(row)); }

  // Sorts and deduplicates each row in place.
  void normalize() {
    std::vector<T> out;
    out.reserve(targets_.size());
    std::vector<std::uint64_t> offs{0};
    for (std::size_t i = 0; i + 1 < offsets_.size(); ++i) {
      auto b = targets_.begin() + static_cast<std::ptrdiff_t>(offsets_[i]);
      auto e = targets_.begin() + static_cast<std::ptrdiff_t>(offsets_[i + 1]);
      std::sort(b, e);
      auto last = std::unique(b, e);
      out.insert(out.end(), b, last);
      offs.push_back(out.size());
    }
    targets_ = std::move(out);
    offsets_ = std::move(offs);
  }

  std::span<const T> row(std::size_t i) const {
    return {targets_.data() + offsets_[i], static_cast<std::size_t>(offsets_[i + 1] - offsets_[i])};
  }

  bool contains(std::size_t i, const T& v) const {
    auto r = row(i);
    return std::binary_search(r.begin(), r.end(), v);
  }

  std::size_t rows() const { return offsets_.size() - 1; }
  std::size_t arcs() const { return targets_.size(); }
  const std::vector<T>& targets() const { return targets_; }
  const std::vector<std::uint64_t>& offsets() const { return offsets_; }

 private:
  std::vector<std::uint64_t> offsets_;
  std::vector<T> targets_;
};

}  // namespace divsim
