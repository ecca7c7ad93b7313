#include "twin/rank_index.hpp"

#include <algorithm>

namespace twin {

RankIndex::RankIndex(std::size_t block_size) : block_(block_size == 0 ? 64 : block_size) {}

void RankIndex::push_back(double x) {
  if (values_.size() % block_ == 0) {
    sorted_.emplace_back();
    sorted_.back().reserve(block_);
  }
  values_.push_back(x);
  auto& blk = sorted_.back();
  blk.insert(std::upper_bound(blk.begin(), blk.end(), x), x);
}

template <bool Inclusive>
std::size_t RankIndex::count(std::size_t first, std::size_t last, double x) const {
  last = std::min(last, values_.size());
  if (first >= last) return 0;
  auto hit = [x](double v) { return Inclusive ? v <= x : v < x; };
  std::size_t n = 0;
  const std::size_t first_full = (first + block_ - 1) / block_;
  const std::size_t last_full = last / block_;
  if (first_full >= last_full) {
    for (std::size_t i = first; i < last; ++i) n += hit(values_[i]);
    return n;
  }
  for (std::size_t i = first; i < first_full * block_; ++i) n += hit(values_[i]);
  for (std::size_t b = first_full; b < last_full; ++b) {
    const auto& blk = sorted_[b];
    auto it = Inclusive ? std::upper_bound(blk.begin(), blk.end(), x)
                        : std::lower_bound(blk.begin(), blk.end(), x);
    n += static_cast<std::size_t>(it - blk.begin());
  }
  for (std::size_t i = last_full * block_; i < last; ++i) n += hit(values_[i]);
  return n;
}

std::size_t RankIndex::count_le(std::size_t first, std::size_t last, double x) const {
  return count<true>(first, last, x);
}

std::size_t RankIndex::count_lt(std::size_t first, std::size_t last, double x) const {
  return count<false>(first, last, x);
}

}  // namespace twin
