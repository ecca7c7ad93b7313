#pragma once

#include <cstddef>
#include <span>
#include <vector>

namespace twin {

// Append-only order-statistic index over a positional sequence.
//
// Positions are grouped into fixed-size blocks; each block keeps a sorted copy
// of its values. Range rank queries binary-search whole blocks and scan the two
// partial blocks at the ends.
class RankIndex {
 public:
  explicit RankIndex(std::size_t block_size = 64);

  void push_back(double x);

  std::size_t size() const noexcept { return values_.size(); }
  std::span<const double> values() const noexcept { return values_; }

  // Number of values <= x (resp. < x) at positions [first, last).
  std::size_t count_le(std::size_t first, std::size_t last, double x) const;
  std::size_t count_lt(std::size_t first, std::size_t last, double x) const;

 private:
  template <bool Inclusive>
  std::size_t count(std::size_t first, std::size_t last, double x) const;

  std::size_t block_;
  std::vector<double> values_;
  std::vector<std::vector<double>> sorted_;
};

}  // namespace twin
