#pragma once

#include <cstdint>
#include <random>
#include <vector>

#include "twin/stream_state.hpp"

namespace twin::test {

inline StreamState make_state(long n_train, const std::vector<double>& xs, bool retain = true) {
  StreamState st(n_train, retain);
  for (double x : xs) st.ingest(x);
  return st;
}

inline std::vector<double> normal_data(std::size_t n, std::uint64_t seed, double sd = 1.0) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> d(0.0, sd);
  std::vector<double> v(n);
  for (auto& x : v) x = d(rng);
  return v;
}

// Integer-valued draws; keeps sums exact so invariance checks can use ==.
inline std::vector<double> integer_data(std::size_t n, std::uint64_t seed, int lo = -20, int hi = 20) {
  std::mt19937_64 rng(seed);
  std::uniform_int_distribution<int> d(lo, hi);
  std::vector<double> v(n);
  for (auto& x : v) x = d(rng);
  return v;
}

}  // namespace twin::test
