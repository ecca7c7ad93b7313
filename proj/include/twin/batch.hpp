#pragma once

#include <span>
#include <vector>

#include "twin/config.hpp"
#include "twin/detectors.hpp"

namespace twin {

struct SeriesOutcome {
  bool detected = false;
  long k_hat = 0;          // first k with statistic > threshold; 0 when none
  double statistic = 0.0;  // detector value at k_hat
  long ell_hat = 0;        // argmax at k_hat, same convention as evaluate_detector
};

// Offline evaluation of a detector over a complete series x_1..x_{N+T}.
//
// Produces the same values as evaluate_detector on a StreamState fed with the
// same observations, but reuses work across k: O(1) steps for C, PC, FC and MM,
// cached weights for TC / SNTC / WC, and for NPTC a row sweep over k at fixed l
// with a segment tree over value ranks. Rows are pruned with the bound
// |gamma(l,k) - gamma(l',k)| <= |l - l'| (one observation enters or leaves each
// window per unit step), so first-crossing and supremum searches stay exact.
class SeriesScanner {
 public:
  SeriesScanner(std::span<const double> x, long n_train, ScanGrid grid = ScanGrid::exact());

  long n_train() const noexcept { return n_; }
  long horizon() const noexcept { return static_cast<long>(x_.size()) - n_; }

  // Value and argmax for k = 1..horizon (index k-1).
  std::vector<ScanResult> trace(const MonitorConfig& cfg) const;
  SeriesOutcome first_crossing(const MonitorConfig& cfg, double threshold) const;
  // max over k = 1..horizon.
  double supremum(const MonitorConfig& cfg) const;

  // Divisor used by cfg.detector (1 for NPTC and RC).
  double divisor(const MonitorConfig& cfg) const;

 private:
  struct Weights;
  Weights weights(const DetectorParams& p) const;

  double np_search(const MonitorConfig& cfg, double threshold, bool supremum, long* k_hat) const;

  std::vector<double> x_;
  long n_;
  ScanGrid grid_;
  std::vector<double> prefix_;
};

}  // namespace twin
