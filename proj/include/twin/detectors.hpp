#pragma once

#include <optional>
#include <span>
#include <vector>

#include "twin/config.hpp"
#include "twin/stream_state.hpp"

namespace twin {

// Window lengths scanned at monitoring time k.
//
// The exact grid visits every admissible window 1 <= l <= min(k, (N+k)/2).
// The geometric grid visits l = 1, then ceil(previous * ratio) (always
// advancing by at least one), and always includes the largest admissible l;
// it is an approximation for long Monte Carlo horizons.
struct ScanGrid {
  enum class Kind { exact, geometric };
  Kind kind = Kind::exact;
  double ratio = 1.1;

  static ScanGrid exact() { return {}; }
  static ScanGrid geometric(double ratio = 1.1) { return {Kind::geometric, ratio}; }

  std::vector<long> windows(long ell_max) const;
};

struct ScanResult {
  double value = 0.0;
  long argmax_ell = 0;
};

// Largest admissible window at monitoring index k: min(k, (n_train + k) / 2).
long max_window(long n_train, long k) noexcept;

// |min(1, l/N) S_max(l,N) - (S_{N+k} - S_{N+k-l})|. O(1).
double twin_gamma(const StreamState& state, long ell, long k);

// l^{-1/2} log^{-beta}(C0 + N/l) log^{-beta}(C0 + (N+k)/N).
double twin_weight(long ell, long k, long n_train, const DetectorParams& params);

// The two factors of twin_weight: l^{-1/2} log^{-beta}(C0 + N/l) and
// log^{-beta}(C0 + (N+k)/N).
double twin_window_weight(long ell, long n_train, const DetectorParams& params);
double twin_time_weight(long k, long n_train, const DetectorParams& params);

// max_l w(l,k) * gamma(l,k) without any scale division; smallest l wins ties.
ScanResult twin_scan(const StreamState& state, long k, const DetectorParams& params,
                     const ScanGrid& grid = ScanGrid::exact());

// V_N = N^{-3/2} sum_{i<=N} |S_i - (i/N) S_N| over a training sample.
double self_normalizer(std::span<const double> training);
double self_normalizer(const StreamState& state);

// Divisor applied to a mean detector under cfg.scale: sigma-hat for
// known / train_variance / lrv, V_N for self_normalized, 1 for none.
// Throws Error(zero_variance) or Error(degenerate_normalizer) on a zero divisor.
double scale_divisor(const StreamState& state, const MonitorConfig& cfg);

// TWIN detector. Divides the weighted scan by sigma-hat for variance-based
// scale modes so that quantiles of L(1) apply; unscaled for self_normalized
// and none.
ScanResult twin_detector(const StreamState& state, long k, const MonitorConfig& cfg,
                         const ScanGrid& grid = ScanGrid::exact());

// Unscaled TWIN detector divided by V_N.
ScanResult sn_detector(const StreamState& state, long k, const MonitorConfig& cfg,
                       const ScanGrid& grid = ScanGrid::exact());

// sup_x |min(1, l/N) G_max(l,N)(x) - (G_{N+k}(x) - G_{N+k-l}(x))|, where G_j
// counts observations <= x among the first j. Exact: the contrast is a right
// continuous step function, so its supremum is attained at a pooled sample value.
double np_gamma(const StreamState& state, long ell, long k, const DetectorParams& params);

// NP-TWIN detector: max_l w(l,k) * np_gamma(l,k). Exact sweep over l that
// keeps both windows sorted incrementally.
ScanResult np_detector(const StreamState& state, long k, const MonitorConfig& cfg,
                       const ScanGrid& grid = ScanGrid::exact());

// Dispatches to the detector selected by cfg.detector (baselines included).
// RC reports max_contrast / threshold, so it alarms when the value exceeds 1,
// and argmax_ell = N + k - split.
ScanResult evaluate_detector(const StreamState& state, long k, const MonitorConfig& cfg,
                             const ScanGrid& grid = ScanGrid::exact());

// First post-change observation (0-based) implied by a maximizer at step k:
// N + k - l for TC, SNTC and NPTC (window length l), N + l for PC, FC and WC
// (split l), the split for RC (argmax N + k - split). C and MM have none.
std::optional<long> change_index(DetectorKind kind, long n_train, long k, long argmax);

}  // namespace twin
