#pragma once

#include "twin/config.hpp"
#include "twin/detectors.hpp"
#include "twin/stream_state.hpp"

namespace twin {

// Contrast statistics of the comparison detectors. k is the monitoring index.
double gamma_c(const StreamState& state, long k);
double gamma_pc(const StreamState& state, long ell, long k);
double gamma_fc(const StreamState& state, long ell, long k);
double gamma_mm(const StreamState& state, long k, double b);

// N^{-1/2} ((N+k)/N)^{-1} ((N+k)/k)^eta
double weight_w1(long k, long n_train, double eta);
// N^{1/2} (N+k)^{eta-1} (k-l)^{-eta} log^{-1}(C0 + (N+k)/N), 0 <= l < k
double weight_w2(long ell, long k, long n_train, double eta, double c0);

// C, PC, FC, WC or MM detector at k divided by the scale divisor of cfg.
// PC, FC and WC maximize over 0 <= l < k and report the maximizing l
// (the split after which the recent block starts; the latest split wins
// ties); MM reports floor(k b) and C reports 0.
ScanResult baseline_detector(const StreamState& state, long k, DetectorKind kind,
                             const MonitorConfig& cfg);

// Retrospective CUSUM scan repeated at every monitoring step.
struct RcScan {
  double max_contrast = 0.0;  // max over splits of |S_s - (s/t) S_t| sqrt(t / (s (t-s)))
  long split = 0;             // maximizing s (first post-change position is s, 0-based)
  double threshold = 0.0;
  bool detected = false;
};

// Level schedule alpha_k = alpha * 6 / (pi^2 k^2); sum over k >= 1 equals alpha.
double rc_level(long k, double alpha);

// c_rc * orlicz * sqrt(log(2 (N+k) / alpha_k)): a union bound over the N+k-1
// splits at time N+k with a subgaussian tail exp(-x^2 / (2 orlicz^2)).
double rc_threshold(long k, long n_train, double orlicz_norm, double alpha, double c_rc);

// Throws Error(usage) when orlicz_norm is not positive.
RcScan rc_scan(const StreamState& state, long k, double orlicz_norm, double alpha,
               double c_rc = std::sqrt(2.0));
bool rc_monitor(const StreamState& state, long k, double orlicz_norm, double alpha,
                double c_rc = std::sqrt(2.0));

}  // namespace twin
