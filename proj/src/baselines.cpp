#include "twin/baselines.hpp"

#include <cmath>
#include <numbers>

#include "twin/errors.hpp"

namespace twin {
namespace {

void check_k(const StreamState& state, long k) {
  if (k < 1) throw Error(ErrorKind::index_range, "monitoring index must be positive");
  if (static_cast<long>(state.count()) < state.n_train() + k)
    throw Error(ErrorKind::index_range, "monitoring index k=" + std::to_string(k) + " not yet observed");
}

void check_split(const StreamState& state, long ell, long k) {
  check_k(state, k);
  if (ell < 0 || ell > k)
    throw Error(ErrorKind::index_range, "split l=" + std::to_string(ell) + " outside [0, k]");
}

}  // namespace

double gamma_c(const StreamState& state, long k) {
  check_k(state, k);
  const long n = state.n_train();
  const auto s = state.prefix_sums();
  return std::abs(static_cast<double>(k) * s[n] / static_cast<double>(n) - (s[n + k] - s[n]));
}

double gamma_pc(const StreamState& state, long ell, long k) {
  check_split(state, ell, k);
  const long n = state.n_train();
  const auto s = state.prefix_sums();
  return std::abs(static_cast<double>(k - ell) * s[n] / static_cast<double>(n) - (s[n + k] - s[n + ell]));
}

double gamma_fc(const StreamState& state, long ell, long k) {
  check_split(state, ell, k);
  const long n = state.n_train();
  const auto s = state.prefix_sums();
  return std::abs(static_cast<double>(k - ell) * s[n + ell] / static_cast<double>(n + ell) -
                  (s[n + k] - s[n + ell]));
}

double gamma_mm(const StreamState& state, long k, double b) {
  check_k(state, k);
  const long n = state.n_train();
  const long m = static_cast<long>(std::floor(static_cast<double>(k) * b));
  const auto s = state.prefix_sums();
  return std::abs(static_cast<double>(k - m) * s[n] / static_cast<double>(n) - (s[n + k] - s[n + m]));
}

double weight_w1(long k, long n_train, double eta) {
  const double n = static_cast<double>(n_train);
  const double t = n + static_cast<double>(k);
  return std::pow(t / static_cast<double>(k), eta) * n / (t * std::sqrt(n));
}

double weight_w2(long ell, long k, long n_train, double eta, double c0) {
  const double n = static_cast<double>(n_train);
  const double t = n + static_cast<double>(k);
  return std::sqrt(n) * std::pow(t, eta - 1.0) * std::pow(static_cast<double>(k - ell), -eta) /
         std::log(c0 + t / n);
}

ScanResult baseline_detector(const StreamState& state, long k, DetectorKind kind, const MonitorConfig& cfg) {
  check_k(state, k);
  const long n = state.n_train();
  const double div = scale_divisor(state, cfg);
  const double w1 = weight_w1(k, n, cfg.params.eta);
  ScanResult r;
  switch (kind) {
    case DetectorKind::C:
      r = {w1 * gamma_c(state, k), 0};
      break;
    case DetectorKind::MM:
      r = {w1 * gamma_mm(state, k, cfg.params.b_mosum),
           static_cast<long>(std::floor(static_cast<double>(k) * cfg.params.b_mosum))};
      break;
    case DetectorKind::PC:
    case DetectorKind::FC:
    case DetectorKind::WC: {
      r.value = -1.0;
      for (long ell = 0; ell < k; ++ell) {
        double v;
        if (kind == DetectorKind::PC) v = w1 * gamma_pc(state, ell, k);
        else if (kind == DetectorKind::FC) v = w1 * gamma_fc(state, ell, k);
        else v = weight_w2(ell, k, n, cfg.params.eta, cfg.params.c0) * gamma_fc(state, ell, k);
        if (v >= r.value) r = {v, ell};
      }
      break;
    }
    default:
      throw Error(ErrorKind::usage, to_string(kind) + " is not a weighted CUSUM baseline");
  }
  r.value /= div;
  return r;
}

double rc_level(long k, double alpha) {
  return alpha * 6.0 / (std::numbers::pi * std::numbers::pi * static_cast<double>(k) * static_cast<double>(k));
}

double rc_threshold(long k, long n_train, double orlicz_norm, double alpha, double c_rc) {
  const double t = static_cast<double>(n_train + k);
  return c_rc * orlicz_norm * std::sqrt(std::log(2.0 * t / rc_level(k, alpha)));
}

RcScan rc_scan(const StreamState& state, long k, double orlicz_norm, double alpha, double c_rc) {
  if (!(orlicz_norm > 0.0)) throw Error(ErrorKind::usage, "RC requires a positive Orlicz norm");
  check_k(state, k);
  const long t = state.n_train() + k;
  const auto s = state.prefix_sums();
  const double td = static_cast<double>(t);
  const double st = s[t];
  RcScan out;
  for (long j = 1; j < t; ++j) {
    const double jd = static_cast<double>(j);
    const double v = std::abs(s[j] - jd / td * st) * std::sqrt(td / (jd * (td - jd)));
    if (v > out.max_contrast) {
      out.max_contrast = v;
      out.split = j;
    }
  }
  out.threshold = rc_threshold(k, state.n_train(), orlicz_norm, alpha, c_rc);
  out.detected = out.max_contrast > out.threshold;
  return out;
}

bool rc_monitor(const StreamState& state, long k, double orlicz_norm, double alpha, double c_rc) {
  return rc_scan(state, k, orlicz_norm, alpha, c_rc).detected;
}

}  // namespace twin
