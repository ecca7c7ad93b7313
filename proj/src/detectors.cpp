#include "twin/detectors.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstdlib>

#include "twin/baselines.hpp"
#include "twin/compensated_sum.hpp"
#include "twin/errors.hpp"
#include "twin/variance.hpp"

namespace twin {
namespace {

template <class F>
void for_each_window(const ScanGrid& grid, long ell_max, F&& f) {
  if (ell_max < 1) return;
  if (grid.kind == ScanGrid::Kind::exact) {
    for (long ell = 1; ell <= ell_max; ++ell) f(ell);
    return;
  }
  long ell = 1;
  while (ell < ell_max) {
    f(ell);
    ell = std::max(ell + 1, static_cast<long>(std::ceil(static_cast<double>(ell) * grid.ratio)));
  }
  f(ell_max);
}

void check_window(const StreamState& state, long ell, long k) {
  const long n = state.n_train();
  if (k < 1 || ell < 1 || ell > max_window(n, k))
    throw Error(ErrorKind::index_range,
                "window l=" + std::to_string(ell) + " is not admissible at k=" + std::to_string(k));
  if (static_cast<long>(state.count()) < n + k)
    throw Error(ErrorKind::index_range, "monitoring index k=" + std::to_string(k) + " not yet observed");
}

bool divides_by_sigma(ScaleMode mode) {
  return mode == ScaleMode::known || mode == ScaleMode::train_variance || mode == ScaleMode::lrv;
}

// max over distinct pooled values v of |num * #{a <= v} - den * #{b <= v}| / den.
double ecdf_contrast(std::span<const double> a, std::span<const double> b, std::int64_t num,
                     std::int64_t den) {
  std::size_t i = 0, j = 0;
  std::int64_t best = 0;
  while (i < a.size() || j < b.size()) {
    double v;
    if (i == a.size()) v = b[j];
    else if (j == b.size()) v = a[i];
    else v = std::min(a[i], b[j]);
    while (i < a.size() && a[i] == v) ++i;
    while (j < b.size() && b[j] == v) ++j;
    const std::int64_t d = num * static_cast<std::int64_t>(i) - den * static_cast<std::int64_t>(j);
    best = std::max(best, d < 0 ? -d : d);
  }
  return static_cast<double>(best) / static_cast<double>(den);
}

void sorted_insert(std::vector<double>& v, double x) {
  v.insert(std::upper_bound(v.begin(), v.end(), x), x);
}

}  // namespace

std::vector<long> ScanGrid::windows(long ell_max) const {
  std::vector<long> out;
  for_each_window(*this, ell_max, [&](long ell) { out.push_back(ell); });
  return out;
}

long max_window(long n_train, long k) noexcept { return std::min(k, (n_train + k) / 2); }

double twin_gamma(const StreamState& state, long ell, long k) {
  check_window(state, ell, k);
  const long n = state.n_train();
  const auto s = state.prefix_sums();
  const double first = ell >= n ? s[ell] : static_cast<double>(ell) * s[n] / static_cast<double>(n);
  const double recent = s[n + k] - s[n + k - ell];
  return std::abs(first - recent);
}

double twin_window_weight(long ell, long n_train, const DetectorParams& params) {
  const double l = static_cast<double>(ell);
  return std::pow(std::log(params.c0 + static_cast<double>(n_train) / l), -params.beta) / std::sqrt(l);
}

double twin_time_weight(long k, long n_train, const DetectorParams& params) {
  const double n = static_cast<double>(n_train);
  return std::pow(std::log(params.c0 + (n + static_cast<double>(k)) / n), -params.beta);
}

double twin_weight(long ell, long k, long n_train, const DetectorParams& params) {
  return twin_window_weight(ell, n_train, params) * twin_time_weight(k, n_train, params);
}

ScanResult twin_scan(const StreamState& state, long k, const DetectorParams& params, const ScanGrid& grid) {
  const long n = state.n_train();
  check_window(state, 1, k);
  const auto s = state.prefix_sums();
  const double sn = s[n];
  const double end = s[n + k];
  ScanResult best;
  best.value = -1.0;
  for_each_window(grid, max_window(n, k), [&](long ell) {
    const double first = ell >= n ? s[ell] : static_cast<double>(ell) * sn / static_cast<double>(n);
    const double g = std::abs(first - (end - s[n + k - ell]));
    const double v = twin_window_weight(ell, n, params) * g;
    if (v > best.value) best = {v, ell};
  });
  best.value *= twin_time_weight(k, n, params);
  return best;
}

double self_normalizer(std::span<const double> training) {
  const std::size_t n = training.size();
  if (n == 0) return 0.0;
  CompensatedSum total;
  for (double x : training) total.add(x);
  const double sn = total.value();
  const double nd = static_cast<double>(n);
  CompensatedSum s, acc;
  for (std::size_t i = 0; i < n; ++i) {
    s.add(training[i]);
    acc.add(std::abs(s.value() - static_cast<double>(i + 1) / nd * sn));
  }
  return acc.value() / (nd * std::sqrt(nd));
}

double self_normalizer(const StreamState& state) { return state.v_n(); }

double scale_divisor(const StreamState& state, const MonitorConfig& cfg) {
  double d = 1.0;
  switch (cfg.scale.mode) {
    case ScaleMode::known:
      d = std::sqrt(cfg.scale.sigma2);
      break;
    case ScaleMode::train_variance:
      d = std::sqrt(state.train_var());
      break;
    case ScaleMode::lrv:
      state.v_n();  // training complete
      d = std::sqrt(estimate_lrv(state.training(), cfg.scale.bandwidth).sigma2_lr);
      break;
    case ScaleMode::self_normalized:
      d = state.v_n();
      if (!(d > 0.0))
        throw Error(ErrorKind::degenerate_normalizer, "V_N is zero; self-normalized monitoring cannot start");
      return d;
    case ScaleMode::none:
      return 1.0;
  }
  if (!(d > 0.0)) throw Error(ErrorKind::zero_variance, "scale estimate is zero");
  return d;
}

ScanResult twin_detector(const StreamState& state, long k, const MonitorConfig& cfg, const ScanGrid& grid) {
  ScanResult r = twin_scan(state, k, cfg.params, grid);
  if (divides_by_sigma(cfg.scale.mode)) r.value /= scale_divisor(state, cfg);
  return r;
}

ScanResult sn_detector(const StreamState& state, long k, const MonitorConfig& cfg, const ScanGrid& grid) {
  const double v = state.v_n();
  if (!(v > 0.0))
    throw Error(ErrorKind::degenerate_normalizer, "V_N is zero; self-normalized monitoring cannot start");
  ScanResult r = twin_scan(state, k, cfg.params, grid);
  r.value /= v;
  return r;
}

double np_gamma(const StreamState& state, long ell, long k, const DetectorParams&) {
  check_window(state, ell, k);
  const long n = state.n_train();
  const auto obs = state.observations();
  std::vector<double> recent(obs.begin() + (n + k - ell), obs.begin() + (n + k));
  std::sort(recent.begin(), recent.end());
  if (ell < n) return ecdf_contrast(state.sorted_training(), recent, ell, n);
  std::vector<double> first(obs.begin(), obs.begin() + ell);
  std::sort(first.begin(), first.end());
  return ecdf_contrast(first, recent, 1, 1);
}

ScanResult np_detector(const StreamState& state, long k, const MonitorConfig& cfg, const ScanGrid& grid) {
  check_window(state, 1, k);
  const long n = state.n_train();
  const auto obs = state.observations();
  const long ell_max = max_window(n, k);
  std::vector<long> wanted;
  for_each_window(grid, ell_max, [&](long ell) { wanted.push_back(ell); });

  const auto train = state.sorted_training();
  std::vector<double> first(train.begin(), train.end());
  std::vector<double> recent;
  recent.reserve(static_cast<std::size_t>(ell_max));
  ScanResult best;
  best.value = -1.0;
  std::size_t next = 0;
  for (long ell = 1; ell <= ell_max && next < wanted.size(); ++ell) {
    sorted_insert(recent, obs[n + k - ell]);
    if (ell > n) sorted_insert(first, obs[ell - 1]);
    if (ell != wanted[next]) continue;
    ++next;
    const double g = ell < n ? ecdf_contrast(first, recent, ell, n) : ecdf_contrast(first, recent, 1, 1);
    const double v = twin_window_weight(ell, n, cfg.params) * g;
    if (v > best.value) best = {v, ell};
  }
  best.value *= twin_time_weight(k, n, cfg.params);
  return best;
}

ScanResult evaluate_detector(const StreamState& state, long k, const MonitorConfig& cfg, const ScanGrid& grid) {
  switch (cfg.detector) {
    case DetectorKind::TC:
      return twin_detector(state, k, cfg, grid);
    case DetectorKind::SNTC:
      return sn_detector(state, k, cfg, grid);
    case DetectorKind::NPTC:
      return np_detector(state, k, cfg, grid);
    case DetectorKind::RC: {
      const RcScan rc = rc_scan(state, k, cfg.orlicz_norm, cfg.alpha, cfg.params.c_rc);
      return {rc.max_contrast / rc.threshold, state.n_train() + k - rc.split};
    }
    default:
      return baseline_detector(state, k, cfg.detector, cfg);
  }
}

std::optional<long> change_index(DetectorKind kind, long n_train, long k, long argmax) {
  switch (kind) {
    case DetectorKind::PC:
    case DetectorKind::FC:
    case DetectorKind::WC:
      return n_train + argmax;
    case DetectorKind::C:
    case DetectorKind::MM:
      return std::nullopt;
    default:
      return n_train + k - argmax;
  }
}

}  // namespace twin
