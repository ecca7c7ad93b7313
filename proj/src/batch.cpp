#include "twin/batch.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <numeric>

#include "twin/baselines.hpp"
#include "twin/compensated_sum.hpp"
#include "twin/errors.hpp"
#include "twin/stream_state.hpp"

namespace twin {

struct SeriesScanner::Weights {
  std::vector<double> window;  // index l
  std::vector<double> time;    // index k
};

namespace {

// Prefix max/min over a difference array indexed by value rank. Node values
// stay below n_train * max(n_train, window) and fit in 32 bits.
class RankTree {
 public:
  explicit RankTree(std::size_t leaves) {
    while (size_ < leaves) size_ <<= 1;
    node_.assign(2 * size_, Node{});
  }

  void build(const std::vector<std::int32_t>& d) {
    for (std::size_t i = 0; i < size_; ++i) set_leaf(size_ + i, i < d.size() ? d[i] : 0);
    for (std::size_t i = size_ - 1; i > 0; --i) pull(i);
  }

  // Adds v at pos and -v at neg, then repairs both leaf-to-root paths.
  void move(std::size_t neg, std::size_t pos, std::int32_t v) {
    std::size_t a = neg + size_, b = pos + size_;
    set_leaf(a, node_[a].sum - v);
    set_leaf(b, node_[b].sum + v);
    a >>= 1;
    b >>= 1;
    while (a != b) {
      pull(a);
      pull(b);
      a >>= 1;
      b >>= 1;
    }
    for (; a > 0; a >>= 1) pull(a);
  }

  std::int32_t absmax() const { return std::max(node_[1].hi, -node_[1].lo); }

 private:
  struct Node {
    std::int32_t sum = 0, hi = 0, lo = 0;
  };
  void set_leaf(std::size_t p, std::int32_t v) { node_[p] = {v, std::max(0, v), std::min(0, v)}; }
  void pull(std::size_t i) {
    const Node& l = node_[2 * i];
    const Node& r = node_[2 * i + 1];
    node_[i] = {l.sum + r.sum, std::max(l.hi, l.sum + r.hi), std::min(l.lo, l.sum + r.lo)};
  }

  std::size_t size_ = 1;
  std::vector<Node> node_;
};

class SparseMax {
 public:
  explicit SparseMax(const std::vector<double>& v) {
    table_.push_back(v);
    for (std::size_t w = 1; 2 * w <= v.size(); w <<= 1) {
      const auto& prev = table_.back();
      std::vector<double> next(v.size() - 2 * w + 1);
      for (std::size_t i = 0; i < next.size(); ++i) next[i] = std::max(prev[i], prev[i + w]);
      table_.push_back(std::move(next));
    }
  }
  double query(std::size_t a, std::size_t b) const {  // inclusive
    std::size_t lvl = 0;
    while ((std::size_t{2} << lvl) <= b - a + 1) ++lvl;
    return std::max(table_[lvl][a], table_[lvl][b + 1 - (std::size_t{1} << lvl)]);
  }

 private:
  std::vector<std::vector<double>> table_;
};

bool divides_by_sigma(ScaleMode mode) {
  return mode == ScaleMode::known || mode == ScaleMode::train_variance || mode == ScaleMode::lrv;
}

long first_k(long ell, long n) { return std::max(ell, 2 * ell - n); }

}  // namespace

SeriesScanner::SeriesScanner(std::span<const double> x, long n_train, ScanGrid grid)
    : x_(x.begin(), x.end()), n_(n_train), grid_(grid) {
  if (n_train < 2) throw Error(ErrorKind::usage, "n_train must be at least 2");
  if (static_cast<long>(x_.size()) < n_train) throw Error(ErrorKind::data, "series shorter than the training sample");
  prefix_.reserve(x_.size() + 1);
  prefix_.push_back(0.0);
  CompensatedSum s;
  for (double v : x_) {
    if (!std::isfinite(v)) throw Error(ErrorKind::data, "non-finite observation");
    s.add(v);
    prefix_.push_back(s.value());
  }
}

SeriesScanner::Weights SeriesScanner::weights(const DetectorParams& p) const {
  Weights w;
  const long t = horizon();
  const long lmax = std::max(1L, max_window(n_, t));
  w.window.resize(lmax + 1);
  for (long l = 1; l <= lmax; ++l) w.window[l] = twin_window_weight(l, n_, p);
  w.time.resize(t + 1);
  for (long k = 1; k <= t; ++k) w.time[k] = twin_time_weight(k, n_, p);
  return w;
}

double SeriesScanner::divisor(const MonitorConfig& cfg) const {
  StreamState st(n_, false);
  for (long i = 0; i < n_; ++i) st.ingest(x_[i]);
  switch (cfg.detector) {
    case DetectorKind::NPTC:
    case DetectorKind::RC:
      return 1.0;
    case DetectorKind::SNTC: {
      const double v = st.v_n();
      if (!(v > 0.0))
        throw Error(ErrorKind::degenerate_normalizer, "V_N is zero; self-normalized monitoring cannot start");
      return v;
    }
    case DetectorKind::TC:
      return divides_by_sigma(cfg.scale.mode) ? scale_divisor(st, cfg) : 1.0;
    default:
      return scale_divisor(st, cfg);
  }
}

namespace {

// Per-k evaluation of the prefix-sum detectors, k visited in increasing order.
class Stepper {
 public:
  Stepper(const std::vector<double>& s, long n, const MonitorConfig& cfg, const ScanGrid& grid,
          const std::vector<double>* ww, const std::vector<double>* tw)
      : s_(s), n_(n), cfg_(cfg), grid_(grid), ww_(ww), tw_(tw) {
    if (grid.kind == ScanGrid::Kind::geometric) {
      const long t = static_cast<long>(s.size()) - 1 - n;
      geo_ = grid.windows(std::max(1L, max_window(n, t)));
    }
    const double nd = static_cast<double>(n);
    if (cfg.detector == DetectorKind::WC) {
      const long t = static_cast<long>(s.size()) - 1 - n;
      pow_.resize(t + 1);
      for (long d = 1; d <= t; ++d) pow_[d] = std::pow(static_cast<double>(d), -cfg.params.eta);
    }
    c_lo_ = c_hi_ = -s_[n];  // c_0 for PC
    const double m0 = s_[n] / nd;
    m_lo_ = m_hi_ = m0;  // m_0 for FC / WC
  }

  ScanResult step(long k) {
    const long n = n_;
    const double nd = static_cast<double>(n);
    switch (cfg_.detector) {
      case DetectorKind::TC:
      case DetectorKind::SNTC:
        return twin(k);
      case DetectorKind::C:
        return {weight_w1(k, n, cfg_.params.eta) *
                    std::abs(static_cast<double>(k) * s_[n] / nd - (s_[n + k] - s_[n])),
                0};
      case DetectorKind::MM: {
        const long m = static_cast<long>(std::floor(static_cast<double>(k) * cfg_.params.b_mosum));
        return {weight_w1(k, n, cfg_.params.eta) *
                    std::abs(static_cast<double>(k - m) * s_[n] / nd - (s_[n + k] - s_[n + m])),
                m};
      }
      case DetectorKind::PC: {
        if (k > 1) {
          const double c = static_cast<double>(k - 1) * s_[n] / nd - s_[n + k - 1];
          if (c <= c_lo_) c_lo_ = c, c_lo_at_ = k - 1;
          if (c >= c_hi_) c_hi_ = c, c_hi_at_ = k - 1;
        }
        const double ck = static_cast<double>(k) * s_[n] / nd - s_[n + k];
        return pick(ck - c_lo_, c_lo_at_, c_hi_ - ck, c_hi_at_, weight_w1(k, n, cfg_.params.eta));
      }
      case DetectorKind::FC: {
        if (k > 1) push_mean(k - 1);
        const double t = static_cast<double>(n + k);
        return pick(t * m_hi_ - s_[n + k], m_hi_at_, s_[n + k] - t * m_lo_, m_lo_at_,
                    weight_w1(k, n, cfg_.params.eta));
      }
      case DetectorKind::WC: {
        const double t = static_cast<double>(n + k);
        const double a = std::sqrt(nd) * std::pow(t, cfg_.params.eta - 1.0) / std::log(cfg_.params.c0 + t / nd);
        ScanResult best{-1.0, 0};
        for (long l = 0; l < k; ++l) {
          const double g = std::abs(t * (s_[n + l] / static_cast<double>(n + l)) - s_[n + k]);
          const double v = a * pow_[k - l] * g;
          if (v >= best.value) best = {v, l};
        }
        return best;
      }
      case DetectorKind::RC: {
        const long tt = n + k;
        const double td = static_cast<double>(tt);
        const double st = s_[tt];
        double best = 0.0;
        long split = 0;
        for (long j = 1; j < tt; ++j) {
          const double jd = static_cast<double>(j);
          const double d = s_[j] - jd / td * st;
          const double v = d * d * td / (jd * (td - jd));
          if (v > best) best = v, split = j;
        }
        const double thr = rc_threshold(k, n, cfg_.orlicz_norm, cfg_.alpha, cfg_.params.c_rc);
        return {std::sqrt(best) / thr, n + k - split};
      }
      default:
        throw Error(ErrorKind::usage, "detector not handled by the prefix-sum stepper");
    }
  }

 private:
  ScanResult twin(long k) const {
    const long n = n_;
    const double sn = s_[n];
    const double end = s_[n + k];
    const long m = max_window(n, k);
    ScanResult best{-1.0, 0};
    auto visit = [&](long ell) {
      const double first = ell >= n ? s_[ell] : static_cast<double>(ell) * sn / static_cast<double>(n);
      const double g = std::abs(first - (end - s_[n + k - ell]));
      const double v = (*ww_)[ell] * g;
      if (v > best.value) best = {v, ell};
    };
    if (grid_.kind == ScanGrid::Kind::exact) {
      for (long ell = 1; ell <= m; ++ell) visit(ell);
    } else {
      for (long ell : geo_) {
        if (ell >= m) break;
        visit(ell);
      }
      visit(m);
    }
    best.value *= (*tw_)[k];
    return best;
  }

  void push_mean(long l) {
    const double m = s_[n_ + l] / static_cast<double>(n_ + l);
    if (m <= m_lo_) m_lo_ = m, m_lo_at_ = l;
    if (m >= m_hi_) m_hi_ = m, m_hi_at_ = l;
  }

  static ScanResult pick(double up, long up_at, double down, long down_at, double w) {
    if (up > down || (up == down && up_at > down_at)) return {w * std::abs(up), up_at};
    return {w * std::abs(down), down_at};
  }

  const std::vector<double>& s_;
  long n_;
  const MonitorConfig& cfg_;
  ScanGrid grid_;
  const std::vector<double>* ww_;
  const std::vector<double>* tw_;
  std::vector<long> geo_;
  std::vector<double> pow_;
  double c_lo_, c_hi_;
  long c_lo_at_ = 0, c_hi_at_ = 0;
  double m_lo_, m_hi_;
  long m_lo_at_ = 0, m_hi_at_ = 0;
};

// Exact NP-TWIN rows gamma(l, k), k = k0(l)..k_end, by sweeping k.
class NpRows {
 public:
  NpRows(const std::vector<double>& x, long n) : x_(x), n_(n), tree_(1) {
    std::vector<long> order(x.size());
    std::iota(order.begin(), order.end(), 0L);
    std::sort(order.begin(), order.end(), [&](long a, long b) { return x[a] < x[b]; });
    rank_.resize(x.size());
    std::int64_t r = -1;
    for (std::size_t i = 0; i < order.size(); ++i) {
      if (i == 0 || x[order[i]] != x[order[i - 1]]) ++r;
      rank_[order[i]] = static_cast<std::uint32_t>(r);
    }
    distinct_ = static_cast<std::size_t>(r + 1);
    tree_ = RankTree(std::max<std::size_t>(1, distinct_));
    diff_.assign(distinct_, 0);
  }

  // visit(k, gamma) for k = k_begin..k_end until visit returns false.
  template <class F>
  void row(long ell, long k_begin, long k_end, F&& visit) {
    const long n = n_;
    k_begin = std::max(k_begin, first_k(ell, n));
    if (k_begin > k_end) return;
    const std::int32_t cf = static_cast<std::int32_t>(ell < n ? ell : 1);
    const std::int32_t cw = static_cast<std::int32_t>(ell < n ? n : 1);
    const double den = static_cast<double>(ell < n ? n : 1);
    std::fill(diff_.begin(), diff_.end(), 0);
    for (long i = 0; i < std::max(ell, n); ++i) diff_[rank_[i]] += cf;
    for (long i = n + k_begin - ell; i < n + k_begin; ++i) diff_[rank_[i]] -= cw;
    tree_.build(diff_);
    if (!visit(k_begin, static_cast<double>(tree_.absmax()) / den)) return;
    for (long k = k_begin + 1; k <= k_end; ++k) {
      tree_.move(rank_[n + k - 1], rank_[n + k - 1 - ell], cw);
      if (!visit(k, static_cast<double>(tree_.absmax()) / den)) return;
    }
  }

  // Rebuilding a row costs about this many sweep steps.
  long restart_cost() const { return static_cast<long>(distinct_ / 32) + 16; }

 private:
  const std::vector<double>& x_;
  long n_;
  std::vector<std::uint32_t> rank_;
  std::size_t distinct_ = 0;
  RankTree tree_;
  std::vector<std::int32_t> diff_;
};

ScanResult np_column(const std::vector<double>& x, long n, long k, const MonitorConfig& cfg, const ScanGrid& grid) {
  StreamState st(n, true);
  for (long i = 0; i < n + k; ++i) st.ingest(x[i]);
  return np_detector(st, k, cfg, grid);
}

}  // namespace

double SeriesScanner::np_search(const MonitorConfig& cfg, double threshold, bool sup, long* k_hat) const {
  const long n = n_;
  const long t = horizon();
  const Weights w = weights(cfg.params);
  const SparseMax wmax(w.window);
  NpRows rows(x_, n);

  long kcap = t + 1;  // exclusive bound on k still of interest
  double best = 0.0;
  auto level = [&] { return sup ? best : threshold; };

  using Spans = std::vector<std::pair<long, long>>;  // disjoint inclusive k ranges, ascending

  // gamma(l, .) on part of [k0, t]; NaN where not evaluated.
  struct Row {
    long ell = 0;
    long k0 = 0;
    std::vector<double> g;
    bool has(long k) const {
      return k >= k0 && k < k0 + static_cast<long>(g.size()) && !std::isnan(g[k - k0]);
    }
    double at(long k) const { return g[k - k0]; }
  };

  auto eval = [&](long ell, const Spans& spans) {
    Row r;
    r.ell = ell;
    r.k0 = first_k(ell, n);
    if (r.k0 > t) return r;
    r.g.assign(t - r.k0 + 1, std::numeric_limits<double>::quiet_NaN());
    const double wl = w.window[ell];
    // merge spans whose gap is cheaper to sweep than to rebuild
    Spans runs;
    for (auto [a, b] : spans) {
      a = std::max(a, r.k0);
      if (a > b) continue;
      if (!runs.empty() && a - runs.back().second <= rows.restart_cost()) runs.back().second = b;
      else runs.emplace_back(a, b);
    }
    for (auto [a, b] : runs) {
      if (a >= kcap) break;
      rows.row(ell, a, std::min(b, kcap - 1), [&](long k, double g) {
        r.g[k - r.k0] = g;
        const double v = wl * g * w.time[k];
        if (sup) {
          if (v > best) best = v;
        } else if (v > threshold) {
          kcap = k;
          return false;
        }
        return true;
      });
    }
    return r;
  };

  auto lmax_now = [&] { return kcap > 1 ? max_window(n, kcap - 1) : 0L; };

  // k in spans where rows strictly between lo and hi may still exceed the level.
  auto flagged = [&](const Row& lo, const Row& hi, long l1, long l2, const Spans& spans) {
    const double wl = wmax.query(l1, l2) * (1.0 + 1e-12);
    const double lvl = level();
    Spans out;
    for (auto [a, b] : spans) {
      for (long k = std::max(a, first_k(l1, n)); k <= std::min(b, kcap - 1); ++k) {
        const long u = std::min(l2, max_window(n, k));
        if (u < l1) continue;
        double g = static_cast<double>(u);
        if (lo.has(k)) {
          g = std::min(g, lo.at(k) + static_cast<double>(u - lo.ell));
          if (hi.has(k)) g = std::min(g, 0.5 * (lo.at(k) + hi.at(k) + static_cast<double>(hi.ell - lo.ell)));
        }
        if (wl * w.time[k] * g <= lvl) continue;
        if (!out.empty() && out.back().second == k - 1) out.back().second = k;
        else out.emplace_back(k, k);
      }
    }
    return out;
  };

  auto solve = [&](auto&& self, const Row& lo, const Row& hi, const Spans& spans) -> void {
    const long l1 = lo.ell + 1;
    const long l2 = std::min(hi.ell - 1, lmax_now());
    if (l2 < l1) return;
    const Spans hot = flagged(lo, hi, l1, l2, spans);
    if (hot.empty()) return;
    const long mid = std::min((lo.ell + hi.ell) / 2, l2);
    const Row m = eval(mid, hot);
    self(self, lo, m, hot);
    self(self, m, hi, hot);
  };

  const Spans all{{1, t}};
  std::vector<Row> anchors;
  for (long ell = 1; ell <= lmax_now();) {
    anchors.push_back(eval(ell, all));
    if (ell == lmax_now()) break;
    const long step = std::max(1L, static_cast<long>(8 * std::sqrt(static_cast<double>(ell))));
    ell = std::min(ell + step, lmax_now());
  }
  for (std::size_t i = 0; i + 1 < anchors.size(); ++i) solve(solve, anchors[i], anchors[i + 1], all);

  if (k_hat != nullptr) *k_hat = kcap <= t ? kcap : 0;
  return best;
}

std::vector<ScanResult> SeriesScanner::trace(const MonitorConfig& cfg) const {
  const long t = horizon();
  std::vector<ScanResult> out(t);
  if (cfg.detector == DetectorKind::NPTC) {
    if (grid_.kind != ScanGrid::Kind::exact) {
      for (long k = 1; k <= t; ++k) out[k - 1] = np_column(x_, n_, k, cfg, grid_);
      return out;
    }
    const Weights w = weights(cfg.params);
    NpRows rows(x_, n_);
    for (auto& r : out) r = {-1.0, 0};
    for (long ell = 1; ell <= max_window(n_, t); ++ell) {
      const double wl = w.window[ell];
      rows.row(ell, 1, t, [&](long k, double g) {
        const double v = wl * g;
        if (v > out[k - 1].value) out[k - 1] = {v, ell};
        return true;
      });
    }
    for (long k = 1; k <= t; ++k) out[k - 1].value *= w.time[k];
    return out;
  }
  const double div = divisor(cfg);
  const Weights w = weights(cfg.params);
  Stepper stepper(prefix_, n_, cfg, grid_, &w.window, &w.time);
  for (long k = 1; k <= t; ++k) {
    ScanResult r = stepper.step(k);
    r.value /= div;
    out[k - 1] = r;
  }
  return out;
}

SeriesOutcome SeriesScanner::first_crossing(const MonitorConfig& cfg, double threshold) const {
  const long t = horizon();
  SeriesOutcome out;
  if (t < 1) return out;
  if (cfg.detector == DetectorKind::NPTC) {
    if (grid_.kind != ScanGrid::Kind::exact) {
      for (long k = 1; k <= t; ++k) {
        const ScanResult r = np_column(x_, n_, k, cfg, grid_);
        if (r.value > threshold) return {true, k, r.value, r.argmax_ell};
      }
      return out;
    }
    long k_hat = 0;
    np_search(cfg, threshold, false, &k_hat);
    if (k_hat == 0) return out;
    const ScanResult r = np_column(x_, n_, k_hat, cfg, grid_);
    return {true, k_hat, r.value, r.argmax_ell};
  }
  const double div = divisor(cfg);
  const Weights w = weights(cfg.params);
  Stepper stepper(prefix_, n_, cfg, grid_, &w.window, &w.time);
  for (long k = 1; k <= t; ++k) {
    ScanResult r = stepper.step(k);
    r.value /= div;
    if (r.value > threshold) return {true, k, r.value, r.argmax_ell};
  }
  return out;
}

double SeriesScanner::supremum(const MonitorConfig& cfg) const {
  const long t = horizon();
  if (t < 1) return 0.0;
  if (cfg.detector == DetectorKind::NPTC && grid_.kind == ScanGrid::Kind::exact)
    return np_search(cfg, 0.0, true, nullptr);
  double best = 0.0;
  for (const auto& r : trace(cfg)) best = std::max(best, r.value);
  return best;
}

}  // namespace twin
