#include <algorithm>
#include <cmath>

#include "doctest.h"
#include "helpers.hpp"
#include "twin/batch.hpp"
#include "twin/errors.hpp"
#include "twin/monitor.hpp"

using namespace twin;

namespace {

// Step signal: 0 for positions < n + k_star, delta afterwards (0-based).
std::vector<double> step_stream(long n, long t, long k_star, double delta) {
  std::vector<double> x(n + t, 0.0);
  for (long j = n + k_star; j < n + t; ++j) x[j] = delta;
  return x;
}

// max_l w(l,k) gamma(l,k) by explicit re-summation
ScanResult naive_tc(const std::vector<double>& x, long n, long k, const DetectorParams& p) {
  ScanResult best;
  for (long l = 1; l <= std::min(k, (n + k) / 2); ++l) {
    double first = 0.0, recent = 0.0;
    for (long i = 0; i < std::max(l, n); ++i) first += x[i];
    for (long i = n + k - l; i < n + k; ++i) recent += x[i];
    const double g = std::abs(std::min(1.0, double(l) / n) * first - recent);
    const double v = g / (std::sqrt(double(l)) * std::pow(std::log(p.c0 + double(n) / l), p.beta) *
                          std::pow(std::log(p.c0 + double(n + k) / n), p.beta));
    if (v > best.value) best = {v, l};
  }
  return best;
}

MonitorConfig known_tc(long n) {
  auto cfg = MonitorConfig::for_detector(DetectorKind::TC, n);
  cfg.scale = {ScaleMode::known, 1.0, -1};
  return cfg;
}

}  // namespace

TEST_CASE("zero noise without a change never alarms") {
  std::vector<double> x(10 + 500, 0.0);
  for (double q : {1e-9, 0.5, 3.0}) {
    auto r = monitor(x, known_tc(10), q);
    CHECK_FALSE(r.verdict.detected);
    CHECK_FALSE(r.verdict.k_hat.has_value());
    CHECK(r.steps == 500);
  }
}

TEST_CASE("zero-noise first crossing matches enumeration") {
  const long n = 10;
  const DetectorParams p{};
  for (long k_star : {1L, 5L, 30L}) {
    for (double delta : {0.6, 1.0, 2.5}) {
      const auto x = step_stream(n, 1000, k_star, delta);
      const double q = 0.4;
      long k_oracle = 0, l_oracle = 0;
      for (long k = 1; k <= 1000 && !k_oracle; ++k) {
        auto r = naive_tc(x, n, k, p);
        if (r.value > q) k_oracle = k, l_oracle = r.argmax_ell;
      }
      REQUIRE(k_oracle > 0);
      auto rep = monitor(x, known_tc(n), q);
      REQUIRE(rep.verdict.detected);
      CHECK(*rep.verdict.k_hat == k_oracle);
      CHECK(rep.verdict.ell_hat == l_oracle);
      CHECK(*rep.verdict.change_estimate == n + k_oracle - l_oracle);
      // pure signal: the maximizing window is exactly the post-change block
      if (k_oracle - k_star <= n) CHECK(*rep.verdict.change_estimate == n + k_star);
      CHECK(rep.verdict.statistic > q);
      auto d = delay_result(k_star, rep.verdict);
      CHECK(d.delay == k_oracle - k_star);
      CHECK_FALSE(d.false_alarm);
    }
  }
}

TEST_CASE("online monitor agrees with the batch scanner") {
  const long n = 25;
  for (auto kind : {DetectorKind::TC, DetectorKind::SNTC, DetectorKind::NPTC, DetectorKind::C, DetectorKind::PC,
                    DetectorKind::FC, DetectorKind::WC, DetectorKind::MM, DetectorKind::RC}) {
    auto cfg = MonitorConfig::for_detector(kind, n);
    if (kind == DetectorKind::RC) cfg.orlicz_norm = 0.5;
    for (std::uint64_t seed = 1; seed <= 4; ++seed) {
      auto x = test::normal_data(n + 300, seed);
      for (long j = n + 100; j < n + 300; ++j) x[j] += 1.0;
      SeriesScanner scan(x, n);
      const double q = kind == DetectorKind::RC ? 1.0 : scan.supremum(cfg) * 0.6;
      auto batch = scan.first_crossing(cfg, q);
      auto rep = monitor(x, cfg, q);
      CHECK(rep.verdict.detected == batch.detected);
      if (batch.detected) {
        CHECK(*rep.verdict.k_hat == batch.k_hat);
        CHECK(rep.verdict.ell_hat == batch.ell_hat);
        CHECK(rep.verdict.statistic == doctest::Approx(batch.statistic).epsilon(1e-9));
      }
    }
  }
}

TEST_CASE("detection and horizon bookkeeping") {
  const long n = 10;
  const auto x = step_stream(n, 100, 20, 3.0);
  SUBCASE("horizon stops early") {
    auto r = monitor(x, known_tc(n), 1e9, 40L);
    CHECK(r.steps == 40);
    CHECK_FALSE(r.verdict.detected);
  }
  SUBCASE("threshold zero alarms at the first nonzero statistic") {
    auto r = monitor(x, known_tc(n), 0.0);
    CHECK(*r.verdict.k_hat == 21);
  }
  SUBCASE("infinite threshold never alarms") {
    auto r = monitor(x, known_tc(n), INFINITY);
    CHECK_FALSE(r.verdict.detected);
  }
  SUBCASE("values after the alarm are ignored") {
    Monitor m(known_tc(n), 0.5);
    for (double v : x) m.push(v);
    CHECK(m.alarmed());
    CHECK(m.steps() == *m.verdict().k_hat);
  }
  SUBCASE("trace downsampling keeps the alarm step") {
    MonitorOptions o;
    o.trace_every = 7;
    auto r = monitor(x, known_tc(n), 2.0, std::nullopt, o);
    REQUIRE(r.verdict.detected);
    for (std::size_t i = 0; i + 1 < r.trace.size(); ++i) CHECK(r.trace[i].k % 7 == 0);
    CHECK(r.trace.back().k == *r.verdict.k_hat);
  }
}

TEST_CASE("false alarm classification") {
  DetectorVerdict v;
  v.detected = true;
  v.k_hat = 5;
  auto d = delay_result(10, v);
  CHECK(d.false_alarm);
  CHECK(d.delay == 0);
  v.k_hat.reset();
  v.detected = false;
  d = delay_result(10, v);
  CHECK_FALSE(d.false_alarm);
  CHECK_FALSE(d.k_hat.has_value());
}

TEST_CASE("errors") {
  SUBCASE("stream ends during training") {
    std::vector<double> x(5, 1.0);
    try {
      monitor(x, known_tc(10), 1.0);
      FAIL("expected error");
    } catch (const Error& e) {
      CHECK(e.kind() == ErrorKind::data);
    }
  }
  SUBCASE("constant training data under train_variance") {
    std::vector<double> x(30, 1.0);
    auto cfg = MonitorConfig::for_detector(DetectorKind::TC, 10);
    try {
      monitor(x, cfg, 1.0);
      FAIL("expected error");
    } catch (const Error& e) {
      CHECK(e.kind() == ErrorKind::zero_variance);
    }
  }
  SUBCASE("constant training data under SNTC") {
    std::vector<double> x(30, 1.0);
    auto cfg = MonitorConfig::for_detector(DetectorKind::SNTC, 10);
    try {
      monitor(x, cfg, 1.0);
      FAIL("expected error");
    } catch (const Error& e) {
      CHECK(e.kind() == ErrorKind::degenerate_normalizer);
    }
  }
  SUBCASE("table for another detector") {
    QuantileTable t = simulate_L_SN({}, GridSpec{0.05, 0.5, 5.0, 200.0}, 1000, 1, 0);
    auto x = test::normal_data(40, 3);
    try {
      monitor(x, MonitorConfig::for_detector(DetectorKind::TC, 10), t);
      FAIL("expected error");
    } catch (const Error& e) {
      CHECK(e.kind() == ErrorKind::config_mismatch);
    }
    auto rep = monitor(x, MonitorConfig::for_detector(DetectorKind::SNTC, 10), t);
    CHECK(rep.verdict.threshold == t.quantile(0.95));
    CHECK(rep.table_fingerprint == t.fingerprint);
  }
}

TEST_CASE("lrv scale is resolved once after training") {
  auto x = test::normal_data(200, 17);
  auto cfg = MonitorConfig::for_detector(DetectorKind::TC, 100);
  cfg.scale.mode = ScaleMode::lrv;
  cfg.scale.bandwidth = 0;
  auto r = monitor(x, cfg, 1e9);
  CHECK(r.scale_used.mode == ScaleMode::known);
  double mean = 0, ss = 0;
  for (int i = 0; i < 100; ++i) mean += x[i] / 100;
  for (int i = 0; i < 100; ++i) ss += (x[i] - mean) * (x[i] - mean);
  CHECK(r.scale_used.sigma2 == doctest::Approx(ss / 99));
}

TEST_CASE("snapshot and restore reproduce the uninterrupted run") {
  const long n = 20;
  auto x = test::normal_data(n + 200, 5);
  for (long j = n + 120; j < n + 200; ++j) x[j] += 1.5;
  for (auto kind : {DetectorKind::TC, DetectorKind::NPTC, DetectorKind::SNTC}) {
    auto cfg = MonitorConfig::for_detector(kind, n);
    const double q = SeriesScanner(x, n).supremum(cfg) * 0.7;
    MonitorOptions o;
    o.trace_every = 5;
    Monitor whole(cfg, q, o);
    for (double v : x) whole.push(v);
    for (std::size_t cut : {std::size_t{7}, std::size_t{n}, std::size_t{n + 60}}) {
      Monitor a(cfg, q, o);
      for (std::size_t i = 0; i < cut; ++i) a.push(x[i]);
      const auto doc = a.snapshot();
      Monitor b = Monitor::restore(nlohmann::json::parse(doc.dump()), cfg, o);
      for (std::size_t i = cut; i < x.size(); ++i) b.push(x[i]);
      CHECK(b.verdict().to_json() == whole.verdict().to_json());
      CHECK(b.trace().size() == whole.trace().size());
    }
    auto other = cfg;
    other.params.beta = 0.7;
    try {
      Monitor::restore(whole.snapshot(), other, o);
      FAIL("expected error");
    } catch (const Error& e) {
      CHECK(e.kind() == ErrorKind::config_mismatch);
    }
  }
}

TEST_CASE("config json round trip") {
  auto cfg = MonitorConfig::for_detector(DetectorKind::RC, 31);
  cfg.orlicz_norm = 1.2;
  cfg.params.beta = 0.75;
  auto back = config_from_json(config_to_json(cfg));
  CHECK(config_to_json(back) == config_to_json(cfg));
  CHECK(config_fingerprint(back) == config_fingerprint(cfg));
  auto partial = config_from_json({{"detector", "NPTC"}}, known_tc(50));
  CHECK(partial.detector == DetectorKind::NPTC);
  CHECK(partial.scale.mode == ScaleMode::none);
  CHECK(partial.n_train == 50);
}
