#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>

#include "../common/ks.hpp"
#include "doctest.h"
#include "twin/calibration.hpp"
#include "twin/errors.hpp"

using namespace twin;

namespace {

GridSpec small_grid() { return {0.05, 0.5, 5.0, 200.0}; }

std::string tmp_path(const char* name) {
  return (std::filesystem::temp_directory_path() / name).string();
}

ErrorKind kind_of(auto&& fn) {
  try {
    fn();
  } catch (const Error& e) {
    return e.kind();
  }
  FAIL("no error thrown");
  return ErrorKind::io;
}

}  // namespace

TEST_CASE("type-7 quantiles") {
  const std::vector<double> s{1, 2, 3, 4};
  CHECK(sample_quantile(s, 0.0) == 1.0);
  CHECK(sample_quantile(s, 1.0) == 4.0);
  CHECK(sample_quantile(s, 0.9) == doctest::Approx(3.7));
  CHECK(sample_quantile(s, 0.5) == doctest::Approx(2.5));
}

TEST_CASE("graded grid pairs") {
  // default grid: 2801 points, every (t, t-s) with t > 1, s <= t/2, t - s >= 1
  CHECK(brownian_pair_count({}, GridSpec{}) == 784650);
  CHECK_THROWS_AS(brownian_pair_count({}, GridSpec{0.03, 0.1, 1.0, 1000.0}), Error);
}

TEST_CASE("brownian tables are deterministic and monotone in level") {
  auto a = simulate_L_TC_SN({}, small_grid(), 300, 11, 1);
  auto b = simulate_L_TC_SN({}, small_grid(), 300, 11, 3);
  CHECK(a.first.to_json() == b.first.to_json());
  CHECK(a.second.to_json() == b.second.to_json());
  for (const auto* t : {&a.first, &a.second}) {
    REQUIRE(t->quantiles.size() == 10);
    for (std::size_t i = 1; i < t->quantiles.size(); ++i) CHECK(t->quantiles[i].second >= t->quantiles[i - 1].second);
  }
  auto c = simulate_L_TC_SN({}, small_grid(), 300, 12, 1);
  CHECK(c.second.quantile(0.95) != a.second.quantile(0.95));
}

TEST_CASE("L_SN is pivotal in the increment scale") {
  auto one = draw_brownian_laws({}, small_grid(), 200, 5, 1, 1.0);
  auto three = draw_brownian_laws({}, small_grid(), 200, 5, 1, 3.0);
  for (std::size_t i = 0; i < one.sn.size(); ++i) {
    CHECK(three.sn[i] == doctest::Approx(one.sn[i]).epsilon(1e-12));
    CHECK(three.tc[i] == doctest::Approx(3.0 * one.tc[i]).epsilon(1e-12));
  }
}

TEST_CASE("larger beta gives smaller L_TC quantiles") {
  DetectorParams lo, hi;
  hi.beta = 0.8;
  auto a = draw_brownian_laws(lo, small_grid(), 200, 9, 1);
  auto b = draw_brownian_laws(hi, small_grid(), 200, 9, 1);
  // same paths, every weight shrinks
  for (std::size_t i = 0; i < a.tc.size(); ++i) CHECK(b.tc[i] < a.tc[i]);
  auto qa = simulate_L_TC(lo, small_grid(), 200, 9, 1), qb = simulate_L_TC(hi, small_grid(), 200, 9, 1);
  for (std::size_t i = 0; i < qa.quantiles.size(); ++i) CHECK(qb.quantiles[i].second < qa.quantiles[i].second);
}

TEST_CASE("table store and load") {
  auto t = simulate_L_SN({}, small_grid(), 1000, 3, 0);
  const auto path = tmp_path("twin_table_roundtrip.json");
  store_table(t, path);
  auto back = load_table(path, t.fingerprint);
  CHECK(back.to_json() == t.to_json());
  CHECK(back.quantile(0.95) == t.quantile(0.95));

  SUBCASE("fingerprint mismatch") {
    CHECK(kind_of([&] { load_table(path, "0000000000000000"); }) == ErrorKind::config_mismatch);
  }
  SUBCASE("config with another beta") {
    auto cfg = MonitorConfig::for_detector(DetectorKind::SNTC, 100);
    CHECK_NOTHROW(t.check_compatible(cfg));
    cfg.params.beta = 0.7;
    CHECK(kind_of([&] { t.check_compatible(cfg); }) == ErrorKind::config_mismatch);
  }
  SUBCASE("wrong detector") {
    auto cfg = MonitorConfig::for_detector(DetectorKind::TC, 100);
    CHECK(kind_of([&] { t.check_compatible(cfg); }) == ErrorKind::config_mismatch);
  }
  SUBCASE("edited parameters break the fingerprint") {
    auto j = t.to_json();
    j["params"]["beta"] = 0.7;
    CHECK(kind_of([&] { QuantileTable::from_json(j); }) == ErrorKind::data);
  }
  SUBCASE("newer version refused, unknown fields ignored") {
    auto j = t.to_json();
    j["comment"] = "extra";
    CHECK_NOTHROW(QuantileTable::from_json(j));
    j["version"] = QuantileTable::kVersion + 1;
    CHECK(kind_of([&] { QuantileTable::from_json(j); }) == ErrorKind::data);
  }
  SUBCASE("malformed file") {
    std::ofstream(path) << "{\"version\": 1, \"law\": ";
    CHECK(kind_of([&] { load_table(path); }) == ErrorKind::data);
  }
  SUBCASE("unlisted level") { CHECK(kind_of([&] { t.quantile(0.975); }) == ErrorKind::usage); }
  std::filesystem::remove(path);
}

TEST_CASE("tables with fewer than 1000 draws cannot calibrate monitoring") {
  auto t = simulate_L_SN({}, small_grid(), 50, 3, 0);
  auto cfg = MonitorConfig::for_detector(DetectorKind::SNTC, 100);
  CHECK(kind_of([&] { t.check_compatible(cfg); }) == ErrorKind::config_mismatch);
}

TEST_CASE("null simulation") {
  const SampleSpec spec{30, 5};
  SUBCASE("independent of the noise scale") {
    for (auto kind : {DetectorKind::C, DetectorKind::PC, DetectorKind::FC, DetectorKind::WC, DetectorKind::MM}) {
      auto a = draw_null_sim(kind, {}, spec, 20, 4, 1, 1.0);
      auto b = draw_null_sim(kind, {}, spec, 20, 4, 1, 3.0);
      for (std::size_t i = 0; i < a.size(); ++i) CHECK(b[i] == doctest::Approx(a[i]).epsilon(1e-9));
    }
  }
  SUBCASE("reproducible") {
    auto a = null_sim_quantiles(DetectorKind::FC, {}, spec, 100, 8, 1);
    auto b = null_sim_quantiles(DetectorKind::FC, {}, spec, 100, 8, 2);
    CHECK(a.to_json() == b.to_json());
    CHECK(a.law == Law::NULL_SIM);
    CHECK(a.kind == DetectorKind::FC);
  }
  SUBCASE("RC has no null table") {
    CHECK(kind_of([&] { null_sim_quantiles(DetectorKind::RC, {}, spec, 10, 1); }) == ErrorKind::usage);
  }
}

TEST_CASE("L_F draws") {
  SUBCASE("n_cal below 100 refused") {
    CHECK(kind_of([&] { simulate_L_F({}, {50, 2}, 10, 1); }) == ErrorKind::usage);
  }
  SUBCASE("uniform and normal inputs agree in distribution") {
    const SampleSpec spec{40, 3};
    auto u = draw_L_F({}, spec, 300, 21, 0, CalibrationInput::uniform);
    auto z = draw_L_F({}, spec, 300, 22, 0, CalibrationInput::normal);
    const double p = test::ks_pvalue(test::ks_statistic(u, z), u.size(), z.size());
    CHECK(p > 0.001);
  }
}

TEST_CASE("ks helper") {
  std::vector<double> a{1, 2, 3, 4}, b{5, 6, 7, 8};
  CHECK(test::ks_statistic(a, b) == 1.0);
  CHECK(test::ks_statistic(a, a) == 0.0);
  CHECK(test::ks_pvalue(0.0, 100, 100) == 1.0);
  // scipy kstwobign.sf((sqrt(50) + 0.12 + 0.11 / sqrt(50)) * 0.2)
  CHECK(test::ks_pvalue(0.2, 100, 100) == doctest::Approx(0.0313767).epsilon(1e-5));
}
