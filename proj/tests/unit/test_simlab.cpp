#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>

#include "doctest.h"
#include "twin/errors.hpp"
#include "twin/simlab.hpp"

using namespace twin;

namespace {

// max_l w(l,k) gamma(l,k) for TC with sigma = 1, by re-summation
double naive_tc(const std::vector<double>& x, long n, long k, const DetectorParams& p) {
  double best = 0.0;
  for (long l = 1; l <= std::min(k, (n + k) / 2); ++l) {
    double first = 0.0, recent = 0.0;
    for (long i = 0; i < std::max(l, n); ++i) first += x[i];
    for (long i = n + k - l; i < n + k; ++i) recent += x[i];
    const double g = std::abs(std::min(1.0, double(l) / n) * first - recent);
    best = std::max(best, g / (std::sqrt(double(l)) * std::pow(std::log(p.c0 + double(n) / l), p.beta) *
                               std::pow(std::log(p.c0 + double(n + k) / n), p.beta)));
  }
  return best;
}

ExperimentSpec zero_spec(long n, long k_star, double delta) {
  ExperimentSpec s;
  s.id = "zero";
  s.kind = ExperimentKind::delay;
  s.n_train = n;
  s.t_horizon = 40 * n;
  s.noise = NoiseModel::parse("zero");
  s.change = ChangeSpec{k_star, delta, std::nullopt};
  s.detectors = {DetectorKind::TC};
  s.replications = 3;
  return s;
}

std::vector<std::string> split(const std::string& line, char sep = ',') {
  std::vector<std::string> out;
  std::string cell;
  std::stringstream ss(line);
  while (std::getline(ss, cell, sep)) out.push_back(cell);
  if (!line.empty() && line.back() == sep) out.emplace_back();
  return out;
}

}  // namespace

TEST_CASE("truncated exponential moments") {
  // closed forms for Exp(1) given E <= c
  const double c = kTruncExpCut, q = std::exp(-c);
  const double m = (1.0 - (1.0 + c) * q) / (1.0 - q);
  const double m2 = (2.0 - (c * c + 2.0 * c + 2.0) * q) / (1.0 - q);
  CHECK(truncexp_variance() == doctest::Approx(m2 - m * m).epsilon(1e-9));
  CHECK(truncexp_mean() == doctest::Approx(m).epsilon(1e-9));
  // the construction cannot reach variance 1: any rate gives at most c^2 / 12
  CHECK(truncexp_variance() < c * c / 12.0);

  const auto x = draw_noise(NoiseModel::parse("exponential"), 1'000'000, 11);
  const double mean = std::accumulate(x.begin(), x.end(), 0.0) / x.size();
  double ss = 0.0;
  for (double v : x) ss += (v - mean) * (v - mean);
  CHECK(std::abs(mean) < 0.01);
  CHECK(std::abs(ss / (x.size() - 1) - truncexp_variance()) < 0.01);
  CHECK(*std::max_element(x.begin(), x.end()) <= c - m + 1e-12);
  CHECK(*std::min_element(x.begin(), x.end()) >= -m);
}

TEST_CASE("uniform noise support and variance") {
  const auto x = draw_noise(NoiseModel::parse("uniform"), 200'000, 3);
  const double r = std::sqrt(3.0);
  double ss = 0.0;
  for (double v : x) {
    REQUIRE(std::abs(v) <= r);
    ss += v * v;
  }
  CHECK(ss / x.size() == doctest::Approx(1.0).epsilon(0.01));
}

TEST_CASE("Orlicz norms") {
  CHECK(NoiseModel::parse("normal").orlicz_norm() == doctest::Approx(std::sqrt(8.0 / 3.0)));
  // uniform on [-r, r]: E exp(X^2/t^2) = sum_n (r/t)^{2n} / (n! (2n+1))
  const double t = NoiseModel::parse("uniform").orlicz_norm(), r = std::sqrt(3.0);
  double mgf = 0.0, term = 1.0;
  for (int n = 0; n < 60; ++n) {
    mgf += term / (2 * n + 1);
    term *= (r * r) / (t * t) / (n + 1);
  }
  CHECK(mgf == doctest::Approx(2.0).epsilon(1e-6));
  const double phi = 0.5;
  CHECK(NoiseModel::parse("ar1:0.5").orlicz_norm() ==
        doctest::Approx(std::sqrt(8.0 / 3.0) / std::sqrt(1.0 - phi * phi)));
  CHECK_THROWS_AS(NoiseModel::parse("zero").orlicz_norm(), Error);
}

TEST_CASE("noise model names") {
  CHECK(NoiseModel::parse("truncexp").name() == "exponential");
  CHECK(NoiseModel::parse("AR1:0.3:uniform").name() == "ar1:0.3:uniform");
  CHECK_THROWS_AS(NoiseModel::parse("ar1:1.0"), Error);
  CHECK_THROWS_AS(NoiseModel::parse("ar1:x"), Error);
  CHECK_THROWS_AS(NoiseModel::parse("laplace"), Error);
}

TEST_CASE("change models") {
  const NoiseModel nm;
  const long n = 20, t = 100;
  const auto pure = generate_stream(nm, std::nullopt, n, t, 9);
  CHECK(pure.size() == std::size_t(n + t));
  CHECK(generate_stream(nm, ChangeSpec{5, 0.0, std::nullopt}, n, t, 9) == pure);

  const auto perm = generate_stream(nm, ChangeSpec{5, 2.0, std::nullopt}, n, t, 9);
  for (long j = 0; j < n + t; ++j) CHECK(perm[j] - pure[j] == doctest::Approx(j >= n + 5 ? 2.0 : 0.0));

  const auto one = generate_stream(nm, ChangeSpec{5, 2.0, 0.0}, n, t, 9);
  long shifted = 0;
  for (long j = 0; j < n + t; ++j)
    if (one[j] != pure[j]) {
      ++shifted;
      CHECK(j == n + 5);
    }
  CHECK(shifted == 1);

  // D n = 0.25 * 20 = 5: positions n+k*..n+k*+5 inclusive
  const auto epi = generate_stream(nm, ChangeSpec{5, 2.0, 0.25}, n, t, 9);
  shifted = 0;
  for (long j = 0; j < n + t; ++j) shifted += epi[j] != pure[j];
  CHECK(shifted == 6);
}

TEST_CASE("zero-noise delays match the enumeration oracle") {
  const DetectorParams p{};
  const double q = 0.6;
  for (long n : {20L, 50L}) {
    for (long k_star : {1L, 3L, 40L}) {
      for (double delta : {1.0, 2.0, 3.0}) {
        const auto x = generate_stream(NoiseModel::parse("zero"), ChangeSpec{k_star, delta, std::nullopt}, n,
                                       40 * n, 1);
        long k_oracle = 0;
        for (long k = 1; k <= 40 * n && !k_oracle; ++k)
          if (naive_tc(x, n, k, p) > q) k_oracle = k;
        INFO(n, " ", k_star, " ", delta);
        REQUIRE(k_oracle > 0);
        CriticalValues cv;
        cv.set_value(DetectorKind::TC, q);
        const auto res = run_delay_experiment(zero_spec(n, k_star, delta), cv, 1);
        const auto& d = res.at(DetectorKind::TC);
        CHECK(d.delays == std::vector<long>(3, k_oracle - k_star));
        CHECK(d.delay_p50 == doctest::Approx(double(k_oracle - k_star)));
        CHECK(d.false_alarms == 0);
      }
    }
  }
}

TEST_CASE("zero-noise TC delay is nonincreasing in delta") {
  CriticalValues cv;
  cv.set_value(DetectorKind::TC, 1.5);
  for (long k_star : {1L, 10L, 100L}) {
    double prev = INFINITY;
    for (double delta = 0.3; delta <= 3.0; delta += 0.1) {
      const auto res = run_delay_experiment(zero_spec(25, k_star, delta), cv, 1);
      const auto& d = res.at(DetectorKind::TC);
      if (d.delays.empty()) continue;
      CHECK(d.delay_p50 <= prev);
      prev = d.delay_p50;
    }
    CHECK(prev < INFINITY);
  }
}

TEST_CASE("pre-change detections are discarded and counted") {
  CriticalValues cv;
  cv.set_value(DetectorKind::TC, 0.0);
  ExperimentSpec s;
  s.kind = ExperimentKind::power;
  s.n_train = 20;
  s.t_horizon = 100;
  s.change = ChangeSpec{10, 1.0, std::nullopt};
  s.detectors = {DetectorKind::TC};
  s.replications = 25;
  const auto& d = run_power_experiment(s, cv, 1).at(DetectorKind::TC);
  CHECK(d.rejection_rate == 1.0);
  CHECK(d.false_alarms == 25);
  CHECK(d.discarded == 25);
  CHECK(d.delays.empty());
  CHECK(std::isnan(d.delay_p50));
}

TEST_CASE("experiments are deterministic and paired across detectors") {
  CriticalValues cv;
  for (auto k : {DetectorKind::TC, DetectorKind::C, DetectorKind::PC, DetectorKind::NPTC}) cv.set_value(k, 1.1);
  ExperimentSpec s;
  s.kind = ExperimentKind::power;
  s.n_train = 30;
  s.t_horizon = 300;
  s.change = ChangeSpec{60, 0.8, std::nullopt};
  s.detectors = {DetectorKind::TC, DetectorKind::C, DetectorKind::PC, DetectorKind::NPTC, DetectorKind::RC};
  s.replications = 40;
  s.seed = 77;
  const auto a = run_experiment(s, cv, 1);
  const auto b = run_experiment(s, cv, 3);
  for (std::size_t i = 0; i < a.detectors.size(); ++i) {
    CHECK(a.detectors[i].rejections == b.detectors[i].rejections);
    CHECK(a.detectors[i].delays == b.detectors[i].delays);
    CHECK(a.detectors[i].false_alarms == b.detectors[i].false_alarms);
  }
  // a detector's outcome does not depend on which others run beside it
  auto solo = s;
  solo.detectors = {DetectorKind::PC};
  const auto c = run_experiment(solo, cv, 2);
  CHECK(c.at(DetectorKind::PC).delays == a.at(DetectorKind::PC).delays);
  for (const auto& d : a.detectors) {
    CHECK(d.rejection_rate >= 0.0);
    CHECK(d.rejection_rate <= 1.0);
  }
}

TEST_CASE("spec validation") {
  CriticalValues cv;
  ExperimentSpec s;
  s.kind = ExperimentKind::power;
  CHECK_THROWS_AS(run_experiment(s, cv), Error);
  s.kind = ExperimentKind::level;
  s.detectors = {DetectorKind::TC};
  s.replications = 2;
  try {
    run_experiment(s, cv);
    FAIL("expected error");
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::usage);  // no table configured
  }
  CHECK_THROWS_AS(run_power_experiment(s, cv), Error);
}

TEST_CASE("result files") {
  SUBCASE("empty result set is header only") {
    const auto csv = results_csv({});
    CHECK(std::count(csv.begin(), csv.end(), '\n') == 1);
    CHECK(csv.rfind("experiment_id,detector,noise,", 0) == 0);
  }
  SUBCASE("csv and json carry the in-memory values") {
    CriticalValues cv;
    cv.set_value(DetectorKind::TC, 1.0);
    cv.set_value(DetectorKind::C, 1.0);
    ExperimentSpec s;
    s.id = "rt";
    s.kind = ExperimentKind::delay;
    s.n_train = 20;
    s.t_horizon = 200;
    s.change = ChangeSpec{20, 2.0, std::nullopt};
    s.detectors = {DetectorKind::TC, DetectorKind::C};
    s.replications = 15;
    const auto res = run_experiment(s, cv, 1);
    std::stringstream csv(results_csv({res}));
    std::string line;
    std::getline(csv, line);
    const auto header = split(line);
    REQUIRE(header.size() == 16);
    CHECK(header[11] == "delay_p50");
    for (const auto& d : res.detectors) {
      REQUIRE(std::getline(csv, line));
      const auto row = split(line);
      REQUIRE(row.size() == 16);
      CHECK(row[0] == "rt");
      CHECK(row[1] == to_string(d.detector));
      CHECK(std::stod(row[11]) == doctest::Approx(d.delay_p50));
      CHECK(std::stod(row[9]) == doctest::Approx(d.rejection_rate));
      CHECK(std::stol(row[14]) == d.discarded);
    }
    const auto j = nlohmann::json::parse(results_json({res}).dump());
    REQUIRE(j.at("results").size() == 2);
    CHECK(j["results"][0]["delay_p50"].get<double>() == doctest::Approx(res.detectors[0].delay_p50));
    CHECK(j["metadata"]["experiments"][0]["id"] == "rt");
  }
}

TEST_CASE("scenario files") {
  const auto j = nlohmann::json::parse(R"({
    "id": "t3", "experiment": "power", "n_train": [50, 100], "noise": ["normal", "uniform"],
    "k_star_factor": 4, "delta": [0.25, 0.35], "replications": 1000, "fast_replications": 200, "seed": 5
  })");
  const auto full = parse_scenario(j);
  CHECK(full.experiments.size() == 8);
  CHECK(full.experiments[0].replications == 1000);
  CHECK(full.experiments[0].change->k_star == 200);
  CHECK(full.experiments[0].t_horizon == 1000);
  CHECK(full.experiments[0].id == "t3/normal/N50/k200/d0.25");
  CHECK(parse_scenario(j, true).experiments[0].replications == 200);

  auto bad = j;
  bad["detectors"] = {"TC", "XYZ"};
  try {
    parse_scenario(bad);
    FAIL("expected error");
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::usage);
  }

  const auto epi = parse_scenario(nlohmann::json::parse(
      R"({"experiment": "epidemic", "n_train": 100, "k_star_factor": 4, "delta": 2, "duration": [0.1, 0.5]})"));
  REQUIRE(epi.experiments.size() == 2);
  CHECK(*epi.experiments[1].change->duration == 0.5);
  const auto lvl = parse_scenario(nlohmann::json::parse(R"({"experiment": "level", "delta": 1})"));
  CHECK_FALSE(lvl.experiments[0].change.has_value());
}
