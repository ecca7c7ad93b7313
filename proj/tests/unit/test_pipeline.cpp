#include <cmath>
#include <sstream>

#include "doctest.h"
#include "helpers.hpp"
#include "twin/errors.hpp"
#include "twin/pipeline.hpp"

using namespace twin;

namespace {

CriticalValues fixed_values(double q = 1.0) {
  CriticalValues cv;
  for (auto k : standard_detectors()) cv.set_value(k, q);
  cv.set_value(DetectorKind::SNTC, q);
  return cv;
}

DailySeries make_series(const std::vector<double>& v) {
  DailySeries s;
  for (std::size_t i = 0; i < v.size(); ++i) {
    std::ostringstream d;
    d << "day" << (10000 + i);
    s.dates.push_back(d.str());
    s.values.push_back(v[i]);
    s.counts.push_back(1);
  }
  return s;
}

IngestResult ingest_text(const std::string& text, const CsvSchema& schema = {}) {
  std::istringstream in(text);
  return ingest_csv(in, schema);
}

ErrorKind kind_of(auto&& fn) {
  try {
    fn();
  } catch (const Error& e) {
    return e.kind();
  }
  FAIL("expected an error");
  return ErrorKind::usage;
}

}  // namespace

TEST_CASE("csv ingestion") {
  SUBCASE("two columns with header") {
    auto r = ingest_text("date,value\n2020-05-01,30.5\n2020-05-02,28\n");
    REQUIRE(r.records.size() == 2);
    CHECK(r.records[1].date == "2020-05-02");
    CHECK(r.records[1].value == 28.0);
    CHECK(r.skipped.empty());
  }
  SUBCASE("bad rows are skipped and logged") {
    auto r = ingest_text("date,value\n2020-05-01,30\n2020-05-02,abc\n2020-05-03\n,4\n2020-05-04,12x\n2020-05-05,1e400\n");
    CHECK(r.records.size() == 1);
    CHECK(r.rows == 6);
    REQUIRE(r.skipped.size() == 5);
    CHECK(r.skipped[0].line == 3);
    CHECK(r.skip_log()["skipped"] == 5);
  }
  SUBCASE("configurable columns, quotes and date format") {
    CsvSchema s;
    s.date_col = "Day";
    s.value_col = "ct";
    s.date_format = "%d.%m.%Y";
    auto r = ingest_text("id,Day,ct\n1,\"01.05.2020\",\"3,5\"\n2,02.05.2020,4\n3,31.02.2020,4\n", s);
    REQUIRE(r.records.size() == 1);
    CHECK(r.records[0].date == "2020-05-02");
    CHECK(r.skipped.size() == 2);
  }
  SUBCASE("errors") {
    CHECK(kind_of([] { ingest_text(""); }) == ErrorKind::data);
    CHECK(kind_of([] { ingest_text("date,other\n2020-01-01,1\n"); }) == ErrorKind::data);
    CHECK(kind_of([] { ingest_text("date,value\n2020-01-01,x\n"); }) == ErrorKind::data);
    CHECK(kind_of([] { ingest_csv("/nonexistent/file.csv"); }) == ErrorKind::io);
  }
}

TEST_CASE("daily medians") {
  CHECK(mid_median({30, 20, 25}) == 25.0);
  CHECK(mid_median({20, 30}) == 25.0);
  CHECK(mid_median({4, 1, 3, 2}) == 2.5);
  const auto s = aggregate_daily({{"2020-05-03", 1},
                                  {"2020-05-01", 30},
                                  {"2020-05-01", 20},
                                  {"2020-05-01", 25},
                                  {"2020-05-02", 20},
                                  {"2020-05-02", 30},
                                  {"2020-05-07", 9}});
  CHECK(s.dates == std::vector<std::string>{"2020-05-01", "2020-05-02", "2020-05-03", "2020-05-07"});
  CHECK(s.values == std::vector<double>{25, 25, 1, 9});
  CHECK(s.counts == std::vector<long>{3, 2, 1, 1});
  REQUIRE(s.gaps.size() == 1);
  CHECK(s.gaps[0].after == "2020-05-03");
  CHECK(s.gaps[0].missing_days == 3);
  CHECK_THROWS_AS(aggregate_daily({}), Error);
}

TEST_CASE("zero-noise level shift is located exactly") {
  const long n = 31, shift_at = n + 25;
  std::vector<double> v(220, 0.0);
  for (std::size_t i = shift_at; i < v.size(); ++i) v[i] = 2.0;
  const auto series = make_series(v);
  AnalysisOptions o;
  o.n_train = n;
  o.detectors = {DetectorKind::TC,  DetectorKind::SNTC, DetectorKind::NPTC, DetectorKind::C, DetectorKind::PC,
                 DetectorKind::FC,  DetectorKind::WC,   DetectorKind::MM,   DetectorKind::RC};
  const auto rep = analyze(series, o, fixed_values(0.5));
  long located = 0;
  for (const auto& d : rep.detectors) {
    CAPTURE(to_string(d.detector));
    if (d.detector == DetectorKind::SNTC) {
      CHECK(d.error.has_value());  // constant training window
      continue;
    }
    REQUIRE_FALSE(d.error.has_value());
    CHECK(d.verdict.detected);
    CHECK(*d.detection_date >= series.dates[shift_at]);
    if (d.change_date) {
      CHECK(*d.change_date == series.dates[shift_at]);
      CHECK(*d.change_date <= *d.detection_date);
      ++located;
    }
  }
  CHECK(located == 6);
}

TEST_CASE("constant series") {
  const auto series = make_series(std::vector<double>(80, 4.0));
  AnalysisOptions o;
  const auto rep = analyze(series, o, fixed_values());
  REQUIRE(rep.detectors.size() == 8);
  for (const auto& d : rep.detectors) {
    CHECK_FALSE(d.verdict.detected);
    if (d.detector != DetectorKind::NPTC) CHECK(d.error.has_value());
  }
  o.variance = VarianceMode::train;
  for (const auto& d : analyze(series, o, fixed_values()).detectors)
    if (d.detector != DetectorKind::NPTC) CHECK(d.error.has_value());
}

TEST_CASE("report schema") {
  const auto series = demo_series(200, 100, 30.0, -3.0, 2.0, 5, 4);
  CHECK(series.size() == 200);
  CHECK(series.dates.front() == "2020-05-01");
  AnalysisOptions o;
  const auto rep = analyze(series, o, fixed_values(1.5));
  const auto j = nlohmann::json::parse(rep.to_json().dump());
  CHECK(j["config"]["n_train"] == 31);
  CHECK(j["series"]["training_end"] == "2020-05-31");
  CHECK(j["variance"]["mode"] == "monitoring");
  REQUIRE(j["detectors"].size() == 8);
  for (const auto& d : j["detectors"]) {
    CHECK(d.contains("detection_date"));
    CHECK(d.contains("change_date"));
    CHECK(d.contains("scale_mode"));
    if (!d["detected"].get<bool>()) CHECK(d["detection_date"] == "none");
  }
  std::istringstream csv(rep.trace_csv());
  std::string line;
  std::getline(csv, line);
  CHECK(line == "detector,k,date,statistic,threshold");
  CHECK(std::getline(csv, line));
  CHECK(kind_of([&] { analyze(demo_series(31, 10, 0, 1, 1, 1, 1), o, fixed_values()); }) == ErrorKind::data);
}

TEST_CASE("location and monotone invariance end to end") {
  for (std::uint64_t seed = 1; seed <= 5; ++seed) {
    auto v = test::normal_data(250, seed);
    for (std::size_t i = 120; i < v.size(); ++i) v[i] += 0.8;
    auto shifted = v, transformed = v;
    for (auto& x : shifted) x += 37.0;
    for (auto& x : transformed) x = std::exp(x / 2.0) + 5.0;
    for (auto mode : {VarianceMode::monitoring, VarianceMode::train}) {
      AnalysisOptions o;
      o.variance = mode;
      const auto cv = fixed_values(1.0);
      const auto a = analyze(make_series(v), o, cv);
      const auto b = analyze(make_series(shifted), o, cv);
      const auto c = analyze(make_series(transformed), o, cv);
      for (std::size_t i = 0; i < a.detectors.size(); ++i) {
        const auto kind = a.detectors[i].detector;
        if (kind == DetectorKind::RC) continue;
        CAPTURE(to_string(kind));
        CHECK(a.detectors[i].detection_date == b.detectors[i].detection_date);
        if (kind == DetectorKind::NPTC) {
          CHECK(a.detectors[i].detection_date == c.detectors[i].detection_date);
          CHECK(a.detectors[i].change_date == c.detectors[i].change_date);
          CHECK(a.detectors[i].verdict.statistic == c.detectors[i].verdict.statistic);
        }
      }
    }
  }
}

TEST_CASE("checkpoint and resume reproduce the report") {
  const auto series = demo_series(160, 90, 25.0, 2.5, 3.0, 3, 8);
  AnalysisOptions o;
  o.variance = VarianceMode::train;
  const auto cv = fixed_values(1.2);
  const auto whole = analyze(series, o, cv).to_json();
  double mean = 0.0, ss = 0.0;
  for (long i = 0; i < o.n_train; ++i) mean += series.values[i] / o.n_train;
  for (long i = 0; i < o.n_train; ++i) ss += (series.values[i] - mean) * (series.values[i] - mean);
  const double train_var = ss / (o.n_train - 1);
  for (std::size_t cut = 0; cut <= series.size(); cut += 13) {
    Analysis a(o, cv, std::nullopt, train_var);
    for (std::size_t i = 0; i < cut; ++i) a.feed(series.dates[i], series.values[i]);
    const auto doc = nlohmann::json::parse(a.checkpoint().dump());
    auto b = Analysis::resume(doc, o, cv);
    for (std::size_t i = cut; i < series.size(); ++i) b.feed(series.dates[i], series.values[i]);
    CHECK(b.report().to_json() == whole);
  }
  auto other = o;
  other.n_train = 40;
  Analysis a(o, cv, std::nullopt, 1.0);
  CHECK(kind_of([&] { Analysis::resume(a.checkpoint(), other, cv); }) == ErrorKind::config_mismatch);
  a.feed("2020-05-02", 1.0);
  CHECK(kind_of([&] { a.feed("2020-05-01", 1.0); }) == ErrorKind::data);
}
