#include <cmath>
#include <limits>

#include "doctest.h"
#include "helpers.hpp"
#include "twin/detectors.hpp"
#include "twin/errors.hpp"
#include "twin/stream_state.hpp"

using namespace twin;
using twin::test::make_state;

TEST_CASE("ingest into an empty state") {
  StreamState st(3);
  st.ingest(0.0);
  CHECK(st.count() == 1);
  CHECK(st.prefix_sum(1) == 0.0);
  CHECK_FALSE(st.trained());
}

TEST_CASE("prefix sums accumulate") {
  auto st = make_state(5, {1, 2, 3});
  CHECK(st.prefix_sum(1) == 1.0);
  CHECK(st.prefix_sum(2) == 3.0);
  CHECK(st.prefix_sum(3) == 6.0);
  CHECK_THROWS_AS(st.prefix_sum(4), Error);
}

TEST_CASE("non-finite observations are rejected") {
  StreamState st(2);
  CHECK_THROWS_AS(st.ingest(std::numeric_limits<double>::quiet_NaN()), Error);
  CHECK_THROWS_AS(st.ingest(std::numeric_limits<double>::infinity()), Error);
  CHECK(st.count() == 0);
  try {
    st.ingest(-std::numeric_limits<double>::infinity());
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::data);
  }
}

TEST_CASE("training moments freeze after n_train observations") {
  auto xs = twin::test::normal_data(200, 7);
  StreamState st(50);
  for (int i = 0; i < 49; ++i) st.ingest(xs[i]);
  CHECK_THROWS_AS(st.v_n(), Error);
  st.ingest(xs[49]);
  REQUIRE(st.trained());
  const double v = st.v_n();
  const double m = st.train_mean();
  const double var = st.train_var();
  CHECK(v == doctest::Approx(self_normalizer(std::span<const double>(xs).first(50))).epsilon(1e-12));
  for (int i = 50; i < 200; ++i) st.ingest(xs[i]);
  CHECK(st.v_n() == v);
  CHECK(st.train_mean() == m);
  CHECK(st.train_var() == var);

  double naive_mean = 0.0;
  for (int i = 0; i < 50; ++i) naive_mean += xs[i];
  naive_mean /= 50;
  double naive_var = 0.0;
  for (int i = 0; i < 50; ++i) naive_var += (xs[i] - naive_mean) * (xs[i] - naive_mean);
  naive_var /= 49;
  CHECK(m == doctest::Approx(naive_mean).epsilon(1e-12));
  CHECK(var == doctest::Approx(naive_var).epsilon(1e-12));
}

TEST_CASE("prefix differences reproduce observations") {
  auto xs = twin::test::normal_data(5000, 11, 1e3);
  auto st = make_state(100, xs);
  for (std::size_t j = 1; j <= xs.size(); ++j) {
    const double d = st.prefix_sum(j) - st.prefix_sum(j - 1);
    CHECK(std::abs(d - xs[j - 1]) <= 1e-9 * std::max(1.0, std::abs(st.prefix_sum(j))));
  }
}

TEST_CASE("compensated sums do not drift on long horizons") {
  StreamState st(10, false);
  for (int i = 0; i < 200000; ++i) st.ingest(i % 2 == 0 ? 1e8 + 0.125 : -1e8);
  CHECK(st.prefix_sum(200000) == 12500.0);
}

TEST_CASE("rank index answers range counts") {
  auto st = make_state(3, {5, 1, 4, 1, 3, 9, 2, 6});
  const auto& r = st.ranks();
  CHECK(r.count_le(0, 8, 1.0) == 2);
  CHECK(r.count_lt(0, 8, 1.0) == 0);
  CHECK(r.count_le(2, 6, 4.0) == 3);
  CHECK(r.count_le(5, 5, 100.0) == 0);
}

TEST_CASE("rank index matches naive counting across block boundaries") {
  RankIndex idx(4);
  auto xs = twin::test::integer_data(100, 3, 0, 9);
  for (double x : xs) idx.push_back(x);
  for (std::size_t a = 0; a < 100; a += 7) {
    for (std::size_t b = a; b <= 100; b += 5) {
      for (double x : {-1.0, 0.0, 4.0, 4.5, 9.0}) {
        std::size_t le = 0, lt = 0;
        for (std::size_t i = a; i < b; ++i) {
          le += xs[i] <= x;
          lt += xs[i] < x;
        }
        CHECK(idx.count_le(a, b, x) == le);
        CHECK(idx.count_lt(a, b, x) == lt);
      }
    }
  }
}

TEST_CASE("observations are unavailable without retention") {
  auto st = make_state(3, {1, 2, 3, 4}, false);
  CHECK_THROWS_AS(st.observations(), Error);
  CHECK(st.training().size() == 3);
  CHECK(st.sorted_training()[0] == 1.0);
}

TEST_CASE("snapshot round trip") {
  auto xs = twin::test::normal_data(300, 5);
  for (bool retain : {true, false}) {
    auto st = make_state(40, xs, retain);
    auto doc = st.snapshot("abc");
    auto back = StreamState::restore(nlohmann::json::parse(doc.dump()), "abc");
    CHECK(back.count() == st.count());
    for (std::size_t j = 0; j <= st.count(); ++j) CHECK(back.prefix_sum(j) == st.prefix_sum(j));
    CHECK(back.v_n() == st.v_n());
    CHECK(back.train_var() == st.train_var());
    back.ingest(1.5);
    st.ingest(1.5);
    CHECK(back.prefix_sum(st.count()) == st.prefix_sum(st.count()));
  }
}

TEST_CASE("snapshot refuses a different configuration or a newer version") {
  auto st = make_state(3, {1, 2, 3, 4});
  auto doc = st.snapshot("abc");
  try {
    StreamState::restore(doc, "xyz");
    FAIL("expected mismatch");
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::config_mismatch);
  }
  doc["version"] = StreamState::kSnapshotVersion + 1;
  CHECK_THROWS_AS(StreamState::restore(doc, "abc"), Error);
  nlohmann::json broken{{"version", 1}};
  CHECK_THROWS_AS(StreamState::restore(broken, "abc"), Error);
}
