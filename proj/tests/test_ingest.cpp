#include <doctest.h>

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include "densdep/ingest.hpp"

using namespace densdep;
namespace fs = std::filesystem;

namespace {

struct TempCsv {
  fs::path path;
  explicit TempCsv(const std::string& body) {
    static int counter = 0;
    path = fs::temp_directory_path() /
           ("densdep_ingest_" + std::to_string(counter++) + ".csv");
    std::ofstream out(path);
    out << body;
  }
  ~TempCsv() {
    std::error_code ec;
    fs::remove(path, ec);
  }
};

bool message_contains(const std::exception& e, const std::string& needle) {
  return std::string(e.what()).find(needle) != std::string::npos;
}

}  // namespace

TEST_CASE("load_series parses a well-formed file") {
  TempCsv f(
      "year,count,se\n"
      "2001,120,12\n"
      "2002,150,0\n"
      "# mid-file comment\n"
      "2003,90,9\n");
  const auto raw = load_series(f.path);
  REQUIRE(raw.years.size() == 3);
  CHECK(raw.years == std::vector<int>{2001, 2002, 2003});
  CHECK(raw.count[0] == doctest::Approx(120.0));
  CHECK(raw.count_se[1] == doctest::Approx(0.0));
}

TEST_CASE("load_series skips leading provenance comments") {
  TempCsv f(
      "# densdep 0.1.0\n"
      "# config: {}\n"
      "year,count,se\n"
      "1990,10,1\n");
  const auto raw = load_series(f.path);
  CHECK(raw.years == std::vector<int>{1990});
}

TEST_CASE("load_series rejects bad input with line numbers") {
  SUBCASE("missing file") {
    CHECK_THROWS_AS(load_series("/nonexistent/x.csv"), DataError);
  }
  SUBCASE("wrong header") {
    TempCsv f("t,n,sd\n2001,1,0\n");
    CHECK_THROWS_WITH_AS(load_series(f.path),
                         doctest::Contains("year,count,se"), DataError);
  }
  SUBCASE("non-positive count") {
    TempCsv f("year,count,se\n2001,10,1\n2002,0,1\n");
    try {
      load_series(f.path);
      FAIL("expected DataError");
    } catch (const DataError& e) {
      CHECK(message_contains(e, ":3:"));
      CHECK(message_contains(e, "count"));
    }
  }
  SUBCASE("negative se") {
    TempCsv f("year,count,se\n2001,10,-1\n");
    CHECK_THROWS_AS(load_series(f.path), DataError);
  }
  SUBCASE("year gap") {
    TempCsv f("year,count,se\n2001,10,1\n2003,12,1\n");
    try {
      load_series(f.path);
      FAIL("expected DataError");
    } catch (const DataError& e) {
      CHECK(message_contains(e, "contiguous"));
      CHECK(message_contains(e, "2001"));
    }
  }
  SUBCASE("malformed number") {
    TempCsv f("year,count,se\n2001,ten,1\n");
    CHECK_THROWS_WITH_AS(load_series(f.path), doctest::Contains("malformed"),
                         DataError);
  }
  SUBCASE("too few columns") {
    TempCsv f("year,count,se\n2001,10\n");
    CHECK_THROWS_AS(load_series(f.path), DataError);
  }
  SUBCASE("no data rows") {
    TempCsv f("year,count,se\n");
    CHECK_THROWS_AS(load_series(f.path), DataError);
  }
}

TEST_CASE("to_log_scale applies the delta method and the floor") {
  RawSeries raw;
  raw.years = {1, 2, 3};
  raw.count = {100.0, 200.0, 50.0};
  raw.count_se = {10.0, 0.0, 5.0};
  const auto logs = to_log_scale(raw);
  CHECK(logs.log_count[0] == doctest::Approx(std::log(100.0)).epsilon(1e-14));
  CHECK(logs.log_sd[0] == doctest::Approx(0.1).epsilon(1e-14));
  CHECK(logs.log_sd[1] == doctest::Approx(kDefaultSeFloor));
  CHECK(logs.log_sd[2] == doctest::Approx(0.1).epsilon(1e-14));
  CHECK(logs.floored);

  raw.count_se = {10.0, 20.0, 5.0};
  CHECK(!to_log_scale(raw).floored);
}

TEST_CASE("center subtracts the window mean") {
  std::vector<double> logs{1.0, 2.0, 3.0};
  std::vector<double> sd{0.1, 0.2, 0.3};
  const auto obs = center(logs, sd, {0, 3});
  CHECK(obs.center_value == doctest::Approx(2.0));
  CHECK(obs.y[0] == doctest::Approx(-1.0));
  CHECK(obs.y[1] == doctest::Approx(0.0));
  CHECK(obs.y[2] == doctest::Approx(1.0));
  CHECK(obs.S == sd);

  const auto tail = center(logs, sd, {2, 3});
  CHECK(tail.center_value == doctest::Approx(3.0));
  CHECK(tail.y[2] == doctest::Approx(0.0));

  CHECK_THROWS_AS(center(logs, sd, {2, 2}), InvalidArgument);
  CHECK_THROWS_AS(center(logs, sd, {-1, 3}), InvalidArgument);
  CHECK_THROWS_AS(center(logs, sd, {0, 4}), InvalidArgument);
  std::vector<double> short_sd{0.1};
  CHECK_THROWS_AS(center(logs, short_sd, {0, 3}), InvalidArgument);
}

TEST_CASE("centering is idempotent") {
  std::vector<double> logs{4.0, 5.0, 6.0, 7.0};
  std::vector<double> sd{0.1, 0.1, 0.1, 0.1};
  const auto once = center(logs, sd, {0, 4});
  const auto twice = center(once.y, once.S, {0, 4});
  CHECK(twice.center_value == doctest::Approx(0.0).epsilon(1e-14));
  for (std::size_t i = 0; i < logs.size(); ++i) {
    CHECK(twice.y[i] == doctest::Approx(once.y[i]).epsilon(1e-14));
  }
}

TEST_CASE("full pipeline round-trips counts") {
  TempCsv f(
      "year,count,se\n"
      "2000,134,13\n"
      "2001,221,20\n"
      "2002,187,15\n"
      "2003,96,11\n");
  const auto obs = load_observed(f.path);
  const std::vector<double> counts{134, 221, 187, 96};
  for (std::size_t i = 0; i < counts.size(); ++i) {
    const double back = std::exp(obs.y[i] + obs.center_value);
    CHECK(back == doctest::Approx(counts[i]).epsilon(1e-12));
  }
  // geometric mean of centered counts is 1
  double sum = 0.0;
  for (double v : obs.y) sum += v;
  CHECK(sum == doctest::Approx(0.0).epsilon(1e-12));
}

TEST_CASE("count rescaling only shifts the centering constant") {
  TempCsv a(
      "year,count,se\n"
      "2000,100,10\n"
      "2001,150,12\n"
      "2002,80,8\n");
  TempCsv b(
      "year,count,se\n"
      "2000,1000,100\n"
      "2001,1500,120\n"
      "2002,800,80\n");
  const auto oa = load_observed(a.path);
  const auto ob = load_observed(b.path);
  for (std::size_t i = 0; i < oa.y.size(); ++i) {
    CHECK(ob.y[i] == doctest::Approx(oa.y[i]).epsilon(1e-12));
    CHECK(ob.S[i] == doctest::Approx(oa.S[i]).epsilon(1e-12));
  }
  CHECK(ob.center_value - oa.center_value ==
        doctest::Approx(std::log(10.0)).epsilon(1e-12));
}
