#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

namespace fs = std::filesystem;

namespace {

int run(const std::string& args) {
  const std::string cmd = std::string(CLI_BIN) + " " + args + " >/dev/null 2>&1";
  const int rc = std::system(cmd.c_str());
  return rc == -1 ? -1 : WEXITSTATUS(rc);
}

fs::path fresh_dir(const std::string& tag) {
  const fs::path dir = fs::temp_directory_path() / ("densdep_cli_" + tag);
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p);
  std::ostringstream os;
  os << in.rdbuf();
  return os.str();
}

// Data rows of a CSV, skipping provenance comments and the header.
std::vector<std::vector<double>> read_csv(const fs::path& p) {
  std::ifstream in(p);
  std::vector<std::vector<double>> rows;
  std::string line;
  bool header_seen = false;
  while (std::getline(in, line)) {
    if (line.empty() || line[0] == '#') continue;
    if (!header_seen) {
      header_seen = true;
      continue;
    }
    std::vector<double> row;
    std::stringstream ss(line);
    std::string field;
    while (std::getline(ss, field, ',')) row.push_back(std::stod(field));
    rows.push_back(std::move(row));
  }
  return rows;
}

}  // namespace

TEST_CASE("simulate writes a full preset trajectory with provenance") {
  const auto dir = fresh_dir("sim1");
  REQUIRE(run("simulate --preset sim1 --seed 42 --out " + dir.string()) == 0);

  const auto traj = dir / "trajectory.csv";
  REQUIRE(fs::exists(traj));
  const auto rows = read_csv(traj);
  CHECK(rows.size() == 501);
  CHECK(rows[0][0] == 1.0);
  CHECK(rows.back()[0] == 501.0);
  CHECK(rows[0][3] == doctest::Approx(0.05));

  const std::string text = slurp(traj);
  CHECK(text.rfind("# densdep ", 0) == 0);
  CHECK(text.find("# config:") != std::string::npos);

  const std::string manifest = slurp(dir / "manifest.json");
  CHECK(manifest.find("\"preset\": \"sim1\"") != std::string::npos);
  CHECK(manifest.find("-0.5") != std::string::npos);
}

TEST_CASE("simulate is byte-identical across reruns") {
  const auto dir = fresh_dir("rerun");
  const std::string args =
      "simulate --preset sim2 --seed 9 --out " + dir.string();
  REQUIRE(run(args) == 0);
  const std::string first = slurp(dir / "trajectory.csv");
  REQUIRE(run(args) == 0);
  CHECK(slurp(dir / "trajectory.csv") == first);

  REQUIRE(run("simulate --preset sim2 --seed 10 --out " + dir.string()) == 0);
  CHECK(slurp(dir / "trajectory.csv") != first);
}

TEST_CASE("noise-free simulation stays at the fixed point") {
  const auto dir = fresh_dir("noiseless");
  REQUIRE(run("simulate --k 1 --b 0.5,-0.5 --sigma 0 --obs-sd 0 --horizon 50 "
              "--seed 1 --out " +
              dir.string()) == 0);
  for (const auto& row : read_csv(dir / "trajectory.csv")) {
    CHECK(row[1] == doctest::Approx(0.0).epsilon(1e-14));
    CHECK(row[2] == doctest::Approx(0.0).epsilon(1e-14));
  }
}

TEST_CASE("fit emits a normalized posterior trace") {
  const auto sim_dir = fresh_dir("fit_sim");
  REQUIRE(run("simulate --k 1 --b 0.5,-0.5 --sigma 0.05 --obs-sd 0.05 "
              "--horizon 60 --seed 3 --out " +
              sim_dir.string()) == 0);

  const auto dir = fresh_dir("fit_out");
  REQUIRE(run("fit " + (sim_dir / "trajectory.csv").string() +
              " --prior shrink1 --particles 300 --seed 5 --svg --out " +
              dir.string()) == 0);

  for (const char* name : {"posterior_trace.csv", "final_posterior.csv",
                           "smoothed.csv", "predictions.csv", "posterior.svg",
                           "manifest.json"}) {
    CHECK(fs::exists(dir / name));
  }

  const auto trace = read_csv(dir / "posterior_trace.csv");
  REQUIRE(trace.size() == 60 - 5 + 1);
  // row at t=5: the uniform model prior
  for (int k = 1; k <= 6; ++k) {
    CHECK(trace[0][static_cast<std::size_t>(k)] ==
          doctest::Approx(1.0 / 6.0).epsilon(1e-9));
  }
  for (const auto& row : trace) {
    double sum = 0.0;
    for (std::size_t k = 1; k < row.size(); ++k) sum += row[k];
    CHECK(sum == doctest::Approx(1.0).epsilon(1e-9));
  }

  const auto final_rows = read_csv(dir / "final_posterior.csv");
  REQUIRE(final_rows.size() == 1);
  for (std::size_t k = 0; k < 6; ++k) {
    CHECK(final_rows[0][k] == doctest::Approx(trace.back()[k + 1]));
  }

  CHECK(read_csv(dir / "smoothed.csv").size() == 60);
  CHECK(read_csv(dir / "predictions.csv").size() == 55);
}

TEST_CASE("fit accepts raw survey counts") {
  const fs::path data = fs::path(TEST_DATA_DIR) / "sample_survey.csv";
  REQUIRE(fs::exists(data));
  const auto dir = fresh_dir("fit_survey");
  REQUIRE(run("fit " + data.string() +
              " --prior shrink2 --particles 300 --seed 2 --out " +
              dir.string()) == 0);
  const auto trace = read_csv(dir / "posterior_trace.csv");
  CHECK(!trace.empty());
  double sum = 0.0;
  for (std::size_t k = 1; k < trace.back().size(); ++k) sum += trace.back()[k];
  CHECK(sum == doctest::Approx(1.0).epsilon(1e-9));
}

TEST_CASE("compare-priors reports the baseline at 100 percent") {
  const auto sim_dir = fresh_dir("cmp_sim");
  REQUIRE(run("simulate --k 1 --b 0.5,-0.5 --sigma 0.05 --obs-sd 0.05 "
              "--horizon 40 --seed 4 --out " +
              sim_dir.string()) == 0);

  const auto dir = fresh_dir("cmp_out");
  REQUIRE(run("compare-priors " + (sim_dir / "trajectory.csv").string() +
              " --priors indep5,shrink1 --particles 200 --n-seeds 1 --seed 6 "
              "--out " +
              dir.string()) == 0);

  CHECK(fs::exists(dir / "comparison.csv"));
  const auto mse = read_csv(dir / "mse_normalized.csv");
  REQUIRE(mse.size() == 40 - 5);
  // columns: t, indep5_pct, shrink1_pct
  for (const auto& row : mse) {
    CHECK(row[1] == doctest::Approx(100.0).epsilon(1e-9));
    CHECK(row[2] > 0.0);
  }
  const std::string text = slurp(dir / "comparison.csv");
  CHECK(text.find("indep5,") != std::string::npos);
  CHECK(text.find("shrink1,") != std::string::npos);
}

TEST_CASE("failures exit nonzero") {
  CHECK(run("fit /nonexistent.csv") != 0);
  CHECK(run("simulate --preset bogus --out /tmp/densdep_cli_bogus") != 0);
  CHECK(run("fit") != 0);                       // missing input
  CHECK(run("fit x.csv --prior nosuch") != 0);  // invalid family
}
