#include "densdep/ingest.hpp"

#include <cmath>
#include <fstream>
#include <sstream>

namespace densdep {

namespace {

std::vector<std::string> split_csv(const std::string& line) {
  std::vector<std::string> fields;
  std::stringstream ss(line);
  std::string field;
  while (std::getline(ss, field, ',')) {
    // trim surrounding whitespace
    const auto a = field.find_first_not_of(" \t\r");
    const auto b = field.find_last_not_of(" \t\r");
    fields.push_back(a == std::string::npos ? "" : field.substr(a, b - a + 1));
  }
  return fields;
}

}  // namespace

RawSeries load_series(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) {
    throw DataError("cannot open " + path.string());
  }
  std::string line;
  int lineno = 0;
  // Provenance comments written by this tool's own outputs are skippable.
  do {
    if (!std::getline(in, line)) {
      throw DataError(path.string() + ": empty file");
    }
    ++lineno;
  } while (!line.empty() && line[0] == '#');
  auto header = split_csv(line);
  if (header.size() < 3 || header[0] != "year" || header[1] != "count" ||
      header[2] != "se") {
    throw DataError(path.string() + ": expected header year,count,se");
  }

  RawSeries raw;
  raw.species = path.stem().string();
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty() || line[0] == '#' ||
        line.find_first_not_of(" \t\r") == std::string::npos) {
      continue;
    }
    auto fields = split_csv(line);
    if (fields.size() < 3) {
      throw DataError(path.string() + ":" + std::to_string(lineno) +
                      ": expected 3 columns");
    }
    int year;
    double count, se;
    try {
      year = std::stoi(fields[0]);
      count = std::stod(fields[1]);
      se = std::stod(fields[2]);
    } catch (const std::exception&) {
      throw DataError(path.string() + ":" + std::to_string(lineno) +
                      ": malformed row");
    }
    if (!(count > 0.0) || !std::isfinite(count)) {
      throw DataError(path.string() + ":" + std::to_string(lineno) +
                      ": count must be > 0");
    }
    if (se < 0.0 || !std::isfinite(se)) {
      throw DataError(path.string() + ":" + std::to_string(lineno) +
                      ": se must be >= 0");
    }
    if (!raw.years.empty() && year != raw.years.back() + 1) {
      throw DataError(path.string() + ":" + std::to_string(lineno) +
                      ": years must be contiguous (gap after " +
                      std::to_string(raw.years.back()) + ")");
    }
    raw.years.push_back(year);
    raw.count.push_back(count);
    raw.count_se.push_back(se);
  }
  if (raw.years.empty()) {
    throw DataError(path.string() + ": no data rows");
  }
  return raw;
}

LogScaleSeries to_log_scale(const RawSeries& raw, double se_floor) {
  LogScaleSeries out;
  out.log_count.reserve(raw.count.size());
  out.log_sd.reserve(raw.count.size());
  for (std::size_t i = 0; i < raw.count.size(); ++i) {
    out.log_count.push_back(std::log(raw.count[i]));
    double sd = raw.count_se[i] / raw.count[i];
    if (sd < se_floor) {
      sd = se_floor;
      out.floored = true;
    }
    out.log_sd.push_back(sd);
  }
  return out;
}

ObservedSeries center(std::span<const double> logs,
                      std::span<const double> log_sd,
                      std::pair<int, int> window) {
  const int n = static_cast<int>(logs.size());
  if (log_sd.size() != logs.size()) {
    throw InvalidArgument("log counts and SDs must have equal length");
  }
  if (window.first < 0 || window.second > n || window.first >= window.second) {
    throw InvalidArgument("centering window out of range or empty");
  }
  double mean = 0.0;
  for (int i = window.first; i < window.second; ++i) {
    mean += logs[static_cast<std::size_t>(i)];
  }
  mean /= (window.second - window.first);

  ObservedSeries out;
  out.y.reserve(logs.size());
  for (double v : logs) out.y.push_back(v - mean);
  out.S.assign(log_sd.begin(), log_sd.end());
  out.center_window = window;
  out.center_value = mean;
  return out;
}

ObservedSeries load_observed(const std::filesystem::path& path,
                             std::pair<int, int> window, double se_floor) {
  const RawSeries raw = load_series(path);
  const LogScaleSeries logs = to_log_scale(raw, se_floor);
  if (window.first < 0) {
    window = {0, static_cast<int>(logs.log_count.size())};
  }
  return center(logs.log_count, logs.log_sd, window);
}

}  // namespace densdep
