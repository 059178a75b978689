#ifndef DENSDEP_INGEST_HPP
#define DENSDEP_INGEST_HPP

#include <filesystem>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "densdep/errors.hpp"

namespace densdep {

/// Annual survey data on the raw count scale.
struct RawSeries {
  std::string species;
  std::vector<int> years;          // strictly increasing, contiguous
  std::vector<double> count;       // > 0
  std::vector<double> count_se;    // >= 0
};

/// Centered log-scale series consumed by the filter.
struct ObservedSeries {
  std::vector<double> y;  // centered log counts
  std::vector<double> S;  // log-scale observation SD, > 0
  std::pair<int, int> center_window{0, 0};  // [start, end) indices
  double center_value = 0.0;                // log geometric mean removed
};

/// Floor applied to log-scale observation SDs when the reported SE is zero.
inline constexpr double kDefaultSeFloor = 1e-3;

/// Parse a CSV file with header `year,count,se`. Malformed rows are
/// rejected with their line number.
RawSeries load_series(const std::filesystem::path& path);

struct LogScaleSeries {
  std::vector<double> log_count;
  std::vector<double> log_sd;     // first-order delta method: se / count
  bool floored = false;           // true if any SD hit the floor
};

LogScaleSeries to_log_scale(const RawSeries& raw,
                            double se_floor = kDefaultSeFloor);

/// Subtract the mean of `logs` over [window.first, window.second) from every
/// element; equivalent to scaling counts so the window's geometric mean is 1.
ObservedSeries center(std::span<const double> logs,
                      std::span<const double> log_sd,
                      std::pair<int, int> window);

/// Full pipeline with the default (whole-series) centering window.
ObservedSeries load_observed(const std::filesystem::path& path,
                             std::pair<int, int> window = {-1, -1},
                             double se_floor = kDefaultSeFloor);

}  // namespace densdep

#endif
