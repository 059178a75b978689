#ifndef DENSDEP_METRICS_HPP
#define DENSDEP_METRICS_HPP

#include <Eigen/Dense>
#include <cstdint>
#include <span>
#include <vector>

#include "densdep/inference.hpp"

namespace densdep {

/// One-step prediction against the full-data smoothed state, per year.
struct PredictionRecord {
  int t = 0;          // 1-based year index, t >= 6
  double xhat = 0.0;  // one-step predictive mean, made at t-1
  double pvar = 0.0;  // one-step predictive variance
  double xtilde = 0.0;  // smoothed state from the complete run
};

/// Assemble records (t = 6..T) from a completed filter trace.
std::vector<PredictionRecord> make_prediction_records(
    const PosteriorTrace& trace);

/// Cumulative mean of squared prediction errors: entry for year t averages
/// (xhat_s - xtilde_s)^2 over s = 6..t.
std::vector<std::pair<int, double>> mse_curve(
    std::span<const PredictionRecord> records);

/// Raw per-year squared errors, same ordering as the records.
std::vector<double> squared_errors(std::span<const PredictionRecord> records);

/// Quadratic form e' S^{-1} e of the prediction errors. Throws on a
/// non-positive-definite covariance, reporting its condition number.
double mahalanobis(std::span<const PredictionRecord> records,
                   const Eigen::MatrixXd& cov);

/// Diagonal covariance built from the recorded predictive variances.
Eigen::MatrixXd diagonal_prediction_cov(
    std::span<const PredictionRecord> records);

enum class DmCovMode { Diagonal, Full };

struct ComparisonRow {
  PriorFamily family;
  std::vector<double> dm_per_seed;
  double median_dm = 0.0;
  std::array<double, kNumModels> mean_final_posterior{};
  std::vector<double> mse;           // cumulative curve, averaged over seeds
  std::vector<double> mse_pointwise; // per-year squared errors, seed-averaged
  std::vector<double> mse_percent;   // cumulative curve as % of the baseline
};

struct ComparisonTable {
  std::vector<ComparisonRow> rows;   // in the order families were requested
  std::vector<int> years;            // t = 6..T
  PriorFamily baseline;
};

/// Run the full filter for each (family, seed) pair on shared data and
/// tabulate predictive accuracy. Seeds are derived per family, so the table
/// does not depend on the order families are listed. MSE curves are
/// normalized to the Independent5 baseline when present, otherwise to the
/// first family requested.
ComparisonTable compare_priors(const ObservedSeries& obs,
                               std::span<const PriorFamily> families,
                               const HyperParams& hyper,
                               const FilterConfig& cfg,
                               std::span<const std::uint64_t> seeds,
                               DmCovMode mode = DmCovMode::Diagonal);

}  // namespace densdep

#endif
