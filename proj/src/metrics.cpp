#include "densdep/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>

namespace densdep {

std::vector<PredictionRecord> make_prediction_records(
    const PosteriorTrace& trace) {
  std::vector<PredictionRecord> records;
  records.reserve(trace.predictions.size());
  for (std::size_t s = 0; s < trace.predictions.size(); ++s) {
    PredictionRecord r;
    r.t = kWarmupYears + static_cast<int>(s) + 1;
    r.xhat = trace.predictions[s].mean;
    r.pvar = trace.predictions[s].var;
    r.xtilde = trace.smoothed.at(static_cast<std::size_t>(r.t - 1));
    records.push_back(r);
  }
  return records;
}

std::vector<std::pair<int, double>> mse_curve(
    std::span<const PredictionRecord> records) {
  if (records.empty()) {
    throw InvalidArgument("mse_curve needs at least one record");
  }
  std::vector<std::pair<int, double>> curve;
  curve.reserve(records.size());
  double acc = 0.0;
  for (std::size_t i = 0; i < records.size(); ++i) {
    const double e = records[i].xhat - records[i].xtilde;
    acc += e * e;
    curve.emplace_back(records[i].t, acc / static_cast<double>(i + 1));
  }
  return curve;
}

std::vector<double> squared_errors(std::span<const PredictionRecord> records) {
  std::vector<double> out;
  out.reserve(records.size());
  for (const auto& r : records) {
    const double e = r.xhat - r.xtilde;
    out.push_back(e * e);
  }
  return out;
}

Eigen::MatrixXd diagonal_prediction_cov(
    std::span<const PredictionRecord> records) {
  const int n = static_cast<int>(records.size());
  Eigen::MatrixXd cov = Eigen::MatrixXd::Zero(n, n);
  for (int i = 0; i < n; ++i) {
    cov(i, i) = records[static_cast<std::size_t>(i)].pvar;
  }
  return cov;
}

double mahalanobis(std::span<const PredictionRecord> records,
                   const Eigen::MatrixXd& cov) {
  const int n = static_cast<int>(records.size());
  if (cov.rows() != n || cov.cols() != n) {
    throw InvalidArgument("covariance dimension does not match record count");
  }
  Eigen::LLT<Eigen::MatrixXd> llt(cov);
  if (llt.info() != Eigen::Success) {
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(cov);
    const double lo = es.eigenvalues().minCoeff();
    const double hi = es.eigenvalues().maxCoeff();
    throw InvalidArgument(
        "prediction covariance is not positive definite (condition number " +
        std::to_string(lo > 0.0 ? hi / lo : std::numeric_limits<double>::infinity()) +
        ")");
  }
  Eigen::VectorXd e(n);
  for (int i = 0; i < n; ++i) {
    const auto& r = records[static_cast<std::size_t>(i)];
    e[i] = r.xhat - r.xtilde;
  }
  return e.dot(llt.solve(e));
}

ComparisonTable compare_priors(const ObservedSeries& obs,
                               std::span<const PriorFamily> families,
                               const HyperParams& hyper,
                               const FilterConfig& cfg,
                               std::span<const std::uint64_t> seeds,
                               DmCovMode mode) {
  if (families.empty() || seeds.empty()) {
    throw InvalidArgument("compare_priors needs >= 1 family and >= 1 seed");
  }

  ComparisonTable table;
  table.baseline = families[0];
  for (PriorFamily f : families) {
    if (f == PriorFamily::Independent5) {
      table.baseline = f;
    }
  }

  const ComparisonRow* baseline_row = nullptr;
  for (PriorFamily f : families) {
    ComparisonRow row;
    row.family = f;
    for (std::uint64_t seed : seeds) {
      // Streams keyed by the family identity, not the list position.
      const std::uint64_t run_seed =
          derive_seed(seed, 0x100 + static_cast<std::uint64_t>(f));
      PosteriorTrace trace;
      try {
        trace = run_filter(obs, f, hyper, cfg, run_seed,
                           mode == DmCovMode::Full);
      } catch (const std::exception& e) {
        throw std::runtime_error(std::string("family ") + family_name(f) +
                                 ": " + e.what());
      }
      const auto records = make_prediction_records(trace);
      const Eigen::MatrixXd cov = mode == DmCovMode::Full
                                      ? trace.pred_cov
                                      : diagonal_prediction_cov(records);
      row.dm_per_seed.push_back(mahalanobis(records, cov));

      const auto curve = mse_curve(records);
      const auto sq = squared_errors(records);
      if (row.mse.empty()) {
        row.mse.assign(curve.size(), 0.0);
        row.mse_pointwise.assign(sq.size(), 0.0);
        if (table.years.empty()) {
          for (const auto& [t, _] : curve) table.years.push_back(t);
        }
      }
      for (std::size_t i = 0; i < curve.size(); ++i) {
        row.mse[i] += curve[i].second / static_cast<double>(seeds.size());
        row.mse_pointwise[i] += sq[i] / static_cast<double>(seeds.size());
      }
      const auto& final_row = trace.posterior.back();
      for (int k = 0; k < kNumModels; ++k) {
        row.mean_final_posterior[static_cast<std::size_t>(k)] +=
            final_row[static_cast<std::size_t>(k)] /
            static_cast<double>(seeds.size());
      }
    }
    std::vector<double> sorted = row.dm_per_seed;
    std::sort(sorted.begin(), sorted.end());
    const std::size_t m = sorted.size();
    row.median_dm = m % 2 == 1 ? sorted[m / 2]
                               : 0.5 * (sorted[m / 2 - 1] + sorted[m / 2]);
    table.rows.push_back(std::move(row));
  }

  // Normalized curves need the baseline row; it may appear anywhere in the
  // requested order, so fill them in a second pass.
  for (auto& row : table.rows) {
    if (row.family == table.baseline) baseline_row = &row;
  }
  for (auto& row : table.rows) {
    row.mse_percent.resize(row.mse.size());
    for (std::size_t i = 0; i < row.mse.size(); ++i) {
      const double base = baseline_row->mse[i];
      row.mse_percent[i] = base > 0.0 ? 100.0 * row.mse[i] / base : 100.0;
    }
  }
  return table;
}

}  // namespace densdep
