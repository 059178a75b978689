#include "densdep/priors.hpp"

#include <cmath>
#include <limits>
#include <numbers>
#include <string>

#include "densdep/dynamics.hpp"
#include "densdep/rng.hpp"

namespace densdep {

namespace {

constexpr long kProposalBudget = 10'000'000;

double lag_sum(const Eigen::VectorXd& b) {
  double s = 0.0;
  for (Eigen::Index i = 1; i < b.size(); ++i) s += b[i];
  return s;
}

// Lower-triangular factor usable for sampling even when the matrix is only
// positive semidefinite (h = 0 makes the structured priors degenerate).
Eigen::MatrixXd sampling_root(const Eigen::MatrixXd& cov) {
  Eigen::LLT<Eigen::MatrixXd> llt(cov);
  if (llt.info() == Eigen::Success) {
    return llt.matrixL();
  }
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(cov);
  if (es.info() != Eigen::Success) {
    throw InvalidArgument("prior covariance is not factorizable");
  }
  Eigen::VectorXd vals = es.eigenvalues().cwiseMax(0.0).cwiseSqrt();
  return es.eigenvectors() * vals.asDiagonal();
}

}  // namespace

const char* family_name(PriorFamily f) {
  switch (f) {
    case PriorFamily::Independent5: return "indep5";
    case PriorFamily::Independent1: return "indep1";
    case PriorFamily::Correlated: return "corr";
    case PriorFamily::Shrinkage1: return "shrink1";
    case PriorFamily::Shrinkage2: return "shrink2";
  }
  return "?";
}

double normal_cdf(double z) {
  return 0.5 * std::erfc(-z / std::numbers::sqrt2);
}

double normal_ppf(double p) {
  // Acklam's rational approximation with the usual three-region split.
  static const double a[] = {-3.969683028665376e+01, 2.209460984245205e+02,
                             -2.759285104469687e+02, 1.383577518672690e+02,
                             -3.066479806614716e+01, 2.506628277459239e+00};
  static const double b[] = {-5.447609879822406e+01, 1.615858368580409e+02,
                             -1.556989798598866e+02, 6.680131188771972e+01,
                             -1.328068155288572e+01};
  static const double c[] = {-7.784894002430293e-03, -3.223964580411365e-01,
                             -2.400758277161838e+00, -2.549732539343734e+00,
                             4.374664141464968e+00,  2.938163982698783e+00};
  static const double d[] = {7.784695709041462e-03, 3.224671290700398e-01,
                             2.445134137142996e+00, 3.754408661907416e+00};
  if (!(p > 0.0 && p < 1.0)) {
    throw InvalidArgument("normal_ppf requires p in (0,1)");
  }
  const double plow = 0.02425;
  if (p < plow) {
    const double q = std::sqrt(-2.0 * std::log(p));
    return (((((c[0] * q + c[1]) * q + c[2]) * q + c[3]) * q + c[4]) * q +
            c[5]) /
           ((((d[0] * q + d[1]) * q + d[2]) * q + d[3]) * q + 1.0);
  }
  if (p > 1.0 - plow) {
    const double q = std::sqrt(-2.0 * std::log(1.0 - p));
    return -(((((c[0] * q + c[1]) * q + c[2]) * q + c[3]) * q + c[4]) * q +
             c[5]) /
           ((((d[0] * q + d[1]) * q + d[2]) * q + d[3]) * q + 1.0);
  }
  const double q = p - 0.5;
  const double r = q * q;
  return (((((a[0] * r + a[1]) * r + a[2]) * r + a[3]) * r + a[4]) * r +
          a[5]) *
         q /
         (((((b[0] * r + b[1]) * r + b[2]) * r + b[3]) * r + b[4]) * r + 1.0);
}

bool PriorSpec::in_support(const Eigen::VectorXd& b) const {
  if (!truncated || k == 0) return true;
  const double s = lag_sum(b);
  return s > -2.0 && s < 0.0;
}

double shrinkage_weight(int k) {
  if (k < 1) {
    throw InvalidArgument("shrinkage weight requires k >= 1");
  }
  double harmonic = 0.0;
  for (int j = 1; j <= k; ++j) harmonic += 1.0 / j;
  return 1.0 / harmonic;
}

PriorSpec build_prior(PriorFamily family, int k, const HyperParams& hyper) {
  if (k < 0 || k > kMaxLag) {
    throw InvalidArgument("model order k must be in 0..5, got " +
                          std::to_string(k));
  }
  const double sb2 = hyper.sigma_b2;
  const double sb = std::sqrt(sb2);
  const int d = k + 1;

  PriorSpec spec;
  spec.k = k;
  spec.mean = Eigen::VectorXd::Zero(d);
  spec.cov = Eigen::MatrixXd::Zero(d, d);
  spec.truncated = false;
  spec.trunc_mass = 1.0;

  if (k == 0) {
    // Null model: b0 is pure drift. The structured families inherit the
    // capacity-slack variance h; the independent families keep their scale.
    switch (family) {
      case PriorFamily::Independent5: spec.cov(0, 0) = 5.0; break;
      case PriorFamily::Independent1: spec.cov(0, 0) = 1.0; break;
      default: spec.cov(0, 0) = hyper.h; break;
    }
    return spec;
  }

  switch (family) {
    case PriorFamily::Independent5:
      spec.cov = 5.0 * Eigen::MatrixXd::Identity(d, d);
      break;
    case PriorFamily::Independent1:
      spec.cov = Eigen::MatrixXd::Identity(d, d);
      break;
    case PriorFamily::Correlated: {
      // Per-lag variance sigma_b^2; b0 counterbalances the full feedback
      // sum, so var(b0) carries a factor k plus the slack h.
      spec.cov(0, 0) = k * sb2 + hyper.h;
      for (int i = 1; i <= k; ++i) {
        spec.cov(i, i) = sb2;
        spec.cov(0, i) = spec.cov(i, 0) = -sb2;
      }
      spec.truncated = true;
      // sum(b_1..b_k) ~ N(0, k sigma_b^2) marginally.
      spec.trunc_mass = normal_cdf(2.0 / (sb * std::sqrt(double(k)))) - 0.5;
      break;
    }
    case PriorFamily::Shrinkage1: {
      spec.cov(0, 0) = sb2 + hyper.h;
      for (int i = 1; i <= k; ++i) {
        spec.cov(i, i) = sb2 / k;
        spec.cov(0, i) = spec.cov(i, 0) = -sb2 / k;
      }
      spec.truncated = true;
      spec.trunc_mass = normal_cdf(2.0 / sb) - 0.5;
      break;
    }
    case PriorFamily::Shrinkage2: {
      const double w = shrinkage_weight(k);
      spec.cov(0, 0) = sb2 + hyper.h;
      for (int i = 1; i <= k; ++i) {
        const double v = sb2 * w / i;
        spec.cov(i, i) = v;
        spec.cov(0, i) = spec.cov(i, 0) = -v;
      }
      spec.truncated = true;
      // Lag variances sum to sigma_b^2 by the harmonic construction.
      spec.trunc_mass = normal_cdf(2.0 / sb) - 0.5;
      break;
    }
  }
  return spec;
}

Eigen::MatrixXd sample_b(const PriorSpec& spec, int n, std::uint64_t seed) {
  if (n < 1) {
    throw InvalidArgument("sample count must be >= 1");
  }
  const int d = spec.k + 1;
  const Eigen::MatrixXd root = sampling_root(spec.cov);
  Rng rng = make_rng(seed);

  Eigen::MatrixXd out(n, d);
  Eigen::VectorXd z(d);
  long proposals = 0;
  for (int r = 0; r < n; ++r) {
    for (;;) {
      if (++proposals > kProposalBudget) {
        throw RejectionBudgetExceeded(
            "truncated prior sampling exceeded 1e7 proposals");
      }
      for (int j = 0; j < d; ++j) z[j] = draw_normal(rng);
      Eigen::VectorXd b = spec.mean + root * z;
      if (spec.in_support(b)) {
        out.row(r) = b.transpose();
        break;
      }
    }
  }
  return out;
}

double log_prior_density(const PriorSpec& spec, const Eigen::VectorXd& b) {
  const int d = spec.k + 1;
  if (b.size() != d) {
    throw InvalidArgument("coefficient vector has wrong dimension");
  }
  if (!spec.in_support(b)) {
    return -std::numeric_limits<double>::infinity();
  }
  Eigen::LLT<Eigen::MatrixXd> llt(spec.cov);
  if (llt.info() != Eigen::Success) {
    throw InvalidArgument("prior covariance is singular; density undefined");
  }
  const Eigen::VectorXd diff = b - spec.mean;
  const Eigen::VectorXd alpha = llt.matrixL().solve(diff);
  double logdet = 0.0;
  for (int i = 0; i < d; ++i) logdet += std::log(llt.matrixL()(i, i));
  double logp = -0.5 * d * std::log(2.0 * std::numbers::pi) - logdet -
                0.5 * alpha.squaredNorm();
  if (spec.truncated && spec.k >= 1) {
    logp -= std::log(spec.trunc_mass);
  }
  return logp;
}

std::pair<double, double> sigma2_prior_suffstats() { return {0.0, 0.0}; }

InitialStatePrior initial_state_prior(std::span<const double> y,
                                      std::span<const double> obs_sd) {
  if (y.size() < 5 || obs_sd.size() < 5) {
    throw InsufficientWarmup("initial-state prior needs 5 leading observations");
  }
  InitialStatePrior prior;
  prior.mean.assign(y.begin(), y.begin() + 5);
  prior.sd.assign(obs_sd.begin(), obs_sd.begin() + 5);
  for (double s : prior.sd) {
    if (!(s > 0.0) || !std::isfinite(s)) {
      throw InvalidArgument("warmup observation SDs must be finite and > 0");
    }
  }
  return prior;
}

}  // namespace densdep
