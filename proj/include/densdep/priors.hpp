#ifndef DENSDEP_PRIORS_HPP
#define DENSDEP_PRIORS_HPP

#include <Eigen/Dense>
#include <cstdint>
#include <span>
#include <utility>
#include <vector>

#include "densdep/errors.hpp"

namespace densdep {

/// The five prior families over the dynamics coefficients b.
///   Independent5 : iid N(0,5)       (illustrates Lindley's paradox)
///   Independent1 : iid N(0,1)       (baseline)
///   Correlated   : negatively correlated drift/feedback prior, per-lag
///                  variance sigma_b^2, truncated to the stable region
///   Shrinkage1   : as Correlated but per-lag variance sigma_b^2/k, so the
///                  feedback sum has the same variance at every order
///   Shrinkage2   : as Shrinkage1 with variance decaying in the lag index
enum class PriorFamily {
  Independent5,
  Independent1,
  Correlated,
  Shrinkage1,
  Shrinkage2,
};

const char* family_name(PriorFamily f);

struct HyperParams {
  double sigma_b2 = 1.0;  // total prior variance of the feedback sum
  double h = 0.04225;     // extra b0 variance absorbing capacity mis-centering
};

/// A concrete zero-mean Gaussian prior over b of a given order, optionally
/// truncated to the stability set -2 < sum(b_1..b_k) < 0.
struct PriorSpec {
  int k = 0;
  Eigen::VectorXd mean;   // k+1, all zeros
  Eigen::MatrixXd cov;    // (k+1) x (k+1), symmetric PSD
  bool truncated = false;
  double trunc_mass = 1.0;  // P(stability set) under the untruncated Gaussian

  bool in_support(const Eigen::VectorXd& b) const;
};

/// Harmonic shrinkage weight d = 1 / sum_{j=1..k} 1/j.
double shrinkage_weight(int k);

PriorSpec build_prior(PriorFamily family, int k, const HyperParams& hyper = {});

/// n draws from the (possibly truncated) prior, one row per draw.
/// Rejection sampling against the untruncated Gaussian; throws
/// RejectionBudgetExceeded past 10^7 proposals.
Eigen::MatrixXd sample_b(const PriorSpec& spec, int n, std::uint64_t seed);

/// Log density of the prior at b; -inf outside a truncated support.
double log_prior_density(const PriorSpec& spec, const Eigen::VectorXd& b);

/// Starting sufficient statistics (shape, rate) of the conjugate
/// inverse-gamma chain for sigma^2: the improper (0,0) prior.
std::pair<double, double> sigma2_prior_suffstats();

/// Independent Gaussians x_t ~ N(y_t, S_t^2) over the five warmup years.
struct InitialStatePrior {
  std::vector<double> mean;  // y_1..y_5
  std::vector<double> sd;    // S_1..S_5
};

InitialStatePrior initial_state_prior(std::span<const double> y,
                                      std::span<const double> obs_sd);

/// Standard normal CDF.
double normal_cdf(double z);

/// Standard normal quantile function (Acklam's rational approximation,
/// relative error below 1.2e-9 over the full open unit interval).
double normal_ppf(double p);

}  // namespace densdep

#endif
