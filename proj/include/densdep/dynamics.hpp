#ifndef DENSDEP_DYNAMICS_HPP
#define DENSDEP_DYNAMICS_HPP

#include <cstdint>
#include <optional>
#include <span>
#include <vector>

#include "densdep/errors.hpp"

namespace densdep {

inline constexpr int kMaxLag = 5;

/// |x| beyond this is treated as numerical divergence of the population
/// process rather than a representable state.
inline constexpr double kDivergenceBound = 50.0;

/// Parameters of the lagged density-dependence model
///   x_t = x_{t-1} + b0 + sum_{i=1..k} b_i * exp(x_{t-i}) + eps_t.
struct DynamicsParams {
  int k = 0;                  // number of lag years, 0..5
  std::vector<double> b;      // length k+1; b[0] = growth rate
  double sigma2 = 1.0;        // innovation variance

  void validate() const;
};

/// Qualitative behaviour near carrying capacity, by the sign and size of
/// s = sum of the lag coefficients b_1..b_k.
enum class Regime {
  Unstable,              // s >= 0: no finite capacity
  MonotoneReturn,        // -1 < s < 0
  DampedOscillation,     // -2 < s <= -1
  SustainedOrUnbounded,  // s <= -2
  NullModel,             // k = 0: random walk with drift
};

struct Trajectory {
  std::vector<double> latent;    // x_t on the centered log scale
  std::vector<double> observed;  // y_t
  std::vector<double> obs_sd;    // S_t, all > 0
  int t0 = 0;
};

/// One deterministic-plus-innovation update of the latent state.
/// `history` holds x_{t-1},...,x_{t-max(k,1)}, most recent first.
/// Throws DivergedError if any history entry exceeds the divergence bound.
double step(std::span<const double> history, const DynamicsParams& params,
            double innovation);

/// Seeded forward simulation of latent path and noisy observations.
/// `init` supplies the pre-sample states (most recent first, length >= max(k,1));
/// `obs_sd` must have length `horizon`. Identical arguments and seed give
/// bit-identical output.
Trajectory simulate(const DynamicsParams& params, std::span<const double> init,
                    int horizon, std::span<const double> obs_sd,
                    std::uint64_t seed);

/// Carrying capacity x* = log(-b0 / sum(b_1..b_k)), defined only when b0 and
/// the lag-coefficient sum have strictly opposite signs. Throws for k = 0:
/// the null model has no capacity.
std::optional<double> carrying_capacity(std::span<const double> b, int k);

Regime classify_stability(std::span<const double> b, int k);

}  // namespace densdep

#endif
