#include "densdep/dynamics.hpp"

#include <cmath>
#include <cstddef>

#include "densdep/rng.hpp"

namespace densdep {

void DynamicsParams::validate() const {
  if (k < 0 || k > kMaxLag) {
    throw InvalidArgument("model order k must be in 0..5, got " +
                          std::to_string(k));
  }
  if (b.size() != static_cast<std::size_t>(k + 1)) {
    throw InvalidArgument("coefficient vector must have length k+1");
  }
  if (!(sigma2 >= 0.0) || !std::isfinite(sigma2)) {
    throw InvalidArgument("sigma2 must be finite and nonnegative");
  }
}

double step(std::span<const double> history, const DynamicsParams& params,
            double innovation) {
  params.validate();
  const std::size_t need = static_cast<std::size_t>(std::max(params.k, 1));
  if (history.size() < need) {
    throw InvalidArgument("history shorter than max(k,1)");
  }
  for (std::size_t i = 0; i < need; ++i) {
    if (std::abs(history[i]) > kDivergenceBound) {
      throw DivergedError(history[i], static_cast<long>(i));
    }
  }
  double x = history[0] + params.b[0] + innovation;
  for (int i = 1; i <= params.k; ++i) {
    x += params.b[static_cast<std::size_t>(i)] *
         std::exp(history[static_cast<std::size_t>(i - 1)]);
  }
  return x;
}

Trajectory simulate(const DynamicsParams& params, std::span<const double> init,
                    int horizon, std::span<const double> obs_sd,
                    std::uint64_t seed) {
  params.validate();
  const std::size_t need = static_cast<std::size_t>(std::max(params.k, 1));
  if (init.size() < need) {
    throw InvalidArgument("init shorter than max(k,1)");
  }
  if (horizon < 1) {
    throw InvalidArgument("horizon must be >= 1");
  }
  if (obs_sd.size() != static_cast<std::size_t>(horizon)) {
    throw InvalidArgument("obs_sd length must equal horizon");
  }

  Rng rng = make_rng(seed);
  const double sigma = std::sqrt(params.sigma2);

  // Lag window, most recent first.
  std::vector<double> window(init.begin(), init.begin() + need);

  Trajectory out;
  out.latent.reserve(static_cast<std::size_t>(horizon));
  out.observed.reserve(static_cast<std::size_t>(horizon));
  out.obs_sd.assign(obs_sd.begin(), obs_sd.end());
  for (int t = 0; t < horizon; ++t) {
    const double eps = sigma > 0.0 ? draw_normal(rng, 0.0, sigma) : 0.0;
    double x;
    try {
      x = step(window, params, eps);
    } catch (const DivergedError& e) {
      throw DivergedError(e.value(), t);
    }
    if (std::abs(x) > kDivergenceBound) {
      throw DivergedError(x, t);
    }
    out.latent.push_back(x);
    const double s = obs_sd[static_cast<std::size_t>(t)];
    out.observed.push_back(s > 0.0 ? draw_normal(rng, x, s) : x);
    for (std::size_t i = window.size(); i-- > 1;) {
      window[i] = window[i - 1];
    }
    window[0] = x;
  }
  return out;
}

std::optional<double> carrying_capacity(std::span<const double> b, int k) {
  if (k == 0) {
    throw InvalidArgument(
        "carrying capacity is undefined for the null model k=0");
  }
  if (b.size() != static_cast<std::size_t>(k + 1)) {
    throw InvalidArgument("coefficient vector must have length k+1");
  }
  double lag_sum = 0.0;
  for (int i = 1; i <= k; ++i) {
    lag_sum += b[static_cast<std::size_t>(i)];
  }
  // Capacity exists only when drift and feedback oppose each other.
  if (b[0] * lag_sum >= 0.0) {
    return std::nullopt;
  }
  return std::log(-b[0] / lag_sum);
}

Regime classify_stability(std::span<const double> b, int k) {
  if (k < 0 || k > kMaxLag || b.size() != static_cast<std::size_t>(k + 1)) {
    throw InvalidArgument("coefficient vector must have length k+1, k in 0..5");
  }
  if (k == 0) {
    return Regime::NullModel;
  }
  double s = 0.0;
  for (int i = 1; i <= k; ++i) {
    s += b[static_cast<std::size_t>(i)];
  }
  // Boundaries assigned to the more oscillatory regime.
  if (s >= 0.0) return Regime::Unstable;
  if (s > -1.0) return Regime::MonotoneReturn;
  if (s > -2.0) return Regime::DampedOscillation;
  return Regime::SustainedOrUnbounded;
}

}  // namespace densdep
