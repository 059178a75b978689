#include "densdep/inference.hpp"

#include <algorithm>
#include <cmath>
#include <future>
#include <numbers>
#include <numeric>
#include <string>

#include "densdep/dynamics.hpp"

namespace densdep {

namespace {

constexpr double kSigma2Floor = 1e-12;
constexpr double kSigma2Ceil = 1e12;

double log_normal_density(double x, double mean, double var) {
  return -0.5 * std::log(2.0 * std::numbers::pi * var) -
         0.5 * (x - mean) * (x - mean) / var;
}

// Standard normal draw truncated to (a, b). Inverse CDF where the interval
// mass is representable; otherwise the interval sits deep in one tail and
// an exponentially tilted proposal (Robert 1995) is used.
double sample_truncated_standard(Rng& rng, double a, double b) {
  const double pa = normal_cdf(a);
  const double pb = normal_cdf(b);
  if (pb - pa > 1e-12) {
    double u = pa + (pb - pa) * draw_uniform(rng);
    u = std::clamp(u, 1e-300, 1.0 - 1e-16);
    return std::clamp(normal_ppf(u), a, b);
  }
  bool flipped = false;
  double lo = a, hi = b;
  if (b <= 0.0) {
    flipped = true;
    lo = -b;
    hi = -a;
  }
  const double lam = 0.5 * (lo + std::sqrt(lo * lo + 4.0));
  std::exponential_distribution<double> expo(lam);
  for (long i = 0; i < 1'000'000; ++i) {
    const double z = lo + expo(rng);
    const double d = z - lam;
    if (z <= hi && std::log(draw_uniform(rng)) <= -0.5 * d * d) {
      return flipped ? -z : z;
    }
  }
  // Unreachable for any interval wider than machine precision; return the
  // interior boundary as a last resort.
  return flipped ? -(lo + 1e-12) : lo + 1e-12;
}

}  // namespace

ParticleBank::ParticleBank(int k, PriorSpec prior, const FilterConfig& cfg,
                           const InitialStatePrior& warmup, double sigma2_init,
                           std::uint64_t seed)
    : k_(k), prior_(std::move(prior)), cfg_(cfg), rng_(Rng(seed)) {
  if (cfg_.n_particles < 100) {
    throw InvalidArgument("n_particles must be >= 100");
  }
  Eigen::LLT<Eigen::MatrixXd> llt(prior_.cov);
  if (llt.info() != Eigen::Success) {
    throw InvalidArgument(
        "prior covariance must be positive definite for filtering (h > 0)");
  }
  prior_precision_ = llt.solve(Eigen::MatrixXd::Identity(k + 1, k + 1));

  const int n = cfg_.n_particles;
  particles_.resize(static_cast<std::size_t>(n));
  weights_.assign(static_cast<std::size_t>(n), 1.0 / n);

  if (cfg_.record_history) {
    hist_states_.assign(kWarmupYears, std::vector<double>(n));
    hist_parent_.assign(kWarmupYears, std::vector<int>(n));
    hist_pred_.assign(kWarmupYears, {});
    for (auto& row : hist_parent_) {
      std::iota(row.begin(), row.end(), 0);
    }
  }

  for (int i = 0; i < n; ++i) {
    Particle& p = particles_[static_cast<std::size_t>(i)];
    p.b = VecK::Zero(k + 1);
    p.sigma2 = sigma2_init;
    p.suff.xtx = MatK::Zero(k + 1, k + 1);
    p.suff.xty = VecK::Zero(k + 1);
    // Warmup states x_1..x_5, independent given the observations.
    for (int t = 0; t < kWarmupYears; ++t) {
      const double x = warmup.mean[static_cast<std::size_t>(t)] +
                       warmup.sd[static_cast<std::size_t>(t)] *
                           draw_normal(rng_);
      p.lagwin[static_cast<std::size_t>(kWarmupYears - 1 - t)] = x;
      if (cfg_.record_history) {
        hist_states_[static_cast<std::size_t>(t)][static_cast<std::size_t>(i)] =
            x;
      }
    }
  }
}

void ParticleBank::draw_parameters(Particle& p) {
  // Gibbs refresh: sigma^2 given the current b draw, then b given sigma^2.
  if (!cfg_.fixed_sigma2 && p.suff.n >= 1) {
    double ssr = p.suff.yty - 2.0 * p.b.dot(p.suff.xty) +
                 p.b.dot(p.suff.xtx * p.b);
    ssr = std::max(ssr, 0.0);
    std::gamma_distribution<double> gamma(0.5 * p.suff.n, 1.0);
    const double g = gamma(rng_);
    double s2 = g > 0.0 ? (0.5 * ssr) / g : kSigma2Ceil;
    p.sigma2 = std::clamp(s2, kSigma2Floor, kSigma2Ceil);
  }

  MatK precision = prior_precision_ + p.suff.xtx / p.sigma2;
  Eigen::LLT<MatK> llt(precision);
  const VecK mean = llt.solve(p.suff.xty / p.sigma2);

  VecK z(k_ + 1);
  for (long attempt = 0; attempt < cfg_.rejection_budget; ++attempt) {
    for (int j = 0; j <= k_; ++j) z[j] = draw_normal(rng_);
    VecK draw = mean + llt.matrixU().solve(z);
    if (prior_.in_support(draw)) {
      p.b = std::move(draw);
      return;
    }
  }

  // Rejection starved: nearly all conditional mass lies outside the
  // stability set (a rare tail event on long runs). Draw exactly instead:
  // the constraint only involves the feedback sum s = b_1 + ... + b_k, so
  // sample s from its truncated 1-D marginal and condition a free Gaussian
  // draw on that value.
  VecK w = VecK::Zero(k_ + 1);
  for (int j = 1; j <= k_; ++j) w[j] = 1.0;
  const VecK sw = llt.solve(w);  // covariance times w
  const double svar = std::max(w.dot(sw), 1e-300);
  const double ssd = std::sqrt(svar);
  const double smean = w.dot(mean);
  double s_star =
      smean + ssd * sample_truncated_standard(
                        rng_, (-2.0 - smean) / ssd, (0.0 - smean) / ssd);
  s_star = std::clamp(s_star, -2.0 + 1e-9, -1e-9);
  for (int j = 0; j <= k_; ++j) z[j] = draw_normal(rng_);
  VecK draw = mean + llt.matrixU().solve(z);
  draw += sw * ((s_star - w.dot(draw)) / svar);
  p.b = std::move(draw);
}

BankStep ParticleBank::assimilate(double y, double obs_sd) {
  if (!(obs_sd > 0.0) || !std::isfinite(obs_sd) || !std::isfinite(y)) {
    throw InvalidArgument("observation and its SD must be finite, SD > 0");
  }
  const int n = size();
  const double s2 = obs_sd * obs_sd;
  const int lags = std::max(k_, 1);

  std::vector<double> logp(static_cast<std::size_t>(n));
  std::vector<double> new_states(static_cast<std::size_t>(n));
  std::vector<double> pred_means(static_cast<std::size_t>(n));

  BankStep out;
  double pm = 0.0, pv = 0.0, ms2 = 0.0;
  VecK z(k_ + 1);

  const double neg_inf = -std::numeric_limits<double>::infinity();
  for (int i = 0; i < n; ++i) {
    Particle& p = particles_[static_cast<std::size_t>(i)];
    // A diverged trajectory is given zero weight and frozen; it disappears
    // at the next resampling. Only a fully diverged bank is an error.
    bool diverged = false;
    for (int j = 0; j < lags; ++j) {
      if (std::abs(p.lagwin[static_cast<std::size_t>(j)]) > kDivergenceBound) {
        diverged = true;
      }
    }
    if (diverged) {
      const double w = weights_[static_cast<std::size_t>(i)];
      const double frozen = std::clamp(p.lagwin[0], -kDivergenceBound,
                                       kDivergenceBound);
      logp[static_cast<std::size_t>(i)] = neg_inf;
      new_states[static_cast<std::size_t>(i)] = frozen;
      pred_means[static_cast<std::size_t>(i)] = frozen;
      pm += w * frozen;
      pv += w * (frozen * frozen + p.sigma2);
      ms2 += w * p.sigma2;
      continue;
    }
    draw_parameters(p);

    z[0] = 1.0;
    for (int j = 1; j <= k_; ++j) {
      z[j] = std::exp(p.lagwin[static_cast<std::size_t>(j - 1)]);
    }
    const double mu = p.lagwin[0] + p.b.dot(z);

    const double w = weights_[static_cast<std::size_t>(i)];
    pm += w * mu;
    pv += w * (mu * mu + p.sigma2);
    ms2 += w * p.sigma2;

    // Locally optimal proposal: transition and observation are both
    // Gaussian in x_t, so the conditional is available in closed form and
    // the incremental weight is the exact one-step predictive density.
    const double prec = 1.0 / p.sigma2 + 1.0 / s2;
    const double v = 1.0 / prec;
    const double m = v * (mu / p.sigma2 + y / s2);
    const double x = m + std::sqrt(v) * draw_normal(rng_);
    if (std::abs(x) > kDivergenceBound) {
      // Keep the diverged value in the lag window so the particle stays
      // frozen; its weight is zeroed and the transition is not assimilated.
      logp[static_cast<std::size_t>(i)] = neg_inf;
      for (std::size_t j = kWarmupYears; j-- > 1;) {
        p.lagwin[j] = p.lagwin[j - 1];
      }
      p.lagwin[0] = x;
      new_states[static_cast<std::size_t>(i)] =
          std::clamp(x, -kDivergenceBound, kDivergenceBound);
      pred_means[static_cast<std::size_t>(i)] =
          std::clamp(mu, -kDivergenceBound, kDivergenceBound);
      continue;
    }
    logp[static_cast<std::size_t>(i)] =
        log_normal_density(y, mu, p.sigma2 + s2);

    // Assimilate the realized transition into the conjugate statistics.
    const double r = x - p.lagwin[0];
    p.suff.xtx += z * z.transpose();
    p.suff.xty += z * r;
    p.suff.yty += r * r;
    p.suff.n += 1;

    for (std::size_t j = kWarmupYears; j-- > 1;) {
      p.lagwin[j] = p.lagwin[j - 1];
    }
    p.lagwin[0] = x;
    new_states[static_cast<std::size_t>(i)] = x;
    pred_means[static_cast<std::size_t>(i)] = mu;
  }

  out.pred_mean = pm;
  out.pred_var = std::max(pv - pm * pm, 0.0);
  out.mean_sigma2 = ms2;

  // Evidence increment: weighted mean of the exact per-particle one-step
  // predictive densities, under the pre-update weights.
  const double mx = *std::max_element(logp.begin(), logp.end());
  if (!std::isfinite(mx)) {
    // every particle diverged or underflowed
    throw DivergedError(particles_[0].lagwin[0], steps_);
  }
  double acc = 0.0;
  for (int i = 0; i < n; ++i) {
    const double u = std::exp(logp[static_cast<std::size_t>(i)] - mx);
    acc += weights_[static_cast<std::size_t>(i)] * u;
    weights_[static_cast<std::size_t>(i)] *= u;
  }
  if (!(acc > 0.0)) {
    throw std::runtime_error("all particle weights vanished");
  }
  out.log_pred = mx + std::log(acc);
  const double wsum =
      std::accumulate(weights_.begin(), weights_.end(), 0.0);
  for (double& w : weights_) w /= wsum;

  if (cfg_.record_history) {
    hist_states_.push_back(std::move(new_states));
    hist_pred_.push_back(std::move(pred_means));
    std::vector<int> parent(static_cast<std::size_t>(n));
    std::iota(parent.begin(), parent.end(), 0);
    hist_parent_.push_back(std::move(parent));
    hist_mean_sigma2_.push_back(ms2);
  }

  out.ess = effective_sample_size();
  if (out.ess < 0.5 * n) {
    resample();
    out.resampled = true;
  }
  ++steps_;
  return out;
}

double ParticleBank::effective_sample_size() const {
  double sq = 0.0;
  for (double w : weights_) sq += w * w;
  return sq > 0.0 ? 1.0 / sq : 0.0;
}

void ParticleBank::resample() {
  const int n = size();
  std::vector<int> ancestor(static_cast<std::size_t>(n));
  const double u = draw_uniform(rng_);
  double cum = weights_[0];
  int i = 0;
  for (int j = 0; j < n; ++j) {
    const double target = (j + u) / n;
    while (cum < target && i < n - 1) {
      ++i;
      cum += weights_[static_cast<std::size_t>(i)];
    }
    ancestor[static_cast<std::size_t>(j)] = i;
  }

  std::vector<Particle> next(static_cast<std::size_t>(n));
  for (int j = 0; j < n; ++j) {
    next[static_cast<std::size_t>(j)] =
        particles_[static_cast<std::size_t>(ancestor[static_cast<std::size_t>(j)])];
  }
  particles_ = std::move(next);
  weights_.assign(static_cast<std::size_t>(n), 1.0 / n);

  if (cfg_.record_history && !hist_states_.empty()) {
    auto& states = hist_states_.back();
    auto& preds = hist_pred_.back();
    auto& parent = hist_parent_.back();
    std::vector<double> s2(static_cast<std::size_t>(n));
    std::vector<double> p2(static_cast<std::size_t>(n));
    for (int j = 0; j < n; ++j) {
      const int a = ancestor[static_cast<std::size_t>(j)];
      s2[static_cast<std::size_t>(j)] = states[static_cast<std::size_t>(a)];
      p2[static_cast<std::size_t>(j)] = preds[static_cast<std::size_t>(a)];
    }
    states = std::move(s2);
    preds = std::move(p2);
    parent = std::move(ancestor);
  }
}

Eigen::VectorXd ParticleBank::weighted_b_mean() const {
  Eigen::VectorXd mean = Eigen::VectorXd::Zero(k_ + 1);
  for (int i = 0; i < size(); ++i) {
    mean += weights_[static_cast<std::size_t>(i)] *
            particles_[static_cast<std::size_t>(i)].b;
  }
  return mean;
}

Eigen::VectorXd ParticleBank::weighted_b_sd() const {
  const Eigen::VectorXd mean = weighted_b_mean();
  Eigen::VectorXd var = Eigen::VectorXd::Zero(k_ + 1);
  for (int i = 0; i < size(); ++i) {
    const Eigen::VectorXd d =
        particles_[static_cast<std::size_t>(i)].b - mean;
    var += weights_[static_cast<std::size_t>(i)] * d.cwiseProduct(d);
  }
  return var.cwiseMax(0.0).cwiseSqrt();
}

std::vector<double> ParticleBank::smoothed() const {
  if (!cfg_.record_history) {
    throw InvalidArgument("smoothing requires record_history");
  }
  const int n = size();
  const int horizon = static_cast<int>(hist_states_.size());
  std::vector<double> out(static_cast<std::size_t>(horizon), 0.0);
  std::vector<int> idx(static_cast<std::size_t>(n));
  std::iota(idx.begin(), idx.end(), 0);
  for (int t = horizon - 1; t >= 0; --t) {
    double s = 0.0;
    for (int i = 0; i < n; ++i) {
      s += weights_[static_cast<std::size_t>(i)] *
           hist_states_[static_cast<std::size_t>(t)]
                       [static_cast<std::size_t>(idx[static_cast<std::size_t>(i)])];
    }
    out[static_cast<std::size_t>(t)] = s;
    for (int i = 0; i < n; ++i) {
      auto& ix = idx[static_cast<std::size_t>(i)];
      ix = hist_parent_[static_cast<std::size_t>(t)][static_cast<std::size_t>(ix)];
    }
  }
  return out;
}

std::vector<std::vector<double>> ParticleBank::prediction_lineages() const {
  if (!cfg_.record_history) {
    throw InvalidArgument("prediction lineages require record_history");
  }
  const int n = size();
  const int horizon = static_cast<int>(hist_states_.size());
  std::vector<std::vector<double>> out(
      static_cast<std::size_t>(n),
      std::vector<double>(static_cast<std::size_t>(steps_)));
  std::vector<int> idx(static_cast<std::size_t>(n));
  std::iota(idx.begin(), idx.end(), 0);
  for (int t = horizon - 1; t >= 0; --t) {
    if (t >= kWarmupYears) {
      for (int i = 0; i < n; ++i) {
        out[static_cast<std::size_t>(i)][static_cast<std::size_t>(t - kWarmupYears)] =
            hist_pred_[static_cast<std::size_t>(t)]
                      [static_cast<std::size_t>(idx[static_cast<std::size_t>(i)])];
      }
    }
    for (int i = 0; i < n; ++i) {
      auto& ix = idx[static_cast<std::size_t>(i)];
      ix = hist_parent_[static_cast<std::size_t>(t)][static_cast<std::size_t>(ix)];
    }
  }
  return out;
}

std::pair<double, double> ParticleBank::predict_next() const {
  double pm = 0.0, pv = 0.0;
  VecK z(k_ + 1);
  for (int i = 0; i < size(); ++i) {
    const Particle& p = particles_[static_cast<std::size_t>(i)];
    z[0] = 1.0;
    for (int j = 1; j <= k_; ++j) {
      z[j] = std::exp(p.lagwin[static_cast<std::size_t>(j - 1)]);
    }
    const double mu = p.lagwin[0] + p.b.dot(z);
    const double w = weights_[static_cast<std::size_t>(i)];
    pm += w * mu;
    pv += w * (mu * mu + p.sigma2);
  }
  return {pm, std::max(pv - pm * pm, 0.0)};
}

FilterState::FilterState(const ObservedSeries& obs, PriorFamily family,
                         const HyperParams& hyper, const FilterConfig& cfg,
                         std::uint64_t seed)
    : cfg_(cfg) {
  if (obs.y.size() < kWarmupYears + 1) {
    throw InsufficientWarmup("series must have at least 6 observations");
  }
  if (cfg.k_min < 0 || cfg.k_max > kMaxLag || cfg.k_min > cfg.k_max) {
    throw InvalidArgument("model order range must satisfy 0 <= k_min <= k_max <= 5");
  }

  const InitialStatePrior warmup = initial_state_prior(obs.y, obs.S);
  double sigma2_init;
  if (cfg.fixed_sigma2) {
    sigma2_init = *cfg.fixed_sigma2;
    if (!(sigma2_init > 0.0)) {
      throw InvalidArgument("fixed sigma2 must be > 0");
    }
  } else {
    // The improper IG(0,0) prior cannot be sampled before the first
    // residual; seed every bank's sigma^2 at the observation-noise scale so
    // the shared factor does not tilt the first model comparison.
    double s = 0.0;
    for (int t = 0; t < kWarmupYears; ++t) {
      s += obs.S[static_cast<std::size_t>(t)] * obs.S[static_cast<std::size_t>(t)];
    }
    sigma2_init = s / kWarmupYears;
  }

  log_evidence_.fill(-std::numeric_limits<double>::infinity());
  log_model_prior_.fill(-std::numeric_limits<double>::infinity());
  for (int k = cfg.k_min; k <= cfg.k_max; ++k) {
    ks_.push_back(k);
  }
  banks_.reserve(ks_.size());
  for (int k : ks_) {
    banks_.emplace_back(k, build_prior(family, k, hyper), cfg, warmup,
                        sigma2_init, derive_seed(seed, static_cast<std::uint64_t>(k)));
    log_evidence_[static_cast<std::size_t>(k)] = 0.0;
    log_model_prior_[static_cast<std::size_t>(k)] =
        -std::log(static_cast<double>(ks_.size()));
  }
}

ParticleBank& FilterState::bank(int k) {
  for (auto& b : banks_) {
    if (b.order() == k) return b;
  }
  throw InvalidArgument("no bank for k=" + std::to_string(k));
}

const ParticleBank& FilterState::bank(int k) const {
  for (const auto& b : banks_) {
    if (b.order() == k) return b;
  }
  throw InvalidArgument("no bank for k=" + std::to_string(k));
}

std::array<double, kNumModels> FilterState::assimilate(double y,
                                                       double obs_sd) {
  std::array<double, kNumModels> incr;
  incr.fill(std::numeric_limits<double>::quiet_NaN());

  std::vector<BankStep> steps(banks_.size());
  if (cfg_.parallel && banks_.size() > 1) {
    std::vector<std::future<BankStep>> futures;
    futures.reserve(banks_.size());
    for (auto& b : banks_) {
      futures.push_back(std::async(std::launch::async,
                                   [&b, y, obs_sd] { return b.assimilate(y, obs_sd); }));
    }
    for (std::size_t i = 0; i < futures.size(); ++i) {
      steps[i] = futures[i].get();
    }
  } else {
    for (std::size_t i = 0; i < banks_.size(); ++i) {
      steps[i] = banks_[i].assimilate(y, obs_sd);
    }
  }

  for (std::size_t i = 0; i < banks_.size(); ++i) {
    const int k = banks_[i].order();
    last_step_[static_cast<std::size_t>(k)] = steps[i];
    log_evidence_[static_cast<std::size_t>(k)] += steps[i].log_pred;
    incr[static_cast<std::size_t>(k)] = steps[i].log_pred;
  }
  ++t_;
  return incr;
}

std::vector<double> softmax_stable(std::span<const double> logits) {
  const double mx = *std::max_element(logits.begin(), logits.end());
  std::vector<double> out(logits.size(), 0.0);
  double total = 0.0;
  for (std::size_t i = 0; i < logits.size(); ++i) {
    out[i] = std::exp(logits[i] - mx);
    total += out[i];
  }
  for (double& p : out) p /= total;
  return out;
}

std::pair<double, double> mixture_moments(std::span<const double> means,
                                          std::span<const double> vars,
                                          std::span<const double> weights) {
  double mean = 0.0, second = 0.0;
  for (std::size_t i = 0; i < means.size(); ++i) {
    mean += weights[i] * means[i];
    second += weights[i] * (vars[i] + means[i] * means[i]);
  }
  return {mean, std::max(second - mean * mean, 0.0)};
}

Eigen::VectorXd FilterState::model_posterior() const {
  std::vector<double> logits;
  logits.reserve(ks_.size());
  for (int k : ks_) {
    logits.push_back(log_model_prior_[static_cast<std::size_t>(k)] +
                     log_evidence_[static_cast<std::size_t>(k)]);
  }
  const std::vector<double> probs = softmax_stable(logits);
  Eigen::VectorXd post = Eigen::VectorXd::Zero(kNumModels);
  for (std::size_t i = 0; i < ks_.size(); ++i) {
    post[ks_[i]] = probs[i];
  }
  return post;
}

PredictionSummary FilterState::predict_one_step() const {
  PredictionSummary out;
  const Eigen::VectorXd post = model_posterior();
  double mean = 0.0, second = 0.0;
  for (const auto& b : banks_) {
    const auto [m, v] = b.predict_next();
    out.per_model[static_cast<std::size_t>(b.order())] = {m, v};
    mean += post[b.order()] * m;
    second += post[b.order()] * (v + m * m);
  }
  out.mean = mean;
  out.var = std::max(second - mean * mean, 0.0);
  return out;
}

std::vector<double> FilterState::smoothed_path() const {
  const Eigen::VectorXd post = model_posterior();
  std::vector<double> out;
  for (const auto& b : banks_) {
    const std::vector<double> bank_path = b.smoothed();
    if (out.empty()) {
      out.assign(bank_path.size(), 0.0);
    }
    for (std::size_t t = 0; t < bank_path.size(); ++t) {
      out[t] += post[b.order()] * bank_path[t];
    }
  }
  return out;
}

Eigen::MatrixXd FilterState::prediction_covariance() const {
  const Eigen::VectorXd post = model_posterior();
  const int steps = banks_.front().steps_assimilated();
  Eigen::VectorXd mean = Eigen::VectorXd::Zero(steps);
  Eigen::MatrixXd cov = Eigen::MatrixXd::Zero(steps, steps);

  // First pass: pooled weighted mean of lineage predictions.
  std::vector<std::vector<std::vector<double>>> lineages;
  lineages.reserve(banks_.size());
  for (const auto& b : banks_) {
    lineages.push_back(b.prediction_lineages());
  }
  for (std::size_t bi = 0; bi < banks_.size(); ++bi) {
    const double pk = post[banks_[bi].order()];
    const auto& w = banks_[bi].weights();
    for (std::size_t i = 0; i < lineages[bi].size(); ++i) {
      const double omega = pk * w[i];
      for (int t = 0; t < steps; ++t) {
        mean[t] += omega * lineages[bi][i][static_cast<std::size_t>(t)];
      }
    }
  }
  Eigen::VectorXd d(steps);
  for (std::size_t bi = 0; bi < banks_.size(); ++bi) {
    const double pk = post[banks_[bi].order()];
    const auto& w = banks_[bi].weights();
    for (std::size_t i = 0; i < lineages[bi].size(); ++i) {
      const double omega = pk * w[i];
      if (omega == 0.0) continue;
      for (int t = 0; t < steps; ++t) {
        d[t] = lineages[bi][i][static_cast<std::size_t>(t)] - mean[t];
      }
      cov.selfadjointView<Eigen::Lower>().rankUpdate(d, omega);
    }
  }
  for (int i = 0; i < steps; ++i) {
    for (int j = i + 1; j < steps; ++j) {
      cov(i, j) = cov(j, i);
    }
  }

  // The lineage spread covers variation of the predictive means; the
  // per-step innovation variance enters on the diagonal.
  for (std::size_t bi = 0; bi < banks_.size(); ++bi) {
    const double pk = post[banks_[bi].order()];
    const auto& s2 = banks_[bi].step_mean_sigma2();
    for (int t = 0; t < steps; ++t) {
      cov(t, t) += pk * s2[static_cast<std::size_t>(t)];
    }
  }
  return cov;
}

PosteriorTrace run_filter(const ObservedSeries& obs, PriorFamily family,
                          const HyperParams& hyper, const FilterConfig& cfg,
                          std::uint64_t seed, bool compute_prediction_cov) {
  FilterState state(obs, family, hyper, cfg, seed);
  PosteriorTrace trace;
  trace.ks = state.active_orders();

  auto posterior_row = [&state] {
    std::array<double, kNumModels> row{};
    const Eigen::VectorXd p = state.model_posterior();
    for (int k = 0; k < kNumModels; ++k) row[static_cast<std::size_t>(k)] = p[k];
    return row;
  };
  trace.posterior.push_back(posterior_row());

  const int horizon = static_cast<int>(obs.y.size());
  for (int t = kWarmupYears; t < horizon; ++t) {
    const Eigen::VectorXd prev = state.model_posterior();
    state.assimilate(obs.y[static_cast<std::size_t>(t)],
                     obs.S[static_cast<std::size_t>(t)]);

    PredictionSummary ps;
    double mean = 0.0, second = 0.0;
    for (int k : trace.ks) {
      const BankStep& bs = state.last_step()[static_cast<std::size_t>(k)];
      ps.per_model[static_cast<std::size_t>(k)] = {bs.pred_mean, bs.pred_var};
      mean += prev[k] * bs.pred_mean;
      second += prev[k] * (bs.pred_var + bs.pred_mean * bs.pred_mean);
    }
    ps.mean = mean;
    ps.var = std::max(second - mean * mean, 0.0);
    trace.predictions.push_back(ps);
    trace.posterior.push_back(posterior_row());
  }

  if (cfg.record_history) {
    trace.smoothed = state.smoothed_path();
  }
  if (compute_prediction_cov) {
    trace.pred_cov = state.prediction_covariance();
  }
  return trace;
}

}  // namespace densdep
