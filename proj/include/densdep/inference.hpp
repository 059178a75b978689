#ifndef DENSDEP_INFERENCE_HPP
#define DENSDEP_INFERENCE_HPP

#include <Eigen/Dense>
#include <array>
#include <cstdint>
#include <limits>
#include <optional>
#include <vector>

#include "densdep/ingest.hpp"
#include "densdep/priors.hpp"
#include "densdep/rng.hpp"

namespace densdep {

// Coefficient vectors/matrices never exceed k+1 = 6, so fixed-capacity
// Eigen types keep the per-particle algebra allocation-free.
using VecK = Eigen::Matrix<double, Eigen::Dynamic, 1, 0, 6, 1>;
using MatK = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, 0, 6, 6>;

inline constexpr int kWarmupYears = 5;
inline constexpr int kNumModels = 6;  // k = 0..5

struct FilterConfig {
  int n_particles = 5000;
  /// When set, sigma^2 is held at this value (conjugate learning disabled).
  std::optional<double> fixed_sigma2;
  int k_min = 0;
  int k_max = 5;
  /// Process banks on separate threads; the trace is identical either way.
  bool parallel = true;
  /// Truncation rejection budget per particle per step.
  long rejection_budget = 10'000;
  /// Keep per-time state/prediction history (needed for smoothing and the
  /// full prediction covariance).
  bool record_history = true;
};

/// Data-side accumulators of the conditionally linear regression
///   x_t - x_{t-1} = z_t . b + eps,  z_t = (1, e^{x_{t-1}}, ..., e^{x_{t-k}}).
/// Combined with the Gaussian prior in precision form they encode the
/// conditional posterior of b given the particle's path and sigma^2.
struct SufficientStats {
  MatK xtx;
  VecK xty;
  double yty = 0.0;
  int n = 0;
};

struct Particle {
  std::array<double, kWarmupYears> lagwin{};  // most recent first
  SufficientStats suff;
  VecK b;           // current parameter draw
  double sigma2 = 1.0;
};

/// Per-bank outcome of assimilating one observation.
struct BankStep {
  double log_pred = 0.0;    // log of the bank's one-step predictive density
  double pred_mean = 0.0;   // weighted predictive mean of x_t
  double pred_var = 0.0;    // mixture predictive variance
  double mean_sigma2 = 0.0; // weighted mean of the particles' sigma^2 draws
  double ess = 0.0;         // effective sample size before any resampling
  bool resampled = false;
};

/// One model order's particle population with conjugate parameter learning.
class ParticleBank {
 public:
  ParticleBank(int k, PriorSpec prior, const FilterConfig& cfg,
               const InitialStatePrior& warmup, double sigma2_init,
               std::uint64_t seed);

  BankStep assimilate(double y, double obs_sd);

  int order() const { return k_; }
  int size() const { return static_cast<int>(particles_.size()); }
  int steps_assimilated() const { return steps_; }

  const std::vector<double>& weights() const { return weights_; }
  const std::vector<Particle>& particles() const { return particles_; }

  double effective_sample_size() const;

  /// Weighted mean/SD of the current per-particle coefficient draws.
  Eigen::VectorXd weighted_b_mean() const;
  Eigen::VectorXd weighted_b_sd() const;

  /// Weighted ancestral average of the latent path (warmup + assimilated).
  std::vector<double> smoothed() const;

  /// Per-surviving-particle lineage of one-step predictive means,
  /// [particle][assimilated step]. Requires record_history.
  std::vector<std::vector<double>> prediction_lineages() const;

  /// Weighted mean sigma^2 draw at each assimilated step.
  const std::vector<double>& step_mean_sigma2() const {
    return hist_mean_sigma2_;
  }

  /// Predictive mean/variance of the next state from the current particle
  /// set and parameter draws, without assimilating anything.
  std::pair<double, double> predict_next() const;

 private:
  void draw_parameters(Particle& p);
  void resample();

  int k_;
  PriorSpec prior_;
  MatK prior_precision_;
  FilterConfig cfg_;
  Rng rng_;
  std::vector<Particle> particles_;
  std::vector<double> weights_;
  int steps_ = 0;  // observations assimilated past warmup

  // Ancestry records, one entry per time index (warmup years first).
  std::vector<std::vector<double>> hist_states_;
  std::vector<std::vector<int>> hist_parent_;
  std::vector<std::vector<double>> hist_pred_;  // empty for warmup years
  std::vector<double> hist_mean_sigma2_;
};

struct ModelPrediction {
  double mean = std::numeric_limits<double>::quiet_NaN();
  double var = std::numeric_limits<double>::quiet_NaN();
};

struct PredictionSummary {
  std::array<ModelPrediction, kNumModels> per_model{};
  double mean = 0.0;  // model-averaged mixture mean
  double var = 0.0;   // model-averaged mixture variance
};

/// Evolving posterior over model order plus per-step predictive summaries.
class FilterState {
 public:
  FilterState(const ObservedSeries& obs, PriorFamily family,
              const HyperParams& hyper, const FilterConfig& cfg,
              std::uint64_t seed);

  /// Assimilate the next observation. Returns per-model one-step predictive
  /// log densities (NaN for inactive orders). Also records the model-averaged
  /// prediction made before seeing y.
  std::array<double, kNumModels> assimilate(double y, double obs_sd);

  /// Current posterior over k = 0..5 (zeros for inactive orders).
  Eigen::VectorXd model_posterior() const;

  PredictionSummary predict_one_step() const;

  /// Ancestral-path smoother mixed across banks by the current model
  /// posterior; length = warmup + assimilated steps.
  std::vector<double> smoothed_path() const;

  /// Full covariance of the one-step predictions estimated from surviving
  /// particle lineages (one row/column per assimilated step).
  Eigen::MatrixXd prediction_covariance() const;

  int t() const { return t_; }
  const std::vector<int>& active_orders() const { return ks_; }
  const std::array<double, kNumModels>& log_evidence() const {
    return log_evidence_;
  }
  ParticleBank& bank(int k);
  const ParticleBank& bank(int k) const;

  /// Summaries from the most recent assimilate() call, indexed by k.
  const std::array<BankStep, kNumModels>& last_step() const {
    return last_step_;
  }

 private:
  std::vector<int> ks_;
  std::vector<ParticleBank> banks_;
  std::array<double, kNumModels> log_evidence_{};
  std::array<double, kNumModels> log_model_prior_{};
  std::array<BankStep, kNumModels> last_step_{};
  FilterConfig cfg_;
  int t_ = kWarmupYears;
};

/// Time-indexed record of a completed filter run.
struct PosteriorTrace {
  std::vector<int> ks;
  /// Row r is the posterior over k after assimilating r observations past
  /// warmup; row 0 is the model prior.
  std::vector<std::array<double, kNumModels>> posterior;
  /// Entry s is the prediction of x at warmup+s+1 made before assimilating it.
  std::vector<PredictionSummary> predictions;
  std::vector<double> smoothed;  // full length of the series
  Eigen::MatrixXd pred_cov;      // empty unless requested
};

PosteriorTrace run_filter(const ObservedSeries& obs, PriorFamily family,
                          const HyperParams& hyper, const FilterConfig& cfg,
                          std::uint64_t seed,
                          bool compute_prediction_cov = false);

/// Max-stabilized softmax; invariant under a common shift of the logits.
std::vector<double> softmax_stable(std::span<const double> logits);

/// Mean and variance of a Gaussian mixture (E var + var E form).
std::pair<double, double> mixture_moments(std::span<const double> means,
                                          std::span<const double> vars,
                                          std::span<const double> weights);

}  // namespace densdep

#endif
