#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "sbnn/grid.hpp"
#include "sbnn/math.hpp"
#include "sbnn/model.hpp"
#include "sbnn/rng.hpp"
#include "sbnn/targets.hpp"

namespace sbnn {

/// Noisy point observations Z_i = Y(s_i) + eps_i with
/// eps_i ~ Gau(0, noise_var).  With the log transform the likelihood
/// compares log Z_i against the field value instead.
struct Dataset {
  enum class Transform { kIdentity, kLog };

  Mat locations;  ///< d x m observation sites
  Vec values;     ///< m observations
  double noise_var = 0.001;
  Transform transform = Transform::kIdentity;

  long size() const { return values.size(); }
  /// The values the likelihood sees (log-transformed when requested).
  Vec observed() const;
  void validate() const;
  /// validate() plus an in-domain check against the grid's rectangle.
  void validate(const Grid& domain) const;
};

struct SghmcConfig {
  long chains = 4;
  long iterations = 10000;
  long burn_in = 1000;
  long thin = 10;
  double step_size = 1e-5;
  double friction = 0.05;
  long minibatch = 0;  ///< 0 resolves to min(m, 32)
  std::uint64_t seed = 0;
  int threads = 1;

  long resolved_minibatch(long m) const;
  void validate(long m) const;
};

/// Posterior weight draws, keyed by chain index.  Column d of
/// chains[c] is the flattened draw (flatten_draw layout) recorded at
/// iteration burn_in + (d + 1) * thin of chain c.
struct PosteriorSamples {
  std::vector<Mat> chains;  ///< each: params x draws_per_chain
  SghmcConfig config;
  std::string hyper_id;  ///< identifier of the calibrated prior used

  long param_count() const { return chains.empty() ? 0 : chains.front().rows(); }
  long draws_per_chain() const { return chains.empty() ? 0 : chains.front().cols(); }
  /// params x (chains * draws) concatenation in chain order.
  Mat stacked() const;
};

/// Unnormalized log posterior of the flattened weights given the data
/// and the calibrated prior: Gaussian log-likelihood of the observed
/// values under the field evaluated at the sites, plus the Gaussian
/// log-prior with moments (mu, softplus(rawscale)) from the
/// hyperparameters.  Additive constants are dropped, always the same
/// ones.  An empty dataset (m = 0) reduces to the log-prior.
/// Spatially varying variants are rejected.
double log_posterior_unnorm(const Vec& theta, const Dataset& data,
                            const HyperParams& psi, const Architecture& arch);

/// Full-batch gradient of log_posterior_unnorm in theta.
Vec log_posterior_grad(const Vec& theta, const Dataset& data,
                       const HyperParams& psi, const Architecture& arch);

/// Stochastic energy gradient: gradient of
///   U~(theta) = -(m/|subset|) x subset log-likelihood - log-prior,
/// the minibatch estimate whose expectation over uniform subsets is
/// -log_posterior_grad.
Vec minibatch_energy_grad(const Vec& theta, const Dataset& data,
                          const std::vector<long>& subset,
                          const HyperParams& psi, const Architecture& arch);

/// Uniform subset of k distinct indices from [0, m) by Floyd's
/// algorithm, returned sorted.
std::vector<long> sample_subset(long m, long k, SeededRng& rng);

/// One chain of the SGHMC update with persistent momentum:
///   v <- (1 - friction) v - step_size grad(theta) + Gau(0, 2 friction step_size I)
///   theta <- theta + v,
/// momentum starting at zero.  Per iteration the gradient callback
/// consumes the rng first (minibatch choice), then the momentum noise
/// is drawn.  Records theta after iterations burn_in + thin,
/// burn_in + 2 thin, ...; throws NumericalFailure with the iteration
/// index if theta turns non-finite.  `chain_index` only labels errors.
Mat run_sghmc(const std::function<Vec(const Vec&, SeededRng&)>& grad_energy,
              const Vec& theta0, long iterations, long burn_in, long thin,
              double step_size, double friction, SeededRng& rng,
              long chain_index);

/// Posterior sampling over the weights of a spatially invariant model.
/// Chain c runs on SeededRng(config.seed, c): first the initial draw
/// from the calibrated prior, then per iteration the minibatch indices
/// followed by the momentum noise.  Chains are independent, so the
/// result is identical for every thread count.
PosteriorSamples sghmc_sample(const Dataset& data, const HyperParams& psi,
                              const Architecture& arch,
                              const SghmcConfig& config);

struct PredictiveField {
  Mat draws;       ///< n x total draws, chain-major column order
  Vec mean_field;  ///< pointwise mean over draws
  Vec sd_field;    ///< pointwise sample sd (zero when only one draw)
};

/// Evaluates every stored draw on the grid.  `target_mean`, when
/// given, is added to each evaluated field (targets that were centered
/// before calibration).
PredictiveField predictive_field(const PosteriorSamples& samples,
                                 const Grid& grid, const HyperParams& psi,
                                 const Architecture& arch,
                                 const std::optional<Vec>& target_mean =
                                     std::nullopt,
                                 int threads = 1);

struct KrigingResult {
  Vec mean_field;  ///< n
  Vec sd_field;    ///< n
  Mat draws;       ///< n x n_draws posterior draws
};

/// Exact Gaussian-process conditioning on the dataset for a Gaussian
/// target (squared-exponential or nonstationary kind): posterior mean
/// K_go (K_oo + noise I)^-1 z and covariance K_gg - K_go (K_oo +
/// noise I)^-1 K_og.  With m = 0 it returns the prior.  Draw j
/// consumes base.substream(j).
KrigingResult kriging_oracle(const Dataset& data, const TargetSpec& spec,
                             const Grid& grid, long n_draws,
                             const SeededRng& base);

/// Effective sample size by the initial-monotone-sequence estimator:
/// pair the empirical autocovariances, keep the leading positive
/// pairs, enforce monotone decay, and divide the chain length by the
/// resulting autocorrelation time.  A constant chain reports 0; a
/// chain whose paired autocovariances start negative reports the
/// chain length.
double ess_geyer(const Vec& chain);

}  // namespace sbnn
