#include "sbnn/sghmc.hpp"

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <limits>
#include <string>
#include <vector>

#include "sbnn/errors.hpp"
#include "sbnn/linalg.hpp"
#include "sbnn/tape.hpp"
#include "sbnn/threading.hpp"

namespace sbnn {

namespace {

void require_free_weights(const Architecture& arch, const char* where) {
  if (is_varying(arch.variant))
    throw UnsupportedVariant(std::string(where) + ": " + variant_name(arch.variant) +
                             " weights are location-dependent; posterior sampling "
                             "over them is not defined");
}

/// Prior moments flattened into the weight-vector layout (per layer W
/// column-major, then b).
struct FlatMoments {
  Vec mu;
  Vec inv_var;
};

FlatMoments flat_moments(const HyperParams& psi, const Architecture& arch) {
  if (static_cast<long>(psi.layers.size()) != arch.depth())
    throw InvalidArgument("hyperparameter depth does not match the architecture");
  const PriorMoments pm = prior_moments(psi, arch);
  long total = 0;
  for (const auto& ml : pm.layers) total += ml.mu_w.size() + ml.mu_b.size();
  FlatMoments fm;
  fm.mu.resize(total);
  fm.inv_var.resize(total);
  long at = 0;
  for (const auto& ml : pm.layers) {
    const long nw = ml.mu_w.size();
    fm.mu.segment(at, nw) = Eigen::Map<const Vec>(ml.mu_w.data(), nw);
    fm.inv_var.segment(at, nw) =
        Eigen::Map<const Vec>(ml.sigma_w.data(), nw).array().square().inverse();
    at += nw;
    const long nb = ml.mu_b.size();
    fm.mu.segment(at, nb) = ml.mu_b;
    fm.inv_var.segment(at, nb) = ml.sigma_b.array().square().inverse();
    at += nb;
  }
  return fm;
}

void check_theta(const Vec& theta, const Architecture& arch) {
  if (theta.size() != count_parameters(arch).weights_biases)
    throw InvalidArgument("weight vector length does not match the architecture");
}

/// Gradient of the Gaussian log-likelihood sum in the flattened
/// weights; x0 holds the embedded inputs of the compared observations
/// (one row each) and z their observed values.
Vec likelihood_grad(const Vec& theta, const Mat& x0, const Vec& z,
                    double noise_var, const Architecture& arch) {
  ad::Tape tape;
  const ad::Var x0v = tape.constant(x0);
  const TapedDraw td = lift_draw(tape, unflatten_draw(theta, arch));
  const ad::Var field = taped_field_from_draw(tape, td, arch, x0v);
  const ad::Var resid = tape.sub(tape.constant(z), field);
  const ad::Var ll =
      tape.scale(tape.dotall(resid, resid), -1.0 / (2.0 * noise_var));
  std::vector<ad::Var> wrt;
  wrt.reserve(2 * td.layers.size());
  for (const auto& tl : td.layers) {
    wrt.push_back(tl.W);
    wrt.push_back(tl.b);
  }
  const std::vector<ad::Var> grads = tape.gradient(ll, wrt);
  Vec out(theta.size());
  long at = 0;
  for (const ad::Var& gv : grads) {
    const Mat& g = tape.value(gv);
    out.segment(at, g.size()) = Eigen::Map<const Vec>(g.data(), g.size());
    at += g.size();
  }
  return out;
}

/// Shared energy-gradient core: -scale x subset log-likelihood
/// gradient plus the prior term (theta - mu) / sigma^2.  Every public
/// gradient entry funnels through here so full-batch, minibatch, and
/// the prepared per-chain path agree to the bit.
Vec energy_grad_impl(const Vec& theta, const Mat& x0, const Vec& z,
                     double noise_var, double scale, const FlatMoments& fm,
                     const Architecture& arch) {
  Vec grad = (theta - fm.mu).cwiseProduct(fm.inv_var);
  if (z.size() > 0) {
    const Vec lg = likelihood_grad(theta, x0, z, noise_var, arch);
    const Vec scaled = scale * lg;
    grad -= scaled;
  }
  return grad;
}

void check_noise(const Dataset& data) {
  if (data.size() > 0 &&
      (!(data.noise_var > 0.0) || !std::isfinite(data.noise_var)))
    throw InvalidArgument("noise_var must be positive and finite");
}

}  // namespace

Vec Dataset::observed() const {
  if (transform == Transform::kLog) return values.array().log();
  return values;
}

void Dataset::validate() const {
  if (values.size() < 1)
    throw InvalidArgument("dataset needs at least one observation");
  if (locations.cols() != values.size())
    throw InvalidArgument("location count does not match observation count");
  if (locations.rows() < 1 || locations.rows() > 2)
    throw InvalidArgument("observation sites must be 1- or 2-dimensional");
  if (!(noise_var > 0.0) || !std::isfinite(noise_var))
    throw InvalidArgument("noise_var must be positive and finite");
  if (!locations.allFinite() || !values.allFinite())
    throw InvalidArgument("dataset holds non-finite entries");
  if (transform == Transform::kLog && (values.array() <= 0.0).any())
    throw InvalidArgument("log transform needs strictly positive observations");
}

void Dataset::validate(const Grid& domain) const {
  validate();
  if (locations.rows() != domain.dim())
    throw InvalidArgument("observation sites and domain disagree on dimension");
  const auto& bounds = domain.bounds();
  for (long j = 0; j < locations.cols(); ++j)
    for (int a = 0; a < domain.dim(); ++a) {
      const double c = locations(a, j);
      if (c < bounds[static_cast<std::size_t>(a)][0] ||
          c > bounds[static_cast<std::size_t>(a)][1])
        throw InvalidArgument("observation site " + std::to_string(j) +
                              " lies outside the domain");
    }
}

long SghmcConfig::resolved_minibatch(long m) const {
  return minibatch == 0 ? std::min(m, 32L) : minibatch;
}

void SghmcConfig::validate(long m) const {
  if (chains < 1) throw InvalidArgument("chains must be at least 1");
  if (iterations < 1) throw InvalidArgument("iterations must be at least 1");
  if (burn_in < 0 || burn_in >= iterations)
    throw InvalidArgument("burn_in must lie in [0, iterations)");
  if (thin < 1) throw InvalidArgument("thin must be at least 1");
  if (!(step_size >= 0.0) || !std::isfinite(step_size))
    throw InvalidArgument("step_size must be finite and nonnegative");
  if (!(friction > 0.0) || friction > 1.0)
    throw InvalidArgument("friction must lie in (0, 1]");
  if (minibatch < 0) throw InvalidArgument("minibatch must be nonnegative");
  const long k = resolved_minibatch(m);
  if (k < 1 || k > m)
    throw InvalidArgument("minibatch must lie in [1, observation count]");
  if (threads < 1) throw InvalidArgument("threads must be at least 1");
}

Mat PosteriorSamples::stacked() const {
  const long p = param_count();
  long total = 0;
  for (const auto& c : chains) total += c.cols();
  Mat out(p, total);
  long at = 0;
  for (const auto& c : chains) {
    if (c.rows() != p)
      throw InvalidArgument("chains disagree on parameter count");
    out.middleCols(at, c.cols()) = c;
    at += c.cols();
  }
  return out;
}

double log_posterior_unnorm(const Vec& theta, const Dataset& data,
                            const HyperParams& psi, const Architecture& arch) {
  require_free_weights(arch, "log_posterior_unnorm");
  check_theta(theta, arch);
  check_noise(data);
  const FlatMoments fm = flat_moments(psi, arch);
  const Vec centered = theta - fm.mu;
  double logp = -0.5 * (centered.array().square() * fm.inv_var.array()).sum();
  if (data.size() > 0) {
    const Mat x0 = embed_input(arch, data.locations);
    const Vec f = forward_field(unflatten_draw(theta, arch), psi, arch, x0);
    const Vec resid = data.observed() - f;
    logp -= resid.squaredNorm() / (2.0 * data.noise_var);
  }
  return logp;
}

Vec log_posterior_grad(const Vec& theta, const Dataset& data,
                       const HyperParams& psi, const Architecture& arch) {
  require_free_weights(arch, "log_posterior_grad");
  check_theta(theta, arch);
  check_noise(data);
  const FlatMoments fm = flat_moments(psi, arch);
  Vec grad = -(theta - fm.mu).cwiseProduct(fm.inv_var);
  if (data.size() > 0) {
    const Mat x0 = embed_input(arch, data.locations);
    grad += likelihood_grad(theta, x0, data.observed(), data.noise_var, arch);
  }
  return grad;
}

Vec minibatch_energy_grad(const Vec& theta, const Dataset& data,
                          const std::vector<long>& subset,
                          const HyperParams& psi, const Architecture& arch) {
  require_free_weights(arch, "minibatch_energy_grad");
  check_theta(theta, arch);
  check_noise(data);
  const FlatMoments fm = flat_moments(psi, arch);
  if (subset.empty())
    return energy_grad_impl(theta, Mat(), Vec(), 1.0, 1.0, fm, arch);
  const long m = data.size();
  Mat sub_locs(data.locations.rows(), static_cast<long>(subset.size()));
  Vec z(static_cast<long>(subset.size()));
  const Vec obs = data.observed();
  for (std::size_t i = 0; i < subset.size(); ++i) {
    const long idx = subset[i];
    if (idx < 0 || idx >= m)
      throw InvalidArgument("minibatch index out of range");
    sub_locs.col(static_cast<long>(i)) = data.locations.col(idx);
    z(static_cast<long>(i)) = obs(idx);
  }
  const Mat x0 = embed_input(arch, sub_locs);
  const double scale =
      static_cast<double>(m) / static_cast<double>(subset.size());
  return energy_grad_impl(theta, x0, z, data.noise_var, scale, fm, arch);
}

std::vector<long> sample_subset(long m, long k, SeededRng& rng) {
  if (m < 0 || k < 0 || k > m)
    throw InvalidArgument("subset size must lie in [0, population size]");
  std::vector<long> out;
  out.reserve(static_cast<std::size_t>(k));
  for (long j = m - k; j < m; ++j) {
    const long t =
        static_cast<long>(rng.uniform_below(static_cast<std::uint64_t>(j + 1)));
    if (std::find(out.begin(), out.end(), t) == out.end())
      out.push_back(t);
    else
      out.push_back(j);
  }
  std::sort(out.begin(), out.end());
  return out;
}

Mat run_sghmc(const std::function<Vec(const Vec&, SeededRng&)>& grad_energy,
              const Vec& theta0, long iterations, long burn_in, long thin,
              double step_size, double friction, SeededRng& rng,
              long chain_index) {
  if (iterations < 1 || burn_in < 0 || burn_in >= iterations || thin < 1)
    throw InvalidArgument("inconsistent chain schedule");
  if (!(step_size >= 0.0) || !std::isfinite(step_size))
    throw InvalidArgument("step_size must be finite and nonnegative");
  if (!(friction > 0.0) || friction > 1.0)
    throw InvalidArgument("friction must lie in (0, 1]");
  if (!theta0.allFinite())
    throw InvalidArgument("initial weights must be finite");

  const long p = theta0.size();
  const long n_draws = (iterations - burn_in) / thin;
  Mat draws(p, n_draws);
  Vec theta = theta0;
  Vec v = Vec::Zero(p);
  Vec noise(p);
  const double sd = std::sqrt(2.0 * friction * step_size);
  long at = 0;
  for (long t = 1; t <= iterations; ++t) {
    const Vec g = grad_energy(theta, rng);
    for (long i = 0; i < p; ++i) noise(i) = sd * rng.normal();
    // Separate statements keep the update identical to any external
    // replay of the recursion (no cross-term contraction).
    v *= (1.0 - friction);
    const Vec kick = step_size * g;
    v -= kick;
    v += noise;
    theta += v;
    if (!theta.allFinite())
      throw NumericalFailure("chain " + std::to_string(chain_index) +
                                 " diverged at iteration " + std::to_string(t),
                             t);
    if (t > burn_in && (t - burn_in) % thin == 0) draws.col(at++) = theta;
  }
  return draws;
}

PosteriorSamples sghmc_sample(const Dataset& data, const HyperParams& psi,
                              const Architecture& arch,
                              const SghmcConfig& config) {
  require_free_weights(arch, "sghmc_sample");
  data.validate();
  arch.validate(static_cast<int>(data.locations.rows()));
  config.validate(data.size());
  const FlatMoments fm = flat_moments(psi, arch);
  if (fm.mu.size() != count_parameters(arch).weights_biases)
    throw InvalidArgument("hyperparameters do not match the architecture");

  const long m = data.size();
  const long k = config.resolved_minibatch(m);
  const double scale = static_cast<double>(m) / static_cast<double>(k);
  // Embedding rows are per-location, so a row subset of the full
  // embedding is bitwise the embedding of the subset.
  const Mat x0_full = embed_input(arch, data.locations);
  const Vec z_full = data.observed();

  PosteriorSamples out;
  out.config = config;
  out.chains.resize(static_cast<std::size_t>(config.chains));
  parallel_shards(static_cast<int>(config.chains), config.threads, [&](int c) {
    SeededRng rng(config.seed, static_cast<std::uint64_t>(c));
    const Vec theta0 = flatten_draw(sample_prior_params(psi, arch, rng));
    Mat x0(k, x0_full.cols());
    Vec z(k);
    const auto grad = [&](const Vec& theta, SeededRng& r) -> Vec {
      const std::vector<long> subset = sample_subset(m, k, r);
      for (long i = 0; i < k; ++i) {
        x0.row(i) = x0_full.row(subset[static_cast<std::size_t>(i)]);
        z(i) = z_full(subset[static_cast<std::size_t>(i)]);
      }
      return energy_grad_impl(theta, x0, z, data.noise_var, scale, fm, arch);
    };
    out.chains[static_cast<std::size_t>(c)] =
        run_sghmc(grad, theta0, config.iterations, config.burn_in, config.thin,
                  config.step_size, config.friction, rng, c);
  });
  return out;
}

PredictiveField predictive_field(const PosteriorSamples& samples,
                                 const Grid& grid, const HyperParams& psi,
                                 const Architecture& arch,
                                 const std::optional<Vec>& target_mean,
                                 int threads) {
  require_free_weights(arch, "predictive_field");
  arch.validate(grid.dim());
  if (threads < 1) throw InvalidArgument("threads must be at least 1");
  const Mat stacked = samples.stacked();
  if (stacked.cols() == 0)
    throw InvalidArgument("no posterior draws to evaluate");
  if (stacked.rows() != count_parameters(arch).weights_biases)
    throw InvalidArgument("posterior draws do not match the architecture");
  if (target_mean && target_mean->size() != grid.n())
    throw InvalidArgument("mean field length does not match the grid");

  const Mat x0 = embed_input(arch, grid.locations());
  const long total = stacked.cols();
  PredictiveField out;
  out.draws.resize(grid.n(), total);
  // Columns are written independently; no cross-thread reduction, so
  // any shard split is thread-count invariant.
  const int n_shards = 4;
  parallel_shards(n_shards, threads, [&](int s) {
    const long lo = total * s / n_shards;
    const long hi = total * (s + 1) / n_shards;
    for (long j = lo; j < hi; ++j) {
      Vec f = forward_field(unflatten_draw(stacked.col(j), arch), psi, arch, x0);
      if (target_mean) f += *target_mean;
      out.draws.col(j) = f;
    }
  });
  out.mean_field = out.draws.rowwise().mean();
  if (total == 1) {
    out.sd_field = Vec::Zero(grid.n());
  } else {
    const Vec ss =
        (out.draws.colwise() - out.mean_field).array().square().rowwise().sum();
    out.sd_field = (ss / static_cast<double>(total - 1)).cwiseSqrt();
  }
  return out;
}

KrigingResult kriging_oracle(const Dataset& data, const TargetSpec& spec,
                             const Grid& grid, long n_draws,
                             const SeededRng& base) {
  if (spec.kind != TargetKind::kStationarySqexpGp &&
      spec.kind != TargetKind::kPaciorekGp)
    throw InvalidArgument(
        "exact conditioning needs a Gaussian target with a closed-form kernel");
  if (n_draws < 0) throw InvalidArgument("draw count must be nonnegative");

  const Mat& g_locs = grid.locations();
  Mat cov = covariance_matrix(spec, g_locs);
  Vec mean = Vec::Zero(grid.n());
  if (data.size() > 0) {
    data.validate();
    if (data.locations.rows() != grid.dim())
      throw InvalidArgument("observation sites and grid disagree on dimension");
    Mat k_oo = covariance_matrix(spec, data.locations);
    k_oo.diagonal().array() += data.noise_var;
    const CholeskyResult ch = cholesky_spd(k_oo);
    const Mat k_og = cross_covariance(spec, data.locations, g_locs);
    // A^{-1} = L^{-T} L^{-1}; the half-solve of k_og reproduces both
    // the mean projection and the covariance downdate.
    const Mat half = ch.lower.triangularView<Eigen::Lower>().solve(k_og);
    const Vec w = ch.lower.triangularView<Eigen::Lower>().solve(data.observed());
    const Vec alpha =
        ch.lower.transpose().triangularView<Eigen::Upper>().solve(w);
    mean = k_og.transpose() * alpha;
    cov -= half.transpose() * half;
  }

  KrigingResult out;
  out.mean_field = mean;
  out.sd_field = cov.diagonal().cwiseMax(0.0).cwiseSqrt();
  out.draws.resize(grid.n(), n_draws);
  if (n_draws > 0) {
    const CholeskyResult cg = cholesky_spd(cov);
    for (long j = 0; j < n_draws; ++j) {
      SeededRng r = base.substream(static_cast<std::uint64_t>(j));
      out.draws.col(j) = sample_mvn(mean, cg.lower, r);
    }
  }
  return out;
}

double ess_geyer(const Vec& chain) {
  const long n = chain.size();
  if (n < 2) throw InvalidArgument("effective sample size needs at least 2 draws");
  if ((chain.array() == chain(0)).all()) return 0.0;
  const Vec c = chain.array() - chain.mean();
  const auto gamma = [&](long k) -> double {
    return c.head(n - k).dot(c.tail(n - k)) / static_cast<double>(n);
  };
  const double g0 = gamma(0);
  if (g0 == 0.0) return 0.0;
  double sum = 0.0;
  double prev = std::numeric_limits<double>::infinity();
  for (long j = 0; 2 * j < n; ++j) {
    double pair = gamma(2 * j);
    if (2 * j + 1 < n) pair += gamma(2 * j + 1);
    if (pair <= 0.0) break;      // initial positive sequence
    if (pair > prev) pair = prev;  // monotone decay
    sum += pair;
    prev = pair;
  }
  const double var = -g0 + 2.0 * sum;
  if (var <= 0.0) return static_cast<double>(n);
  return static_cast<double>(n) * g0 / var;
}

}  // namespace sbnn
