#pragma once

#include <cstdint>
#include <functional>
#include <vector>

#include "sbnn/grid.hpp"
#include "sbnn/math.hpp"
#include "sbnn/model.hpp"
#include "sbnn/rng.hpp"
#include "sbnn/tape.hpp"
#include "sbnn/targets.hpp"

namespace sbnn {

/// Scoring network lambda: input n, two softplus hidden layers of a
/// common width, scalar linear output.  Layers use the same 1/sqrt(m)
/// input scaling as the field networks.
struct CriticParams {
  std::vector<Mat> W;  ///< {width x n, width x width, width x 1}
  std::vector<Vec> b;  ///< {width, width, 1}

  long input_dim() const { return W.front().cols(); }
  long width() const { return W.front().rows(); }
};

inline constexpr long kCriticWidth = 200;

/// Stream ids reserved on the calibration seed.  Replicate i of a
/// batch event uses substream(i), so reserved ids sit far above any
/// realistic batch size.
inline constexpr std::uint64_t kMixDeltaStream = 1ull << 63;
inline constexpr std::uint64_t kCriticInitStream = ~0ull;

/// Every weight and bias of a layer with input width m is drawn
/// uniformly from [-1/sqrt(m), 1/sqrt(m)], layer by layer, weights
/// (column-major) before biases.
CriticParams critic_init(long input_dim, SeededRng& rng,
                         long width = kCriticWidth);

/// Batched critic evaluation; each row of `fields` is one field.
Vec critic_forward_batch(const Mat& fields, const CriticParams& critic);
double critic_forward(const Vec& y, const CriticParams& critic);

struct TapedCritic {
  std::vector<ad::Var> W, b;
};
/// Lifts the critic onto a tape, as leaves when `trainable` (critic
/// ascent) or constants (hyperparameter descent).
TapedCritic lift_critic(ad::Tape& tape, const CriticParams& critic,
                        bool trainable);
/// Parameter handles in update order: W1, b1, W2, b2, W3, b3.
std::vector<ad::Var> critic_vars(const TapedCritic& tc);
ad::Var taped_critic_forward(ad::Tape& tape, const TapedCritic& tc,
                             ad::Var fields);

/// Per-pair convex combinations delta Y + (1 - delta) Ytilde with one
/// fresh uniform delta per row.
Mat mix_pairs(const Mat& gen_fields, const Mat& target_fields, SeededRng& rng);

/// (zeta / denom) sum_i (||d phi / d y (row i)|| - 1)^2 as a tape node;
/// `mixed` must be a leaf so the inner gradient exists.  The emitted
/// subgraph stays differentiable in the critic parameters.
ad::Var taped_penalty(ad::Tape& tape, const TapedCritic& tc, ad::Var mixed,
                      double zeta, long denom);

/// Value of the penalty at fixed parameters (denominator = batch rows).
double gradient_penalty(const Mat& mixed, const CriticParams& critic,
                        double zeta);

/// Monte Carlo distance estimate: mean phi over the generator batch
/// minus mean phi over the target batch.
double wasserstein_estimate(const Mat& gen_fields, const Mat& target_fields,
                            const CriticParams& critic);

/// mean_i ||d phi / d y|| over the rows of `mixed` at fixed critic.
double mean_input_gradient_norm(const Mat& mixed, const CriticParams& critic,
                                int threads);

struct CalibConfig {
  long batch = 1024;        ///< Monte Carlo batch size N
  long inner_steps = 50;    ///< critic ascent steps per alternation
  long outer_steps = 0;     ///< alternations to run
  double zeta = 10.0;       ///< penalty weight
  double inner_lr = 0.01;   ///< Adagrad step size (critic)
  double outer_lr = 0.001;  ///< RMSprop step size (hyperparameters)
  double rmsprop_decay = 0.9;
  double rmsprop_eps = 1e-8;
  double adagrad_eps = 1e-10;
  std::uint64_t seed = 0;   ///< generator / mixing randomness
  long trace_window = 100;  ///< trailing-average window
  long critic_width = kCriticWidth;
  long checkpoint_every = 100;  ///< callback cadence; 0 disables
  int threads = 1;

  void validate() const;
};

/// Adagrad over a fixed list of parameter blocks:
///   acc += g^2;  theta -= lr g / (sqrt(acc) + eps).
/// Accumulators are created on first use and persist for the life of
/// the state object.
struct AdagradState {
  double lr = 0.01;
  double eps = 1e-10;
  std::vector<Vec> acc;

  void step(const std::vector<std::pair<double*, long>>& params,
            const std::vector<Mat>& grads);
};

/// RMSprop over one flat vector:
///   acc = decay acc + (1 - decay) g^2;  theta -= lr g / (sqrt(acc) + eps).
struct RmspropState {
  double lr = 0.001;
  double decay = 0.9;
  double eps = 1e-8;
  Vec acc;

  void step(Vec& param, const Vec& grad);
};

/// Writable spans of the critic parameters in update order.
std::vector<std::pair<double*, long>> critic_spans(CriticParams& critic);

/// Prior field batch with the standard normal draws that produced it,
/// one row per replicate.  Replicate i consumes base.substream(i), so
/// the taped re-evaluation during hyperparameter descent sees exactly
/// the fields the critic was trained on.
struct GeneratorBatch {
  Mat fields;                    ///< batch x n
  std::vector<ParamDraw> etas;   ///< kept only when requested
};

/// The standard normal draws of a generator batch without the fields;
/// replicate i consumes base.substream(i), exactly as in
/// sample_generator_batch.
std::vector<ParamDraw> sample_eta_batch(const Architecture& arch, long batch,
                                        const SeededRng& base, int threads);
GeneratorBatch sample_generator_batch(const HyperParams& psi,
                                      const Architecture& arch, const Mat& x0,
                                      long batch, const SeededRng& base,
                                      int threads, bool keep_etas);

struct AscentDiag {
  double objective_first = 0.0;  ///< gap - penalty before any update
  double objective_last = 0.0;   ///< after the final update
};
/// inner_steps Adagrad ascent steps of (gap - penalty) on one fixed
/// batch triple.  Throws NumericalFailure (with the step index) if the
/// objective turns non-finite.
AscentDiag critic_ascent(const Mat& gen_fields, const Mat& target_fields,
                         const Mat& mixed, CriticParams& critic,
                         AdagradState& opt, const CalibConfig& cfg);

/// Gradient of the mean critic score of the generator batch with
/// respect to the flattened hyperparameters; the target term of the
/// distance has no hyperparameter dependence, so this is the whole
/// descent direction.  Optionally reports the mean score itself.
Vec generator_gradient(const HyperParams& psi, const Architecture& arch,
                       const Mat& x0, const std::vector<ParamDraw>& etas,
                       const CriticParams& critic, int threads,
                       double* mean_score = nullptr);

struct InnerResult {
  double grad_norm_mean = 0.0;  ///< mean ||d phi / d y (Ybar)|| at the new critic
  AscentDiag ascent;
};
/// Draws one batch of generator fields, target fields, and mixtures
/// (stream discipline below), then runs critic_ascent on it.
InnerResult inner_loop(const HyperParams& psi, const Architecture& arch,
                       const Mat& x0, const TargetSampler& targets,
                       CriticParams& critic, AdagradState& opt,
                       const CalibConfig& cfg, std::uint64_t batch_id);

struct OuterResult {
  double w1_estimate = 0.0;
  double grad_norm = 0.0;  ///< Euclidean norm of the hyperparameter gradient
};
/// Draws a fresh batch, estimates the distance, and takes one RMSprop
/// descent step on the hyperparameters.
OuterResult outer_step(HyperParams& psi, const Architecture& arch,
                       const Mat& x0, const TargetSampler& targets,
                       const CriticParams& critic, RmspropState& opt,
                       const CalibConfig& cfg, std::uint64_t batch_id);

struct CalibTraceRow {
  long outer_step = 0;        ///< 1-based
  double w1_estimate = 0.0;
  double grad_norm_mean = 0.0;
  double seconds = 0.0;       ///< wall time of this alternation
};

struct CalibResult {
  HyperParams hyper;
  std::vector<CalibTraceRow> trace;
  double trailing_average = 0.0;   ///< mean estimate over the last window
  std::uint64_t batches_drawn = 0; ///< batch ids consumed (2 per alternation)
};

/// Alternates inner_loop and outer_step for cfg.outer_steps rounds,
/// always continuing from the latest critic and hyperparameters;
/// optimizer state persists across the whole run.  `checkpoint` (when
/// set) is invoked every cfg.checkpoint_every completed rounds.
///
/// Stream discipline: batch event k (0-based; inner uses 2k, the
/// following outer 2k+1) seeds the generator with
/// SeededRng(cfg.seed, k') handing substream(i) to replicate i, draws
/// mixing deltas from substream(2^63), and passes the same k' to the
/// target sampler, which mixes it with its own seed.  The critic is
/// initialized from stream ~0.
CalibResult calibrate(
    const HyperParams& psi0, const Architecture& arch, const Grid& grid,
    const TargetSampler& targets, const CalibConfig& cfg,
    const std::function<void(long, const HyperParams&)>& checkpoint = {});

}  // namespace sbnn
