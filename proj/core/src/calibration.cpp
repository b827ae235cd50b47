#include "sbnn/calibration.hpp"

#include <algorithm>
#include <array>
#include <chrono>
#include <cmath>
#include <limits>
#include <utility>

#include "sbnn/errors.hpp"
#include "sbnn/threading.hpp"

namespace sbnn {

namespace {

// Work is always split into this many fixed shards, combined in shard
// order, so results do not depend on the thread count.
constexpr int kShards = 4;

struct ShardRange {
  long lo = 0, hi = 0;
};

std::array<ShardRange, kShards> shard_ranges(long n) {
  std::array<ShardRange, kShards> r{};
  const long base = n / kShards;
  const long rem = n % kShards;
  long lo = 0;
  for (int s = 0; s < kShards; ++s) {
    const long len = base + (s < rem ? 1 : 0);
    r[s] = {lo, lo + len};
    lo += len;
  }
  return r;
}

void check_critic(const CriticParams& cp) {
  if (cp.W.size() != 3 || cp.b.size() != 3)
    throw InvalidArgument("critic needs three weight and three bias blocks");
  const long w = cp.W[0].rows();
  const long n = cp.W[0].cols();
  if (w < 1 || n < 1) throw InvalidArgument("critic blocks are empty");
  if (cp.b[0].size() != w || cp.W[1].rows() != w || cp.W[1].cols() != w ||
      cp.b[1].size() != w || cp.W[2].rows() != w || cp.W[2].cols() != 1 ||
      cp.b[2].size() != 1)
    throw InvalidArgument("critic block shapes do not conform");
}

void check_batch_pair(const char* who, const Mat& a, const Mat& b,
                      const CriticParams& cp) {
  if (a.rows() < 1)
    throw InvalidArgument(std::string(who) + ": empty batch");
  if (a.rows() != b.rows() || a.cols() != b.cols())
    throw InvalidArgument(std::string(who) + ": batches differ in shape");
  if (a.cols() != cp.input_dim())
    throw InvalidArgument(std::string(who) +
                          ": field length does not match the critic input");
}

void fill_uniform(Mat& m, double bound, SeededRng& rng) {
  for (long j = 0; j < m.cols(); ++j)
    for (long i = 0; i < m.rows(); ++i) m(i, j) = rng.uniform(-bound, bound);
}

}  // namespace

CriticParams critic_init(long input_dim, SeededRng& rng, long width) {
  if (input_dim < 1) throw InvalidArgument("critic input dimension must be positive");
  if (width < 1) throw InvalidArgument("critic width must be positive");
  CriticParams cp;
  cp.W = {Mat(width, input_dim), Mat(width, width), Mat(width, 1)};
  cp.b = {Vec(width), Vec(width), Vec(1)};
  for (int k = 0; k < 3; ++k) {
    const double bound = 1.0 / std::sqrt(static_cast<double>(k == 0 ? input_dim : width));
    fill_uniform(cp.W[k], bound, rng);
    for (long i = 0; i < cp.b[k].size(); ++i) cp.b[k](i) = rng.uniform(-bound, bound);
  }
  return cp;
}

// Mirrors taped_critic_forward statement by statement (materialized
// transposes, separate scale step) so plain and taped evaluations agree
// bit for bit.
Vec critic_forward_batch(const Mat& fields, const CriticParams& cp) {
  check_critic(cp);
  if (fields.cols() != cp.input_dim())
    throw InvalidArgument("field length does not match the critic input");
  const double inv_in = 1.0 / std::sqrt(static_cast<double>(cp.input_dim()));
  const double inv_w = 1.0 / std::sqrt(static_cast<double>(cp.width()));

  const Mat w1t = cp.W[0].transpose();
  Mat z1(fields.rows(), w1t.cols());
  z1.noalias() = fields * w1t;
  const Mat z1s = z1 * inv_in;
  const Mat b1t = cp.b[0].transpose();
  const Mat h1 = mat_softplus(z1s.rowwise() + b1t.row(0));

  const Mat w2t = cp.W[1].transpose();
  Mat z2(h1.rows(), w2t.cols());
  z2.noalias() = h1 * w2t;
  const Mat z2s = z2 * inv_w;
  const Mat b2t = cp.b[1].transpose();
  const Mat h2 = mat_softplus(z2s.rowwise() + b2t.row(0));

  Mat z3(h2.rows(), 1);
  z3.noalias() = h2 * cp.W[2];
  const Mat z3s = z3 * inv_w;
  return (z3s.array() + cp.b[2](0)).matrix();
}

double critic_forward(const Vec& y, const CriticParams& cp) {
  return critic_forward_batch(y.transpose(), cp)(0);
}

TapedCritic lift_critic(ad::Tape& tape, const CriticParams& cp,
                        bool trainable) {
  check_critic(cp);
  TapedCritic tc;
  for (int k = 0; k < 3; ++k) {
    if (trainable) {
      tc.W.push_back(tape.leaf(cp.W[k]));
      tc.b.push_back(tape.leaf(cp.b[k]));
    } else {
      tc.W.push_back(tape.constant(cp.W[k]));
      tc.b.push_back(tape.constant(cp.b[k]));
    }
  }
  return tc;
}

std::vector<ad::Var> critic_vars(const TapedCritic& tc) {
  return {tc.W[0], tc.b[0], tc.W[1], tc.b[1], tc.W[2], tc.b[2]};
}

ad::Var taped_critic_forward(ad::Tape& tape, const TapedCritic& tc,
                             ad::Var fields) {
  const double inv_in =
      1.0 / std::sqrt(static_cast<double>(tape.value(tc.W[0]).cols()));
  const double inv_w =
      1.0 / std::sqrt(static_cast<double>(tape.value(tc.W[0]).rows()));
  ad::Var h1 = tape.softplus(tape.add_row_vec(
      tape.scale(tape.matmul(fields, tape.transpose(tc.W[0])), inv_in),
      tape.transpose(tc.b[0])));
  ad::Var h2 = tape.softplus(tape.add_row_vec(
      tape.scale(tape.matmul(h1, tape.transpose(tc.W[1])), inv_w),
      tape.transpose(tc.b[1])));
  return tape.sadd(tc.b[2], tape.scale(tape.matmul(h2, tc.W[2]), inv_w));
}

Mat mix_pairs(const Mat& gen_fields, const Mat& target_fields,
              SeededRng& rng) {
  if (gen_fields.rows() != target_fields.rows() ||
      gen_fields.cols() != target_fields.cols())
    throw InvalidArgument("mix_pairs: batches differ in shape");
  Mat mixed(gen_fields.rows(), gen_fields.cols());
  for (long i = 0; i < mixed.rows(); ++i) {
    const double d = rng.uniform01();
    mixed.row(i) = d * gen_fields.row(i) + (1.0 - d) * target_fields.row(i);
  }
  return mixed;
}

ad::Var taped_penalty(ad::Tape& tape, const TapedCritic& tc, ad::Var mixed,
                      double zeta, long denom) {
  if (denom < 1) throw InvalidArgument("penalty denominator must be positive");
  ad::Var out = taped_critic_forward(tape, tc, mixed);
  ad::Var total = tape.sum(out);
  ad::Var g = tape.gradient(total, {mixed})[0];
  ad::Var dev = tape.add_const(tape.rows_norm(g), -1.0);
  return tape.scale(tape.sum(tape.pow(dev, 2.0)), zeta / static_cast<double>(denom));
}

double gradient_penalty(const Mat& mixed, const CriticParams& cp,
                        double zeta) {
  check_critic(cp);
  if (mixed.rows() < 1) throw InvalidArgument("gradient_penalty: empty batch");
  if (mixed.cols() != cp.input_dim())
    throw InvalidArgument("field length does not match the critic input");
  if (zeta < 0.0) throw InvalidArgument("penalty weight must be nonnegative");
  if (zeta == 0.0) return 0.0;
  ad::Tape tape;
  TapedCritic tc = lift_critic(tape, cp, false);
  ad::Var ybar = tape.leaf(mixed);
  ad::Var pen = taped_penalty(tape, tc, ybar, zeta, mixed.rows());
  return tape.value(pen)(0, 0);
}

double wasserstein_estimate(const Mat& gen_fields, const Mat& target_fields,
                            const CriticParams& cp) {
  check_critic(cp);
  check_batch_pair("wasserstein_estimate", gen_fields, target_fields, cp);
  const Vec a = critic_forward_batch(gen_fields, cp);
  const Vec b = critic_forward_batch(target_fields, cp);
  return (a - b).mean();
}

double mean_input_gradient_norm(const Mat& mixed, const CriticParams& cp,
                                int threads) {
  check_critic(cp);
  if (mixed.rows() < 1)
    throw InvalidArgument("mean_input_gradient_norm: empty batch");
  if (mixed.cols() != cp.input_dim())
    throw InvalidArgument("field length does not match the critic input");
  const auto ranges = shard_ranges(mixed.rows());
  std::array<double, kShards> sums{};
  parallel_shards(kShards, threads, [&](int s) {
    const auto [lo, hi] = ranges[s];
    if (lo == hi) return;
    ad::Tape tape;
    TapedCritic tc = lift_critic(tape, cp, false);
    ad::Var ybar = tape.leaf(mixed.middleRows(lo, hi - lo));
    ad::Var total = tape.sum(taped_critic_forward(tape, tc, ybar));
    ad::Var g = tape.gradient(total, {ybar})[0];
    sums[s] = tape.value(g).rowwise().norm().sum();
  });
  double total = 0.0;
  for (int s = 0; s < kShards; ++s) total += sums[s];
  return total / static_cast<double>(mixed.rows());
}

void CalibConfig::validate() const {
  if (batch < 2) throw InvalidArgument("calibration batch must be at least 2");
  if (inner_steps < 0) throw InvalidArgument("inner_steps must be nonnegative");
  if (outer_steps < 0) throw InvalidArgument("outer_steps must be nonnegative");
  if (!(zeta >= 0.0) || !std::isfinite(zeta))
    throw InvalidArgument("penalty weight must be finite and nonnegative");
  if (!(inner_lr >= 0.0) || !(outer_lr >= 0.0) || !std::isfinite(inner_lr) ||
      !std::isfinite(outer_lr))
    throw InvalidArgument("learning rates must be finite and nonnegative");
  if (!(rmsprop_decay >= 0.0) || rmsprop_decay >= 1.0)
    throw InvalidArgument("rmsprop decay must lie in [0, 1)");
  if (!(rmsprop_eps > 0.0) || !(adagrad_eps > 0.0))
    throw InvalidArgument("optimizer eps must be positive");
  if (trace_window < 1) throw InvalidArgument("trace window must be positive");
  if (critic_width < 1) throw InvalidArgument("critic width must be positive");
  if (checkpoint_every < 0)
    throw InvalidArgument("checkpoint cadence must be nonnegative");
  if (threads < 1) throw InvalidArgument("thread count must be positive");
}

void AdagradState::step(const std::vector<std::pair<double*, long>>& params,
                        const std::vector<Mat>& grads) {
  if (params.size() != grads.size())
    throw InvalidArgument("adagrad: parameter and gradient counts differ");
  if (acc.empty()) {
    acc.resize(params.size());
    for (size_t k = 0; k < params.size(); ++k)
      acc[k] = Vec::Zero(params[k].second);
  }
  if (acc.size() != params.size())
    throw InvalidArgument("adagrad: state belongs to a different block list");
  for (size_t k = 0; k < params.size(); ++k) {
    const auto [ptr, len] = params[k];
    if (grads[k].size() != len || acc[k].size() != len)
      throw InvalidArgument("adagrad: block size mismatch");
    Eigen::Map<Vec> p(ptr, len);
    Eigen::Map<const Vec> g(grads[k].data(), len);
    acc[k].array() += g.array().square();
    p.array() -= lr * g.array() / (acc[k].array().sqrt() + eps);
  }
}

void RmspropState::step(Vec& param, const Vec& grad) {
  if (param.size() != grad.size())
    throw InvalidArgument("rmsprop: parameter and gradient sizes differ");
  if (acc.size() == 0) acc = Vec::Zero(param.size());
  if (acc.size() != param.size())
    throw InvalidArgument("rmsprop: state belongs to a different parameter");
  acc.array() = decay * acc.array() + (1.0 - decay) * grad.array().square();
  param.array() -= lr * grad.array() / (acc.array().sqrt() + eps);
}

std::vector<std::pair<double*, long>> critic_spans(CriticParams& cp) {
  check_critic(cp);
  return {{cp.W[0].data(), cp.W[0].size()}, {cp.b[0].data(), cp.b[0].size()},
          {cp.W[1].data(), cp.W[1].size()}, {cp.b[1].data(), cp.b[1].size()},
          {cp.W[2].data(), cp.W[2].size()}, {cp.b[2].data(), cp.b[2].size()}};
}

std::vector<ParamDraw> sample_eta_batch(const Architecture& arch, long batch,
                                        const SeededRng& base, int threads) {
  if (batch < 1) throw InvalidArgument("generator batch must be at least 1");
  std::vector<ParamDraw> etas(batch);
  const auto ranges = shard_ranges(batch);
  parallel_shards(kShards, threads, [&](int s) {
    for (long i = ranges[s].lo; i < ranges[s].hi; ++i) {
      SeededRng rng = base.substream(static_cast<std::uint64_t>(i));
      etas[i] = sample_etas(arch, rng);
    }
  });
  return etas;
}

GeneratorBatch sample_generator_batch(const HyperParams& psi,
                                      const Architecture& arch, const Mat& x0,
                                      long batch, const SeededRng& base,
                                      int threads, bool keep_etas) {
  if (batch < 1) throw InvalidArgument("generator batch must be at least 1");
  GeneratorBatch gb;
  gb.fields.resize(batch, x0.rows());
  if (keep_etas) gb.etas.resize(batch);
  const auto ranges = shard_ranges(batch);
  parallel_shards(kShards, threads, [&](int s) {
    for (long i = ranges[s].lo; i < ranges[s].hi; ++i) {
      SeededRng rng = base.substream(static_cast<std::uint64_t>(i));
      ParamDraw etas = sample_etas(arch, rng);
      const ParamDraw draw = materialize_draw(psi, arch, etas);
      gb.fields.row(i) = forward_field(draw, psi, arch, x0).transpose();
      if (keep_etas) gb.etas[i] = std::move(etas);
    }
  });
  return gb;
}

AscentDiag critic_ascent(const Mat& gen_fields, const Mat& target_fields,
                         const Mat& mixed, CriticParams& critic,
                         AdagradState& opt, const CalibConfig& cfg) {
  check_critic(critic);
  check_batch_pair("critic_ascent", gen_fields, target_fields, critic);
  check_batch_pair("critic_ascent", gen_fields, mixed, critic);
  if (cfg.inner_steps < 0 || cfg.zeta < 0.0)
    throw InvalidArgument("critic_ascent: invalid config");
  const long batch = gen_fields.rows();
  const long n = gen_fields.cols();

  AscentDiag diag;
  diag.objective_first = wasserstein_estimate(gen_fields, target_fields, critic) -
                         gradient_penalty(mixed, critic, cfg.zeta);

  const auto ranges = shard_ranges(batch);
  const auto spans = critic_spans(critic);
  struct ShardOut {
    std::vector<Mat> g;
    double loss = 0.0;
  };
  for (long step = 0; step < cfg.inner_steps; ++step) {
    std::array<ShardOut, kShards> outs;
    parallel_shards(kShards, cfg.threads, [&](int s) {
      const auto [lo, hi] = ranges[s];
      if (lo == hi) return;
      const long len = hi - lo;
      ad::Tape tape;
      TapedCritic tc = lift_critic(tape, critic, true);
      Mat stacked(2 * len, n);
      stacked.topRows(len) = gen_fields.middleRows(lo, len);
      stacked.bottomRows(len) = target_fields.middleRows(lo, len);
      ad::Var sv = tape.constant(std::move(stacked));
      ad::Var out = taped_critic_forward(tape, tc, sv);
      Mat mask(2 * len, 1);
      mask.topRows(len).setConstant(1.0 / static_cast<double>(batch));
      mask.bottomRows(len).setConstant(-1.0 / static_cast<double>(batch));
      ad::Var gap = tape.dotall(out, tape.constant(std::move(mask)));
      ad::Var loss;
      if (cfg.zeta > 0.0) {
        ad::Var ybar = tape.leaf(mixed.middleRows(lo, len));
        ad::Var pen = taped_penalty(tape, tc, ybar, cfg.zeta, batch);
        loss = tape.sub(pen, gap);
      } else {
        loss = tape.neg(gap);
      }
      const std::vector<ad::Var> gv = tape.gradient(loss, critic_vars(tc));
      ShardOut& o = outs[s];
      o.loss = tape.value(loss)(0, 0);
      o.g.reserve(gv.size());
      for (ad::Var v : gv) o.g.push_back(tape.value(v));
    });

    double loss_total = 0.0;
    std::vector<Mat> g;
    for (int s = 0; s < kShards; ++s) {
      if (outs[s].g.empty()) continue;
      loss_total += outs[s].loss;
      if (g.empty()) {
        g = std::move(outs[s].g);
      } else {
        for (size_t k = 0; k < g.size(); ++k) g[k] += outs[s].g[k];
      }
    }
    bool finite = std::isfinite(loss_total);
    for (const Mat& m : g) finite = finite && m.allFinite();
    if (!finite)
      throw NumericalFailure("critic ascent objective turned non-finite", step);
    opt.step(spans, g);
  }

  diag.objective_last = wasserstein_estimate(gen_fields, target_fields, critic) -
                        gradient_penalty(mixed, critic, cfg.zeta);
  return diag;
}

Vec generator_gradient(const HyperParams& psi, const Architecture& arch,
                       const Mat& x0, const std::vector<ParamDraw>& etas,
                       const CriticParams& critic, int threads,
                       double* mean_score) {
  check_critic(critic);
  if (etas.empty()) throw InvalidArgument("generator_gradient: empty batch");
  if (critic.input_dim() != x0.rows())
    throw InvalidArgument("field length does not match the critic input");
  const long batch = static_cast<long>(etas.size());
  const long n_hyper = count_parameters(arch).hyper;
  const auto ranges = shard_ranges(batch);
  std::array<Vec, kShards> grads;
  std::array<double, kShards> scores{};
  parallel_shards(kShards, threads, [&](int s) {
    Vec acc = Vec::Zero(n_hyper);
    double score = 0.0;
    ad::Tape tape;
    for (long i = ranges[s].lo; i < ranges[s].hi; ++i) {
      tape.reset();
      ad::Var x0v = tape.constant(x0);
      TapedHyper th = lift_hyper(tape, psi);
      ad::Var field = taped_prior_field(tape, th, arch, x0v, etas[i]);
      TapedCritic tc = lift_critic(tape, critic, false);
      ad::Var out = taped_critic_forward(tape, tc, tape.transpose(field));
      score += tape.value(out)(0, 0);
      const std::vector<ad::Var> gv = tape.gradient(out, hyper_vars(th));
      long off = 0;
      for (ad::Var v : gv) {
        const Mat& gm = tape.value(v);
        acc.segment(off, gm.size()) += Eigen::Map<const Vec>(gm.data(), gm.size());
        off += gm.size();
      }
    }
    grads[s] = std::move(acc);
    scores[s] = score;
  });
  Vec g = Vec::Zero(n_hyper);
  double score = 0.0;
  for (int s = 0; s < kShards; ++s) {
    g += grads[s];
    score += scores[s];
  }
  g /= static_cast<double>(batch);
  if (mean_score) *mean_score = score / static_cast<double>(batch);
  return g;
}

InnerResult inner_loop(const HyperParams& psi, const Architecture& arch,
                       const Mat& x0, const TargetSampler& targets,
                       CriticParams& critic, AdagradState& opt,
                       const CalibConfig& cfg, std::uint64_t batch_id) {
  cfg.validate();
  if (targets.grid_size() != x0.rows())
    throw InvalidArgument("target sampler and generator disagree on location count");
  const SeededRng base(cfg.seed, batch_id);
  const GeneratorBatch gen = sample_generator_batch(
      psi, arch, x0, cfg.batch, base, cfg.threads, /*keep_etas=*/false);
  const Mat target_rows = targets.draw_batch(cfg.batch, batch_id).transpose();
  SeededRng mix_rng = base.substream(kMixDeltaStream);
  const Mat mixed = mix_pairs(gen.fields, target_rows, mix_rng);
  InnerResult res;
  res.ascent = critic_ascent(gen.fields, target_rows, mixed, critic, opt, cfg);
  res.grad_norm_mean = mean_input_gradient_norm(mixed, critic, cfg.threads);
  return res;
}

OuterResult outer_step(HyperParams& psi, const Architecture& arch,
                       const Mat& x0, const TargetSampler& targets,
                       const CriticParams& critic, RmspropState& opt,
                       const CalibConfig& cfg, std::uint64_t batch_id) {
  cfg.validate();
  if (targets.grid_size() != x0.rows())
    throw InvalidArgument("target sampler and generator disagree on location count");
  const SeededRng base(cfg.seed, batch_id);
  const std::vector<ParamDraw> etas =
      sample_eta_batch(arch, cfg.batch, base, cfg.threads);
  const Mat target_rows = targets.draw_batch(cfg.batch, batch_id).transpose();
  double gen_mean = 0.0;
  const Vec g = generator_gradient(psi, arch, x0, etas, critic, cfg.threads,
                                   &gen_mean);
  const Vec target_scores = critic_forward_batch(target_rows, critic);
  OuterResult res;
  res.w1_estimate = gen_mean - target_scores.mean();
  if (!g.allFinite() || !std::isfinite(res.w1_estimate))
    throw NumericalFailure("hyperparameter gradient turned non-finite",
                           static_cast<long>(batch_id));
  res.grad_norm = g.norm();
  Vec flat = flatten_hyper(psi);
  opt.step(flat, g);
  psi = unflatten_hyper(flat, arch);
  return res;
}

CalibResult calibrate(
    const HyperParams& psi0, const Architecture& arch, const Grid& grid,
    const TargetSampler& targets, const CalibConfig& cfg,
    const std::function<void(long, const HyperParams&)>& checkpoint) {
  cfg.validate();
  arch.validate(grid.dim());
  if (targets.grid_size() != grid.n())
    throw InvalidArgument("target sampler and grid disagree on location count");

  const Mat x0 = embed_input(arch, grid.locations());
  SeededRng critic_rng(cfg.seed, kCriticInitStream);
  CriticParams critic = critic_init(grid.n(), critic_rng, cfg.critic_width);
  AdagradState inner_opt;
  inner_opt.lr = cfg.inner_lr;
  inner_opt.eps = cfg.adagrad_eps;
  RmspropState outer_opt;
  outer_opt.lr = cfg.outer_lr;
  outer_opt.decay = cfg.rmsprop_decay;
  outer_opt.eps = cfg.rmsprop_eps;

  CalibResult res;
  res.hyper = psi0;
  res.trace.reserve(static_cast<size_t>(cfg.outer_steps));
  std::uint64_t next_id = 0;
  for (long step = 1; step <= cfg.outer_steps; ++step) {
    const auto t0 = std::chrono::steady_clock::now();
    const InnerResult inner = inner_loop(res.hyper, arch, x0, targets, critic,
                                         inner_opt, cfg, next_id++);
    const OuterResult outer = outer_step(res.hyper, arch, x0, targets, critic,
                                         outer_opt, cfg, next_id++);
    const double seconds =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - t0)
            .count();
    res.trace.push_back({step, outer.w1_estimate, inner.grad_norm_mean, seconds});
    if (checkpoint && cfg.checkpoint_every > 0 &&
        step % cfg.checkpoint_every == 0)
      checkpoint(step, res.hyper);
  }
  res.batches_drawn = next_id;
  if (res.trace.empty()) {
    res.trailing_average = std::numeric_limits<double>::quiet_NaN();
  } else {
    const long window =
        std::min<long>(cfg.trace_window, static_cast<long>(res.trace.size()));
    double total = 0.0;
    for (long i = static_cast<long>(res.trace.size()) - window;
         i < static_cast<long>(res.trace.size()); ++i)
      total += res.trace[static_cast<size_t>(i)].w1_estimate;
    res.trailing_average = total / static_cast<double>(window);
  }
  return res;
}

}  // namespace sbnn
