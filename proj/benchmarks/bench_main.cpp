#include <benchmark/benchmark.h>

#include "sbnn/linalg.hpp"
#include "sbnn/math.hpp"
#include "sbnn/rng.hpp"
#include "sbnn/tape.hpp"

namespace {

using namespace sbnn;

Mat random_mat(long r, long c, SeededRng& rng, double scale = 1.0) {
  Mat m(r, c);
  for (long j = 0; j < c; ++j)
    for (long i = 0; i < r; ++i) m(i, j) = scale * rng.normal();
  return m;
}

void bench_cholesky(benchmark::State& state) {
  const long n = state.range(0);
  SeededRng rng(1);
  Mat b = random_mat(n, n, rng);
  Mat a = b * b.transpose() + double(n) * Mat::Identity(n, n);
  for (auto _ : state) {
    auto res = cholesky_spd(a);
    benchmark::DoNotOptimize(res.lower.data());
  }
}
BENCHMARK(bench_cholesky)->Arg(256)->Arg(1024)->Unit(benchmark::kMillisecond);

/// One critic ascent step at calibration scale: scores two batches,
/// differentiates the interpolated batch with respect to its input,
/// folds the penalty in, and differentiates the whole objective with
/// respect to the critic parameters.
void bench_critic_step(benchmark::State& state) {
  const long batch = state.range(0);
  const long n = state.range(1);
  const long width = 200;
  SeededRng rng(2);
  Mat w1 = random_mat(width, n, rng, 1.0 / std::sqrt(double(n)));
  Mat b1 = random_mat(width, 1, rng, 0.1);
  Mat w2 = random_mat(width, width, rng, 1.0 / std::sqrt(double(width)));
  Mat b2 = random_mat(width, 1, rng, 0.1);
  Mat w3 = random_mat(1, width, rng, 1.0 / std::sqrt(double(width)));
  Mat b3 = random_mat(1, 1, rng, 0.1);
  Mat y = random_mat(batch, n, rng);
  Mat yt = random_mat(batch, n, rng);
  Mat ybar = random_mat(batch, n, rng);
  const double inv1 = 1.0 / std::sqrt(double(n));
  const double inv2 = 1.0 / std::sqrt(double(width));

  ad::Tape t;
  for (auto _ : state) {
    t.reset();
    auto vw1 = t.leaf(w1), vb1 = t.leaf(b1), vw2 = t.leaf(w2),
         vb2 = t.leaf(b2), vw3 = t.leaf(w3), vb3 = t.leaf(b3);
    auto forward = [&](ad::Var in) {
      auto h1 = t.softplus(t.add_row_vec(
          t.scale(t.matmul(in, t.transpose(vw1)), inv1), t.transpose(vb1)));
      auto h2 = t.softplus(t.add_row_vec(
          t.scale(t.matmul(h1, t.transpose(vw2)), inv2), t.transpose(vb2)));
      return t.add_row_vec(t.scale(t.matmul(h2, t.transpose(vw3)), inv2),
                           t.transpose(vb3));
    };
    auto sy = t.sum(forward(t.constant(y)));
    auto syt = t.sum(forward(t.constant(yt)));
    auto vybar = t.leaf(ybar);
    auto sybar = t.sum(forward(vybar));
    auto g = t.gradient(sybar, {vybar})[0];
    auto pen = t.sum(t.pow(t.add_const(t.rows_norm(g), -1.0), 2.0));
    auto obj = t.sub(t.scale(t.sub(sy, syt), 1.0 / double(batch)),
                     t.scale(pen, 10.0 / double(batch)));
    auto grads = t.gradient(obj, {vw1, vb1, vw2, vb2, vw3, vb3});
    benchmark::DoNotOptimize(t.value(grads[0]).data());
  }
}
BENCHMARK(bench_critic_step)
    ->Args({256, 256})
    ->Args({64, 256})
    ->Unit(benchmark::kMillisecond);

}  // namespace

BENCHMARK_MAIN();
