#include "sbnn/diagnostics.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numbers>
#include <string>
#include <utility>
#include <vector>

#include "sbnn/errors.hpp"
#include "sbnn/rng.hpp"
#include "sbnn/threading.hpp"

namespace sbnn {

namespace {

// Pair loops always run over kShards fixed shards and combine partial
// sums in shard order, so estimates do not depend on the thread count.
constexpr int kShards = 4;

// All distinct location pairs when there are at most `cap` of them;
// otherwise a uniform subsample of `cap` ordered pairs drawn with a
// fixed seed, so repeated calls see the same pairs.
std::vector<std::pair<long, long>> distinct_pairs(long n, long cap) {
  std::vector<std::pair<long, long>> pairs;
  const double total = 0.5 * static_cast<double>(n) * static_cast<double>(n - 1);
  if (total <= static_cast<double>(cap)) {
    pairs.reserve(static_cast<std::size_t>(total));
    for (long i = 0; i < n; ++i)
      for (long j = i + 1; j < n; ++j) pairs.emplace_back(i, j);
    return pairs;
  }
  SeededRng rng(0x8d1f, 0);
  pairs.reserve(static_cast<std::size_t>(cap));
  for (long c = 0; c < cap; ++c) {
    const long i = static_cast<long>(rng.uniform_below(static_cast<std::uint64_t>(n)));
    long j = static_cast<long>(rng.uniform_below(static_cast<std::uint64_t>(n - 1)));
    if (j >= i) ++j;
    pairs.emplace_back(std::min(i, j), std::max(i, j));
  }
  return pairs;
}

// Centers each row on its sample mean.  The mean is computed relative
// to the first replicate, so a row whose replicates are all equal
// centers to exactly zero.
Mat center_rows(const Mat& fields) {
  const Vec shift = fields.col(0);
  const Vec mean = shift + (fields.colwise() - shift).rowwise().mean();
  return fields.colwise() - mean;
}

void check_replicates(const Mat& fields, const Grid& grid) {
  if (fields.rows() != grid.n())
    throw InvalidArgument("fields must have one row per grid location");
  if (fields.cols() < 2)
    throw InvalidArgument("need at least two replicates");
}

double sorted_quantile(const std::vector<double>& sorted, double p) {
  const double pos = p * static_cast<double>(sorted.size() - 1);
  const auto lo = static_cast<std::size_t>(pos);
  const std::size_t hi = std::min(lo + 1, sorted.size() - 1);
  const double frac = pos - static_cast<double>(lo);
  return sorted[lo] + frac * (sorted[hi] - sorted[lo]);
}

void check_kde_args(long n, long grid_points, double bandwidth) {
  if (n < 10)
    throw InvalidArgument("kernel density estimation needs at least 10 samples");
  if (grid_points < 2) throw InvalidArgument("grid_points must be at least 2");
  if (!std::isfinite(bandwidth) || bandwidth < 0.0)
    throw InvalidArgument("bandwidth must be finite and nonnegative");
}

// Evaluation grid covering [lo, hi] with at least `requested` points,
// refined until the spacing resolves the kernel so the trapezoid
// integral of the density is accurate.
Vec eval_grid(double lo, double hi, double bw, long requested, long cap) {
  const long needed =
      static_cast<long>(std::ceil((hi - lo) / (0.5 * bw))) + 1;
  const long pts = std::min(std::max(requested, needed), cap);
  return Vec::LinSpaced(pts, lo, hi);
}

}  // namespace

CovariogramEstimate empirical_covariogram(const Mat& fields,
                                          const Grid& grid, long n_bins,
                                          long pair_cap, int threads) {
  check_replicates(fields, grid);
  if (n_bins < 2) throw InvalidArgument("n_bins must be at least 2");
  if (pair_cap < 1) throw InvalidArgument("pair_cap must be positive");
  if (threads < 1) throw InvalidArgument("threads must be positive");
  const long n = fields.rows();
  const double denom = static_cast<double>(fields.cols() - 1);
  const Mat centered = center_rows(fields);

  std::vector<double> sums(static_cast<std::size_t>(n_bins), 0.0);
  std::vector<long> counts(static_cast<std::size_t>(n_bins), 0);
  for (long i = 0; i < n; ++i) sums[0] += centered.row(i).squaredNorm() / denom;
  counts[0] = n;

  const double half = grid.half_diagonal();
  const double width = half / static_cast<double>(n_bins);
  const auto pairs = distinct_pairs(n, pair_cap);
  const long n_pairs = static_cast<long>(pairs.size());
  const Mat& loc = grid.locations();
  std::vector<std::vector<double>> shard_sums(
      kShards, std::vector<double>(static_cast<std::size_t>(n_bins), 0.0));
  std::vector<std::vector<long>> shard_counts(
      kShards, std::vector<long>(static_cast<std::size_t>(n_bins), 0));
  parallel_shards(kShards, threads, [&](int s) {
    auto& sum = shard_sums[static_cast<std::size_t>(s)];
    auto& cnt = shard_counts[static_cast<std::size_t>(s)];
    const long lo = n_pairs * s / kShards;
    const long hi = n_pairs * (s + 1) / kShards;
    for (long p = lo; p < hi; ++p) {
      const auto [i, j] = pairs[static_cast<std::size_t>(p)];
      const double h = (loc.col(i) - loc.col(j)).norm();
      if (h > half) continue;
      const auto b = static_cast<std::size_t>(
          std::min<long>(static_cast<long>(h / width), n_bins - 1));
      sum[b] += centered.row(i).dot(centered.row(j)) / denom;
      ++cnt[b];
    }
  });
  for (int s = 0; s < kShards; ++s)
    for (long b = 0; b < n_bins; ++b) {
      sums[static_cast<std::size_t>(b)] +=
          shard_sums[static_cast<std::size_t>(s)][static_cast<std::size_t>(b)];
      counts[static_cast<std::size_t>(b)] +=
          shard_counts[static_cast<std::size_t>(s)][static_cast<std::size_t>(b)];
    }

  long reported = 0;
  for (long b = 0; b < n_bins; ++b)
    if (counts[static_cast<std::size_t>(b)] > 0) ++reported;
  CovariogramEstimate out;
  out.lags.resize(reported);
  out.estimates.resize(reported);
  out.pair_counts.reserve(static_cast<std::size_t>(reported));
  long r = 0;
  for (long b = 0; b < n_bins; ++b) {
    const long c = counts[static_cast<std::size_t>(b)];
    if (c == 0) continue;
    out.lags(r) = (static_cast<double>(b) + 0.5) * width;
    out.estimates(r) = sums[static_cast<std::size_t>(b)] / static_cast<double>(c);
    out.pair_counts.push_back(c);
    ++r;
  }
  return out;
}

AnchoredCovariance anchored_covariance(const Mat& fields, const Grid& grid,
                                       const Mat& anchors) {
  check_replicates(fields, grid);
  if (anchors.rows() != grid.dim())
    throw InvalidArgument("anchors must have one row per grid dimension");
  if (anchors.cols() < 1) throw InvalidArgument("need at least one anchor");
  for (long a = 0; a < anchors.cols(); ++a)
    for (int d = 0; d < grid.dim(); ++d) {
      const double v = anchors(d, a);
      const auto& b = grid.bounds()[static_cast<std::size_t>(d)];
      if (!(v >= b[0] && v <= b[1]))
        throw InvalidArgument("anchor " + std::to_string(a) +
                              " lies outside the domain");
    }
  const double denom = static_cast<double>(fields.cols() - 1);
  const Mat centered = center_rows(fields);
  AnchoredCovariance out;
  out.cov.resize(fields.rows(), anchors.cols());
  out.anchor_index.reserve(static_cast<std::size_t>(anchors.cols()));
  for (long a = 0; a < anchors.cols(); ++a) {
    const long idx = grid.nearest_index(anchors.col(a));
    out.anchor_index.push_back(idx);
    out.cov.col(a) = (centered * centered.row(idx).transpose()) / denom;
  }
  return out;
}

double contour_eccentricity(const Vec& map, const Grid& grid,
                            double threshold) {
  if (grid.dim() != 2)
    throw InvalidArgument("contour eccentricity needs a 2-d grid");
  if (map.size() != grid.n())
    throw InvalidArgument("map must have one value per grid location");
  const Mat& loc = grid.locations();
  std::vector<long> selected;
  for (long j = 0; j < map.size(); ++j)
    if (map(j) >= threshold) selected.push_back(j);
  if (selected.size() < 3) return 0.0;
  const double count = static_cast<double>(selected.size());
  Eigen::Vector2d c = Eigen::Vector2d::Zero();
  for (const long j : selected) c += loc.col(j);
  c /= count;
  double m00 = 0.0, m01 = 0.0, m11 = 0.0;
  for (const long j : selected) {
    const Eigen::Vector2d d = loc.col(j) - c;
    m00 += d(0) * d(0);
    m01 += d(0) * d(1);
    m11 += d(1) * d(1);
  }
  m00 /= count;
  m01 /= count;
  m11 /= count;
  const double mean = 0.5 * (m00 + m11);
  const double det = m00 * m11 - m01 * m01;
  const double disc = std::sqrt(std::max(0.0, mean * mean - det));
  const double lmax = mean + disc;
  const double lmin = mean - disc;
  if (!(lmax > 0.0)) return 0.0;
  return std::sqrt(std::max(0.0, 1.0 - lmin / lmax));
}

Kde1d kde_1d(const Vec& samples, long grid_points, double bandwidth) {
  const long n = samples.size();
  check_kde_args(n, grid_points, bandwidth);
  if (!samples.allFinite()) throw InvalidArgument("samples must be finite");
  Kde1d out;
  if ((samples.array() == samples(0)).all()) {
    out.point_mass = true;
    out.point_value = samples(0);
    return out;
  }
  double bw = bandwidth;
  if (bw == 0.0) {
    const double mean = samples.mean();
    const double sd = std::sqrt((samples.array() - mean).square().sum() /
                                static_cast<double>(n - 1));
    std::vector<double> sorted(samples.data(), samples.data() + n);
    std::sort(sorted.begin(), sorted.end());
    const double iqr =
        sorted_quantile(sorted, 0.75) - sorted_quantile(sorted, 0.25);
    double spread = sd;
    if (iqr > 0.0) spread = std::min(spread, iqr / 1.34);
    bw = 0.9 * spread * std::pow(static_cast<double>(n), -0.2);
  }
  out.bandwidth = bw;
  out.x = eval_grid(samples.minCoeff() - 5.0 * bw,
                    samples.maxCoeff() + 5.0 * bw, bw, grid_points, 1L << 15);
  const long pts = out.x.size();
  out.density.resize(pts);
  const double norm =
      1.0 / (static_cast<double>(n) * bw * std::sqrt(2.0 * std::numbers::pi));
  const double inv = 1.0 / bw;
  for (long i = 0; i < pts; ++i)
    out.density(i) =
        norm *
        (((samples.array() - out.x(i)) * inv).square() * -0.5).exp().sum();
  return out;
}

Kde2d kde_2d(const Mat& samples, long grid_points, double bandwidth_x,
             double bandwidth_y) {
  if (samples.rows() != 2)
    throw InvalidArgument("kde_2d needs a 2 x n sample matrix");
  const long n = samples.cols();
  check_kde_args(n, grid_points, bandwidth_x);
  check_kde_args(n, grid_points, bandwidth_y);
  if (!samples.allFinite()) throw InvalidArgument("samples must be finite");
  Kde2d out;
  const bool const_x = (samples.row(0).array() == samples(0, 0)).all();
  const bool const_y = (samples.row(1).array() == samples(1, 0)).all();
  if (const_x || const_y) {
    out.point_mass = true;
    out.point_value = samples.rowwise().mean();
    return out;
  }
  const auto pick = [&](long r, double requested) {
    if (requested > 0.0) return requested;
    const double mean = samples.row(r).mean();
    const double sd = std::sqrt((samples.row(r).array() - mean).square().sum() /
                                static_cast<double>(n - 1));
    return sd * std::pow(static_cast<double>(n), -1.0 / 6.0);
  };
  const double bx = pick(0, bandwidth_x);
  const double by = pick(1, bandwidth_y);
  out.bandwidth_x = bx;
  out.bandwidth_y = by;
  out.x = eval_grid(samples.row(0).minCoeff() - 5.0 * bx,
                    samples.row(0).maxCoeff() + 5.0 * bx, bx, grid_points,
                    2048);
  out.y = eval_grid(samples.row(1).minCoeff() - 5.0 * by,
                    samples.row(1).maxCoeff() + 5.0 * by, by, grid_points,
                    2048);
  const long px = out.x.size();
  const long py = out.y.size();
  out.density = Mat::Zero(px, py);
  // Product kernel via two kernel matrices; samples are blocked so the
  // intermediates stay small and the accumulation order stays fixed.
  const long block = 1024;
  Mat kx(px, block), ky(py, block);
  for (long s0 = 0; s0 < n; s0 += block) {
    const long b = std::min(block, n - s0);
    for (long i = 0; i < px; ++i)
      kx.row(i).head(b) =
          (((samples.row(0).segment(s0, b).array() - out.x(i)) / bx).square() *
           -0.5)
              .exp()
              .matrix();
    for (long j = 0; j < py; ++j)
      ky.row(j).head(b) =
          (((samples.row(1).segment(s0, b).array() - out.y(j)) / by).square() *
           -0.5)
              .exp()
              .matrix();
    out.density.noalias() += kx.leftCols(b) * ky.leftCols(b).transpose();
  }
  out.density *=
      1.0 / (static_cast<double>(n) * 2.0 * std::numbers::pi * bx * by);
  return out;
}

std::vector<ExceedanceCurve> exceedance_curves(
    const Mat& fields, const Grid& grid, const std::vector<double>& quantiles,
    long n_bins, long pair_cap, int threads) {
  if (fields.rows() != grid.n())
    throw InvalidArgument("fields must have one row per grid location");
  if (fields.cols() < 1) throw InvalidArgument("need at least one replicate");
  if (quantiles.empty()) throw InvalidArgument("need at least one quantile");
  for (const double q : quantiles)
    if (!(q > 0.0 && q < 1.0))
      throw InvalidArgument("quantile levels must lie in (0, 1)");
  if (n_bins < 1) throw InvalidArgument("n_bins must be positive");
  if (pair_cap < 1) throw InvalidArgument("pair_cap must be positive");
  if (threads < 1) throw InvalidArgument("threads must be positive");

  const long n = fields.rows();
  const double half = grid.half_diagonal();
  const double width = half / static_cast<double>(n_bins);
  const auto pairs = distinct_pairs(n, pair_cap);
  const long n_pairs = static_cast<long>(pairs.size());
  const Mat& loc = grid.locations();
  std::vector<long> bin_of(pairs.size());
  for (std::size_t p = 0; p < pairs.size(); ++p) {
    const double h = (loc.col(pairs[p].first) - loc.col(pairs[p].second)).norm();
    bin_of[p] = h > half
                    ? -1
                    : std::min<long>(static_cast<long>(h / width), n_bins - 1);
  }

  std::vector<ExceedanceCurve> curves;
  curves.reserve(quantiles.size());
  for (const double q : quantiles) {
    const double y = gumbel_quantile(q);
    const Mat exceed = (fields.array() > y).cast<double>().matrix();
    if (!(exceed.sum() > 0.0))
      throw InsufficientData(
          "no field value exceeds the threshold for quantile level " +
              std::to_string(q),
          0, 1);
    const Vec row_hits = exceed.rowwise().sum();
    std::vector<std::vector<double>> shard_num(
        kShards, std::vector<double>(static_cast<std::size_t>(n_bins), 0.0));
    std::vector<std::vector<double>> shard_den(
        kShards, std::vector<double>(static_cast<std::size_t>(n_bins), 0.0));
    parallel_shards(kShards, threads, [&](int s) {
      auto& num = shard_num[static_cast<std::size_t>(s)];
      auto& den = shard_den[static_cast<std::size_t>(s)];
      const long lo = n_pairs * s / kShards;
      const long hi = n_pairs * (s + 1) / kShards;
      for (long p = lo; p < hi; ++p) {
        const long b = bin_of[static_cast<std::size_t>(p)];
        if (b < 0) continue;
        const auto [i, j] = pairs[static_cast<std::size_t>(p)];
        num[static_cast<std::size_t>(b)] +=
            2.0 * exceed.row(i).dot(exceed.row(j));
        den[static_cast<std::size_t>(b)] += row_hits(i) + row_hits(j);
      }
    });
    std::vector<double> num(static_cast<std::size_t>(n_bins), 0.0);
    std::vector<double> den(static_cast<std::size_t>(n_bins), 0.0);
    for (int s = 0; s < kShards; ++s)
      for (long b = 0; b < n_bins; ++b) {
        num[static_cast<std::size_t>(b)] +=
            shard_num[static_cast<std::size_t>(s)][static_cast<std::size_t>(b)];
        den[static_cast<std::size_t>(b)] +=
            shard_den[static_cast<std::size_t>(s)][static_cast<std::size_t>(b)];
      }
    ExceedanceCurve curve;
    curve.q = q;
    curve.threshold = y;
    long reported = 0;
    for (long b = 0; b < n_bins; ++b)
      if (den[static_cast<std::size_t>(b)] > 0.0) ++reported;
    curve.lags.resize(reported);
    curve.probs.resize(reported);
    curve.counts.reserve(static_cast<std::size_t>(reported));
    long r = 0;
    for (long b = 0; b < n_bins; ++b) {
      const double d = den[static_cast<std::size_t>(b)];
      if (!(d > 0.0)) continue;
      curve.lags(r) = (static_cast<double>(b) + 0.5) * width;
      curve.probs(r) = num[static_cast<std::size_t>(b)] / d;
      curve.counts.push_back(static_cast<long>(std::llround(d)));
      ++r;
    }
    curves.push_back(std::move(curve));
  }
  return curves;
}

ScoreReport score(const Mat& draws, const Vec& truth, int threads) {
  const long m = truth.size();
  if (m < 1) throw InvalidArgument("score needs at least one point");
  if (draws.rows() != m)
    throw InvalidArgument("draws must have one row per truth entry");
  const long M = draws.cols();
  if (M < 2)
    throw InvalidArgument("score needs at least two draws per point");
  if (threads < 1) throw InvalidArgument("threads must be positive");
  Vec abs_err(m), crps_point(m);
  parallel_shards(kShards, threads, [&](int s) {
    const long lo = m * s / kShards;
    const long hi = m * (s + 1) / kShards;
    for (long i = lo; i < hi; ++i) {
      const double y = truth(i);
      double mean_acc = 0.0;
      for (long k = 0; k < M; ++k) mean_acc += draws(i, k);
      abs_err(i) = std::abs(mean_acc / static_cast<double>(M) - y);
      double abs_acc = 0.0;
      for (long k = 0; k < M; ++k) abs_acc += std::abs(draws(i, k) - y);
      double pair_acc = 0.0;
      for (long k = 0; k < M; ++k)
        for (long l = 0; l < M; ++l)
          pair_acc += std::abs(draws(i, k) - draws(i, l));
      crps_point(i) =
          abs_acc / static_cast<double>(M) -
          pair_acc / (2.0 * static_cast<double>(M) * static_cast<double>(M));
    }
  });
  double sum_abs = 0.0, sum_sq = 0.0, sum_crps = 0.0;
  for (long i = 0; i < m; ++i) {
    sum_abs += abs_err(i);
    sum_sq += abs_err(i) * abs_err(i);
    sum_crps += crps_point(i);
  }
  ScoreReport report;
  report.points = m;
  report.draws = M;
  report.mape = sum_abs / static_cast<double>(m);
  report.rmspe = std::sqrt(sum_sq / static_cast<double>(m));
  report.crps = sum_crps / static_cast<double>(m);
  return report;
}

}  // namespace sbnn
