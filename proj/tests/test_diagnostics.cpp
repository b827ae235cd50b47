#include "sbnn/diagnostics.hpp"

#include <algorithm>
#include <cmath>
#include <vector>

#include "doctest.h"
#include "sbnn/errors.hpp"
#include "sbnn/grid.hpp"
#include "sbnn/math.hpp"
#include "sbnn/rng.hpp"
#include "sbnn/targets.hpp"

namespace sbnn {
namespace {

Mat iid_normal_fields(long n, long reps, std::uint64_t seed) {
  SeededRng rng(seed, 0);
  Mat out(n, reps);
  for (long j = 0; j < reps; ++j)
    for (long i = 0; i < n; ++i) out(i, j) = rng.normal();
  return out;
}

bool same_vec(const Vec& a, const Vec& b) {
  return a.size() == b.size() && (a.array() == b.array()).all();
}

bool same_mat(const Mat& a, const Mat& b) {
  return a.rows() == b.rows() && a.cols() == b.cols() &&
         (a.array() == b.array()).all();
}

// Correlation between the snapped anchor and every location, from the
// exact covariance matrix of a target.
Vec exact_correlation_map(const Mat& cov, long anchor_index) {
  const long n = cov.rows();
  Vec out(n);
  for (long j = 0; j < n; ++j)
    out(j) = cov(anchor_index, j) /
             std::sqrt(cov(anchor_index, anchor_index) * cov(j, j));
  return out;
}

double trapezoid(const Vec& x, const Vec& y) {
  double acc = 0.0;
  for (long i = 0; i + 1 < x.size(); ++i)
    acc += 0.5 * (y(i) + y(i + 1)) * (x(i + 1) - x(i));
  return acc;
}

}  // namespace

TEST_CASE("covariogram of iid fields vanishes away from lag zero") {
  const Grid grid({{0.0, 1.0}, {0.0, 1.0}}, {5, 5});
  const Mat fields = iid_normal_fields(grid.n(), 2000, 11);
  const CovariogramEstimate est = empirical_covariogram(fields, grid, 8);
  REQUIRE(est.lags.size() >= 2);
  // Bin width 0.088 sits below the 0.2 cell width, so bin 0 holds the
  // self pairs alone.
  CHECK(est.lags(0) <= 0.05);
  CHECK(std::abs(est.estimates(0) - 1.0) <= 0.07);
  CHECK(est.pair_counts[0] == grid.n());
  for (long r = 1; r < est.lags.size(); ++r) {
    CHECK(est.lags(r) > est.lags(r - 1));
    CHECK(est.pair_counts[static_cast<std::size_t>(r)] >= 1);
    if (est.lags(r) > 0.5) CHECK(std::abs(est.estimates(r)) <= 0.07);
  }
}

TEST_CASE("covariogram lag-zero bin equals the mean sample variance") {
  // Half diagonal 1.5 over 8 bins gives width 0.1875, below the 0.25
  // cell width, so the first bin is exactly the self pairs.
  const Grid grid({{0.0, 3.0}}, {12});
  const Mat fields = iid_normal_fields(grid.n(), 37, 4);
  const CovariogramEstimate est = empirical_covariogram(fields, grid, 8);
  double want = 0.0;
  for (long i = 0; i < fields.rows(); ++i) {
    const double mean = fields.row(i).mean();
    want += (fields.row(i).array() - mean).square().sum() /
            static_cast<double>(fields.cols() - 1);
  }
  want /= static_cast<double>(fields.rows());
  CHECK(std::abs(est.estimates(0) - want) <= 1e-10);
}

TEST_CASE("covariogram of an all-identical sample is exactly zero") {
  SeededRng rng(7, 0);
  const Grid grid({{-1.0, 1.0}, {0.0, 2.0}}, {4, 5});
  Vec field(grid.n());
  for (long i = 0; i < field.size(); ++i) field(i) = 0.1 + 0.7 * rng.normal();
  const Mat fields = field.replicate(1, 10);
  const CovariogramEstimate est = empirical_covariogram(fields, grid, 6);
  CHECK(est.estimates.cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("covariogram recovers an exact squared-exponential process") {
  const Grid grid({{-4.0, 4.0}, {-4.0, 4.0}}, {16, 16});
  TargetSpec spec;
  spec.kind = TargetKind::kStationarySqexpGp;
  spec.length_scale = 1.0;
  const FieldBatch batch = simulate_target(spec, grid, 2000, SeededRng(5, 0));
  const CovariogramEstimate est =
      empirical_covariogram(batch.values, grid, 20);
  // One bin, (1.13, 1.41), contains no realizable grid lag; the other
  // 19 are all populated and span the half diagonal.
  CHECK(est.lags.size() == 19);
  CHECK(est.lags.maxCoeff() > 5.0);
  for (long r = 0; r < est.lags.size(); ++r) {
    const double want = sqexp_covariogram(est.lags(r), 1.0);
    CHECK(std::abs(est.estimates(r) - want) <= 0.1);
  }
}

TEST_CASE("covariogram pair subsampling is capped and deterministic") {
  const Grid grid({{0.0, 1.0}, {0.0, 1.0}}, {40, 40});
  const Mat fields = iid_normal_fields(grid.n(), 40, 9);
  const long cap = 100000;
  const CovariogramEstimate a = empirical_covariogram(fields, grid, 10, cap, 1);
  const CovariogramEstimate b = empirical_covariogram(fields, grid, 10, cap, 3);
  const CovariogramEstimate c = empirical_covariogram(fields, grid, 10, cap, 1);
  CHECK(same_vec(a.estimates, b.estimates));
  CHECK(same_vec(a.estimates, c.estimates));
  CHECK(same_vec(a.lags, b.lags));
  CHECK(a.pair_counts == b.pair_counts);
  long used = 0;
  for (std::size_t r = 1; r < a.pair_counts.size(); ++r)
    used += a.pair_counts[r];
  CHECK(used <= cap);
  CHECK(used > cap / 2);
}

TEST_CASE("covariogram with all pairs is thread-count invariant") {
  const Grid grid({{0.0, 1.0}, {0.0, 1.0}}, {5, 5});
  const Mat fields = iid_normal_fields(grid.n(), 64, 2);
  const CovariogramEstimate a = empirical_covariogram(fields, grid, 7, 200000, 1);
  const CovariogramEstimate b = empirical_covariogram(fields, grid, 7, 200000, 4);
  CHECK(same_vec(a.estimates, b.estimates));
  CHECK(a.pair_counts == b.pair_counts);
}

TEST_CASE("covariogram validates its arguments") {
  const Grid grid({{0.0, 1.0}}, {6});
  const Mat ok = iid_normal_fields(grid.n(), 8, 1);
  CHECK_THROWS_AS(empirical_covariogram(ok.topRows(3), grid, 5),
                  InvalidArgument);
  CHECK_THROWS_AS(empirical_covariogram(ok.leftCols(1), grid, 5),
                  InvalidArgument);
  CHECK_THROWS_AS(empirical_covariogram(ok, grid, 1), InvalidArgument);
  CHECK_THROWS_AS(empirical_covariogram(ok, grid, 5, 0), InvalidArgument);
  CHECK_THROWS_AS(empirical_covariogram(ok, grid, 5, 1000, 0), InvalidArgument);
}

TEST_CASE("anchored covariance at the anchor matches the variance") {
  const Grid grid({{0.0, 1.0}, {0.0, 1.0}}, {6, 6});
  const Mat fields = iid_normal_fields(grid.n(), 2000, 13);
  Mat anchor(2, 1);
  anchor << grid.locations()(0, 14), grid.locations()(1, 14);
  const AnchoredCovariance anc = anchored_covariance(fields, grid, anchor);
  REQUIRE(anc.anchor_index.size() == 1);
  CHECK(anc.anchor_index[0] == 14);
  CHECK(std::abs(anc.cov(14, 0) - 1.0) <= 0.1);

  const double mean = fields.row(14).mean();
  const double var = (fields.row(14).array() - mean).square().sum() /
                     static_cast<double>(fields.cols() - 1);
  CHECK(std::abs(anc.cov(14, 0) - var) <= 1e-12);
  // Distant locations are independent, so covariances stay near zero.
  CHECK(std::abs(anc.cov(21, 0)) <= 0.1);
}

TEST_CASE("anchors snap to the nearest centroid") {
  const Grid grid({{0.0, 1.0}, {0.0, 1.0}}, {6, 6});
  const Mat fields = iid_normal_fields(grid.n(), 50, 3);
  const double w = grid.cell_width(0);
  Mat exact(2, 1), offset(2, 1);
  exact << grid.locations()(0, 14), grid.locations()(1, 14);
  offset << exact(0, 0) + 0.3 * w, exact(1, 0) - 0.2 * w;
  const AnchoredCovariance a = anchored_covariance(fields, grid, exact);
  const AnchoredCovariance b = anchored_covariance(fields, grid, offset);
  CHECK(a.anchor_index == b.anchor_index);
  CHECK(same_mat(a.cov, b.cov));
}

TEST_CASE("anchored covariance of a constant sample is exactly zero") {
  const Grid grid({{0.0, 1.0}, {0.0, 1.0}}, {3, 3});
  SeededRng rng(19, 0);
  Vec field(grid.n());
  for (long i = 0; i < field.size(); ++i) field(i) = rng.normal();
  const Mat fields = field.replicate(1, 6);
  Mat anchors(2, 2);
  anchors << 0.2, 0.9, 0.2, 0.4;
  const AnchoredCovariance anc = anchored_covariance(fields, grid, anchors);
  CHECK(anc.cov.cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("anchored covariance validates anchors") {
  const Grid grid({{0.0, 1.0}, {0.0, 1.0}}, {3, 3});
  const Mat fields = iid_normal_fields(grid.n(), 5, 8);
  Mat outside(2, 1);
  outside << 1.2, 0.5;
  CHECK_THROWS_AS(anchored_covariance(fields, grid, outside), InvalidArgument);
  Mat wrong_dim(1, 1);
  wrong_dim << 0.5;
  CHECK_THROWS_AS(anchored_covariance(fields, grid, wrong_dim),
                  InvalidArgument);
  Mat inside(2, 1);
  inside << 0.5, 0.5;
  CHECK_THROWS_AS(anchored_covariance(fields.leftCols(1), grid, inside),
                  InvalidArgument);
  CHECK_THROWS_AS(anchored_covariance(fields, grid, Mat(2, 0)),
                  InvalidArgument);
}

TEST_CASE("contour eccentricity separates round from elongated regions") {
  const Grid grid({{-1.0, 1.0}, {-1.0, 1.0}}, {41, 41});
  const Mat& loc = grid.locations();
  Vec round_map(grid.n()), stretched_map(grid.n());
  for (long j = 0; j < grid.n(); ++j) {
    const double x = loc(0, j);
    const double y = loc(1, j);
    round_map(j) = std::exp(-(x * x + y * y) / (2.0 * 0.3 * 0.3));
    stretched_map(j) = std::exp(-(x * x / (2.0 * 0.15 * 0.15) +
                                  y * y / (2.0 * 0.45 * 0.45)));
  }
  const double round_ecc = contour_eccentricity(round_map, grid, 0.5);
  const double stretched_ecc = contour_eccentricity(stretched_map, grid, 0.5);
  CHECK(round_ecc < 0.3);
  CHECK(stretched_ecc > 0.85);
  CHECK(stretched_ecc <= 1.0);

  CHECK(contour_eccentricity(Vec::Zero(grid.n()), grid, 0.5) == 0.0);
  Vec lone = Vec::Zero(grid.n());
  lone(820) = 1.0;
  CHECK(contour_eccentricity(lone, grid, 0.5) == 0.0);
  const Grid line({{0.0, 1.0}}, {8});
  CHECK_THROWS_AS(contour_eccentricity(Vec::Ones(8), line, 0.5),
                  InvalidArgument);
  CHECK_THROWS_AS(contour_eccentricity(Vec::Ones(7), grid, 0.5),
                  InvalidArgument);
}

TEST_CASE("varying-kernel correlation maps grow eccentric away from the centre") {
  const Grid grid({{0.0, 2.0}, {0.0, 2.0}}, {40, 40});
  TargetSpec spec;
  spec.kind = TargetKind::kPaciorekGp;
  spec.length_scale = 0.12;
  spec.kappa = 1.2;
  spec.xi = Vec(2);
  spec.xi << 1.0, 1.0;
  const Mat cov = covariance_matrix(spec, grid.locations());
  Vec near_anchor(2), far_anchor(2);
  near_anchor << 1.0, 1.0;
  far_anchor << 1.7, 1.0;
  const long near_idx = grid.nearest_index(near_anchor);
  const long far_idx = grid.nearest_index(far_anchor);
  const double near_ecc =
      contour_eccentricity(exact_correlation_map(cov, near_idx), grid, 0.5);
  const double far_ecc =
      contour_eccentricity(exact_correlation_map(cov, far_idx), grid, 0.5);
  CHECK(far_ecc > near_ecc + 0.1);

  // The sampled pipeline sees the same ordering.
  const Grid coarse({{0.0, 2.0}, {0.0, 2.0}}, {32, 32});
  const FieldBatch batch = simulate_target(spec, coarse, 2000, SeededRng(6, 0));
  Mat anchors(2, 2);
  anchors.col(0) = near_anchor;
  anchors.col(1) = far_anchor;
  const AnchoredCovariance anc =
      anchored_covariance(batch.values, coarse, anchors);
  Vec variances(coarse.n());
  for (long j = 0; j < coarse.n(); ++j) {
    const double mean = batch.values.row(j).mean();
    variances(j) = (batch.values.row(j).array() - mean).square().sum() /
                   static_cast<double>(batch.values.cols() - 1);
  }
  Vec near_corr(coarse.n()), far_corr(coarse.n());
  for (long j = 0; j < coarse.n(); ++j) {
    near_corr(j) = anc.cov(j, 0) /
                   std::sqrt(anc.cov(anc.anchor_index[0], 0) * variances(j));
    far_corr(j) = anc.cov(j, 1) /
                  std::sqrt(anc.cov(anc.anchor_index[1], 1) * variances(j));
  }
  CHECK(contour_eccentricity(far_corr, coarse, 0.5) >
        contour_eccentricity(near_corr, coarse, 0.5) + 0.1);
}

TEST_CASE("kde recovers the standard normal density") {
  SeededRng rng(21, 0);
  Vec samples(100000);
  for (long i = 0; i < samples.size(); ++i) samples(i) = rng.normal();
  const Kde1d kde = kde_1d(samples);
  REQUIRE_FALSE(kde.point_mass);
  REQUIRE(kde.x.size() >= 512);
  CHECK(kde.bandwidth > 0.0);
  CHECK(kde.density.minCoeff() >= 0.0);
  const double integral = trapezoid(kde.x, kde.density);
  CHECK(integral >= 0.999);
  CHECK(integral <= 1.001);
  long peak_at = 0;
  const double peak = kde.density.maxCoeff(&peak_at);
  CHECK(std::abs(peak - 1.0 / std::sqrt(2.0 * 3.14159265358979323846)) <= 0.02);
  CHECK(std::abs(kde.x(peak_at)) <= 0.1);
}

TEST_CASE("shifting the sample shifts the density estimate") {
  SeededRng rng(22, 0);
  Vec samples(20000);
  for (long i = 0; i < samples.size(); ++i) samples(i) = rng.normal();
  const double shift = 3.0;
  const Kde1d base = kde_1d(samples);
  const Kde1d moved = kde_1d((samples.array() + shift).matrix());
  CHECK(std::abs(moved.bandwidth - base.bandwidth) <= 1e-12);
  long base_at = 0, moved_at = 0;
  base.density.maxCoeff(&base_at);
  moved.density.maxCoeff(&moved_at);
  const double spacing = base.x(1) - base.x(0);
  CHECK(std::abs(moved.x(moved_at) - (base.x(base_at) + shift)) <=
        2.0 * spacing);
}

TEST_CASE("kde handles degenerate and invalid samples") {
  const Kde1d atom = kde_1d(Vec::Constant(50, 2.5));
  CHECK(atom.point_mass);
  CHECK(atom.point_value == 2.5);
  CHECK(atom.x.size() == 0);
  CHECK(atom.density.size() == 0);

  CHECK_THROWS_AS(kde_1d(Vec::Ones(9)), InvalidArgument);
  SeededRng rng(1, 0);
  Vec ok(30);
  for (long i = 0; i < ok.size(); ++i) ok(i) = rng.normal();
  CHECK_THROWS_AS(kde_1d(ok, 1), InvalidArgument);
  CHECK_THROWS_AS(kde_1d(ok, 64, -0.5), InvalidArgument);
  Vec bad = ok;
  bad(3) = std::numeric_limits<double>::quiet_NaN();
  CHECK_THROWS_AS(kde_1d(bad), InvalidArgument);
  const Kde1d fixed = kde_1d(ok, 64, 0.25);
  CHECK(fixed.bandwidth == 0.25);
}

TEST_CASE("bivariate kde integrates to one and finds the mode") {
  SeededRng rng(31, 0);
  Mat samples(2, 20000);
  for (long j = 0; j < samples.cols(); ++j) {
    samples(0, j) = rng.normal();
    samples(1, j) = rng.normal();
  }
  const Kde2d kde = kde_2d(samples);
  REQUIRE_FALSE(kde.point_mass);
  CHECK(kde.density.minCoeff() >= 0.0);
  double integral = 0.0;
  for (long i = 0; i + 1 < kde.x.size(); ++i)
    for (long j = 0; j + 1 < kde.y.size(); ++j)
      integral += 0.25 *
                  (kde.density(i, j) + kde.density(i + 1, j) +
                   kde.density(i, j + 1) + kde.density(i + 1, j + 1)) *
                  (kde.x(i + 1) - kde.x(i)) * (kde.y(j + 1) - kde.y(j));
  CHECK(integral >= 0.999);
  CHECK(integral <= 1.001);
  long pi = 0, pj = 0;
  const double peak = kde.density.maxCoeff(&pi, &pj);
  CHECK(std::abs(peak - 1.0 / (2.0 * 3.14159265358979323846)) <= 0.02);
  CHECK(std::abs(kde.x(pi)) <= 0.2);
  CHECK(std::abs(kde.y(pj)) <= 0.2);
}

TEST_CASE("bivariate kde flags degenerate directions") {
  Mat samples(2, 20);
  SeededRng rng(2, 0);
  for (long j = 0; j < samples.cols(); ++j) {
    samples(0, j) = 1.5;
    samples(1, j) = rng.normal();
  }
  const Kde2d atom = kde_2d(samples);
  CHECK(atom.point_mass);
  REQUIRE(atom.point_value.size() == 2);
  CHECK(atom.point_value(0) == 1.5);

  CHECK_THROWS_AS(kde_2d(Mat::Ones(3, 20)), InvalidArgument);
  CHECK_THROWS_AS(kde_2d(Mat::Ones(2, 9)), InvalidArgument);
}

TEST_CASE("exceedance of a comonotone field is one at every lag") {
  const Grid grid({{0.0, 1.0}, {0.0, 1.0}}, {4, 4});
  const long reps = 500;
  Vec common(reps);
  for (long r = 0; r < reps; ++r)
    common(r) =
        gumbel_quantile((static_cast<double>(r) + 0.5) / static_cast<double>(reps));
  const Mat fields = Vec::Ones(grid.n()) * common.transpose();
  const std::vector<ExceedanceCurve> curves =
      exceedance_curves(fields, grid, {0.9, 0.95}, 6);
  REQUIRE(curves.size() == 2);
  for (const ExceedanceCurve& curve : curves) {
    CHECK(curve.threshold == gumbel_quantile(curve.q));
    REQUIRE(curve.lags.size() >= 2);
    for (long r = 0; r < curve.probs.size(); ++r) CHECK(curve.probs(r) == 1.0);
    for (const long c : curve.counts) CHECK(c > 0);
  }
}

TEST_CASE("exceedance of independent fields matches the marginal rate") {
  const Grid grid({{0.0, 1.0}, {0.0, 1.0}}, {4, 4});
  SeededRng rng(41, 0);
  Mat fields(grid.n(), 20000);
  for (long j = 0; j < fields.cols(); ++j)
    for (long i = 0; i < fields.rows(); ++i)
      fields(i, j) = gumbel_quantile(rng.uniform01());
  const std::vector<ExceedanceCurve> curves =
      exceedance_curves(fields, grid, {0.95}, 5);
  REQUIRE(curves.size() == 1);
  const ExceedanceCurve& curve = curves[0];
  CHECK(std::abs(curve.threshold - 2.9702) <= 1e-4);
  REQUIRE(curve.lags.size() >= 3);
  for (long r = 0; r < curve.probs.size(); ++r) {
    CHECK(curve.probs(r) >= 0.0);
    CHECK(curve.probs(r) <= 1.0);
    CHECK(std::abs(curve.probs(r) - 0.05) <= 0.02);
  }
}

TEST_CASE("exceedance omits bins whose conditioning event never occurs") {
  const Grid grid({{0.0, 4.0}}, {4});
  const long reps = 5;
  Mat fields = Mat::Constant(grid.n(), reps, -100.0);
  fields.row(0).setConstant(100.0);
  const std::vector<ExceedanceCurve> curves =
      exceedance_curves(fields, grid, {0.95}, 4);
  const ExceedanceCurve& curve = curves[0];
  // Only pairs involving location 0 (lags 1 and 2) have conditioning
  // events; lag 3 exceeds the half diagonal and bins below lag 1 hold
  // no pairs at all.
  REQUIRE(curve.lags.size() == 2);
  CHECK(curve.probs(0) == 0.0);
  CHECK(curve.probs(1) == 0.0);
  CHECK(curve.counts[0] == reps);
  CHECK(curve.counts[1] == reps);

  const Mat never = Mat::Constant(grid.n(), reps, -100.0);
  CHECK_THROWS_AS(exceedance_curves(never, grid, {0.95}, 4),
                  InsufficientData);
}

TEST_CASE("exceedance validates its arguments and is thread invariant") {
  const Grid grid({{0.0, 1.0}, {0.0, 1.0}}, {4, 4});
  const Mat fields = iid_normal_fields(grid.n(), 2000, 51);
  CHECK_THROWS_AS(exceedance_curves(fields, grid, {0.0}, 5), InvalidArgument);
  CHECK_THROWS_AS(exceedance_curves(fields, grid, {1.0}, 5), InvalidArgument);
  CHECK_THROWS_AS(exceedance_curves(fields, grid, {}, 5), InvalidArgument);
  CHECK_THROWS_AS(exceedance_curves(fields.topRows(3), grid, {0.5}, 5),
                  InvalidArgument);
  CHECK_THROWS_AS(exceedance_curves(fields, grid, {0.5}, 0), InvalidArgument);
  CHECK_THROWS_AS(exceedance_curves(fields, grid, {0.5}, 5, 0),
                  InvalidArgument);
  CHECK_THROWS_AS(exceedance_curves(fields, grid, {0.5}, 5, 1000, 0),
                  InvalidArgument);

  const auto a = exceedance_curves(fields, grid, {0.5, 0.9}, 6, 200000, 1);
  const auto b = exceedance_curves(fields, grid, {0.5, 0.9}, 6, 200000, 3);
  REQUIRE(a.size() == b.size());
  for (std::size_t k = 0; k < a.size(); ++k) {
    CHECK(same_vec(a[k].probs, b[k].probs));
    CHECK(same_vec(a[k].lags, b[k].lags));
    CHECK(a[k].counts == b[k].counts);
  }
}

TEST_CASE("score matches hand-computed values") {
  Mat draws(1, 2);
  draws << 0.0, 2.0;
  Vec truth(1);
  truth << 1.0;
  const ScoreReport report = score(draws, truth);
  CHECK(report.mape == 0.0);
  CHECK(report.rmspe == 0.0);
  CHECK(report.crps == 0.5);
  CHECK(report.points == 1);
  CHECK(report.draws == 2);

  // A perfect forecast scores zero on all three metrics.
  Vec truth2(4);
  truth2 << -1.0, 0.5, 2.0, 7.25;
  const Mat perfect = truth2.replicate(1, 5);
  const ScoreReport zero = score(perfect, truth2);
  CHECK(zero.mape == 0.0);
  CHECK(zero.rmspe == 0.0);
  CHECK(zero.crps == 0.0);
}

TEST_CASE("crps equals the brute-force pair enumeration") {
  SeededRng rng(61, 0);
  for (const long draws_count : {23L, 50L}) {
    const long points = draws_count == 23 ? 7 : 3;
    Mat draws(points, draws_count);
    Vec truth(points);
    for (long i = 0; i < points; ++i) {
      truth(i) = rng.normal();
      for (long k = 0; k < draws_count; ++k)
        draws(i, k) = 0.4 * rng.normal() + 0.1;
    }
    const ScoreReport report = score(draws, truth);

    double sum_abs = 0.0, sum_sq = 0.0, sum_crps = 0.0;
    for (long i = 0; i < points; ++i) {
      const double y = truth(i);
      double mean_acc = 0.0;
      for (long k = 0; k < draws_count; ++k) mean_acc += draws(i, k);
      const double err = std::abs(mean_acc / static_cast<double>(draws_count) - y);
      sum_abs += err;
      sum_sq += err * err;
      double abs_acc = 0.0;
      for (long k = 0; k < draws_count; ++k) abs_acc += std::abs(draws(i, k) - y);
      double pair_acc = 0.0;
      for (long k = 0; k < draws_count; ++k)
        for (long l = 0; l < draws_count; ++l)
          pair_acc += std::abs(draws(i, k) - draws(i, l));
      sum_crps += abs_acc / static_cast<double>(draws_count) -
                  pair_acc / (2.0 * static_cast<double>(draws_count) *
                              static_cast<double>(draws_count));
    }
    CHECK(report.crps == sum_crps / static_cast<double>(points));
    CHECK(report.mape == sum_abs / static_cast<double>(points));
    CHECK(report.rmspe == std::sqrt(sum_sq / static_cast<double>(points)));
  }
}

TEST_CASE("scores are translation consistent") {
  SeededRng rng(71, 0);
  const long points = 30, draws_count = 40;
  Mat draws(points, draws_count);
  Vec truth(points);
  for (long i = 0; i < points; ++i) {
    truth(i) = rng.normal();
    for (long k = 0; k < draws_count; ++k) draws(i, k) = rng.normal() + 0.3;
  }
  const double shift = 17.5;
  const ScoreReport base = score(draws, truth);
  const ScoreReport moved = score((draws.array() + shift).matrix(),
                                  (truth.array() + shift).matrix());
  CHECK(std::abs(base.mape - moved.mape) <= 1e-12);
  CHECK(std::abs(base.rmspe - moved.rmspe) <= 1e-12);
  CHECK(std::abs(base.crps - moved.crps) <= 1e-12);
}

TEST_CASE("score validates its arguments and is thread invariant") {
  Mat draws(3, 5);
  draws.setOnes();
  Vec truth(3);
  truth.setZero();
  CHECK_THROWS_AS(score(draws, Vec::Zero(2)), InvalidArgument);
  CHECK_THROWS_AS(score(draws.leftCols(1), truth), InvalidArgument);
  CHECK_THROWS_AS(score(Mat(0, 5), Vec(0)), InvalidArgument);
  CHECK_THROWS_AS(score(draws, truth, 0), InvalidArgument);

  SeededRng rng(81, 0);
  Mat big(29, 17);
  Vec t(29);
  for (long i = 0; i < 29; ++i) {
    t(i) = rng.normal();
    for (long k = 0; k < 17; ++k) big(i, k) = rng.normal();
  }
  const ScoreReport one = score(big, t, 1);
  const ScoreReport four = score(big, t, 4);
  CHECK(one.mape == four.mape);
  CHECK(one.rmspe == four.rmspe);
  CHECK(one.crps == four.crps);
}

}  // namespace sbnn
