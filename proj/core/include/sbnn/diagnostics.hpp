#pragma once

#include <cstdint>
#include <vector>

#include "sbnn/grid.hpp"
#include "sbnn/math.hpp"

namespace sbnn {

/// Binned estimate of cov(Y(s), Y(s+h)) as a function of lag h.
/// Bins are ordered by lag and only bins that received at least one
/// pair are reported, so `pair_counts` entries are always positive.
struct CovariogramEstimate {
  Vec lags;                      ///< bin centers (lags(0) == 0)
  Vec estimates;                 ///< mean pairwise covariance per bin
  std::vector<long> pair_counts; ///< location pairs behind each bin
};

/// Estimates the covariogram of `fields` (one column per replicate,
/// one row per grid location).  Location pairs, self pairs included,
/// are binned by Euclidean lag into n_bins equal widths covering
/// [0, grid.half_diagonal()]; pairs further apart than the half
/// diagonal are ignored.  Self pairs land in bin 0, so whenever the
/// bin width is below the grid's minimum pair distance the first bin
/// reports exactly the mean per-location sample variance.
/// Covariances use the 1/(N-1) estimator about the per-location
/// sample mean.  When the number of distinct location
/// pairs exceeds `pair_cap` (default 2e5), a fixed-seed uniform
/// subsample of ordered pairs is used instead, so results remain
/// reproducible.  Pair work is sharded with a deterministic
/// reduction: results are bit-identical for every thread count.
CovariogramEstimate empirical_covariogram(const Mat& fields,
                                          const Grid& grid,
                                          long n_bins = 20,
                                          long pair_cap = 200000,
                                          int threads = 1);

/// Covariance between the field at each anchor and the field
/// everywhere else.  Anchors snap to the nearest grid centroid;
/// `anchor_index[a]` records the snapped column and `cov.col(a)` the
/// resulting n-vector of covariances.
struct AnchoredCovariance {
  std::vector<long> anchor_index;
  Mat cov; ///< grid.n() x anchors.cols()
};

/// anchors: dim x A matrix of anchor coordinates.  Every anchor must
/// lie inside the grid's rectangle (invalid-argument otherwise);
/// covariances use the 1/(N-1) estimator and need N >= 2 replicates.
AnchoredCovariance anchored_covariance(const Mat& fields,
                                       const Grid& grid,
                                       const Mat& anchors);

/// Eccentricity in [0, 1] of the region {s : map(s) >= threshold} on
/// a 2-d grid, computed from the 2x2 second-moment matrix of the
/// selected centroids: sqrt(1 - lambda_min / lambda_max).  A circular
/// region scores near 0, an elongated one near 1.  Regions with fewer
/// than three points (or zero spread) score 0.  Used to compare how
/// anisotropic an anchored correlation map is at different anchors.
double contour_eccentricity(const Vec& map, const Grid& grid,
                            double threshold = 0.5);

/// Gaussian kernel density estimate on an evaluation grid.  When the
/// sample is constant the density does not exist; `point_mass` is set
/// and `point_value` holds the atom instead.
struct Kde1d {
  Vec x;                  ///< evaluation points (empty for a point mass)
  Vec density;            ///< estimated density at x
  double bandwidth = 0.0; ///< kernel standard deviation actually used
  bool point_mass = false;
  double point_value = 0.0;
};

/// Needs at least 10 samples.  bandwidth == 0 selects Silverman's
/// rule of thumb, 0.9 * min(sd, IQR / 1.34) * n^(-1/5).  The
/// evaluation grid spans the sample range padded by five bandwidths
/// and is refined (beyond `grid_points` if needed) until its spacing
/// resolves the kernel, so the trapezoid integral of `density` is 1
/// to within 1e-3.  The density is nonnegative everywhere.
Kde1d kde_1d(const Vec& samples, long grid_points = 512,
             double bandwidth = 0.0);

/// Bivariate analogue of Kde1d with a product Gaussian kernel.
/// density(i, j) estimates the joint density at (x(i), y(j)).
struct Kde2d {
  Vec x;
  Vec y;
  Mat density; ///< x.size() x y.size()
  double bandwidth_x = 0.0;
  double bandwidth_y = 0.0;
  bool point_mass = false;
  Vec point_value; ///< componentwise atom when point_mass is set
};

/// Needs at least 10 samples (columns of the 2 x n matrix).  Zero
/// bandwidths select sd_k * n^(-1/6) per axis.  A sample that is
/// constant along either axis has no bivariate density and reports a
/// point mass at the componentwise means.
Kde2d kde_2d(const Mat& samples, long grid_points = 64,
             double bandwidth_x = 0.0, double bandwidth_y = 0.0);

/// Conditional exceedance probability P(Y(s) > y | Y(s') > y) at the
/// standard Gumbel threshold y = -log(-log(q)), binned by |s - s'|.
/// Bins whose conditioning event never occurs are omitted rather than
/// reported as zero, so `probs` always lies in [0, 1].
struct ExceedanceCurve {
  double q = 0.0;         ///< quantile level
  double threshold = 0.0; ///< -log(-log(q))
  Vec lags;               ///< centers of the reported bins
  Vec probs;
  std::vector<long> counts; ///< conditioning events behind each bin
};

/// One curve per entry of `quantiles` (each must lie in (0, 1)).
/// Distinct location pairs are binned into n_bins equal widths over
/// (0, grid.half_diagonal()]; both orderings of a pair contribute.
/// If no observation anywhere exceeds the threshold the curve cannot
/// be estimated and insufficient-data is raised.  Pair subsampling
/// and sharding follow empirical_covariogram.
std::vector<ExceedanceCurve> exceedance_curves(
    const Mat& fields, const Grid& grid,
    const std::vector<double>& quantiles, long n_bins = 20,
    long pair_cap = 200000, int threads = 1);

/// Point-prediction and probabilistic scores of posterior predictive
/// draws against held-out truth.
struct ScoreReport {
  double mape = 0.0;  ///< mean |posterior mean - truth|
  double rmspe = 0.0; ///< root mean squared prediction error
  double crps = 0.0;  ///< continuous ranked probability score
  long points = 0;
  long draws = 0;
};

/// draws: points x M matrix of predictive samples (M >= 2), truth:
/// matching vector.  CRPS per point is mean_k |X_k - y| -
/// (1 / (2 M^2)) sum_{k,l} |X_k - X_l| with the full M^2 pair sum
/// (self pairs included), accumulated in draw order; the report
/// averages over points.  Point work is sharded with a deterministic
/// reduction, so results are thread-count invariant.
ScoreReport score(const Mat& draws, const Vec& truth, int threads = 1);

}  // namespace sbnn
