#pragma once

#include <cstdint>
#include <optional>
#include <string>

#include "sbnn/grid.hpp"
#include "sbnn/linalg.hpp"
#include "sbnn/math.hpp"
#include "sbnn/rng.hpp"

namespace sbnn {

/// Target process families a network prior can be calibrated against.
enum class TargetKind {
  kStationarySqexpGp,  ///< zero-mean GP, squared-exponential covariogram
  kPaciorekGp,         ///< nonstationary GP with spatially varying kernels
  kLognormalMatern,    ///< exp of a zero-mean Matern-3/2 GP
  kExternal,           ///< realisations supplied in a file
};

struct TargetSpec {
  TargetKind kind = TargetKind::kStationarySqexpGp;
  double length_scale = 1.0;  ///< l of the base covariogram
  double kappa = 1.0;         ///< nonstationarity rate (Paciorek)
  Vec xi;                     ///< nonstationarity centre (Paciorek)
  std::string path;           ///< realisation file (external)
  bool log_on_load = false;   ///< external: take elementwise log on load
  bool center = false;        ///< external: subtract the empirical mean field
};

/// Squared-exponential covariogram exp(-h^2 / (2 l^2)).
double sqexp_covariogram(double h, double length_scale);

/// Matern covariance with smoothness 3/2:
/// (1 + sqrt(3) h / l) exp(-sqrt(3) h / l).
double matern32_covariogram(double h, double length_scale);

/// Nonstationary covariance built from isotropic local kernels
/// Sigma(s) = a(s) I with a(s) = exp(kappa ||s - xi||):
///   C(s, r) = (a_s a_r)^{d/4} ((a_s + a_r)/2)^{-d/2} C0(sqrt(Q)),
///   Q = ||s - r||^2 / ((a_s + a_r)/2),
/// where C0 is the squared-exponential covariogram.  Reduces to
/// C0(||s - r||) when kappa = 0 and equals 1 at s = r.
double paciorek_covariance(const Vec& s, const Vec& r, double kappa,
                           const Vec& xi, double length_scale);

/// Covariance matrix of the *Gaussian* layer of the target on the
/// given locations (d x n).  For the lognormal kind this is the
/// covariance of the log process.  External targets have no closed
/// form and are rejected.
Mat covariance_matrix(const TargetSpec& spec, const Mat& locations);

/// Cross-covariance of the Gaussian layer between two location sets
/// (d x a and d x b -> a x b), same kernels as covariance_matrix.
Mat cross_covariance(const TargetSpec& spec, const Mat& a, const Mat& b);

/// A set of fields on one grid; column i is replicate i.
struct FieldBatch {
  Mat values;  ///< n x N
  std::uint64_t grid_signature = 0;
  long size() const { return values.cols(); }
};

/// Draws N independent realisations of the target on the grid.
/// Replicate i consumes stream base.substream(i), so any prefix of a
/// larger batch is reproducible.  External targets are read from
/// spec.path; the file's grid must match and hold at least N records
/// (InsufficientData otherwise).
FieldBatch simulate_target(const TargetSpec& spec, const Grid& grid, long n,
                           const SeededRng& base);

/// Loads external realisations, validates them against the grid, and
/// applies the elementwise log when requested (values must then be
/// positive).  Returns the first n records.
FieldBatch load_external_realisations(const std::string& path,
                                      const Grid& grid, long n,
                                      bool log_on_load);

struct CenteredBatch {
  FieldBatch centered;
  Vec mean_field;  ///< empirical per-location mean that was removed
};

/// Removes the empirical per-location mean from a batch.  The mean is
/// returned so it can be stored and re-added after sampling.
CenteredBatch center_realisations(const FieldBatch& batch);

/// Batch source used during calibration.  Setup work (covariance
/// factorization, file loading, mean-field estimation) happens once in
/// the constructor; draw_batch is then cheap and deterministic in
/// (seed, batch id) alone.
///
/// Centering policy: lognormal targets are always centered, using a
/// mean field estimated once from a dedicated batch of
/// kMeanFieldEstimationDraws realisations; external targets are
/// centered when spec.center is set, using the corpus mean.  Gaussian
/// targets are zero-mean by construction.
class TargetSampler {
 public:
  static constexpr long kMeanFieldEstimationDraws = 2048;

  TargetSampler(const TargetSpec& spec, const Grid& grid, std::uint64_t seed);

  /// n x batch matrix of (centered) realisations.  Replicate i of a
  /// batch uses SeededRng(seed, batch_id).substream(i); callers must
  /// hand out distinct batch ids to keep batches fresh.
  Mat draw_batch(long batch, std::uint64_t batch_id) const;

  /// Mean field removed from draws, when the policy applies one.
  const std::optional<Vec>& mean_field() const { return mean_field_; }

  long grid_size() const { return grid_n_; }

 private:
  TargetSpec spec_;
  long grid_n_;
  std::uint64_t seed_;
  Mat chol_lower_;           // Gaussian kinds
  Mat corpus_;               // external kind, already logged/centered
  std::optional<Vec> mean_field_;
};

}  // namespace sbnn
