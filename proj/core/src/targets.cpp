#include "sbnn/targets.hpp"

#include <cmath>
#include <string>

#include "sbnn/errors.hpp"
#include "sbnn/io.hpp"

namespace sbnn {

double sqexp_covariogram(double h, double length_scale) {
  if (length_scale <= 0.0) {
    throw InvalidArgument("sqexp: length scale must be positive");
  }
  const double u = h / length_scale;
  return std::exp(-0.5 * u * u);
}

double matern32_covariogram(double h, double length_scale) {
  if (length_scale <= 0.0) {
    throw InvalidArgument("matern32: length scale must be positive");
  }
  const double u = std::sqrt(3.0) * std::abs(h) / length_scale;
  return (1.0 + u) * std::exp(-u);
}

double paciorek_covariance(const Vec& s, const Vec& r, double kappa,
                           const Vec& xi, double length_scale) {
  if (s.size() != r.size() || s.size() != xi.size()) {
    throw InvalidArgument("paciorek: dimension mismatch");
  }
  const double d = static_cast<double>(s.size());
  const double a_s = std::exp(kappa * (s - xi).norm());
  const double a_r = std::exp(kappa * (r - xi).norm());
  const double avg = 0.5 * (a_s + a_r);
  const double q = (s - r).squaredNorm() / avg;
  return std::pow(a_s * a_r, 0.25 * d) * std::pow(avg, -0.5 * d) *
         sqexp_covariogram(std::sqrt(q), length_scale);
}

Mat covariance_matrix(const TargetSpec& spec, const Mat& locations) {
  const long n = locations.cols();
  Mat cov(n, n);
  switch (spec.kind) {
    case TargetKind::kStationarySqexpGp:
      for (long j = 0; j < n; ++j) {
        for (long i = j; i < n; ++i) {
          const double h = (locations.col(i) - locations.col(j)).norm();
          cov(i, j) = cov(j, i) = sqexp_covariogram(h, spec.length_scale);
        }
      }
      return cov;
    case TargetKind::kPaciorekGp: {
      if (spec.xi.size() != locations.rows()) {
        throw InvalidArgument("paciorek: xi does not match location dimension");
      }
      for (long j = 0; j < n; ++j) {
        for (long i = j; i < n; ++i) {
          cov(i, j) = cov(j, i) =
              paciorek_covariance(locations.col(i), locations.col(j),
                                  spec.kappa, spec.xi, spec.length_scale);
        }
      }
      return cov;
    }
    case TargetKind::kLognormalMatern:
      for (long j = 0; j < n; ++j) {
        for (long i = j; i < n; ++i) {
          const double h = (locations.col(i) - locations.col(j)).norm();
          cov(i, j) = cov(j, i) = matern32_covariogram(h, spec.length_scale);
        }
      }
      return cov;
    case TargetKind::kExternal:
      throw InvalidArgument(
          "external targets have no closed-form covariance");
  }
  throw InvalidArgument("unknown target kind");
}

Mat cross_covariance(const TargetSpec& spec, const Mat& a, const Mat& b) {
  if (a.rows() != b.rows())
    throw InvalidArgument("cross_covariance: location dimensions differ");
  Mat cov(a.cols(), b.cols());
  switch (spec.kind) {
    case TargetKind::kStationarySqexpGp:
      for (long j = 0; j < b.cols(); ++j)
        for (long i = 0; i < a.cols(); ++i)
          cov(i, j) = sqexp_covariogram((a.col(i) - b.col(j)).norm(),
                                        spec.length_scale);
      return cov;
    case TargetKind::kPaciorekGp:
      if (spec.xi.size() != a.rows())
        throw InvalidArgument("paciorek: xi does not match location dimension");
      for (long j = 0; j < b.cols(); ++j)
        for (long i = 0; i < a.cols(); ++i)
          cov(i, j) = paciorek_covariance(a.col(i), b.col(j), spec.kappa,
                                          spec.xi, spec.length_scale);
      return cov;
    case TargetKind::kLognormalMatern:
      for (long j = 0; j < b.cols(); ++j)
        for (long i = 0; i < a.cols(); ++i)
          cov(i, j) = matern32_covariogram((a.col(i) - b.col(j)).norm(),
                                           spec.length_scale);
      return cov;
    case TargetKind::kExternal:
      throw InvalidArgument(
          "external targets have no closed-form covariance");
  }
  throw InvalidArgument("unknown target kind");
}

namespace {

Mat draw_gaussian(const Mat& chol_lower, long n_fields, const SeededRng& base) {
  const long n = chol_lower.rows();
  Mat out(n, n_fields);
  const Vec zero = Vec::Zero(n);
  for (long i = 0; i < n_fields; ++i) {
    SeededRng rng = base.substream(static_cast<std::uint64_t>(i));
    out.col(i) = sample_mvn(zero, chol_lower, rng);
  }
  return out;
}

}  // namespace

FieldBatch simulate_target(const TargetSpec& spec, const Grid& grid, long n,
                           const SeededRng& base) {
  if (n < 0) throw InvalidArgument("simulate_target: negative count");
  FieldBatch batch;
  batch.grid_signature = grid.signature();
  if (spec.kind == TargetKind::kExternal) {
    return load_external_realisations(spec.path, grid, n, spec.log_on_load);
  }
  const Mat cov = covariance_matrix(spec, grid.locations());
  const Mat lower = cholesky_spd(cov).lower;
  batch.values = draw_gaussian(lower, n, base);
  if (spec.kind == TargetKind::kLognormalMatern) {
    batch.values = batch.values.array().exp();
  }
  return batch;
}

FieldBatch load_external_realisations(const std::string& path,
                                      const Grid& grid, long n,
                                      bool log_on_load) {
  Realisations reals = read_realisations(path);
  const Grid file_grid = reals.make_grid();
  if (file_grid.signature() != grid.signature()) {
    throw FormatError("external realisations: file grid (bounds/dims) does "
                      "not match the requested grid");
  }
  if (reals.values.cols() < n) {
    throw InsufficientData(
        "external realisations: file holds " +
            std::to_string(reals.values.cols()) + " records, need " +
            std::to_string(n),
        reals.values.cols(), n);
  }
  FieldBatch batch;
  batch.grid_signature = grid.signature();
  batch.values = reals.values.leftCols(n);
  if (log_on_load) {
    if ((batch.values.array() <= 0.0).any()) {
      throw InvalidArgument(
          "external realisations: log requested but values are not all "
          "positive");
    }
    batch.values = batch.values.array().log();
  }
  return batch;
}

CenteredBatch center_realisations(const FieldBatch& batch) {
  if (batch.size() < 1) {
    throw InvalidArgument("center_realisations: empty batch");
  }
  CenteredBatch out;
  out.mean_field = batch.values.rowwise().mean();
  out.centered.grid_signature = batch.grid_signature;
  out.centered.values = batch.values.colwise() - out.mean_field;
  return out;
}

TargetSampler::TargetSampler(const TargetSpec& spec, const Grid& grid,
                             std::uint64_t seed)
    : spec_(spec), grid_n_(grid.n()), seed_(seed) {
  switch (spec.kind) {
    case TargetKind::kStationarySqexpGp:
    case TargetKind::kPaciorekGp:
    case TargetKind::kLognormalMatern: {
      const Mat cov = covariance_matrix(spec, grid.locations());
      chol_lower_ = cholesky_spd(cov).lower;
      if (spec.kind == TargetKind::kLognormalMatern) {
        // Empirical detrending mean from a dedicated reserved stream;
        // every later draw subtracts this fixed field.
        const SeededRng base(seed_, ~std::uint64_t{0});
        Mat fields = draw_gaussian(chol_lower_, kMeanFieldEstimationDraws, base);
        fields = fields.array().exp();
        mean_field_ = fields.rowwise().mean();
      }
      break;
    }
    case TargetKind::kExternal: {
      Realisations reals = read_realisations(spec.path);
      if (reals.make_grid().signature() != grid.signature()) {
        throw FormatError(
            "external realisations: file grid does not match the "
            "calibration grid");
      }
      corpus_ = std::move(reals.values);
      if (spec.log_on_load) {
        if ((corpus_.array() <= 0.0).any()) {
          throw InvalidArgument(
              "external realisations: log requested but values are not all "
              "positive");
        }
        corpus_ = corpus_.array().log();
      }
      if (spec.center) {
        mean_field_ = corpus_.rowwise().mean();
        corpus_.colwise() -= *mean_field_;
      }
      break;
    }
  }
}

Mat TargetSampler::draw_batch(long batch, std::uint64_t batch_id) const {
  if (batch < 1) throw InvalidArgument("draw_batch: batch must be positive");
  const SeededRng base(seed_, batch_id);
  if (spec_.kind == TargetKind::kExternal) {
    if (batch > corpus_.cols()) {
      throw InsufficientData(
          "draw_batch: corpus holds " + std::to_string(corpus_.cols()) +
              " realisations, need " + std::to_string(batch),
          corpus_.cols(), batch);
    }
    // Seeded subsample without replacement (partial Fisher-Yates over
    // an index vector).
    SeededRng rng = base.substream(0);
    std::vector<long> idx(static_cast<std::size_t>(corpus_.cols()));
    for (std::size_t i = 0; i < idx.size(); ++i) idx[i] = static_cast<long>(i);
    Mat out(grid_n_, batch);
    for (long i = 0; i < batch; ++i) {
      const auto j = i + static_cast<long>(rng.uniform_below(
                             static_cast<std::uint64_t>(idx.size() - i)));
      std::swap(idx[i], idx[j]);
      out.col(i) = corpus_.col(idx[i]);
    }
    return out;
  }
  Mat out = draw_gaussian(chol_lower_, batch, base);
  if (spec_.kind == TargetKind::kLognormalMatern) {
    out = out.array().exp();
    out.colwise() -= *mean_field_;
  }
  return out;
}

}  // namespace sbnn
