#include "sbnn/linalg.hpp"

#include <cmath>
#include <string>

#include "sbnn/errors.hpp"

namespace sbnn {
namespace {

/// Left-looking Cholesky of A + jitter*I.  Returns the failing pivot,
/// or -1 on success with the factor written to `l`.
long try_cholesky(const Mat& a, double jitter, Mat& l) {
  const long n = a.rows();
  l.setZero(n, n);
  for (long j = 0; j < n; ++j) {
    double d = a(j, j) + jitter - l.row(j).head(j).squaredNorm();
    if (!(d > 0.0) || !std::isfinite(d)) {
      return j;
    }
    const double ljj = std::sqrt(d);
    l(j, j) = ljj;
    const long m = n - j - 1;
    if (m > 0) {
      l.col(j).tail(m) =
          (a.col(j).tail(m) -
           l.bottomLeftCorner(m, j) * l.row(j).head(j).transpose()) /
          ljj;
    }
  }
  return -1;
}

}  // namespace

CholeskyResult cholesky_spd(const Mat& a) {
  if (a.rows() != a.cols()) {
    throw InvalidArgument("cholesky: matrix must be square");
  }
  static constexpr double kLadder[] = {0.0, 1e-10, 1e-8, 1e-6};
  Mat l;
  long pivot = -1;
  for (double jitter : kLadder) {
    pivot = try_cholesky(a, jitter, l);
    if (pivot < 0) {
      return {std::move(l), jitter};
    }
  }
  throw NumericalFailure(
      "cholesky: non-positive pivot at index " + std::to_string(pivot) +
          " after exhausting the jitter ladder",
      pivot);
}

Vec sample_mvn(const Vec& mean, const Mat& lower, SeededRng& rng) {
  if (lower.rows() != lower.cols() || lower.rows() != mean.size()) {
    throw InvalidArgument("sample_mvn: dimension mismatch");
  }
  Vec z(mean.size());
  for (long i = 0; i < z.size(); ++i) z[i] = rng.normal();
  return mean + lower.triangularView<Eigen::Lower>() * z;
}

}  // namespace sbnn
