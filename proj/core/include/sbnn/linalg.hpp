#pragma once

#include "sbnn/math.hpp"
#include "sbnn/rng.hpp"

namespace sbnn {

struct CholeskyResult {
  Mat lower;      ///< L with A + jitter*I = L L'
  double jitter;  ///< diagonal jitter that made the factorization succeed
};

/// Lower-triangular Cholesky factor of a symmetric positive
/// (semi-)definite matrix.  Only the lower triangle of `a` is read.
/// The factorization is first attempted without regularization, then
/// retried with diagonal jitter 1e-10, 1e-8, 1e-6; if the last rung
/// still produces a non-positive pivot, throws NumericalFailure whose
/// `index` is the failing pivot.
CholeskyResult cholesky_spd(const Mat& a);

/// Draw from N(mean, L L') as mean + L z with z iid standard normal.
/// `lower` is a Cholesky factor as produced by cholesky_spd.
Vec sample_mvn(const Vec& mean, const Mat& lower, SeededRng& rng);

}  // namespace sbnn
