#pragma once

#include <Eigen/Core>
#include <cmath>

namespace sbnn {

using Mat = Eigen::MatrixXd;
using Vec = Eigen::VectorXd;

/// softplus(x) = log(1 + e^x), evaluated as max(x, 0) + log1p(e^{-|x|})
/// so that neither tail overflows.
inline double softplus(double x) {
  return std::max(x, 0.0) + std::log1p(std::exp(-std::abs(x)));
}

/// Logistic sigmoid, the derivative of softplus.  Both tails go
/// through a single decaying exponential.
inline double sigmoid(double x) {
  if (x >= 0.0) {
    return 1.0 / (1.0 + std::exp(-x));
  }
  const double e = std::exp(x);
  return e / (1.0 + e);
}

// Matrix activation kernels.  Every code path (plain forward passes
// and the autodiff tape) goes through these, so the two paths agree
// bit-for-bit; they are written as Eigen array expressions to keep the
// exponentials vectorized.

/// Same stabilized form as the scalar softplus, with log(1+e) in place
/// of log1p(e): e = exp(-|x|) lies in (0, 1], so 1+e is exact to one
/// ulp and the absolute difference is below 1e-16, while log stays on
/// Eigen's vectorized path (log1p does not).
inline Mat mat_softplus(const Mat& x) {
  Eigen::ArrayXXd e = (-x.array().abs()).exp();
  return x.array().max(0.0) + (1.0 + e).log();
}

inline Mat mat_sigmoid(const Mat& x) {
  Eigen::ArrayXXd e = (-x.array().abs()).exp();
  return (x.array() >= 0.0).select(1.0, e) / (1.0 + e);
}

/// tanh through one vectorized exponential:
/// tanh(x) = sign(x) * (1 - 2 / (exp(2|x|) + 1)).
/// exp overflow for large |x| saturates cleanly to +-1.
inline Mat mat_tanh(const Mat& x) {
  Eigen::ArrayXXd t = 1.0 - 2.0 / ((2.0 * x.array().abs()).exp() + 1.0);
  return (x.array() < 0.0).select(-t, t);
}

// Batched per-row matrix products.  Row i of `t` is read as an r x c
// matrix M_i in column-major vec order; evaluation runs column by
// column so the arithmetic vectorizes down the batch.

/// out[i,:] = M_i a[i,:]'   (t: n x rc, a: n x c -> n x r)
inline Mat rows_matvec_value(const Mat& t, const Mat& a, long r, long c) {
  Mat out = Mat::Zero(t.rows(), r);
  for (long j = 0; j < r; ++j)
    for (long k = 0; k < c; ++k)
      out.col(j).array() += t.col(j + r * k).array() * a.col(k).array();
  return out;
}

/// out[i,:] = M_i' g[i,:]'  (t: n x rc, g: n x r -> n x c)
inline Mat rows_matvec_t_value(const Mat& t, const Mat& g, long r, long c) {
  Mat out = Mat::Zero(t.rows(), c);
  for (long k = 0; k < c; ++k)
    for (long j = 0; j < r; ++j)
      out.col(k).array() += t.col(j + r * k).array() * g.col(j).array();
  return out;
}

/// out[i,:] = vec(u[i,:]' v[i,:])  (u: n x r, v: n x c -> n x rc)
inline Mat rows_outer_value(const Mat& u, const Mat& v, long r, long c) {
  Mat out(u.rows(), r * c);
  for (long k = 0; k < c; ++k)
    for (long j = 0; j < r; ++j)
      out.col(j + r * k) = u.col(j).cwiseProduct(v.col(k));
  return out;
}

/// Standard normal CDF.
inline double normal_cdf(double x) {
  return 0.5 * std::erfc(-x * (1.0 / std::sqrt(2.0)));
}

/// Quantile of the standard Gumbel distribution: -log(-log(q)), q in (0,1).
inline double gumbel_quantile(double q) {
  return -std::log(-std::log(q));
}

}  // namespace sbnn
