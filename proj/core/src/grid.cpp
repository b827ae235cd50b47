#include "sbnn/grid.hpp"

#include <cmath>
#include <cstring>

#include "sbnn/errors.hpp"

namespace sbnn {
namespace {

std::uint64_t fnv1a(const void* data, std::size_t len, std::uint64_t h) {
  const auto* p = static_cast<const unsigned char*>(data);
  for (std::size_t i = 0; i < len; ++i) {
    h ^= p[i];
    h *= 0x100000001b3ull;
  }
  return h;
}

}  // namespace

Grid::Grid(std::vector<std::array<double, 2>> bounds, std::vector<int> dims)
    : bounds_(std::move(bounds)), dims_(std::move(dims)) {
  if (bounds_.size() != dims_.size()) {
    throw InvalidArgument("grid: bounds and dims must have equal length");
  }
  const int d = static_cast<int>(dims_.size());
  if (d < 1 || d > 2) {
    throw InvalidArgument("grid: dimension must be 1 or 2, got " +
                          std::to_string(d));
  }
  long n = 1;
  for (int a = 0; a < d; ++a) {
    if (dims_[a] < 1) {
      throw InvalidArgument("grid: axis " + std::to_string(a) +
                            " needs at least one cell");
    }
    if (!(bounds_[a][0] < bounds_[a][1])) {
      throw InvalidArgument("grid: axis " + std::to_string(a) +
                            " bounds must satisfy lo < hi");
    }
    n *= dims_[a];
  }

  locations_.resize(d, n);
  if (d == 1) {
    const double w = cell_width(0);
    for (long i = 0; i < n; ++i) {
      locations_(0, i) = bounds_[0][0] + (static_cast<double>(i) + 0.5) * w;
    }
  } else {
    const double w1 = cell_width(0);
    const double w2 = cell_width(1);
    const long n2 = dims_[1];
    for (long i1 = 0; i1 < dims_[0]; ++i1) {
      for (long i2 = 0; i2 < n2; ++i2) {
        const long c = i1 * n2 + i2;  // last axis fastest
        locations_(0, c) = bounds_[0][0] + (static_cast<double>(i1) + 0.5) * w1;
        locations_(1, c) = bounds_[1][0] + (static_cast<double>(i2) + 0.5) * w2;
      }
    }
  }

  std::uint64_t h = 0xcbf29ce484222325ull;
  for (int a = 0; a < d; ++a) {
    h = fnv1a(&bounds_[a][0], sizeof(double) * 2, h);
    std::int64_t cells = dims_[a];
    h = fnv1a(&cells, sizeof(cells), h);
  }
  signature_ = h;
}

double Grid::cell_width(int axis) const {
  return (bounds_[axis][1] - bounds_[axis][0]) / dims_[axis];
}

double Grid::half_diagonal() const {
  double s = 0.0;
  for (const auto& b : bounds_) {
    const double len = b[1] - b[0];
    s += len * len;
  }
  return 0.5 * std::sqrt(s);
}

long Grid::nearest_index(const Vec& p) const {
  if (p.size() != dim()) {
    throw InvalidArgument("grid: point dimension mismatch");
  }
  long best = 0;
  double best_d2 = (locations_.col(0) - p).squaredNorm();
  for (long i = 1; i < n(); ++i) {
    const double d2 = (locations_.col(i) - p).squaredNorm();
    if (d2 < best_d2) {
      best_d2 = d2;
      best = i;
    }
  }
  return best;
}

}  // namespace sbnn
