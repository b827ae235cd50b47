#pragma once

#include <array>
#include <cstdint>
#include <vector>

#include "sbnn/math.hpp"

namespace sbnn {

/// Regular grid of cell centroids over an axis-aligned rectangle in
/// R^d, d in {1, 2}.  Locations are ordered row-major with the last
/// axis fastest, so for a 2-d grid column index c = i1 * n2 + i2.
class Grid {
 public:
  /// bounds[a] = {lo, hi} per axis; dims[a] = number of cells per axis.
  /// The first centroid sits at lo + half a cell width.
  Grid(std::vector<std::array<double, 2>> bounds, std::vector<int> dims);

  int dim() const { return static_cast<int>(dims_.size()); }
  long n() const { return locations_.cols(); }
  const std::vector<std::array<double, 2>>& bounds() const { return bounds_; }
  const std::vector<int>& dims() const { return dims_; }

  /// d x n matrix of centroid coordinates.
  const Mat& locations() const { return locations_; }

  double cell_width(int axis) const;

  /// Half the length of the rectangle's main diagonal; the covariogram
  /// bins lags up to this distance.
  double half_diagonal() const;

  /// Index of the centroid nearest to `p` (Euclidean).
  long nearest_index(const Vec& p) const;

  /// Hash of (bounds, dims) used to bind samples to the grid that
  /// produced them.
  std::uint64_t signature() const { return signature_; }

 private:
  std::vector<std::array<double, 2>> bounds_;
  std::vector<int> dims_;
  Mat locations_;
  std::uint64_t signature_ = 0;
};

}  // namespace sbnn
