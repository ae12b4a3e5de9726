#pragma once

#include <Eigen/Core>

#include <cmath>
#include <cstddef>
#include <functional>
#include <numbers>
#include <vector>

namespace dflow {

inline constexpr double kTwoPi = 2.0 * std::numbers::pi;

/// One scalar plane of a field, ny rows by nx columns, x fastest.
using Plane = Eigen::Array<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

/// Point sets are stored column-wise: row 0 holds x, row 1 holds y.
using Points = Eigen::Matrix<double, 2, Eigen::Dynamic>;

/// Pointwise scalar function on the torus; the building block for initial data.
using ScalarSampler = std::function<Eigen::VectorXd(const Points&)>;

/// Reduces an angle to [0, 2*pi).
template <typename Scalar>
inline Scalar wrap_angle(Scalar x) {
  Scalar r = x - Scalar(kTwoPi) * std::floor(x / Scalar(kTwoPi));
  if (r >= Scalar(kTwoPi) || r < Scalar(0)) r = Scalar(0);
  return r;
}

/// Uniform periodic grid on [0, 2*pi)^2. The seam vertex at 2*pi is not stored.
class Grid {
 public:
  Grid(int nx, int ny);
  explicit Grid(int n) : Grid(n, n) {}

  int nx() const { return nx_; }
  int ny() const { return ny_; }
  double dx() const { return kTwoPi / nx_; }
  double dy() const { return kTwoPi / ny_; }
  std::size_t size() const { return static_cast<std::size_t>(nx_) * static_cast<std::size_t>(ny_); }

  double x(int i) const { return kTwoPi * i / nx_; }
  double y(int j) const { return kTwoPi * j / ny_; }

  /// All vertices in storage order (row j, column i, x fastest).
  Points vertices() const;

  /// Whether every vertex of this grid is also a vertex of `fine`.
  bool nests_in(const Grid& fine) const {
    return fine.nx_ % nx_ == 0 && fine.ny_ % ny_ == 0;
  }

  bool operator==(const Grid&) const = default;

 private:
  int nx_;
  int ny_;
};

/// Uniformly sampled scalar (1 channel) or vector (2 channel) function on T^2.
class PeriodicField {
 public:
  explicit PeriodicField(const Grid& grid, int channels = 1);
  PeriodicField(const Grid& grid, std::vector<Plane> planes);

  /// Samples an analytic scalar function at the grid vertices.
  static PeriodicField sample(const Grid& grid, const std::function<double(double, double)>& f);
  static PeriodicField sample(const Grid& grid, const ScalarSampler& f);

  const Grid& grid() const { return grid_; }
  int channels() const { return static_cast<int>(planes_.size()); }

  Plane& channel(int c) { return planes_.at(c); }
  const Plane& channel(int c) const { return planes_.at(c); }
  Plane& scalar() { return planes_.at(0); }
  const Plane& scalar() const { return planes_.at(0); }

  double min() const;
  double max() const;
  bool all_finite() const;

  /// Throws InvalidFieldError if any entry is NaN/Inf.
  void require_finite(const char* where) const;
  void require_scalar(const char* where) const;

  /// Channel c flattened in storage order.
  Eigen::Map<const Eigen::VectorXd> flat(int c = 0) const {
    return {planes_.at(c).data(), static_cast<Eigen::Index>(grid_.size())};
  }
  Eigen::Map<Eigen::VectorXd> flat(int c = 0) {
    return {planes_.at(c).data(), static_cast<Eigen::Index>(grid_.size())};
  }

 private:
  Grid grid_;
  std::vector<Plane> planes_;
};

/// Restricts a fine-grid field to the vertices of a nested coarse grid.
PeriodicField restrict_to(const PeriodicField& fine, const Grid& coarse);

/// Pairwise (cascade) summation for run-to-run determinism independent of vectorization.
double pairwise_sum(const double* data, std::size_t n);

}  // namespace dflow
