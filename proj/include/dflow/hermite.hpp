#pragma once

#include "dflow/grid.hpp"

#include <algorithm>
#include <array>
#include <cmath>

namespace dflow {

// Cubic Hermite shape functions on [0, 1]:
//   Q0(s) = 1 - 3s^2 + 2s^3 (value at left node), Q1(s) = s - 2s^2 + s^3 (slope at left node).
// The right node uses Q0(1-s) and -Q1(1-s).
template <typename Scalar>
constexpr Scalar hermite_q0(Scalar s) {
  return Scalar(1) - s * s * (Scalar(3) - Scalar(2) * s);
}

template <typename Scalar>
constexpr Scalar hermite_q1(Scalar s) {
  return s * (Scalar(1) - s) * (Scalar(1) - s);
}

/// {Q0(s), Q1(s)*h, Q0(1-s), -Q1(1-s)*h}: weights of (left value, left slope, right value,
/// right slope) for a cell of width h.
template <typename Scalar>
constexpr std::array<Scalar, 4> hermite_weights(Scalar s, Scalar h) {
  const Scalar s2 = s * s;
  const Scalar s3 = s2 * s;
  const Scalar right = Scalar(3) * s2 - Scalar(2) * s3;
  return {Scalar(1) - right, (s - Scalar(2) * s2 + s3) * h, right, (s3 - s2) * h};
}

/// d/dx of hermite_weights for a cell of width h (so already divided by h).
template <typename Scalar>
constexpr std::array<Scalar, 4> hermite_weights_dx(Scalar s, Scalar h) {
  const Scalar s2 = s * s;
  const Scalar inv_h = Scalar(1) / h;
  return {(Scalar(6) * s2 - Scalar(6) * s) * inv_h, Scalar(1) - Scalar(4) * s + Scalar(3) * s2,
          (Scalar(6) * s - Scalar(6) * s2) * inv_h, Scalar(3) * s2 - Scalar(2) * s};
}

/// Nodal data of a scalar C^1 bicubic Hermite interpolant: value, d/dx, d/dy, d2/dxdy per vertex.
struct HermiteData {
  Plane value;
  Plane dx;
  Plane dy;
  Plane dxy;

  static HermiteData zeros(const Grid& g) {
    return {Plane::Zero(g.ny(), g.nx()), Plane::Zero(g.ny(), g.nx()), Plane::Zero(g.ny(), g.nx()),
            Plane::Zero(g.ny(), g.nx())};
  }

  bool all_finite() const { return value.allFinite() && dx.allFinite() && dy.allFinite() && dxy.allFinite(); }
};

/// Cell lookup and shape-function weights for one query point, shared across components.
struct HermiteStencil {
  int i0, i1, j0, j1;
  double sx, sy;  // local cell coordinates in [0, 1]
  std::array<double, 4> wx, wy;

  HermiteStencil(const Grid& g, double x, double y) {
    locate(g.nx(), wrap_angle(x), i0, i1, sx, wx, g.dx());
    locate(g.ny(), wrap_angle(y), j0, j1, sy, wy, g.dy());
  }

  double apply(const HermiteData& d) const { return combine(d, wx, wy); }

  /// Combines nodal data with arbitrary 1D weight sets (used for derivatives). Written as
  /// left value plus weighted differences so that constant data is reproduced exactly.
  double combine(const HermiteData& d, const std::array<double, 4>& ax, const std::array<double, 4>& ay) const {
    const double sx0 = ax[0] + ax[2];
    const auto row = [&](const Plane& v, const Plane& slope, int j) {
      const double l = v(j, i0);
      return sx0 * l + ax[2] * (v(j, i1) - l) + ax[1] * slope(j, i0) + ax[3] * slope(j, i1);
    };
    const double bottom = row(d.value, d.dx, j0);
    const double top = row(d.value, d.dx, j1);
    const double bottom_dy = row(d.dy, d.dxy, j0);
    const double top_dy = row(d.dy, d.dxy, j1);
    return (ay[0] + ay[2]) * bottom + ay[2] * (top - bottom) + ay[1] * bottom_dy + ay[3] * top_dy;
  }

  /// Locates the cell of a wrapped coordinate and returns the shape weights. `x` must lie in
  /// [0, 2*pi); the local coordinate s is clamped to [0, 1].
  static void locate(int n, double x, int& lo, int& hi, double& local, std::array<double, 4>& w, double h) {
    double u = x * (n / kTwoPi);
    // vertex coordinates land on the node despite rounding in x * n / (2 pi)
    const double r = std::round(u);
    if (std::abs(u - r) <= 1e-12 * std::max(1.0, r)) u = r;
    int i = static_cast<int>(std::floor(u));
    double s = u - i;
    if (i >= n) {
      i = n - 1;
      s = 1.0;
    } else if (i < 0) {
      i = 0;
      s = 0.0;
    }
    lo = i;
    hi = i + 1 == n ? 0 : i + 1;
    local = std::clamp(s, 0.0, 1.0);
    w = hermite_weights(local, h);
  }
};

/// Value and gradient of a Hermite interpolant at one point.
struct HermiteJet {
  double value;
  double dx;
  double dy;
};

inline HermiteJet hermite_jet(const Grid& g, const HermiteData& d, double x, double y) {
  const HermiteStencil st(g, x, y);
  const auto dwx = hermite_weights_dx(st.sx, g.dx());
  const auto dwy = hermite_weights_dx(st.sy, g.dy());
  return {st.apply(d), st.combine(d, dwx, st.wy), st.combine(d, st.wx, dwy)};
}

/// Nodal data of a periodic plane with spectrally exact derivatives.
HermiteData hermite_from_samples(const Grid& grid, const Plane& values);

/// Scalar field interpolated with the bicubic Hermite spline built from spectral derivatives.
class HermiteInterpolant {
 public:
  HermiteInterpolant(const Grid& grid, const Plane& values)
      : grid_(grid), data_(hermite_from_samples(grid, values)) {}
  HermiteInterpolant(const Grid& grid, HermiteData data) : grid_(grid), data_(std::move(data)) {}

  const Grid& grid() const { return grid_; }
  const HermiteData& data() const { return data_; }

  double operator()(double x, double y) const { return HermiteStencil(grid_, x, y).apply(data_); }
  HermiteJet jet(double x, double y) const { return hermite_jet(grid_, data_, x, y); }

  Eigen::VectorXd evaluate(const Points& p) const;

 private:
  Grid grid_;
  HermiteData data_;
};

}  // namespace dflow
