#pragma once

#include "dflow/grid.hpp"
#include "dflow/hermite.hpp"

namespace dflow {

/// Periodic bilinear interpolation of one channel at arbitrary points (wrapped mod 2*pi).
/// Each value is clamped to the range of its four cell corners, so results never leave
/// [min f, max f].
Eigen::VectorXd sample_bilinear(const PeriodicField& field, const Points& points, int channel = 0);

/// Wraps a stored field as a pointwise sampler using bilinear interpolation.
ScalarSampler bilinear_sampler(PeriodicField field);

/// Composite Simpson rule for the integral over T^2 with periodic wraparound.
/// Exact for trigonometric polynomials of degree < n/2 in each direction.
double simpson_integral(const PeriodicField& field, int channel = 0);

/// Simpson weights along one periodic axis of even length n: 4h/3 at odd, 2h/3 at even indices.
Eigen::ArrayXd simpson_weights(int n);

}  // namespace dflow
