#include "dflow/interp.hpp"

#include "dflow/errors.hpp"
#include "dflow/parallel.hpp"
#include "dflow/spectral.hpp"

#include <algorithm>
#include <cmath>

namespace dflow {

namespace {

// Grid coordinates within rounding of a node land exactly on it, so vertices reproduce stored values.
double snap_to_node(double u, int n) {
  const double r = std::round(u);
  if (std::abs(u - r) > 1e-9) return u;
  return r >= n ? 0.0 : r;
}

}  // namespace

Eigen::VectorXd sample_bilinear(const PeriodicField& field, const Points& points, int channel) {
  if (!points.allFinite()) throw InvalidFieldError("sample_bilinear: non-finite query point");
  const Grid& g = field.grid();
  const Plane& f = field.channel(channel);
  const double sx = g.nx() / kTwoPi;
  const double sy = g.ny() / kTwoPi;
  Eigen::VectorXd out(points.cols());
  parallel_for(static_cast<std::size_t>(points.cols()), [&](std::size_t b, std::size_t e) {
    for (auto k = static_cast<Eigen::Index>(b); k < static_cast<Eigen::Index>(e); ++k) {
      const double u = snap_to_node(wrap_angle(points(0, k)) * sx, g.nx());
      const double v = snap_to_node(wrap_angle(points(1, k)) * sy, g.ny());
      int i = std::min(static_cast<int>(std::floor(u)), g.nx() - 1);
      int j = std::min(static_cast<int>(std::floor(v)), g.ny() - 1);
      const double a = std::clamp(u - i, 0.0, 1.0);
      const double c = std::clamp(v - j, 0.0, 1.0);
      const int i1 = i + 1 == g.nx() ? 0 : i + 1;
      const int j1 = j + 1 == g.ny() ? 0 : j + 1;
      const double f00 = f(j, i), f10 = f(j, i1), f01 = f(j1, i), f11 = f(j1, i1);
      const double bottom = f00 + a * (f10 - f00);
      const double top = f01 + a * (f11 - f01);
      const double val = bottom + c * (top - bottom);
      const double lo = std::min({f00, f10, f01, f11});
      const double hi = std::max({f00, f10, f01, f11});
      out(k) = std::clamp(val, lo, hi);
    }
  });
  return out;
}

ScalarSampler bilinear_sampler(PeriodicField field) {
  return [f = std::move(field)](const Points& p) { return sample_bilinear(f, p); };
}

Eigen::ArrayXd simpson_weights(int n) {
  if (n % 2 != 0 || n < 2) throw DomainError("simpson_integral: grid dimensions must be even");
  const double h = kTwoPi / n;
  Eigen::ArrayXd w(n);
  for (int i = 0; i < n; ++i) w(i) = (i % 2 == 0 ? 2.0 : 4.0) * h / 3.0;
  return w;
}

double simpson_integral(const PeriodicField& field, int channel) {
  const Grid& g = field.grid();
  const Eigen::ArrayXd wx = simpson_weights(g.nx());
  const Eigen::ArrayXd wy = simpson_weights(g.ny());
  const Plane& f = field.channel(channel);
  Eigen::ArrayXd rows(g.ny());
  Eigen::ArrayXd tmp(g.nx());
  for (int j = 0; j < g.ny(); ++j) {
    tmp = f.row(j).transpose() * wx;
    rows(j) = wy(j) * pairwise_sum(tmp.data(), static_cast<std::size_t>(g.nx()));
  }
  return pairwise_sum(rows.data(), static_cast<std::size_t>(g.ny()));
}

HermiteData hermite_from_samples(const Grid& grid, const Plane& values) {
  return {values, spectral_derivative(grid, values, 1, 0), spectral_derivative(grid, values, 0, 1),
          spectral_derivative(grid, values, 1, 1)};
}

Eigen::VectorXd HermiteInterpolant::evaluate(const Points& p) const {
  Eigen::VectorXd out(p.cols());
  for (Eigen::Index k = 0; k < p.cols(); ++k) out(k) = (*this)(p(0, k), p(1, k));
  return out;
}

}  // namespace dflow
