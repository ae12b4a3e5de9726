#pragma once

#include "dflow/diffeo.hpp"
#include "dflow/grid.hpp"
#include "dflow/hermite.hpp"

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

namespace dflow {

/// Velocity field v(t, x): returns one velocity vector per input point (radians per unit time).
using VelocitySampler = std::function<Points(double t, const Points& points)>;

VelocitySampler constant_velocity(const Eigen::Vector2d& v);
VelocitySampler analytic_velocity(std::function<Eigen::Vector2d(double t, double x, double y)> f);

/// Grid-backed velocity: bilinear in space, linear in time between frames stored at
/// t0, t0 + dt, ... (constant extrapolation outside).
VelocitySampler grid_velocity(std::vector<PeriodicField> frames, double t0, double dt);

/// Divergence-free velocity u = (-d psi/dy, d psi/dx) of the stream function psi solving
/// lap(psi) = w, with psi represented by its bicubic Hermite interpolant (spectral nodal data).
class StreamVelocity {
 public:
  explicit StreamVelocity(const PeriodicField& vorticity);
  StreamVelocity(const Grid& grid, HermiteData psi) : grid_(grid), psi_(std::move(psi)) {}

  Eigen::Vector2d operator()(double x, double y) const {
    const HermiteJet j = hermite_jet(grid_, psi_, x, y);
    return {-j.dy, j.dx};
  }
  Points evaluate(const Points& p) const;

  /// (1 + a) * this - a * older, the linear-in-time extrapolation of two frames.
  StreamVelocity extrapolate(const StreamVelocity& older, double a) const;

  const HermiteData& stream_function() const { return psi_; }

 private:
  Grid grid_;
  HermiteData psi_;
};

/// Spectral Biot-Savart law with w = d u_y/dx - d u_x/dy: u_k = (i k_y, -i k_x) w_k / |k|^2.
/// The mean of w is discarded; Nyquist modes are dropped so the output is real and
/// divergence free.
PeriodicField biot_savart(const PeriodicField& omega);

/// Spectral curl d u_y/dx - d u_x/dy and divergence of a 2-channel field.
PeriodicField curl(const PeriodicField& velocity);
PeriodicField divergence(const PeriodicField& velocity);

struct TrajectoryMeta {
  std::string solver;
  std::uint64_t seed = 0;
  int remap_every = 0;
  double solver_dt = 0.0;
};

/// Frames at t_k = k * dt plus the submaps advancing frame k to frame k + 1
/// (submaps[k] = phi_[t_{k+1}, t_k]).
struct Trajectory {
  Grid grid;
  double dt = 0.0;
  std::vector<PeriodicField> frames;
  MapChain submaps;
  std::vector<PeriodicField> velocity;  // in-memory only, Euler runs
  TrajectoryMeta meta;

  explicit Trajectory(const Grid& g) : grid(g) {}
  double time(std::size_t k) const { return static_cast<double>(k) * dt; }
};

/// Backward map phi_[t, t0] advanced one semi-Lagrangian step at a time: the stencil points
/// around each vertex are traced back along characteristics with SSP-RK3 and the previous
/// map is evaluated at the feet.
class BackwardMapIntegrator {
 public:
  BackwardMapIntegrator(const Grid& grid, double fd_eps);

  /// Advances the map from time t to t + dt.
  void step(const VelocitySampler& vel, double t, double dt);

  const DiffeoMap& map() const { return map_; }
  void reset() { map_ = identity_map(grid_); }

 private:
  Grid grid_;
  double fd_eps_;
  DiffeoMap map_;
  bool cfl_warned_ = false;
};

/// Foot points of backward characteristics over [t, t + dt] (SSP-RK3).
Points trace_back(const VelocitySampler& vel, const Points& points, double t, double dt);

DiffeoMap integrate_backward_map(const VelocitySampler& vel, double t0, double t1, double dt, const Grid& grid,
                                 double fd_eps);

struct CmmConfig {
  double T = 1.0;
  double dt = 1e-3;
  int remap_every = 10;
  double fd_eps = 0.0;  // 0 selects dx / 100
};

/// Characteristic-mapping transport of u0 by a prescribed velocity. Frames are stored every
/// remap_every steps, aligned with the submaps.
Trajectory advect_cmm(const VelocitySampler& vel, const ScalarSampler& u0, const Grid& grid, const CmmConfig& cfg);

/// Characteristic-mapping solver for 2D incompressible Euler in vorticity form, w(t) = w0 o phi_[t,0].
/// `omega0_sampler` evaluates w0 off-grid; by default the bilinear interpolant of `omega0`.
/// Throws std::runtime_error if max|w| exceeds 10x its initial value.
Trajectory euler_cmm(const PeriodicField& omega0, const CmmConfig& cfg, ScalarSampler omega0_sampler = {});

/// w0(x) = sum_{0 < |k| <= K} a_k cos(k.x) + b_k sin(k.x), a_k, b_k ~ U[-1, 1].
class TrigSeries {
 public:
  TrigSeries(int K, std::uint64_t seed);

  double operator()(double x, double y) const;
  ScalarSampler sampler() const;
  PeriodicField sample(const Grid& grid) const;
  int band_limit() const { return K_; }

 private:
  int K_;
  std::vector<std::array<int, 2>> k_;
  std::vector<double> a_;
  std::vector<double> b_;
};

PeriodicField random_vorticity(const Grid& grid, int K, std::uint64_t seed);

/// Indicator of a disk with a rectangular slot cut upward from its lowest point; distances
/// are measured periodically.
ScalarSampler slotted_cylinder(const Eigen::Vector2d& center, double radius, double slot_width, double slot_depth);

}  // namespace dflow
