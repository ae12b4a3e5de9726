#pragma once

#include "dflow/grid.hpp"
#include "dflow/hermite.hpp"

#include <Eigen/Core>

#include <array>
#include <functional>
#include <memory>
#include <optional>
#include <vector>

namespace dflow {

/// Element of the conforming space D_h: phi = (id + v) mod 2*pi, where v is a periodic C^1
/// bicubic Hermite displacement. Stores displacements only; wrapping happens on output.
///
/// Plane order (also the archive order):
///   0 v_x, 1 d/dx v_x, 2 d/dy v_x, 3 d2/dxdy v_x, 4 v_y, 5 d/dx v_y, 6 d/dy v_y, 7 d2/dxdy v_y
/// Derivative planes hold true partial derivatives, not slopes scaled by the cell size.
class DiffeoMap {
 public:
  static constexpr int kPlanes = 8;

  /// Identity (zero displacement).
  explicit DiffeoMap(const Grid& grid);
  DiffeoMap(const Grid& grid, HermiteData vx, HermiteData vy);
  DiffeoMap(const Grid& grid, std::array<Plane, kPlanes> planes);

  const Grid& grid() const { return grid_; }
  const HermiteData& component(int c) const { return comp_[c]; }
  const Plane& plane(int k) const;

  /// Displacement v at a point (periodic lookup).
  Eigen::Vector2d displacement(double x, double y) const {
    const HermiteStencil st(grid_, x, y);
    return {st.apply(comp_[0]), st.apply(comp_[1])};
  }

  /// Dv at a point, rows = components, columns = (d/dx, d/dy).
  Eigen::Matrix2d displacement_gradient(double x, double y) const;

  bool all_finite() const { return comp_[0].all_finite() && comp_[1].all_finite(); }

  /// Largest stored displacement magnitude over the vertices.
  double max_vertex_displacement() const;

 private:
  Grid grid_;
  std::array<HermiteData, 2> comp_;
};

DiffeoMap identity_map(const Grid& grid);

/// Constant displacement (sx, sy); derivative planes are zero.
DiffeoMap translation_map(const Grid& grid, const Eigen::Vector2d& shift);

/// Hermite data of an analytic displacement. `f(x, y)` returns the 8 functionals in plane order.
DiffeoMap sample_map(const Grid& grid, const std::function<std::array<double, 8>(double, double)>& f);

/// Map whose vertex displacement values are given and whose derivative planes are
/// obtained by spectral differentiation of those values.
DiffeoMap map_from_values(const Grid& grid, const Plane& vx, const Plane& vy);

/// (p + v(p)) mod 2*pi.
Points evaluate(const DiffeoMap& map, const Points& points);

/// p + v(p) without wrapping; keeps composite displacements continuous.
Points displace(const DiffeoMap& map, const Points& points);

std::vector<Eigen::Matrix2d> differential(const DiffeoMap& map, const Points& points);
Eigen::VectorXd jacobian_det(const DiffeoMap& map, const Points& points);

/// det(D phi) > 0 at every cell center.
bool orientation_preserving(const DiffeoMap& map);

/// Backward map phi_1 o phi_2 o ... o phi_k stored oldest first. Maps are shared and
/// immutable, so copying a chain is cheap.
class MapChain {
 public:
  MapChain() = default;
  explicit MapChain(std::vector<DiffeoMap> maps);

  void push_back(DiffeoMap map);
  void push_back(std::shared_ptr<const DiffeoMap> map);

  std::size_t size() const { return maps_.size(); }
  bool empty() const { return maps_.empty(); }
  const DiffeoMap& operator[](std::size_t i) const { return *maps_[i]; }
  const DiffeoMap& back() const { return *maps_.back(); }
  const std::shared_ptr<const DiffeoMap>& shared(std::size_t i) const { return maps_[i]; }

  /// Grid shared by all maps; empty for the identity chain.
  std::optional<Grid> grid() const;

  /// phi_{first} o ... o phi_{first+count-1}.
  MapChain slice(std::size_t first, std::size_t count) const;

 private:
  std::vector<std::shared_ptr<const DiffeoMap>> maps_;
};

/// Applies the newest map first, then successively older maps; output wrapped mod 2*pi.
Points chain_evaluate(const MapChain& chain, const Points& points);

/// Same composition without wrapping.
Points chain_displace(const MapChain& chain, const Points& points);

/// Composite evaluation that also accumulates det(D phi) along the evaluation path.
Points chain_evaluate_with_det(const MapChain& chain, const Points& points, Eigen::VectorXd& det);

/// Differential of the composite map via the chain rule.
std::vector<Eigen::Matrix2d> chain_differential(const MapChain& chain, const Points& points);

/// Function returning unwrapped images of a batch of points.
using PointMap = std::function<Points(const Points&)>;

/// Hermite data of the displacement of `f` at the vertices of `grid`: the value from the
/// vertex itself, first and mixed derivatives from central differences on the 4 points
/// (x +- h, y +- h).
DiffeoMap reconstruct_map(const Grid& grid, double fd_eps, const PointMap& f);

/// Projection onto D_h of the composite map of `chain`.
DiffeoMap project(const MapChain& chain, const Grid& grid, double fd_eps);

/// Default finite-difference spacing for projections: dx / 100.
inline double default_fd_eps(const Grid& g) { return std::min(g.dx(), g.dy()) / 100.0; }

}  // namespace dflow
