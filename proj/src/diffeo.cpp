#include "dflow/diffeo.hpp"

#include "dflow/errors.hpp"
#include "dflow/interp.hpp"
#include "dflow/parallel.hpp"

#include <Eigen/LU>

#include <cmath>

namespace dflow {

namespace {

void check_shape(const Grid& g, const Plane& p) {
  if (p.rows() != g.ny() || p.cols() != g.nx()) throw InvalidFieldError("map plane shape does not match grid");
}

Eigen::Index cols(const Points& p) { return p.cols(); }

}  // namespace

DiffeoMap::DiffeoMap(const Grid& grid) : grid_(grid), comp_{HermiteData::zeros(grid), HermiteData::zeros(grid)} {}

DiffeoMap::DiffeoMap(const Grid& grid, HermiteData vx, HermiteData vy)
    : grid_(grid), comp_{std::move(vx), std::move(vy)} {
  for (const auto& c : comp_) {
    check_shape(grid, c.value);
    check_shape(grid, c.dx);
    check_shape(grid, c.dy);
    check_shape(grid, c.dxy);
  }
  if (!all_finite()) throw InvalidFieldError("map contains non-finite Hermite data");
}

DiffeoMap::DiffeoMap(const Grid& grid, std::array<Plane, kPlanes> p)
    : DiffeoMap(grid, HermiteData{std::move(p[0]), std::move(p[1]), std::move(p[2]), std::move(p[3])},
                HermiteData{std::move(p[4]), std::move(p[5]), std::move(p[6]), std::move(p[7])}) {}

const Plane& DiffeoMap::plane(int k) const {
  const HermiteData& c = comp_.at(k / 4);
  switch (k % 4) {
    case 0:
      return c.value;
    case 1:
      return c.dx;
    case 2:
      return c.dy;
    default:
      return c.dxy;
  }
}

Eigen::Matrix2d DiffeoMap::displacement_gradient(double x, double y) const {
  const HermiteStencil st(grid_, x, y);
  const auto dwx = hermite_weights_dx(st.sx, grid_.dx());
  const auto dwy = hermite_weights_dx(st.sy, grid_.dy());
  Eigen::Matrix2d g;
  for (int c = 0; c < 2; ++c) {
    g(c, 0) = st.combine(comp_[c], dwx, st.wy);
    g(c, 1) = st.combine(comp_[c], st.wx, dwy);
  }
  return g;
}

double DiffeoMap::max_vertex_displacement() const {
  return (comp_[0].value.square() + comp_[1].value.square()).sqrt().maxCoeff();
}

DiffeoMap identity_map(const Grid& grid) { return DiffeoMap(grid); }

DiffeoMap translation_map(const Grid& grid, const Eigen::Vector2d& shift) {
  if (!shift.allFinite()) throw InvalidFieldError("translation_map: non-finite shift");
  HermiteData vx = HermiteData::zeros(grid);
  HermiteData vy = HermiteData::zeros(grid);
  vx.value.setConstant(shift.x());
  vy.value.setConstant(shift.y());
  return {grid, std::move(vx), std::move(vy)};
}

DiffeoMap sample_map(const Grid& grid, const std::function<std::array<double, 8>(double, double)>& f) {
  std::array<Plane, 8> planes;
  for (auto& p : planes) p.resize(grid.ny(), grid.nx());
  for (int j = 0; j < grid.ny(); ++j) {
    for (int i = 0; i < grid.nx(); ++i) {
      const auto v = f(grid.x(i), grid.y(j));
      for (int k = 0; k < 8; ++k) planes[k](j, i) = v[k];
    }
  }
  return {grid, std::move(planes)};
}

DiffeoMap map_from_values(const Grid& grid, const Plane& vx, const Plane& vy) {
  return {grid, hermite_from_samples(grid, vx), hermite_from_samples(grid, vy)};
}

Points displace(const DiffeoMap& map, const Points& points) {
  Points out(2, cols(points));
  parallel_for(static_cast<std::size_t>(cols(points)), [&](std::size_t b, std::size_t e) {
    for (auto k = static_cast<Eigen::Index>(b); k < static_cast<Eigen::Index>(e); ++k) {
      const Eigen::Vector2d v = map.displacement(points(0, k), points(1, k));
      out(0, k) = points(0, k) + v.x();
      out(1, k) = points(1, k) + v.y();
    }
  });
  return out;
}

Points evaluate(const DiffeoMap& map, const Points& points) {
  Points out = displace(map, points);
  for (Eigen::Index k = 0; k < out.cols(); ++k) {
    out(0, k) = wrap_angle(out(0, k));
    out(1, k) = wrap_angle(out(1, k));
  }
  return out;
}

std::vector<Eigen::Matrix2d> differential(const DiffeoMap& map, const Points& points) {
  std::vector<Eigen::Matrix2d> out(static_cast<std::size_t>(cols(points)));
  for (Eigen::Index k = 0; k < points.cols(); ++k) {
    out[k] = Eigen::Matrix2d::Identity() + map.displacement_gradient(points(0, k), points(1, k));
  }
  return out;
}

Eigen::VectorXd jacobian_det(const DiffeoMap& map, const Points& points) {
  Eigen::VectorXd det(points.cols());
  for (Eigen::Index k = 0; k < points.cols(); ++k) {
    const Eigen::Matrix2d d = Eigen::Matrix2d::Identity() + map.displacement_gradient(points(0, k), points(1, k));
    det(k) = d.determinant();
  }
  return det;
}

bool orientation_preserving(const DiffeoMap& map) {
  const Grid& g = map.grid();
  Points centers = g.vertices();
  centers.row(0).array() += 0.5 * g.dx();
  centers.row(1).array() += 0.5 * g.dy();
  return (jacobian_det(map, centers).array() > 0.0).all();
}

MapChain::MapChain(std::vector<DiffeoMap> maps) {
  for (auto& m : maps) push_back(std::move(m));
}

void MapChain::push_back(DiffeoMap map) { push_back(std::make_shared<const DiffeoMap>(std::move(map))); }

void MapChain::push_back(std::shared_ptr<const DiffeoMap> map) {
  if (!maps_.empty() && !(maps_.front()->grid() == map->grid())) {
    throw ChainError("all maps in a chain must share one grid");
  }
  maps_.push_back(std::move(map));
}

std::optional<Grid> MapChain::grid() const {
  if (maps_.empty()) return std::nullopt;
  return maps_.front()->grid();
}

MapChain MapChain::slice(std::size_t first, std::size_t count) const {
  if (first + count > maps_.size()) throw ChainError("chain slice out of range");
  MapChain out;
  for (std::size_t i = first; i < first + count; ++i) out.maps_.push_back(maps_[i]);
  return out;
}

Points chain_displace(const MapChain& chain, const Points& points) {
  Points q = points;
  const std::size_t n = static_cast<std::size_t>(cols(points));
  parallel_for(n, [&](std::size_t b, std::size_t e) {
    for (std::size_t m = chain.size(); m-- > 0;) {
      const DiffeoMap& map = chain[m];
      for (auto k = static_cast<Eigen::Index>(b); k < static_cast<Eigen::Index>(e); ++k) {
        const Eigen::Vector2d v = map.displacement(q(0, k), q(1, k));
        q(0, k) += v.x();
        q(1, k) += v.y();
      }
    }
  });
  return q;
}

Points chain_evaluate(const MapChain& chain, const Points& points) {
  Points q = chain_displace(chain, points);
  for (Eigen::Index k = 0; k < q.cols(); ++k) {
    q(0, k) = wrap_angle(q(0, k));
    q(1, k) = wrap_angle(q(1, k));
  }
  return q;
}

Points chain_evaluate_with_det(const MapChain& chain, const Points& points, Eigen::VectorXd& det) {
  Points q = points;
  det = Eigen::VectorXd::Ones(points.cols());
  parallel_for(static_cast<std::size_t>(cols(points)), [&](std::size_t b, std::size_t e) {
    for (std::size_t m = chain.size(); m-- > 0;) {
      const DiffeoMap& map = chain[m];
      for (auto k = static_cast<Eigen::Index>(b); k < static_cast<Eigen::Index>(e); ++k) {
        const Eigen::Matrix2d d = Eigen::Matrix2d::Identity() + map.displacement_gradient(q(0, k), q(1, k));
        det(k) *= d.determinant();
        const Eigen::Vector2d v = map.displacement(q(0, k), q(1, k));
        q(0, k) += v.x();
        q(1, k) += v.y();
      }
    }
  });
  for (Eigen::Index k = 0; k < q.cols(); ++k) {
    q(0, k) = wrap_angle(q(0, k));
    q(1, k) = wrap_angle(q(1, k));
  }
  return q;
}

std::vector<Eigen::Matrix2d> chain_differential(const MapChain& chain, const Points& points) {
  std::vector<Eigen::Matrix2d> jac(static_cast<std::size_t>(cols(points)), Eigen::Matrix2d::Identity());
  Points q = points;
  for (std::size_t m = chain.size(); m-- > 0;) {
    const DiffeoMap& map = chain[m];
    for (Eigen::Index k = 0; k < q.cols(); ++k) {
      const Eigen::Matrix2d d = Eigen::Matrix2d::Identity() + map.displacement_gradient(q(0, k), q(1, k));
      jac[k] = d * jac[k];
      const Eigen::Vector2d v = map.displacement(q(0, k), q(1, k));
      q(0, k) += v.x();
      q(1, k) += v.y();
    }
  }
  return jac;
}

namespace {

// `disp` returns the displacement at each input point.
DiffeoMap reconstruct_from_displacement(const Grid& grid, double fd_eps, const PointMap& disp_fn) {
  const Points centers = grid.vertices();
  const Eigen::Index n = centers.cols();
  // Columns: [centers | (+,+) | (+,-) | (-,+) | (-,-)]
  Points stencil(2, 5 * n);
  stencil.leftCols(n) = centers;
  const std::array<std::array<double, 2>, 4> offsets{{{1, 1}, {1, -1}, {-1, 1}, {-1, -1}}};
  for (int s = 0; s < 4; ++s) {
    auto block = stencil.middleCols((s + 1) * n, n);
    block.row(0) = centers.row(0).array() + offsets[s][0] * fd_eps;
    block.row(1) = centers.row(1).array() + offsets[s][1] * fd_eps;
  }
  const Points disp = disp_fn(stencil);

  std::array<Plane, 8> planes;
  for (auto& p : planes) p.resize(grid.ny(), grid.nx());
  const double inv_4h = 1.0 / (4.0 * fd_eps);
  const double inv_4h2 = 1.0 / (4.0 * fd_eps * fd_eps);
  for (Eigen::Index k = 0; k < n; ++k) {
    const auto j = static_cast<int>(k / grid.nx());
    const auto i = static_cast<int>(k % grid.nx());
    for (int c = 0; c < 2; ++c) {
      const double pp = disp(c, n + k), pm = disp(c, 2 * n + k), mp = disp(c, 3 * n + k), mm = disp(c, 4 * n + k);
      planes[4 * c + 0](j, i) = disp(c, k);
      planes[4 * c + 1](j, i) = ((pp + pm) - (mp + mm)) * inv_4h;
      planes[4 * c + 2](j, i) = ((pp + mp) - (pm + mm)) * inv_4h;
      planes[4 * c + 3](j, i) = ((pp - pm) - (mp - mm)) * inv_4h2;
    }
  }
  return {grid, std::move(planes)};
}

}  // namespace

DiffeoMap reconstruct_map(const Grid& grid, double fd_eps, const PointMap& f) {
  if (!(fd_eps > 0.0)) throw DomainError("fd_eps must be positive");
  return reconstruct_from_displacement(grid, fd_eps, [&](const Points& p) -> Points { return f(p) - p; });
}

DiffeoMap project(const MapChain& chain, const Grid& grid, double fd_eps) {
  if (!(fd_eps > 0.0)) throw DomainError("project: fd_eps must be positive");
  // Displacements are summed along the path rather than taken as image minus start point.
  return reconstruct_from_displacement(grid, fd_eps, [&](const Points& p) {
    Points q = p;
    Points d = Points::Zero(2, p.cols());
    parallel_for(static_cast<std::size_t>(p.cols()), [&](std::size_t b, std::size_t e) {
      for (std::size_t m = chain.size(); m-- > 0;) {
        const DiffeoMap& map = chain[m];
        for (auto k = static_cast<Eigen::Index>(b); k < static_cast<Eigen::Index>(e); ++k) {
          const Eigen::Vector2d v = map.displacement(q(0, k), q(1, k));
          q(0, k) += v.x();
          q(1, k) += v.y();
          d(0, k) += v.x();
          d(1, k) += v.y();
        }
      }
    });
    return d;
  });
}

}  // namespace dflow
