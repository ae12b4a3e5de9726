#include "dflow/grid.hpp"

#include "dflow/errors.hpp"

#include <string>

namespace dflow {

Grid::Grid(int nx, int ny) : nx_(nx), ny_(ny) {
  if (nx < 4 || ny < 4 || nx % 2 != 0 || ny % 2 != 0) {
    throw DomainError("grid dimensions must be even and >= 4, got " + std::to_string(nx) + "x" +
                      std::to_string(ny));
  }
}

Points Grid::vertices() const {
  Points p(2, static_cast<Eigen::Index>(size()));
  Eigen::Index k = 0;
  for (int j = 0; j < ny_; ++j) {
    const double yj = y(j);
    for (int i = 0; i < nx_; ++i, ++k) {
      p(0, k) = x(i);
      p(1, k) = yj;
    }
  }
  return p;
}

PeriodicField::PeriodicField(const Grid& grid, int channels) : grid_(grid) {
  if (channels < 1) throw InvalidFieldError("field needs at least one channel");
  planes_.assign(channels, Plane::Zero(grid.ny(), grid.nx()));
}

PeriodicField::PeriodicField(const Grid& grid, std::vector<Plane> planes)
    : grid_(grid), planes_(std::move(planes)) {
  if (planes_.empty()) throw InvalidFieldError("field needs at least one channel");
  for (const auto& p : planes_) {
    if (p.rows() != grid.ny() || p.cols() != grid.nx()) {
      throw InvalidFieldError("plane shape does not match grid");
    }
  }
}

PeriodicField PeriodicField::sample(const Grid& grid, const std::function<double(double, double)>& f) {
  PeriodicField out(grid, 1);
  for (int j = 0; j < grid.ny(); ++j) {
    for (int i = 0; i < grid.nx(); ++i) out.scalar()(j, i) = f(grid.x(i), grid.y(j));
  }
  return out;
}

PeriodicField PeriodicField::sample(const Grid& grid, const ScalarSampler& f) {
  PeriodicField out(grid, 1);
  const Eigen::VectorXd values = f(grid.vertices());
  out.flat() = values;
  return out;
}

double PeriodicField::min() const {
  double m = planes_[0].minCoeff();
  for (const auto& p : planes_) m = std::min(m, p.minCoeff());
  return m;
}

double PeriodicField::max() const {
  double m = planes_[0].maxCoeff();
  for (const auto& p : planes_) m = std::max(m, p.maxCoeff());
  return m;
}

bool PeriodicField::all_finite() const {
  for (const auto& p : planes_) {
    if (!p.allFinite()) return false;
  }
  return true;
}

void PeriodicField::require_finite(const char* where) const {
  if (!all_finite()) throw InvalidFieldError(std::string(where) + ": field contains non-finite values");
}

void PeriodicField::require_scalar(const char* where) const {
  if (channels() != 1) throw InvalidFieldError(std::string(where) + ": expected a scalar field");
}

PeriodicField restrict_to(const PeriodicField& fine, const Grid& coarse) {
  if (!coarse.nests_in(fine.grid())) throw DomainError("restrict_to: grids are not nested");
  const int sx = fine.grid().nx() / coarse.nx();
  const int sy = fine.grid().ny() / coarse.ny();
  std::vector<Plane> planes;
  for (int c = 0; c < fine.channels(); ++c) {
    Plane p(coarse.ny(), coarse.nx());
    for (int j = 0; j < coarse.ny(); ++j) {
      for (int i = 0; i < coarse.nx(); ++i) p(j, i) = fine.channel(c)(j * sy, i * sx);
    }
    planes.push_back(std::move(p));
  }
  return {coarse, std::move(planes)};
}

double pairwise_sum(const double* data, std::size_t n) {
  if (n <= 16) {
    double s = 0.0;
    for (std::size_t i = 0; i < n; ++i) s += data[i];
    return s;
  }
  const std::size_t half = n / 2;
  return pairwise_sum(data, half) + pairwise_sum(data + half, n - half);
}

}  // namespace dflow
