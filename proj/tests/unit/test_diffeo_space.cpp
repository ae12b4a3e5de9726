#include "dflow/diffeo.hpp"
#include "dflow/errors.hpp"

#include <Eigen/LU>
#include <doctest.h>

#include <cmath>
#include <random>

using namespace dflow;
using std::numbers::pi;

namespace {

Points random_points(Eigen::Index n, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(0.0, kTwoPi);
  Points p(2, n);
  for (Eigen::Index k = 0; k < n; ++k) p.col(k) << u(rng), u(rng);
  return p;
}

// Periodic distance between two point sets, per coordinate.
double torus_distance(const Points& a, const Points& b) {
  double d = 0.0;
  for (Eigen::Index k = 0; k < a.cols(); ++k) {
    for (int c = 0; c < 2; ++c) {
      const double r = std::remainder(a(c, k) - b(c, k), kTwoPi);
      d = std::max(d, std::abs(r));
    }
  }
  return d;
}

// v = a (sin(x + y), cos(2x) sin(y)) with analytic Hermite data.
DiffeoMap smooth_map(const Grid& g, double a) {
  return sample_map(g, [a](double x, double y) -> std::array<double, 8> {
    return {a * std::sin(x + y),
            a * std::cos(x + y),
            a * std::cos(x + y),
            -a * std::sin(x + y),
            a * std::cos(2 * x) * std::sin(y),
            -2 * a * std::sin(2 * x) * std::sin(y),
            a * std::cos(2 * x) * std::cos(y),
            -2 * a * std::sin(2 * x) * std::cos(y)};
  });
}

// w = b (sin(y), sin(x) cos(y)).
DiffeoMap other_map(const Grid& g, double b) {
  return sample_map(g, [b](double x, double y) -> std::array<double, 8> {
    return {b * std::sin(y), 0.0, b * std::cos(y), 0.0,
            b * std::sin(x) * std::cos(y), b * std::cos(x) * std::cos(y), -b * std::sin(x) * std::sin(y),
            -b * std::cos(x) * std::sin(y)};
  });
}

Eigen::Vector2d exact_v(double a, double x, double y) { return {a * std::sin(x + y), a * std::cos(2 * x) * std::sin(y)}; }
Eigen::Vector2d exact_w(double b, double x, double y) { return {b * std::sin(y), b * std::sin(x) * std::cos(y)}; }

}  // namespace

TEST_CASE("identity map") {
  const Grid g(16);
  const DiffeoMap id = identity_map(g);
  Points p = random_points(200, 1);
  p.row(0).array() -= kTwoPi;
  p.row(1).array() += 2 * kTwoPi;
  const Points q = evaluate(id, p);
  for (Eigen::Index k = 0; k < p.cols(); ++k) {
    CHECK(q(0, k) == doctest::Approx(wrap_angle(p(0, k))).epsilon(1e-14));
    CHECK(q(1, k) == doctest::Approx(wrap_angle(p(1, k))).epsilon(1e-14));
  }
  const Eigen::VectorXd det = jacobian_det(id, p);
  CHECK((det.array() == 1.0).all());
  CHECK(orientation_preserving(id));
  const DiffeoMap twice = project(MapChain({id, id}), g, default_fd_eps(g));
  CHECK(twice.max_vertex_displacement() == 0.0);
}

TEST_CASE("translation maps") {
  const Grid g(16);
  const double dt = 0.01;
  Points origin = Points::Zero(2, 1);
  const Points q = evaluate(translation_map(g, {kTwoPi * dt, 0.0}), origin);
  CHECK(q(0, 0) == doctest::Approx(0.0628318530717958).epsilon(1e-14));
  CHECK(q(1, 0) == 0.0);

  const Points v = g.vertices();
  CHECK(torus_distance(evaluate(translation_map(g, {0.0, 0.0}), v), v) == 0.0);
  CHECK(torus_distance(evaluate(translation_map(g, {kTwoPi, 0.0}), v), v) < 1e-14);

  const Eigen::Vector2d s{0.3, -1.2};
  Points shifted = v;
  shifted.colwise() += s;
  CHECK(torus_distance(evaluate(translation_map(g, s), v), shifted) < 1e-14);

  const DiffeoMap t = translation_map(g, s);
  for (int k : {1, 2, 3, 5, 6, 7}) CHECK(t.plane(k).abs().maxCoeff() == 0.0);
  for (const auto& d : differential(t, random_points(50, 2))) CHECK(d.isApprox(Eigen::Matrix2d::Identity()));
  CHECK((jacobian_det(t, random_points(50, 3)).array() == 1.0).all());
  CHECK_THROWS_AS(translation_map(g, {std::nan(""), 0.0}), InvalidFieldError);
}

TEST_CASE("evaluate with analytic Hermite data") {
  const Grid g(64);
  const double a = 0.1;
  const DiffeoMap m = sample_map(g, [a](double x, double) -> std::array<double, 8> {
    return {a * std::sin(x), a * std::cos(x), 0, 0, 0, 0, 0, 0};
  });
  Points p(2, 3);
  p << pi / 2, pi / 2 + 0.013, 1.234, 0.7, 2.9, 5.1;
  const Points q = evaluate(m, p);
  CHECK(std::abs(q(0, 0) - (pi / 2 + 0.1)) < 5e-7);
  CHECK(q(1, 0) == doctest::Approx(0.7));
  for (Eigen::Index k = 0; k < p.cols(); ++k) CHECK(std::abs(q(0, k) - (p(0, k) + a * std::sin(p(0, k)))) < 5e-7);

  const Points r = random_points(500, 4);
  const Eigen::VectorXd det = jacobian_det(m, r);
  for (Eigen::Index k = 0; k < r.cols(); ++k) CHECK(std::abs(det(k) - (1 + a * std::cos(r(0, k)))) < 1e-5);
  CHECK(orientation_preserving(m));

  const DiffeoMap fold = sample_map(g, [](double x, double) -> std::array<double, 8> {
    return {2 * std::sin(x), 2 * std::cos(x), 0, 0, 0, 0, 0, 0};
  });
  CHECK_FALSE(orientation_preserving(fold));
}

TEST_CASE("differential against central differences") {
  const Grid g(32);
  const DiffeoMap m = smooth_map(g, 0.2);
  const Points p = random_points(40, 5);
  const auto jac = differential(m, p);
  const double h = 1e-6;
  for (Eigen::Index k = 0; k < p.cols(); ++k) {
    for (int c = 0; c < 2; ++c) {
      Points pp = p.col(k), pm = p.col(k);
      pp(c, 0) += h;
      pm(c, 0) -= h;
      const Eigen::Vector2d fd = (displace(m, pp) - displace(m, pm)).col(0) / (2 * h);
      CHECK((jac[k].col(c) - fd).norm() < 1e-7);
    }
  }
}

TEST_CASE("Hermite map interpolation order") {
  const auto f = [](double x, double y) { return std::sin(x) * std::cos(2 * y); };
  const auto err = [&](int n) {
    const Grid g(n);
    const DiffeoMap m = sample_map(g, [](double x, double y) -> std::array<double, 8> {
      return {std::sin(x) * std::cos(2 * y), std::cos(x) * std::cos(2 * y), -2 * std::sin(x) * std::sin(2 * y),
              -2 * std::cos(x) * std::sin(2 * y), 0, 0, 0, 0};
    });
    const Points p = random_points(4000, 6);
    const Points d = displace(m, p) - p;
    double e = 0.0;
    for (Eigen::Index k = 0; k < p.cols(); ++k) e = std::max(e, std::abs(d(0, k) - f(p(0, k), p(1, k))));
    return e;
  };
  CHECK(err(32) / err(64) >= 14.0);
}

TEST_CASE("chains") {
  const Grid g(32);
  const Points p = random_points(300, 7);

  MapChain empty;
  CHECK(empty.empty());
  CHECK_FALSE(empty.grid().has_value());
  CHECK(torus_distance(chain_evaluate(empty, p), p) == 0.0);

  const MapChain tr({translation_map(g, {0.4, 0.0}), translation_map(g, {1.1, 0.0})});
  Points expect = p;
  expect.row(0).array() += 1.5;
  CHECK(torus_distance(chain_evaluate(tr, p), expect) < 1e-14);
  const MapChain swapped({translation_map(g, {1.1, 0.0}), translation_map(g, {0.4, 0.0})});
  CHECK(torus_distance(chain_evaluate(swapped, p), expect) < 1e-14);

  const DiffeoMap v = smooth_map(g, 0.15), w = other_map(g, 0.1);
  CHECK(torus_distance(chain_evaluate(MapChain({v}), p), evaluate(v, p)) == 0.0);

  // [w, v] applies v first, then w
  const Points nested = evaluate(w, evaluate(v, p));
  CHECK(torus_distance(chain_evaluate(MapChain({w, v}), p), nested) < 1e-14);

  // composite against the analytic maps
  double err = 0.0;
  const Points c = chain_displace(MapChain({w, v}), p);
  for (Eigen::Index k = 0; k < p.cols(); ++k) {
    const Eigen::Vector2d y = p.col(k) + exact_v(0.15, p(0, k), p(1, k));
    const Eigen::Vector2d z = y + exact_w(0.1, y.x(), y.y());
    err = std::max(err, (c.col(k) - z).cwiseAbs().maxCoeff());
  }
  CHECK(err < 1e-5);

  MapChain mixed;
  mixed.push_back(identity_map(g));
  CHECK_THROWS_AS(mixed.push_back(identity_map(Grid(16))), ChainError);
  CHECK_THROWS_AS(MapChain({identity_map(g), identity_map(Grid(8))}), ChainError);
  CHECK_THROWS_AS(tr.slice(1, 2), ChainError);
  CHECK(tr.slice(1, 1).size() == 1);
}

TEST_CASE("chain determinant and differential") {
  const Grid g(32);
  const DiffeoMap v = smooth_map(g, 0.15), w = other_map(g, 0.1);
  const MapChain chain({w, v});
  const Points p = random_points(100, 8);
  Eigen::VectorXd det;
  const Points q = chain_evaluate_with_det(chain, p, det);
  CHECK(torus_distance(q, chain_evaluate(chain, p)) == 0.0);
  const auto jac = chain_differential(chain, p);
  const Eigen::VectorXd dv = jacobian_det(v, p);
  const Eigen::VectorXd dw = jacobian_det(w, displace(v, p));
  for (Eigen::Index k = 0; k < p.cols(); ++k) {
    CHECK(det(k) == doctest::Approx(dv(k) * dw(k)).epsilon(1e-13));
    CHECK(jac[k].determinant() == doctest::Approx(det(k)).epsilon(1e-12));
  }
}

TEST_CASE("projection") {
  const Grid g(32);
  const double eps = default_fd_eps(g);
  CHECK(eps == doctest::Approx(g.dx() / 100));

  const DiffeoMap v = smooth_map(g, 0.15);
  const DiffeoMap pv = project(MapChain({v}), g, eps);
  for (int k : {0, 4}) CHECK((pv.plane(k) - v.plane(k)).abs().maxCoeff() < 1e-10);
  for (int k : {1, 2, 3, 5, 6, 7}) CHECK((pv.plane(k) - v.plane(k)).abs().maxCoeff() < 20 * eps * eps);

  const DiffeoMap pt = project(MapChain({translation_map(g, {0.3, 0.1}), translation_map(g, {0.2, -0.4})}), g, eps);
  CHECK((pt.plane(0) - 0.5).abs().maxCoeff() < 1e-14);
  CHECK((pt.plane(4) + 0.3).abs().maxCoeff() < 1e-14);
  for (int k : {1, 2, 3, 5, 6, 7}) CHECK(pt.plane(k).abs().maxCoeff() < 1e-12);

  CHECK_THROWS_AS(project(MapChain({v}), g, 0.0), DomainError);
  CHECK_THROWS_AS(project(MapChain({v}), g, -1e-3), DomainError);
}

TEST_CASE("projection of a composite converges at fourth order") {
  const Points p = random_points(10000, 9);
  std::vector<double> errs;
  for (int n : {32, 64, 128}) {
    const Grid g(n);
    const MapChain chain({other_map(g, 0.1), smooth_map(g, 0.15)});
    const DiffeoMap m = project(chain, g, default_fd_eps(g));
    errs.push_back(torus_distance(evaluate(m, p), chain_evaluate(chain, p)));
  }
  CAPTURE(errs[0]);
  CAPTURE(errs[1]);
  CAPTURE(errs[2]);
  CHECK(errs[0] / errs[1] > 12.0);
  CHECK(errs[1] / errs[2] > 12.0);
  CHECK(errs[2] < 1e-6);
}

TEST_CASE("maps from vertex values") {
  const Grid g(32);
  Plane vx(g.ny(), g.nx()), vy(g.ny(), g.nx());
  for (int j = 0; j < g.ny(); ++j) {
    for (int i = 0; i < g.nx(); ++i) {
      vx(j, i) = 0.1 * std::sin(g.x(i) + g.y(j));
      vy(j, i) = 0.1 * std::cos(2 * g.x(i)) * std::sin(g.y(j));
    }
  }
  const DiffeoMap m = map_from_values(g, vx, vy);
  const DiffeoMap ref = smooth_map(g, 0.1);
  for (int k = 0; k < DiffeoMap::kPlanes; ++k) CHECK((m.plane(k) - ref.plane(k)).abs().maxCoeff() < 1e-12);
  CHECK(m.max_vertex_displacement() == doctest::Approx(std::max(vx.abs().maxCoeff(), vy.abs().maxCoeff())).epsilon(0.5));

  std::array<Plane, 8> planes;
  for (auto& pl : planes) pl = Plane::Zero(g.ny(), g.nx());
  planes[2](3, 4) = std::nan("");
  CHECK_THROWS_AS(DiffeoMap(g, planes), InvalidFieldError);
  planes[2] = Plane::Zero(4, 4);
  CHECK_THROWS_AS(DiffeoMap(g, planes), InvalidFieldError);
}
