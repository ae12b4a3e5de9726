#include "dflow/diagnostics.hpp"
#include "dflow/errors.hpp"
#include "dflow/interp.hpp"
#include "dflow/log.hpp"
#include "dflow/rollout.hpp"
#include "dflow/solvers.hpp"
#include "dflow/spectral.hpp"

#include <doctest.h>

#include <cmath>

using namespace dflow;
using std::numbers::pi;

namespace {

struct QuietWarnings {
  QuietWarnings() { set_warnings_enabled(false); }
  ~QuietWarnings() { set_warnings_enabled(true); }
};

double rel_l2(const PeriodicField& a, const PeriodicField& b) {
  return std::sqrt((a.scalar() - b.scalar()).square().sum() / b.scalar().square().sum());
}

// Classical RK4 integration of dx/dt = -v(x, t) backwards from t1 to t0.
Eigen::Vector2d rk4_foot(const std::function<Eigen::Vector2d(double, const Eigen::Vector2d&)>& v, Eigen::Vector2d x,
                         double t0, double t1, int steps) {
  const double h = (t1 - t0) / steps;
  for (int s = 0; s < steps; ++s) {
    const double t = t1 - s * h;
    const Eigen::Vector2d k1 = v(t, x);
    const Eigen::Vector2d k2 = v(t - h / 2, x - h / 2 * k1);
    const Eigen::Vector2d k3 = v(t - h / 2, x - h / 2 * k2);
    const Eigen::Vector2d k4 = v(t - h, x - h * k3);
    x -= h / 6 * (k1 + 2 * k2 + 2 * k3 + k4);
  }
  return x;
}

double slot_area(double r, double w, double depth) {
  const auto F = [r](double x) { return 0.5 * x * std::sqrt(r * r - x * x) + 0.5 * r * r * std::asin(x / r); };
  return w * (depth - r) + F(w / 2) - F(-w / 2);
}

}  // namespace

TEST_CASE("constant velocity gives a translation submap") {
  const Grid g(16);
  const double c = 1.3;
  const DiffeoMap m = integrate_backward_map(constant_velocity({c, 0.0}), 0.2, 0.45, 0.01, g, 0.0);
  CHECK((m.plane(0) + c * 0.25).abs().maxCoeff() < 1e-10);
  for (int k = 1; k < DiffeoMap::kPlanes; ++k) CHECK(m.plane(k).abs().maxCoeff() < 1e-10);

  const DiffeoMap z = integrate_backward_map(constant_velocity({0.0, 0.0}), 0.0, 0.1, 0.01, g, 0.0);
  CHECK(z.max_vertex_displacement() == 0.0);

  CHECK_THROWS_AS(integrate_backward_map(constant_velocity({c, 0.0}), 0.0, 0.1, 0.03, g, 0.0), DomainError);
  CHECK_THROWS_AS(integrate_backward_map(constant_velocity({c, 0.0}), 0.1, 0.1, 0.01, g, 0.0), DomainError);
}

TEST_CASE("shear flow matches the ODE oracle at the vertices") {
  const Grid g(64);
  const auto vel = [](double, const Eigen::Vector2d& x) { return Eigen::Vector2d(std::sin(x.y()), 0.0); };
  const DiffeoMap m = integrate_backward_map(
      analytic_velocity([&](double t, double x, double y) { return vel(t, {x, y}); }), 0.0, 0.1, 1e-3, g, 0.0);
  const Points v = g.vertices();
  const Points img = displace(m, v);
  double err = 0.0;
  for (Eigen::Index k = 0; k < v.cols(); ++k) {
    const Eigen::Vector2d foot = rk4_foot(vel, v.col(k), 0.0, 0.1, 200);
    err = std::max(err, (img.col(k) - foot).cwiseAbs().maxCoeff());
  }
  CHECK(err < 1e-8);
}

TEST_CASE("time-dependent flow matches the ODE oracle") {
  const Grid g(64);
  const auto vel = [](double t, const Eigen::Vector2d& x) {
    return Eigen::Vector2d(0.5 * std::sin(x.y()) * (1 + t), 0.3 * std::cos(x.x()));
  };
  const DiffeoMap m = integrate_backward_map(
      analytic_velocity([&](double t, double x, double y) { return vel(t, {x, y}); }), 0.0, 0.2, 1e-3, g, 0.0);
  const Points v = g.vertices();
  const Points img = displace(m, v);
  double err = 0.0;
  for (Eigen::Index k = 0; k < v.cols(); k += 7) {
    const Eigen::Vector2d foot = rk4_foot(vel, v.col(k), 0.0, 0.2, 400);
    err = std::max(err, (img.col(k) - foot).cwiseAbs().maxCoeff());
  }
  CHECK(err < 1e-6);
}

TEST_CASE("trace_back is third order") {
  const auto vel = analytic_velocity([](double t, double x, double y) {
    return Eigen::Vector2d(std::sin(y) + t, std::cos(x) * t);
  });
  Points p(2, 1);
  p << 0.7, 1.9;
  const auto oracle = [](double t, const Eigen::Vector2d& x) {
    return Eigen::Vector2d(std::sin(x.y()) + t, std::cos(x.x()) * t);
  };
  const auto err = [&](double dt) {
    return (trace_back(vel, p, 0.3, dt).col(0) - rk4_foot(oracle, p.col(0), 0.3, 0.3 + dt, 100)).norm();
  };
  CHECK(err(0.1) / err(0.05) > 12.0);
}

TEST_CASE("advection returns after one period") {
  const Grid g(32);
  const ScalarSampler u0 = [](const Points& p) -> Eigen::VectorXd {
    return (p.row(0).array().sin() * p.row(1).array().cos() + 0.3 * (2 * p.row(1).array()).sin()).transpose();
  };
  CmmConfig cfg;
  cfg.T = 1.0;
  cfg.dt = 0.01;
  cfg.remap_every = 10;
  const Trajectory t = advect_cmm(constant_velocity({kTwoPi, 0.0}), u0, g, cfg);
  REQUIRE(t.frames.size() == 11);
  CHECK(t.submaps.size() == 10);
  CHECK(t.dt == doctest::Approx(0.1));
  CHECK(t.meta.remap_every == 10);
  CHECK((t.frames.back().scalar() - t.frames.front().scalar()).abs().maxCoeff() < 1e-8);
  for (std::size_t k = 0; k < t.submaps.size(); ++k) {
    CHECK((t.submaps[k].plane(0) + kTwoPi * 0.1).abs().maxCoeff() < 1e-10);
  }

  cfg.remap_every = 3;
  CHECK_THROWS_AS(advect_cmm(constant_velocity({kTwoPi, 0.0}), u0, g, cfg), DomainError);
}

TEST_CASE("slotted cylinder") {
  const double r = 1.5, w = 0.5, depth = 1.0;
  const ScalarSampler s = slotted_cylinder({pi, pi}, r, w, depth);
  Points p(2, 5);
  p << pi, pi + 1.4, pi + 1.6, pi, 0.1,  //
      pi, pi, pi, pi - 1.2, 0.1;
  const Eigen::VectorXd v = s(p);
  CHECK(v(0) == 1.0);
  CHECK(v(1) == 1.0);
  CHECK(v(2) == 0.0);
  CHECK(v(3) == 0.0);  // inside the slot
  CHECK(v(4) == 0.0);

  const double area = simpson_integral(PeriodicField::sample(Grid(1024), s));
  const double expect = pi * r * r - slot_area(r, w, depth);
  CHECK(std::abs(area - expect) < 0.02 * expect);
  CHECK_THROWS_AS(slotted_cylinder({pi, pi}, 3.5, w, depth), DomainError);

  // advection keeps the two values exactly
  CmmConfig cfg;
  cfg.T = 0.5;
  cfg.dt = 0.01;
  cfg.remap_every = 5;
  const Trajectory t = advect_cmm(constant_velocity({kTwoPi, 0.0}), s, Grid(32), cfg);
  for (const auto& f : t.frames) {
    CHECK(f.min() == 0.0);
    CHECK(f.max() == 1.0);
  }
}

TEST_CASE("mass is conserved under translation") {
  const ScalarSampler u0 = [](const Points& p) -> Eigen::VectorXd {
    Eigen::VectorXd out(p.cols());
    for (Eigen::Index k = 0; k < p.cols(); ++k) {
      out(k) = std::exp(2 * (std::cos(p(0, k) - pi) + std::cos(p(1, k) - pi) - 2));
    }
    return out;
  };
  CmmConfig cfg;
  cfg.T = 0.37;
  cfg.dt = 0.01;
  cfg.remap_every = 1;
  const Trajectory t = advect_cmm(constant_velocity({kTwoPi, 1.0}), u0, Grid(32), cfg);
  const Grid quad(512);
  const double m0 = simpson_integral(PeriodicField::sample(quad, u0));
  const double m1 = simpson_integral(pullback_field(t.submaps, u0, quad));
  CHECK(std::abs(m1 - m0) < 1e-8);
}

TEST_CASE("Biot-Savart") {
  const Grid g(32);
  const PeriodicField u = biot_savart(PeriodicField::sample(g, [](double, double y) { return std::cos(y); }));
  REQUIRE(u.channels() == 2);
  const PeriodicField expect = PeriodicField::sample(g, [](double, double y) { return -std::sin(y); });
  CHECK((u.channel(0) - expect.scalar()).abs().maxCoeff() < 1e-13);
  CHECK(u.channel(1).abs().maxCoeff() < 1e-13);
  CHECK((curl(u).scalar() - PeriodicField::sample(g, [](double, double y) { return std::cos(y); }).scalar())
            .abs()
            .maxCoeff() < 1e-12);

  const PeriodicField zero = biot_savart(PeriodicField(g));
  CHECK(zero.channel(0).abs().maxCoeff() == 0.0);
  CHECK(zero.channel(1).abs().maxCoeff() == 0.0);

  const PeriodicField w = random_vorticity(Grid(64), 10, 3);
  const PeriodicField uw = biot_savart(w);
  const double scale = w.scalar().abs().maxCoeff();
  CHECK(divergence(uw).scalar().abs().maxCoeff() < 1e-10 * scale);
  const double mean = w.scalar().mean();
  CHECK((curl(uw).scalar() - (w.scalar() - mean)).abs().maxCoeff() < 1e-10 * scale);

  // spectral norm of the divergence
  CHECK(std::sqrt(dft(divergence(uw)).energy()) < 1e-10 * scale);
  CHECK_THROWS_AS(curl(w), InvalidFieldError);
}

TEST_CASE("stream velocity") {
  const auto w = [](double x, double y) { return std::cos(y) + 2 * std::sin(x); };
  // psi = -cos y - 2 sin x; u = (-psi_y, psi_x) = (-sin y, -2 cos x)
  const auto err = [&](int n) {
    const StreamVelocity sv(PeriodicField::sample(Grid(n), w));
    double e = 0.0;
    for (double x : {0.31, 0.9, 2.2, 4.05}) {
      for (double y : {0.17, 2.2, 3.3, 5.9}) {
        const Eigen::Vector2d u = sv(x, y);
        e = std::max({e, std::abs(u.x() + std::sin(y)), std::abs(u.y() + 2 * std::cos(x))});
      }
    }
    return e;
  };
  CHECK(err(64) < 5e-5);
  CHECK(err(32) / err(64) > 7.0);

  const Grid g(64);
  const StreamVelocity sv(PeriodicField::sample(g, w));
  const StreamVelocity older(PeriodicField::sample(g, [](double, double y) { return std::cos(y); }));
  const Eigen::Vector2d half = sv.extrapolate(older, 0.5)(0.9, 2.2);
  CHECK((half - (1.5 * sv(0.9, 2.2) - 0.5 * older(0.9, 2.2))).norm() < 1e-13);
}

TEST_CASE("grid velocity interpolates in time") {
  const Grid g(16);
  PeriodicField a(g, 2), b(g, 2);
  a.channel(0).setConstant(1.0);
  b.channel(0).setConstant(3.0);
  b.channel(1).setConstant(-1.0);
  const VelocitySampler v = grid_velocity({a, b}, 1.0, 0.5);
  Points p(2, 1);
  p << 0.3, 0.4;
  CHECK(v(1.25, p)(0, 0) == doctest::Approx(2.0));
  CHECK(v(1.25, p)(1, 0) == doctest::Approx(-0.5));
  CHECK(v(0.0, p)(0, 0) == doctest::Approx(1.0));
  CHECK(v(9.0, p)(0, 0) == doctest::Approx(3.0));
  CHECK_THROWS_AS(grid_velocity({}, 0.0, 1.0), InvalidFieldError);
  CHECK_THROWS_AS(grid_velocity({PeriodicField(g)}, 0.0, 1.0), InvalidFieldError);
}

TEST_CASE("random vorticity") {
  const Grid g(64);
  const PeriodicField a = random_vorticity(g, 10, 42);
  const PeriodicField b = random_vorticity(g, 10, 42);
  CHECK((a.scalar() == b.scalar()).all());
  CHECK_FALSE((a.scalar() == random_vorticity(g, 10, 43).scalar()).all());
  CHECK(effective_bandwidth(a, 1e-12) <= 11);
  CHECK(effective_bandwidth(random_vorticity(g, 20, 1), 1e-12) <= 21);
  CHECK(std::abs(a.scalar().mean()) < 1e-14);

  const TrigSeries s(4, 9);
  CHECK(s(1.0, 2.0) == doctest::Approx(s(1.0 + kTwoPi, 2.0 - kTwoPi)));
  CHECK(s.sample(Grid(8)).scalar()(3, 1) == doctest::Approx(s(kTwoPi / 8, 3 * kTwoPi / 8)));
  CHECK(s.band_limit() == 4);
  CHECK_THROWS_AS(random_vorticity(g, 0, 1), DomainError);
}

TEST_CASE("Euler: zero and steady states") {
  CmmConfig cfg;
  cfg.T = 0.1;
  cfg.dt = 1e-2;
  cfg.remap_every = 5;
  const Trajectory z = euler_cmm(PeriodicField(Grid(16)), cfg);
  for (const auto& f : z.frames) CHECK(f.scalar().abs().maxCoeff() == 0.0);

  const Grid g(64);
  cfg.T = 0.2;
  cfg.dt = 1e-3;
  cfg.remap_every = 10;
  const PeriodicField w0 = PeriodicField::sample(g, [](double, double y) { return std::cos(y); });
  const HermiteInterpolant h(g, w0.scalar());
  const Trajectory t = euler_cmm(w0, cfg, [&h](const Points& p) { return h.evaluate(p); });
  REQUIRE(t.frames.size() == 21);
  CHECK(t.velocity.size() == 21);
  CHECK(t.meta.solver == "cmm_euler");
  CHECK(rel_l2(t.frames.back(), w0) < 1e-3);
}

TEST_CASE("Euler conserves enstrophy") {
  QuietWarnings quiet;
  const Grid g(128);
  const PeriodicField w0 = random_vorticity(g, 10, 5);
  CmmConfig cfg;
  cfg.T = 0.2;
  cfg.dt = 1e-3;
  cfg.remap_every = 10;
  const HermiteInterpolant h(g, w0.scalar());
  const ScalarSampler sampler = [&h](const Points& p) { return h.evaluate(p); };
  const Trajectory t = euler_cmm(w0, cfg, sampler);
  const ScalarSampler sq = [&h](const Points& p) -> Eigen::VectorXd { return h.evaluate(p).array().square(); };
  const Grid quad(512);
  const double e0 = simpson_integral(PeriodicField::sample(quad, sq));
  CHECK(std::abs(conservation_error(t.submaps, sq, quad)) / e0 < 1e-4);

  // the flow actually moved
  CHECK(rel_l2(t.frames.back(), t.frames.front()) > 1e-2);
}
