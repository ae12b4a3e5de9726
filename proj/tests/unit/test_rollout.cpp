#include "dflow/diagnostics.hpp"
#include "dflow/errors.hpp"
#include "dflow/interp.hpp"
#include "dflow/rollout.hpp"

#include "../support/test_maps.hpp"

#include <doctest.h>

#include <cmath>

using namespace dflow;
using dflow::testing::random_chain;
using dflow::testing::random_smooth_map;

namespace {

PeriodicField smooth_field(const Grid& g) {
  return PeriodicField::sample(g, [](double x, double y) { return std::sin(x) * std::cos(2 * y) + 0.3 * std::cos(x); });
}

// Circular shift of the stored samples: out(j, i) = in(j + sy, i + sx).
Plane roll(const Plane& in, int sx, int sy) {
  Plane out(in.rows(), in.cols());
  for (Eigen::Index j = 0; j < in.rows(); ++j) {
    for (Eigen::Index i = 0; i < in.cols(); ++i) {
      out(j, i) = in((j + sy) % in.rows(), (i + sx) % in.cols());
    }
  }
  return out;
}

class RecordingLifter final : public Lifter {
 public:
  RecordingLifter(const Grid& g, int window) : grid_(g), window_(window) {}
  DiffeoMap lift(std::span<const PeriodicField> history, std::size_t step) const override {
    check_history(history);
    sizes.push_back(history.size());
    steps.push_back(step);
    return identity_map(grid_);
  }
  int window() const override { return window_; }
  const Grid& grid() const override { return grid_; }
  std::string kind() const override { return "recording"; }

  mutable std::vector<std::size_t> sizes;
  mutable std::vector<std::size_t> steps;

 private:
  Grid grid_;
  int window_;
};

}  // namespace

TEST_CASE("identity lifter keeps the initial frame") {
  const Grid g(32);
  const PeriodicField u0 = smooth_field(g);
  const ConstantLifter id(identity_map(g));
  const RolloutResult r = rollout(std::span(&u0, 1), id, 5, RolloutConfig{});
  REQUIRE(r.trajectory.frames.size() == 6);
  for (const auto& f : r.trajectory.frames) CHECK(f.scalar().isApprox(u0.scalar(), 0.0));
  CHECK(r.chain.size() == 5);
  CHECK(r.trajectory.meta.solver == "rollout:constant");
}

TEST_CASE("zero steps return only the initial frame") {
  const Grid g(16);
  const PeriodicField u0 = smooth_field(g);
  const RolloutResult r = rollout(std::span(&u0, 1), ConstantLifter(identity_map(g)), 0, RolloutConfig{});
  CHECK(r.trajectory.frames.size() == 1);
  CHECK(r.chain.empty());
  CHECK((r.trajectory.frames[0].scalar() == u0.scalar()).all());
}

TEST_CASE("grid-aligned translation shifts the samples") {
  const Grid g(32);
  const PeriodicField u0(g, {Plane::Random(32, 32)});
  const ConstantLifter shift(translation_map(g, {2 * g.dx(), g.dy()}));
  for (Scheme scheme : {Scheme::Compose, Scheme::SemiLagrangian}) {
    RolloutConfig cfg;
    cfg.scheme = scheme;
    cfg.remap_every = 3;
    const RolloutResult r = rollout(std::span(&u0, 1), shift, 7, cfg);
    for (int k = 0; k <= 7; ++k) {
      CAPTURE(k);
      const Plane expected = roll(u0.scalar(), 2 * k, k);
      CHECK((r.trajectory.frames[k].scalar() - expected).abs().maxCoeff() < 1e-12);
    }
  }
}

TEST_CASE("off-grid translation agrees with the analytic shift") {
  const Grid g(128);
  const PeriodicField u0 = smooth_field(g);
  const Eigen::Vector2d s{0.013, -0.021};
  const RolloutResult r = rollout(std::span(&u0, 1), ConstantLifter(translation_map(g, s)), 10, RolloutConfig{});
  const PeriodicField expected = PeriodicField::sample(g, [&](double x, double y) {
    const double xs = x + 10 * s.x(), ys = y + 10 * s.y();
    return std::sin(xs) * std::cos(2 * ys) + 0.3 * std::cos(xs);
  });
  // bilinear interpolation error, (dx^2 / 8) * max|D^2 u0|
  const double bound = g.dx() * g.dx() / 8 * 5.3;
  CHECK((r.trajectory.frames.back().scalar() - expected.scalar()).abs().maxCoeff() < bound);
}

TEST_CASE("semi-Lagrangian remapping of translations") {
  const Grid g(32);
  const Eigen::Vector2d s{0.05, 0.02};
  const PeriodicField u0 = smooth_field(g);
  RolloutConfig cfg;
  cfg.scheme = Scheme::SemiLagrangian;
  cfg.remap_every = 10;
  RolloutState state(std::span(&u0, 1), cfg);
  const ConstantLifter lifter(translation_map(g, s));
  for (int k = 0; k < 9; ++k) step_semi_lagrangian(state, lifter);
  CHECK(state.macro_chain().empty());
  CHECK(state.working_chain().size() == 9);
  step_semi_lagrangian(state, lifter);
  REQUIRE(state.macro_chain().size() == 1);
  CHECK(state.working_chain().empty());
  const DiffeoMap& macro = state.macro_chain()[0];
  CHECK((macro.plane(0) - 10 * s.x()).abs().maxCoeff() < 1e-12);
  CHECK((macro.plane(4) - 10 * s.y()).abs().maxCoeff() < 1e-12);
  for (int p : {1, 2, 3, 5, 6, 7}) CHECK(macro.plane(p).abs().maxCoeff() < 1e-10);
  CHECK(state.step_index() == 10);

  cfg.remap_every = 1;
  RolloutState every(std::span(&u0, 1), cfg);
  for (int k = 0; k < 4; ++k) step_semi_lagrangian(every, lifter);
  CHECK(every.macro_chain().size() == 4);
  CHECK(every.working_chain().empty());
}

TEST_CASE("semi-Lagrangian rollout tracks the composed rollout") {
  const Grid g(64);
  const PeriodicField u0 = smooth_field(g);
  const DiffeoMap phi = random_smooth_map(g, 2, 0.02, 3);
  const ConstantLifter lifter(phi);
  RolloutConfig compose, semilag;
  semilag.scheme = Scheme::SemiLagrangian;
  semilag.remap_every = 4;
  const RolloutResult a = rollout(std::span(&u0, 1), lifter, 12, compose);
  const RolloutResult b = rollout(std::span(&u0, 1), lifter, 12, semilag);
  CHECK(a.chain.size() == 12);
  CHECK(b.chain.size() == 3);
  // projection error of smooth composites is fourth order in dx
  CHECK(mse(a.trajectory.frames.back(), b.trajectory.frames.back()) < 1e-10);
}

TEST_CASE("oracle rollout reproduces the Euler solver") {
  CmmConfig cfg;
  cfg.T = 0.1;
  cfg.dt = 2e-3;
  cfg.remap_every = 5;
  const Trajectory truth = euler_cmm(random_vorticity(Grid(32), 4, 3), cfg);
  const OracleLifter oracle = oracle_lifter(truth);
  const std::size_t n = truth.frames.size() - 1;
  const RolloutResult r = rollout(std::span(&truth.frames.front(), 1), oracle, n, RolloutConfig{});
  REQUIRE(r.trajectory.frames.size() == truth.frames.size());
  for (std::size_t k = 0; k <= n; ++k) {
    CAPTURE(k);
    CHECK(mse(r.trajectory.frames[k], truth.frames[k]) < 1e-6);
  }
}

TEST_CASE("window handling") {
  const Grid g(16);
  std::vector<PeriodicField> window;
  for (int k = 0; k < 3; ++k) window.push_back(PeriodicField::sample(g, [k](double x, double) { return k + std::sin(x); }));
  const RecordingLifter lifter(g, 3);
  RolloutConfig cfg;
  const RolloutResult r = rollout(window, lifter, 4, cfg, 2);
  CHECK(lifter.sizes == std::vector<std::size_t>{3, 3, 3, 3});
  CHECK(lifter.steps == std::vector<std::size_t>{2, 3, 4, 5});
  // the initial state is the newest window entry
  CHECK(r.trajectory.frames.front().scalar().isApprox(window.back().scalar(), 1e-15));

  const RecordingLifter wide(g, 4);
  CHECK_THROWS_AS(rollout(window, wide, 1, cfg), DomainError);
  CHECK_THROWS_AS(rollout(std::span<const PeriodicField>{}, lifter, 1, cfg), DomainError);
  RolloutConfig bad;
  bad.remap_every = 0;
  CHECK_THROWS_AS(rollout(window, lifter, 1, bad), DomainError);
  const ConstantLifter other(identity_map(Grid(32)));
  CHECK_THROWS_AS(rollout(std::span(&window.back(), 1), other, 1, cfg), std::exception);
}

TEST_CASE("pullback through chains") {
  const Grid g(32);
  const ScalarSampler u0 = [](const Points& p) -> Eigen::VectorXd {
    return (p.row(0).array().cos() + (p.row(1).array() * 3).sin()).transpose();
  };
  const PeriodicField direct = PeriodicField::sample(Grid(64), u0);
  CHECK((pullback_field(MapChain{}, u0, Grid(64)).scalar() == direct.scalar()).all());

  const MapChain chain = random_chain(g, 3, 2, 0.1, 5);
  const PeriodicField fine = pullback_field(chain, u0, Grid(512));
  const PeriodicField coarse = pullback_field(chain, u0, Grid(128));
  CHECK((restrict_to(fine, Grid(128)).scalar() - coarse.scalar()).abs().maxCoeff() < 1e-14);
}

TEST_CASE("density transport") {
  const Grid g(32);
  const ScalarSampler rho0 = [](const Points& p) -> Eigen::VectorXd {
    return (1.0 + 0.5 * p.row(0).array().sin() * p.row(1).array().cos()).transpose();
  };
  DensityReport rep;
  const PeriodicField same = transport_density(MapChain{}, rho0, Grid(64), &rep);
  CHECK(same.scalar().isApprox(PeriodicField::sample(Grid(64), rho0).scalar(), 1e-15));
  CHECK(rep.orientation_preserved);
  CHECK(rep.min_det == 1.0);

  const Eigen::Vector2d s{0.4, -0.3};
  const PeriodicField shifted = transport_density(MapChain({translation_map(g, s)}), rho0, Grid(64), &rep);
  const PeriodicField expected = PeriodicField::sample(Grid(64), [&](double x, double y) {
    return 1.0 + 0.5 * std::sin(x + s.x()) * std::cos(y + s.y());
  });
  CHECK((shifted.scalar() - expected.scalar()).abs().maxCoeff() < 1e-12);
  CHECK(std::abs(rep.min_det - 1.0) < 1e-12);

  const MapChain chain = random_chain(g, 4, 2, 0.15, 6);
  const PeriodicField rho = transport_density(chain, rho0, Grid(512), &rep);
  CHECK(rep.orientation_preserved);
  CHECK(rep.min_det > 0.0);
  const double m0 = simpson_integral(PeriodicField::sample(Grid(512), rho0));
  CHECK(std::abs(simpson_integral(rho) - m0) / m0 < 1e-6);
}
