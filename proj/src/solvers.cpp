#include "dflow/solvers.hpp"

#include "dflow/errors.hpp"
#include "dflow/interp.hpp"
#include "dflow/log.hpp"
#include "dflow/parallel.hpp"
#include "dflow/spectral.hpp"

#include <cmath>
#include <random>
#include <sstream>
#include <stdexcept>

namespace dflow {

namespace {

int step_count(double T, double dt) {
  if (!(dt > 0.0) || !(T >= 0.0)) throw DomainError("time step must be positive and horizon non-negative");
  const double n = T / dt;
  const long r = std::lround(n);
  if (std::abs(n - static_cast<double>(r)) > 1e-9 * std::max(1.0, n)) {
    throw DomainError("dt must divide the integration interval");
  }
  return static_cast<int>(r);
}

// Signed periodic difference in [-pi, pi).
double periodic_delta(double a, double b) {
  double d = std::fmod(a - b + std::numbers::pi, kTwoPi);
  if (d < 0) d += kTwoPi;
  return d - std::numbers::pi;
}

}  // namespace

VelocitySampler constant_velocity(const Eigen::Vector2d& v) {
  return [v](double, const Points& p) {
    Points out(2, p.cols());
    out.colwise() = v;
    return out;
  };
}

VelocitySampler analytic_velocity(std::function<Eigen::Vector2d(double, double, double)> f) {
  return [f = std::move(f)](double t, const Points& p) {
    Points out(2, p.cols());
    for (Eigen::Index k = 0; k < p.cols(); ++k) out.col(k) = f(t, p(0, k), p(1, k));
    return out;
  };
}

VelocitySampler grid_velocity(std::vector<PeriodicField> frames, double t0, double dt) {
  if (frames.empty()) throw InvalidFieldError("grid_velocity: no frames");
  for (const auto& f : frames) {
    if (f.channels() != 2) throw InvalidFieldError("grid_velocity: frames must have 2 channels");
    f.require_finite("grid_velocity");
  }
  return [frames = std::move(frames), t0, dt](double t, const Points& p) {
    const double s = std::clamp((t - t0) / dt, 0.0, static_cast<double>(frames.size() - 1));
    const auto i = std::min(static_cast<std::size_t>(std::floor(s)), frames.size() - 1);
    const auto i1 = std::min(i + 1, frames.size() - 1);
    const double a = s - static_cast<double>(i);
    Points out(2, p.cols());
    for (int c = 0; c < 2; ++c) {
      const Eigen::VectorXd lo = sample_bilinear(frames[i], p, c);
      if (a == 0.0 || i1 == i) {
        out.row(c) = lo.transpose();
      } else {
        const Eigen::VectorXd hi = sample_bilinear(frames[i1], p, c);
        out.row(c) = ((1.0 - a) * lo + a * hi).transpose();
      }
    }
    return out;
  };
}

StreamVelocity::StreamVelocity(const PeriodicField& vorticity) : grid_(vorticity.grid()) {
  vorticity.require_scalar("StreamVelocity");
  const Grid& g = grid_;
  Spectrum s = dft(vorticity);
  auto& c = s.coefficients();
  for (int r = 0; r < g.ny(); ++r) {
    const int ky = Spectrum::wavenumber(r, g.ny());
    for (int q = 0; q < g.nx(); ++q) {
      const int kx = Spectrum::wavenumber(q, g.nx());
      const int k2 = kx * kx + ky * ky;
      c(r, q) = k2 == 0 ? Spectrum::Complex(0.0) : -c(r, q) / static_cast<double>(k2);
    }
  }
  psi_ = hermite_from_samples(g, idft_plane(s));
}

Points StreamVelocity::evaluate(const Points& p) const {
  Points out(2, p.cols());
  parallel_for(static_cast<std::size_t>(p.cols()), [&](std::size_t b, std::size_t e) {
    for (auto k = static_cast<Eigen::Index>(b); k < static_cast<Eigen::Index>(e); ++k) {
      out.col(k) = (*this)(p(0, k), p(1, k));
    }
  });
  return out;
}

StreamVelocity StreamVelocity::extrapolate(const StreamVelocity& older, double a) const {
  const auto mix = [a](const Plane& now, const Plane& old) -> Plane { return (1.0 + a) * now - a * old; };
  return {grid_, HermiteData{mix(psi_.value, older.psi_.value), mix(psi_.dx, older.psi_.dx),
                             mix(psi_.dy, older.psi_.dy), mix(psi_.dxy, older.psi_.dxy)}};
}

PeriodicField biot_savart(const PeriodicField& omega) {
  omega.require_scalar("biot_savart");
  omega.require_finite("biot_savart");
  const Grid& g = omega.grid();
  const Spectrum w = dft(omega);
  Spectrum ux(g), uy(g);
  const Spectrum::Complex I(0.0, 1.0);
  for (int r = 0; r < g.ny(); ++r) {
    const int ky = Spectrum::wavenumber(r, g.ny());
    for (int q = 0; q < g.nx(); ++q) {
      const int kx = Spectrum::wavenumber(q, g.nx());
      const int k2 = kx * kx + ky * ky;
      if (k2 == 0 || kx == -g.nx() / 2 || ky == -g.ny() / 2) continue;
      const auto wk = w.coefficients()(r, q);
      ux.coefficients()(r, q) = I * double(ky) * wk / double(k2);
      uy.coefficients()(r, q) = -I * double(kx) * wk / double(k2);
    }
  }
  std::vector<Plane> planes;
  planes.push_back(idft_plane(ux));
  planes.push_back(idft_plane(uy));
  return {g, std::move(planes)};
}

PeriodicField curl(const PeriodicField& velocity) {
  if (velocity.channels() != 2) throw InvalidFieldError("curl: expected 2 channels");
  const Grid& g = velocity.grid();
  std::vector<Plane> planes;
  planes.push_back(spectral_derivative(g, velocity.channel(1), 1, 0) -
                   spectral_derivative(g, velocity.channel(0), 0, 1));
  return {g, std::move(planes)};
}

PeriodicField divergence(const PeriodicField& velocity) {
  if (velocity.channels() != 2) throw InvalidFieldError("divergence: expected 2 channels");
  const Grid& g = velocity.grid();
  std::vector<Plane> planes;
  planes.push_back(spectral_derivative(g, velocity.channel(0), 1, 0) +
                   spectral_derivative(g, velocity.channel(1), 0, 1));
  return {g, std::move(planes)};
}

Points trace_back(const VelocitySampler& vel, const Points& p, double t, double dt) {
  // Increment form of SSP-RK3, so a vanishing velocity returns the points unchanged.
  const Points d1 = -dt * vel(t + dt, p);
  const Points d2 = 0.25 * (d1 - dt * vel(t, p + d1));
  return p + (2.0 / 3.0) * (d2 - dt * vel(t + 0.5 * dt, p + d2));
}

BackwardMapIntegrator::BackwardMapIntegrator(const Grid& grid, double fd_eps)
    : grid_(grid), fd_eps_(fd_eps > 0.0 ? fd_eps : default_fd_eps(grid)), map_(grid) {}

void BackwardMapIntegrator::step(const VelocitySampler& vel, double t, double dt) {
  if (!cfl_warned_) {
    const Points v = vel(t, grid_.vertices());
    const double vmax = v.colwise().norm().maxCoeff();
    if (vmax * dt > std::min(grid_.dx(), grid_.dy())) {
      std::ostringstream msg;
      msg << "CFL: max|v| * dt = " << vmax * dt << " exceeds the grid spacing";
      log_warning(msg.str());
      cfl_warned_ = true;
    }
  }
  map_ = reconstruct_map(grid_, fd_eps_, [&](const Points& p) { return displace(map_, trace_back(vel, p, t, dt)); });
}

DiffeoMap integrate_backward_map(const VelocitySampler& vel, double t0, double t1, double dt, const Grid& grid,
                                 double fd_eps) {
  if (!(t1 > t0)) throw DomainError("integrate_backward_map: t1 must exceed t0");
  const int n = step_count(t1 - t0, dt);
  BackwardMapIntegrator integ(grid, fd_eps);
  for (int s = 0; s < n; ++s) integ.step(vel, t0 + s * dt, dt);
  return integ.map();
}

Trajectory advect_cmm(const VelocitySampler& vel, const ScalarSampler& u0, const Grid& grid, const CmmConfig& cfg) {
  if (cfg.remap_every < 1) throw DomainError("remap_every must be >= 1");
  const int n = step_count(cfg.T, cfg.dt);
  if (n % cfg.remap_every != 0) throw DomainError("remap_every must divide the number of steps");
  Trajectory traj(grid);
  traj.dt = cfg.dt * cfg.remap_every;
  traj.meta = {"cmm_advection", 0, cfg.remap_every, cfg.dt};
  const Points vertices = grid.vertices();
  traj.frames.push_back(PeriodicField::sample(grid, u0));
  BackwardMapIntegrator integ(grid, cfg.fd_eps);
  for (int s = 0; s < n; ++s) {
    integ.step(vel, s * cfg.dt, cfg.dt);
    if ((s + 1) % cfg.remap_every == 0) {
      traj.submaps.push_back(integ.map());
      integ.reset();
      PeriodicField frame(grid);
      frame.flat() = u0(chain_evaluate(traj.submaps, vertices));
      traj.frames.push_back(std::move(frame));
    }
  }
  return traj;
}

Trajectory euler_cmm(const PeriodicField& omega0, const CmmConfig& cfg, ScalarSampler omega0_sampler) {
  omega0.require_scalar("euler_cmm");
  omega0.require_finite("euler_cmm");
  if (cfg.remap_every < 1) throw DomainError("remap_every must be >= 1");
  const int n = step_count(cfg.T, cfg.dt);
  if (n % cfg.remap_every != 0) throw DomainError("remap_every must divide the number of steps");
  const Grid& grid = omega0.grid();
  if (!omega0_sampler) omega0_sampler = bilinear_sampler(omega0);

  Trajectory traj(grid);
  traj.dt = cfg.dt * cfg.remap_every;
  traj.meta = {"cmm_euler", 0, cfg.remap_every, cfg.dt};

  const Points vertices = grid.vertices();
  MapChain chain;
  BackwardMapIntegrator integ(grid, cfg.fd_eps);
  const auto current_vorticity = [&]() {
    PeriodicField w(grid);
    w.flat() = omega0_sampler(chain_displace(chain, displace(integ.map(), vertices)));
    return w;
  };

  PeriodicField w = current_vorticity();
  const double w_limit = 10.0 * std::max(std::abs(w.min()), std::abs(w.max()));
  traj.frames.push_back(w);
  traj.velocity.push_back(biot_savart(w));

  StreamVelocity u_prev(w);
  StreamVelocity u_now = u_prev;
  for (int s = 0; s < n; ++s) {
    const double t = s * cfg.dt;
    // Velocity is linear in time through the two latest frames; RK3 needs a in {0, 1/2, 1}.
    std::vector<std::pair<double, StreamVelocity>> cache;
    const VelocitySampler vel = [&](double tq, const Points& p) -> Points {
      const double a = (tq - t) / cfg.dt;
      for (const auto& [key, sv] : cache) {
        if (key == a) return sv.evaluate(p);
      }
      cache.emplace_back(a, u_now.extrapolate(u_prev, a));
      return cache.back().second.evaluate(p);
    };
    integ.step(vel, t, cfg.dt);
    const bool remap = (s + 1) % cfg.remap_every == 0;
    if (remap) {
      chain.push_back(integ.map());
      integ.reset();
    }
    w = current_vorticity();
    const double wmax = std::max(std::abs(w.min()), std::abs(w.max()));
    if (!w.all_finite() || (w_limit > 0.0 && wmax > w_limit)) {
      throw std::runtime_error("euler_cmm: vorticity blow-up detected at t = " + std::to_string(t + cfg.dt));
    }
    if (remap) {
      traj.frames.push_back(w);
      traj.velocity.push_back(biot_savart(w));
    }
    u_prev = std::move(u_now);
    u_now = StreamVelocity(w);
  }
  traj.submaps = std::move(chain);
  return traj;
}

TrigSeries::TrigSeries(int K, std::uint64_t seed) : K_(K) {
  if (K < 1) throw DomainError("random_vorticity: K must be >= 1");
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> coef(-1.0, 1.0);
  for (int ky = -K; ky <= K; ++ky) {
    for (int kx = -K; kx <= K; ++kx) {
      const int k2 = kx * kx + ky * ky;
      if (k2 == 0 || k2 > K * K) continue;
      k_.push_back({kx, ky});
      a_.push_back(coef(rng));
      b_.push_back(coef(rng));
    }
  }
}

double TrigSeries::operator()(double x, double y) const {
  double s = 0.0;
  for (std::size_t m = 0; m < k_.size(); ++m) {
    const double ph = k_[m][0] * x + k_[m][1] * y;
    s += a_[m] * std::cos(ph) + b_[m] * std::sin(ph);
  }
  return s;
}

ScalarSampler TrigSeries::sampler() const {
  return [self = *this](const Points& p) {
    Eigen::VectorXd out(p.cols());
    parallel_for(static_cast<std::size_t>(p.cols()), [&](std::size_t b, std::size_t e) {
      for (auto k = static_cast<Eigen::Index>(b); k < static_cast<Eigen::Index>(e); ++k) out(k) = self(p(0, k), p(1, k));
    });
    return out;
  };
}

PeriodicField TrigSeries::sample(const Grid& grid) const {
  if (2 * K_ >= std::min(grid.nx(), grid.ny())) return PeriodicField::sample(grid, sampler());
  // Exact on the grid: assemble Fourier coefficients and invert.
  Spectrum s(grid);
  const Spectrum::Complex I(0.0, 1.0);
  for (std::size_t m = 0; m < k_.size(); ++m) {
    s.at(k_[m][0], k_[m][1]) += 0.5 * a_[m] - 0.5 * I * b_[m];
    s.at(-k_[m][0], -k_[m][1]) += 0.5 * a_[m] + 0.5 * I * b_[m];
  }
  return idft(s);
}

PeriodicField random_vorticity(const Grid& grid, int K, std::uint64_t seed) {
  return TrigSeries(K, seed).sample(grid);
}

ScalarSampler slotted_cylinder(const Eigen::Vector2d& center, double radius, double slot_width, double slot_depth) {
  if (!(radius > 0.0 && radius < std::numbers::pi)) throw DomainError("slotted_cylinder: radius must lie in (0, pi)");
  return [=](const Points& p) {
    Eigen::VectorXd out(p.cols());
    for (Eigen::Index k = 0; k < p.cols(); ++k) {
      const double dx = periodic_delta(p(0, k), center.x());
      const double dy = periodic_delta(p(1, k), center.y());
      const bool disk = dx * dx + dy * dy <= radius * radius;
      const bool slot = std::abs(dx) <= 0.5 * slot_width && dy <= -radius + slot_depth;
      out(k) = disk && !slot ? 1.0 : 0.0;
    }
    return out;
  };
}

}  // namespace dflow
