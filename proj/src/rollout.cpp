#include "dflow/rollout.hpp"

#include "dflow/errors.hpp"
#include "dflow/interp.hpp"
#include "dflow/log.hpp"

namespace dflow {

namespace {

MapChain concat(const MapChain& a, const MapChain& b) {
  MapChain out = a;
  for (std::size_t i = 0; i < b.size(); ++i) out.push_back(b.shared(i));
  return out;
}

}  // namespace

RolloutState::RolloutState(std::span<const PeriodicField> window, RolloutConfig cfg, std::size_t first_step,
                           ScalarSampler u0_sampler)
    : grid_(window.empty() ? Grid(4) : window.back().grid()),
      cfg_(cfg),
      u0_(std::move(u0_sampler)),
      window_(window.size()),
      step_(first_step) {
  if (window.empty()) throw DomainError("rollout needs at least one initial field");
  if (cfg_.remap_every < 1) throw DomainError("rollout: remap_every must be at least 1");
  if (cfg_.fd_eps < 0.0) throw DomainError("rollout: fd_eps must be nonnegative");
  if (cfg_.fd_eps == 0.0) cfg_.fd_eps = default_fd_eps(grid_);
  for (const auto& f : window) {
    if (!(f.grid() == grid_)) throw DomainError("rollout: initial window fields must share one grid");
    f.require_finite("rollout");
  }
  if (!u0_) u0_ = bilinear_sampler(window.back());
  history_.assign(window.begin(), window.end());
  history_.back() = pullback_field(MapChain{}, u0_, grid_);
}

MapChain RolloutState::chain() const { return concat(macro_, working_); }

PeriodicField RolloutState::recompute_frame() const { return pullback_field(chain(), u0_, grid_); }

void RolloutState::push_frame(PeriodicField f) {
  history_.push_back(std::move(f));
  if (history_.size() > window_) history_.erase(history_.begin());
  ++step_;
}

void step(RolloutState& state, const Lifter& lifter) {
  DiffeoMap phi = lifter.lift(state.history(), state.step_);
  if (!(phi.grid() == state.grid_)) throw ChainError("lifter returned a map on another grid");
  state.macro_.push_back(std::move(phi));
  state.push_frame(state.recompute_frame());
}

void step_semi_lagrangian(RolloutState& state, const Lifter& lifter) {
  DiffeoMap phi = lifter.lift(state.history(), state.step_);
  if (!(phi.grid() == state.grid_)) throw ChainError("lifter returned a map on another grid");
  state.working_.push_back(std::move(phi));
  if (static_cast<int>(state.working_.size()) >= state.cfg_.remap_every) {
    state.macro_.push_back(project(state.working_, state.grid_, state.cfg_.fd_eps));
    state.working_ = MapChain{};
  }
  state.push_frame(state.recompute_frame());
}

PeriodicField pullback_field(const MapChain& chain, const ScalarSampler& u0, const Grid& grid_out) {
  const Eigen::VectorXd values = u0(chain_evaluate(chain, grid_out.vertices()));
  PeriodicField out(grid_out);
  out.flat() = values;
  out.require_finite("pullback_field");
  return out;
}

PeriodicField transport_density(const MapChain& chain, const ScalarSampler& rho0, const Grid& grid_out,
                                DensityReport* report) {
  Eigen::VectorXd det;
  const Points feet = chain_evaluate_with_det(chain, grid_out.vertices(), det);
  PeriodicField out(grid_out);
  out.flat() = rho0(feet).cwiseProduct(det);
  const double min_det = det.size() ? det.minCoeff() : 1.0;
  if (min_det <= 0.0) log_warning("transport_density: accumulated Jacobian determinant is not positive");
  if (report) *report = {min_det, min_det > 0.0};
  return out;
}

RolloutResult rollout(std::span<const PeriodicField> window, const Lifter& lifter, std::size_t n_steps,
                      const RolloutConfig& cfg, std::size_t first_step, ScalarSampler u0_sampler,
                      const RolloutObserver& observer) {
  RolloutState state(window, cfg, first_step, std::move(u0_sampler));
  RolloutResult out{Trajectory(state.grid()), MapChain{}};
  out.trajectory.dt = cfg.dt;
  out.trajectory.meta.solver = "rollout:" + lifter.kind();
  out.trajectory.meta.remap_every = cfg.scheme == Scheme::SemiLagrangian ? cfg.remap_every : 1;
  out.trajectory.frames.push_back(state.frame());
  if (observer) observer(state);
  for (std::size_t k = 0; k < n_steps; ++k) {
    if (cfg.scheme == Scheme::Compose) {
      step(state, lifter);
    } else {
      step_semi_lagrangian(state, lifter);
    }
    out.trajectory.frames.push_back(state.frame());
    if (observer) observer(state);
  }
  out.chain = state.chain();
  return out;
}

}  // namespace dflow
