#pragma once

#include "dflow/diffeo.hpp"
#include "dflow/grid.hpp"
#include "dflow/lifting.hpp"
#include "dflow/solvers.hpp"

#include <functional>
#include <span>
#include <vector>

namespace dflow {

enum class Scheme { Compose, SemiLagrangian };

struct RolloutConfig {
  Scheme scheme = Scheme::Compose;
  int remap_every = 10;
  double fd_eps = 0.0;  // 0 selects dx / 100
  double dt = 0.0;      // stored in the output trajectory only
};

/// Evolving backward map and cached current frame.
/// The backward map is macro_chain o working_chain; working_chain is empty in the compose scheme.
class RolloutState {
 public:
  /// `window` holds the latest m fields oldest first; its newest entry is the initial state
  /// u0, pulled back through `u0_sampler` (bilinear interpolant of it by default).
  RolloutState(std::span<const PeriodicField> window, RolloutConfig cfg, std::size_t first_step = 0,
               ScalarSampler u0_sampler = {});

  const Grid& grid() const { return grid_; }
  const RolloutConfig& config() const { return cfg_; }
  std::size_t step_index() const { return step_; }
  const PeriodicField& frame() const { return history_.back(); }
  std::span<const PeriodicField> history() const { return history_; }
  const ScalarSampler& u0() const { return u0_; }
  const MapChain& macro_chain() const { return macro_; }
  const MapChain& working_chain() const { return working_; }

  /// macro_chain followed by working_chain.
  MapChain chain() const;

  /// Pulls u0 back through the current chain from scratch.
  PeriodicField recompute_frame() const;

 private:
  friend void step(RolloutState&, const Lifter&);
  friend void step_semi_lagrangian(RolloutState&, const Lifter&);
  void push_frame(PeriodicField f);

  Grid grid_;
  RolloutConfig cfg_;
  ScalarSampler u0_;
  MapChain macro_;
  MapChain working_;
  std::vector<PeriodicField> history_;
  std::size_t window_;
  std::size_t step_;
};

/// Composition step: appends the lifted map and pulls u0 back through the full chain.
void step(RolloutState& state, const Lifter& lifter);

/// Semi-Lagrangian step: composes into the working chain and projects it into one map of the
/// macro chain every remap_every steps.
void step_semi_lagrangian(RolloutState& state, const Lifter& lifter);

/// u0 sampled at the chain images of the vertices of grid_out.
PeriodicField pullback_field(const MapChain& chain, const ScalarSampler& u0, const Grid& grid_out);

struct DensityReport {
  double min_det = 1.0;
  bool orientation_preserved = true;
};

/// (rho0 o phi) * det(D phi), with det accumulated along the composition path.
PeriodicField transport_density(const MapChain& chain, const ScalarSampler& rho0, const Grid& grid_out,
                                DensityReport* report = nullptr);

struct RolloutResult {
  Trajectory trajectory;  // frame 0 is the initial state
  MapChain chain;         // macro chain followed by any unprojected working maps
};

using RolloutObserver = std::function<void(const RolloutState&)>;

/// Autoregressive rollout of n_steps; `observer` runs after the initial state and every step.
RolloutResult rollout(std::span<const PeriodicField> window, const Lifter& lifter, std::size_t n_steps,
                      const RolloutConfig& cfg, std::size_t first_step = 0, ScalarSampler u0_sampler = {},
                      const RolloutObserver& observer = {});

}  // namespace dflow
