#pragma once

#include "dflow/diffeo.hpp"
#include "dflow/grid.hpp"
#include "dflow/solvers.hpp"

#include <Eigen/Dense>

#include <cstdint>
#include <memory>
#include <span>
#include <string>
#include <vector>

namespace dflow {

/// One-step lifting operator: a window of the latest fields (oldest first) to the map
/// advancing the newest field by one step under the right action u -> u o phi.
class Lifter {
 public:
  virtual ~Lifter() = default;

  /// `step` is the index of the newest field in the rollout (0 for the initial state).
  virtual DiffeoMap lift(std::span<const PeriodicField> history, std::size_t step) const = 0;

  virtual int window() const = 0;
  virtual const Grid& grid() const = 0;
  virtual std::string kind() const = 0;

 protected:
  void check_history(std::span<const PeriodicField> history) const;
};

/// Returns solver submaps: lift at step k yields phi_[t_{k+1}, t_k].
class OracleLifter final : public Lifter {
 public:
  explicit OracleLifter(MapChain submaps);

  DiffeoMap lift(std::span<const PeriodicField> history, std::size_t step) const override;
  int window() const override { return 1; }
  const Grid& grid() const override { return grid_; }
  std::string kind() const override { return "oracle"; }
  const MapChain& submaps() const { return submaps_; }

 private:
  MapChain submaps_;
  Grid grid_;
};

OracleLifter oracle_lifter(const Trajectory& trajectory);

/// A lifter returning one fixed map, e.g. the constant translation of uniform advection.
class ConstantLifter final : public Lifter {
 public:
  explicit ConstantLifter(DiffeoMap map) : map_(std::move(map)) {}
  DiffeoMap lift(std::span<const PeriodicField>, std::size_t) const override { return map_; }
  int window() const override { return 1; }
  const Grid& grid() const override { return map_.grid(); }
  std::string kind() const override { return "constant"; }

 private:
  DiffeoMap map_;
};

struct RegistrationConfig {
  double lambda_reg = 1e-3;
  int max_iters = 5000;
  double step_init = 1.0;
  double armijo_c = 1e-4;
  double tol_rel = 1e-10;
  int multires_levels = 1;

  void validate() const;
};

struct RegistrationReport {
  int iterations = 0;
  bool converged = false;
  double initial_objective = 0.0;
  double final_objective = 0.0;
  std::vector<double> objective_history;  // finest level, one entry per accepted iterate
  std::vector<int> level_iterations;      // coarse to fine
};

struct RegistrationResult {
  DiffeoMap map;
  RegistrationReport report;
};

/// J(v) = (1/N) sum_x |u_tgt(x) - u_src(x + v(x))|^2 + (lambda/N) sum_x |grad v(x)|^2 over vertex
/// displacement values v; u_src is evaluated through its spectral Hermite interpolant (one per
/// channel) and grad v is spectral. Writes dJ/dv into `grad` (same layout as v) when non-null.
double registration_objective(std::span<const HermiteInterpolant> src, std::span<const Plane> target,
                              const std::array<Plane, 2>& v, double lambda, std::array<Plane, 2>* grad);
double registration_objective(const HermiteInterpolant& src, const Plane& target, const std::array<Plane, 2>& v,
                              double lambda, std::array<Plane, 2>* grad);

/// Variational lifting: finds phi = id + v with u_tgt ~ u_src o phi by gradient descent with
/// Armijo backtracking, coarse to fine over `multires_levels` grids. A scalar pair fixes v only
/// across level sets; vector fields with independent gradients fix it fully.
RegistrationResult register_pair(const PeriodicField& u_src, const PeriodicField& u_tgt, const RegistrationConfig& cfg);

/// Lifts by registering consecutive frames of a reference trajectory.
class RegistrationLifter final : public Lifter {
 public:
  RegistrationLifter(std::vector<PeriodicField> frames, RegistrationConfig cfg);

  DiffeoMap lift(std::span<const PeriodicField> history, std::size_t step) const override;
  int window() const override { return 1; }
  const Grid& grid() const override { return frames_.front().grid(); }
  std::string kind() const override { return "registration"; }
  const RegistrationConfig& config() const { return cfg_; }

 private:
  std::vector<PeriodicField> frames_;
  RegistrationConfig cfg_;
};

/// Training pairs drawn from trajectories: windows of `window` consecutive frames ending at
/// frame k, the target frame k + 1 and (when stored) the submap k.
class PairDataset {
 public:
  struct Sample {
    std::size_t trajectory;
    std::size_t last;  // index of the newest input frame
  };

  PairDataset(std::vector<std::shared_ptr<const Trajectory>> trajectories, int window);

  int window() const { return window_; }
  const Grid& grid() const { return grid_; }
  double dt() const { return dt_; }
  std::size_t size() const { return samples_.size(); }
  const Sample& sample(std::size_t i) const { return samples_[i]; }
  const std::vector<std::shared_ptr<const Trajectory>>& trajectories() const { return trajectories_; }

  std::span<const PeriodicField> inputs(std::size_t i) const;
  const PeriodicField& target(std::size_t i) const;
  bool has_target_maps() const;
  const DiffeoMap& target_map(std::size_t i) const;

 private:
  std::vector<std::shared_ptr<const Trajectory>> trajectories_;
  std::vector<Sample> samples_;
  int window_;
  Grid grid_;
  double dt_;
};

PairDataset build_dataset(std::vector<std::shared_ptr<const Trajectory>> trajectories, int window);

struct DatasetSplit {
  std::vector<std::shared_ptr<const Trajectory>> train;
  std::vector<std::shared_ptr<const Trajectory>> test;
};

/// Splits by trajectory (never by frame) after a seeded shuffle.
DatasetSplit split_trajectories(std::vector<std::shared_ptr<const Trajectory>> trajectories, double train_fraction,
                                std::uint64_t seed);

/// Linear model from truncated input spectra to the 8 Hermite planes of the output map:
/// out = W * [Re c_k, Im c_k for |k|_inf <= K_feat over the window ; 1].
class SpectralLifter final : public Lifter {
 public:
  SpectralLifter(const Grid& grid, int window, int k_feat, double ridge, Eigen::MatrixXd weights);

  DiffeoMap lift(std::span<const PeriodicField> history, std::size_t step) const override;
  int window() const override { return window_; }
  const Grid& grid() const override { return grid_; }
  std::string kind() const override { return "spectral"; }

  int k_feat() const { return k_feat_; }
  double ridge() const { return ridge_; }
  const Eigen::MatrixXd& weights() const { return weights_; }

  /// Number of wavevectors with |k|_inf <= K_feat.
  static int feature_modes(int k_feat) { return (2 * k_feat + 1) * (2 * k_feat + 1); }
  static int feature_count(int window, int k_feat) { return 2 * window * feature_modes(k_feat) + 1; }

  /// Feature vector of a window (bias last).
  static Eigen::VectorXd features(std::span<const PeriodicField> history, int k_feat);

  /// Map from an output coefficient vector (8 planes flattened in plane order).
  static DiffeoMap map_from_coefficients(const Grid& grid, const Eigen::VectorXd& coeffs);
  static Eigen::VectorXd coefficients_from_map(const DiffeoMap& map);

 private:
  Grid grid_;
  int window_;
  int k_feat_;
  double ridge_;
  Eigen::MatrixXd weights_;
};

enum class FitMode { MapSupervised, FieldMismatch };

struct FieldMismatchConfig {
  double lambda = 1e-3;
  int max_iters = 200;
  double armijo_c = 1e-4;
  double step_init = 1.0;
  double tol_rel = 1e-10;
};

struct FitReport {
  std::vector<double> objective_history;
  double train_map_mse = 0.0;
};

/// Ridge-regularized least squares on the map targets (map-supervised), optionally followed by
/// gradient descent on the field-mismatch cost with derivative-plane penalty.
SpectralLifter fit_spectral_lifter(const PairDataset& ds, int k_feat, double ridge, FitMode mode,
                                   const FieldMismatchConfig& fm = {}, FitReport* report = nullptr);

/// Field-mismatch cost (1/(S N)) sum ||u_tgt - u_src o phi_W||^2 + lambda/(S N) sum ||d^a planes||^2.
double field_mismatch_objective(const PairDataset& ds, int k_feat, const Eigen::MatrixXd& weights, double lambda,
                                Eigen::MatrixXd* grad);

}  // namespace dflow
