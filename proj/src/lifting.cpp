#include "dflow/lifting.hpp"

#include "dflow/errors.hpp"
#include "dflow/log.hpp"
#include "dflow/parallel.hpp"
#include "dflow/spectral.hpp"

#include <Eigen/Cholesky>

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>

namespace dflow {

namespace {

double sum_squares(const Plane& p) {
  const Eigen::ArrayXd sq = p.square().reshaped();
  return pairwise_sum(sq.data(), static_cast<std::size_t>(sq.size()));
}

void require_same_grid(const PeriodicField& a, const PeriodicField& b, const char* where) {
  if (!(a.grid() == b.grid())) throw DomainError(std::string(where) + ": fields live on different grids");
}

// Coarsest-first list of grids for coarse-to-fine registration.
std::vector<Grid> level_grids(const Grid& fine, int levels) {
  std::vector<Grid> out{fine};
  for (int l = 1; l < levels; ++l) {
    const Grid& g = out.back();
    if (g.nx() % 4 != 0 || g.ny() % 4 != 0 || g.nx() / 2 < 8 || g.ny() / 2 < 8) break;
    out.emplace_back(g.nx() / 2, g.ny() / 2);
  }
  std::reverse(out.begin(), out.end());
  return out;
}

struct GdOutcome {
  int iterations = 0;
  bool converged = false;
  std::vector<double> history;
};

// Gradient descent with Armijo backtracking and step growth after each accepted step.
// `f(x, grad)` returns the objective and fills grad when non-null. The first trial step moves
// the largest coordinate by `first_move`.
template <typename Vec, typename F>
GdOutcome armijo_descent(Vec& x, const F& f, int max_iters, double armijo_c, double first_move, double tol_rel) {
  GdOutcome out;
  Vec g;
  double J = f(x, &g);
  out.history.push_back(J);
  if (J == 0.0) {
    out.converged = true;
    return out;
  }
  double alpha = -1.0;
  while (out.iterations < max_iters) {
    const double g2 = g.square().sum();
    const double gmax = g.abs().maxCoeff();
    if (!(g2 > 0.0)) {
      out.converged = true;
      break;
    }
    if (alpha < 0.0) alpha = first_move / gmax;
    bool accepted = false;
    Vec trial;
    double Jt = 0.0;
    for (int bt = 0; bt < 60; ++bt) {
      trial = x - alpha * g;
      Jt = f(trial, nullptr);
      if (std::isfinite(Jt) && Jt <= J - armijo_c * alpha * g2) {
        accepted = true;
        break;
      }
      alpha *= 0.5;
    }
    if (!accepted) break;
    const double rel = (J - Jt) / J;
    x = std::move(trial);
    J = f(x, &g);
    out.history.push_back(J);
    ++out.iterations;
    alpha *= 2.0;
    if (J == 0.0 || rel < tol_rel) {
      out.converged = true;
      break;
    }
  }
  return out;
}

// Packs the two displacement planes into one array so the descent loop sees a single vector.
struct Displacement {
  Grid grid;
  Eigen::ArrayXd data;  // [v_x | v_y], each in storage order

  std::array<Plane, 2> planes() const {
    const auto n = static_cast<Eigen::Index>(grid.size());
    std::array<Plane, 2> p;
    for (int c = 0; c < 2; ++c) {
      p[c] = Plane(grid.ny(), grid.nx());
      p[c].reshaped<Eigen::RowMajor>() = data.segment(c * n, n);
    }
    return p;
  }

  static Eigen::ArrayXd pack(const std::array<Plane, 2>& p) {
    const auto n = p[0].size();
    Eigen::ArrayXd d(2 * n);
    for (int c = 0; c < 2; ++c) d.segment(c * n, n) = p[c].reshaped<Eigen::RowMajor>();
    return d;
  }
};

}  // namespace

void Lifter::check_history(std::span<const PeriodicField> history) const {
  if (static_cast<int>(history.size()) != window()) {
    throw DomainError("lift: expected a history of " + std::to_string(window()) + " fields, got " +
                      std::to_string(history.size()));
  }
  for (const auto& f : history) {
    if (!(f.grid() == grid())) throw DomainError("lift: history field is not on the lifter grid");
  }
}

OracleLifter::OracleLifter(MapChain submaps) : submaps_(std::move(submaps)), grid_(4) {
  if (submaps_.empty()) throw ChainError("oracle lifter needs at least one submap");
  grid_ = *submaps_.grid();
}

DiffeoMap OracleLifter::lift(std::span<const PeriodicField> history, std::size_t step) const {
  if (history.size() != 1) throw DomainError("lift: oracle lifter expects a history of 1 field");
  if (step >= submaps_.size()) {
    throw std::out_of_range("oracle lifter: no stored submap for step " + std::to_string(step));
  }
  return submaps_[step];
}

OracleLifter oracle_lifter(const Trajectory& trajectory) { return OracleLifter(trajectory.submaps); }

void RegistrationConfig::validate() const {
  if (!(lambda_reg >= 0.0)) throw ConfigError("registration: lambda_reg must be nonnegative");
  if (max_iters < 1) throw ConfigError("registration: max_iters must be at least 1");
  if (!(step_init > 0.0)) throw ConfigError("registration: step_init must be positive");
  if (!(armijo_c > 0.0 && armijo_c < 1.0)) throw ConfigError("registration: armijo_c must lie in (0, 1)");
  if (!(tol_rel > 0.0)) throw ConfigError("registration: tol_rel must be positive");
  if (multires_levels < 1) throw ConfigError("registration: multires_levels must be at least 1");
}

double registration_objective(std::span<const HermiteInterpolant> src, std::span<const Plane> target,
                              const std::array<Plane, 2>& v, double lambda, std::array<Plane, 2>* grad) {
  if (src.empty() || src.size() != target.size()) throw DomainError("registration: channel count mismatch");
  const Grid& g = src.front().grid();
  const double N = static_cast<double>(g.size());
  Plane resid2 = Plane::Zero(g.ny(), g.nx());
  if (grad) {
    (*grad)[0].resize(g.ny(), g.nx());
    (*grad)[1].resize(g.ny(), g.nx());
  }
  parallel_for(g.size(), [&](std::size_t b, std::size_t e) {
    for (std::size_t k = b; k < e; ++k) {
      const int j = static_cast<int>(k / g.nx());
      const int i = static_cast<int>(k % g.nx());
      const double px = g.x(i) + v[0](j, i);
      const double py = g.y(j) + v[1](j, i);
      double gx = 0.0, gy = 0.0, r2 = 0.0;
      for (std::size_t c = 0; c < src.size(); ++c) {
        const HermiteJet jet = src[c].jet(px, py);
        const double r = target[c](j, i) - jet.value;
        r2 += r * r;
        gx += r * jet.dx;
        gy += r * jet.dy;
      }
      resid2(j, i) = r2;
      if (grad) {
        (*grad)[0](j, i) = -2.0 / N * gx;
        (*grad)[1](j, i) = -2.0 / N * gy;
      }
    }
  });
  double J = pairwise_sum(resid2.data(), static_cast<std::size_t>(resid2.size())) / N;
  if (lambda > 0.0) {
    for (int c = 0; c < 2; ++c) {
      const Plane vx = spectral_derivative(g, v[c], 1, 0);
      const Plane vy = spectral_derivative(g, v[c], 0, 1);
      J += lambda / N * (sum_squares(vx) + sum_squares(vy));
      if (grad) {
        (*grad)[c] -= 2.0 * lambda / N * (spectral_derivative(g, vx, 1, 0) + spectral_derivative(g, vy, 0, 1));
      }
    }
  }
  return J;
}

double registration_objective(const HermiteInterpolant& src, const Plane& target, const std::array<Plane, 2>& v,
                              double lambda, std::array<Plane, 2>* grad) {
  return registration_objective(std::span<const HermiteInterpolant>(&src, 1), std::span<const Plane>(&target, 1), v,
                                lambda, grad);
}

RegistrationResult register_pair(const PeriodicField& u_src, const PeriodicField& u_tgt, const RegistrationConfig& cfg) {
  cfg.validate();
  require_same_grid(u_src, u_tgt, "register_pair");
  if (u_src.channels() != u_tgt.channels()) throw DomainError("register_pair: channel counts differ");
  u_src.require_finite("register_pair");
  u_tgt.require_finite("register_pair");

  const Grid& fine = u_src.grid();
  const std::vector<Grid> grids = level_grids(fine, cfg.multires_levels);
  RegistrationReport report;
  std::array<Plane, 2> v{Plane::Zero(grids.front().ny(), grids.front().nx()),
                         Plane::Zero(grids.front().ny(), grids.front().nx())};
  Grid current = grids.front();

  for (const Grid& g : grids) {
    if (!(g == current)) {
      for (auto& p : v) p = spectral_resample(current, p, g);
      current = g;
    }
    std::vector<HermiteInterpolant> src;
    std::vector<Plane> tgt;
    for (int c = 0; c < u_src.channels(); ++c) {
      if (g == fine) {
        src.emplace_back(g, u_src.channel(c));
        tgt.push_back(u_tgt.channel(c));
      } else {
        src.emplace_back(g, spectral_resample(fine, u_src.channel(c), g));
        tgt.push_back(spectral_resample(fine, u_tgt.channel(c), g));
      }
    }

    Displacement packed{g, Displacement::pack(v)};
    const auto n = static_cast<Eigen::Index>(g.size());
    auto f = [&](const Eigen::ArrayXd& x, Eigen::ArrayXd* grad) {
      const Displacement d{g, x};
      std::array<Plane, 2> gp;
      const double J = registration_objective(src, tgt, d.planes(), cfg.lambda_reg, grad ? &gp : nullptr);
      if (grad) {
        grad->resize(2 * n);
        for (int c = 0; c < 2; ++c) grad->segment(c * n, n) = gp[c].reshaped<Eigen::RowMajor>();
      }
      return J;
    };
    // Gradients carry a 1/N factor; the first trial moves the largest displacement by step_init * dx / 10.
    const GdOutcome run =
        armijo_descent(packed.data, f, cfg.max_iters, cfg.armijo_c, 0.1 * cfg.step_init * g.dx(), cfg.tol_rel);
    v = packed.planes();
    report.level_iterations.push_back(run.iterations);
    report.iterations += run.iterations;
    if (g == fine) {
      report.converged = run.converged;
      report.objective_history = run.history;
      report.initial_objective = run.history.front();
      report.final_objective = run.history.back();
    }
  }
  if (report.objective_history.empty()) {
    // Coarse-to-fine ended early; evaluate once on the fine grid.
    std::vector<HermiteInterpolant> src;
    std::vector<Plane> tgt;
    for (int c = 0; c < u_src.channels(); ++c) {
      src.emplace_back(fine, u_src.channel(c));
      tgt.push_back(u_tgt.channel(c));
    }
    const double J0 = registration_objective(src, tgt,
                                             {Plane::Zero(fine.ny(), fine.nx()), Plane::Zero(fine.ny(), fine.nx())},
                                             cfg.lambda_reg, nullptr);
    const double J1 = registration_objective(src, tgt, v, cfg.lambda_reg, nullptr);
    report.objective_history = {J1};
    report.initial_objective = J0;
    report.final_objective = J1;
  }
  return {map_from_values(fine, v[0], v[1]), std::move(report)};
}

RegistrationLifter::RegistrationLifter(std::vector<PeriodicField> frames, RegistrationConfig cfg)
    : frames_(std::move(frames)), cfg_(cfg) {
  cfg_.validate();
  if (frames_.size() < 2) throw DomainError("registration lifter needs at least two frames");
  for (const auto& f : frames_) require_same_grid(frames_.front(), f, "registration lifter");
}

DiffeoMap RegistrationLifter::lift(std::span<const PeriodicField> history, std::size_t step) const {
  check_history(history);
  if (step + 1 >= frames_.size()) {
    throw std::out_of_range("registration lifter: no reference frame after step " + std::to_string(step));
  }
  return register_pair(history.back(), frames_[step + 1], cfg_).map;
}

PairDataset::PairDataset(std::vector<std::shared_ptr<const Trajectory>> trajectories, int window)
    : window_(window), grid_(4), dt_(0.0) {
  if (window < 1) throw DomainError("dataset window must be at least 1");
  bool first = true;
  for (auto& t : trajectories) {
    if (!t) continue;
    if (first) {
      grid_ = t->grid;
      dt_ = t->dt;
      first = false;
    } else if (!(t->grid == grid_) || std::abs(t->dt - dt_) > 1e-12 * std::max(1.0, dt_)) {
      throw DomainError("dataset trajectories must share grid and time step");
    }
    if (t->frames.size() < static_cast<std::size_t>(window) + 1) {
      log_warning("build_dataset: trajectory with " + std::to_string(t->frames.size()) +
                  " frames is too short for the window; skipped");
      continue;
    }
    const std::size_t idx = trajectories_.size();
    for (std::size_t last = window - 1; last + 1 < t->frames.size(); ++last) samples_.push_back({idx, last});
    trajectories_.push_back(std::move(t));
  }
  if (first) throw DomainError("dataset needs at least one trajectory");
}

std::span<const PeriodicField> PairDataset::inputs(std::size_t i) const {
  const Sample& s = samples_.at(i);
  const auto& frames = trajectories_[s.trajectory]->frames;
  return {frames.data() + (s.last + 1 - window_), static_cast<std::size_t>(window_)};
}

const PeriodicField& PairDataset::target(std::size_t i) const {
  const Sample& s = samples_.at(i);
  return trajectories_[s.trajectory]->frames[s.last + 1];
}

bool PairDataset::has_target_maps() const {
  return std::all_of(trajectories_.begin(), trajectories_.end(),
                     [](const auto& t) { return t->submaps.size() + 1 >= t->frames.size(); });
}

const DiffeoMap& PairDataset::target_map(std::size_t i) const {
  const Sample& s = samples_.at(i);
  const auto& sub = trajectories_[s.trajectory]->submaps;
  if (s.last >= sub.size()) throw std::out_of_range("dataset: trajectory has no submap for this sample");
  return sub[s.last];
}

PairDataset build_dataset(std::vector<std::shared_ptr<const Trajectory>> trajectories, int window) {
  return PairDataset(std::move(trajectories), window);
}

DatasetSplit split_trajectories(std::vector<std::shared_ptr<const Trajectory>> trajectories, double train_fraction,
                                std::uint64_t seed) {
  if (!(train_fraction >= 0.0 && train_fraction <= 1.0)) throw DomainError("train fraction must lie in [0, 1]");
  std::vector<std::size_t> order(trajectories.size());
  std::iota(order.begin(), order.end(), 0);
  std::mt19937_64 rng(seed);
  std::shuffle(order.begin(), order.end(), rng);
  const auto n_train = static_cast<std::size_t>(std::llround(train_fraction * static_cast<double>(order.size())));
  DatasetSplit out;
  for (std::size_t i = 0; i < order.size(); ++i) {
    (i < n_train ? out.train : out.test).push_back(trajectories[order[i]]);
  }
  return out;
}

SpectralLifter::SpectralLifter(const Grid& grid, int window, int k_feat, double ridge, Eigen::MatrixXd weights)
    : grid_(grid), window_(window), k_feat_(k_feat), ridge_(ridge), weights_(std::move(weights)) {
  if (window < 1) throw DomainError("spectral lifter: window must be at least 1");
  if (k_feat < 0 || 2 * k_feat >= std::min(grid.nx(), grid.ny())) {
    throw DomainError("spectral lifter: k_feat must satisfy 0 <= k_feat < n/2");
  }
  const auto q = static_cast<Eigen::Index>(DiffeoMap::kPlanes * grid.size());
  if (weights_.rows() != q || weights_.cols() != feature_count(window, k_feat)) {
    throw DomainError("spectral lifter: weight matrix has the wrong shape");
  }
  if (!weights_.allFinite()) throw InvalidFieldError("spectral lifter: non-finite weights");
}

Eigen::VectorXd SpectralLifter::features(std::span<const PeriodicField> history, int k_feat) {
  const int modes = feature_modes(k_feat);
  Eigen::VectorXd f(2 * static_cast<Eigen::Index>(history.size()) * modes + 1);
  Eigen::Index at = 0;
  for (const auto& frame : history) {
    const Spectrum s = dft(frame);
    for (int ky = -k_feat; ky <= k_feat; ++ky) {
      for (int kx = -k_feat; kx <= k_feat; ++kx) {
        const auto c = s.at(kx, ky);
        f(at++) = c.real();
        f(at++) = c.imag();
      }
    }
  }
  f(at) = 1.0;
  return f;
}

DiffeoMap SpectralLifter::map_from_coefficients(const Grid& grid, const Eigen::VectorXd& coeffs) {
  const auto n = static_cast<Eigen::Index>(grid.size());
  if (coeffs.size() != DiffeoMap::kPlanes * n) throw DomainError("coefficient vector has the wrong length");
  std::array<Plane, DiffeoMap::kPlanes> planes;
  for (int k = 0; k < DiffeoMap::kPlanes; ++k) {
    planes[k] = Plane(grid.ny(), grid.nx());
    planes[k].reshaped<Eigen::RowMajor>() = coeffs.segment(k * n, n).array();
  }
  return {grid, std::move(planes)};
}

Eigen::VectorXd SpectralLifter::coefficients_from_map(const DiffeoMap& map) {
  const auto n = static_cast<Eigen::Index>(map.grid().size());
  Eigen::VectorXd c(DiffeoMap::kPlanes * n);
  for (int k = 0; k < DiffeoMap::kPlanes; ++k) c.segment(k * n, n) = map.plane(k).reshaped<Eigen::RowMajor>();
  return c;
}

DiffeoMap SpectralLifter::lift(std::span<const PeriodicField> history, std::size_t) const {
  check_history(history);
  return map_from_coefficients(grid_, weights_ * features(history, k_feat_));
}

namespace {

Eigen::MatrixXd feature_matrix(const PairDataset& ds, int k_feat) {
  const Eigen::Index S = static_cast<Eigen::Index>(ds.size());
  Eigen::MatrixXd F(S, SpectralLifter::feature_count(ds.window(), k_feat));
  for (Eigen::Index s = 0; s < S; ++s) F.row(s) = SpectralLifter::features(ds.inputs(s), k_feat).transpose();
  return F;
}

// Centered ridge regression; the bias column (last) is not penalized.
Eigen::MatrixXd ridge_solve(const Eigen::MatrixXd& F, const Eigen::MatrixXd& Y, double ridge) {
  const Eigen::Index P = F.cols() - 1;
  const Eigen::MatrixXd X = F.leftCols(P);
  const Eigen::RowVectorXd xm = X.colwise().mean();
  const Eigen::RowVectorXd ym = Y.colwise().mean();
  const Eigen::MatrixXd Xc = X.rowwise() - xm;
  const Eigen::MatrixXd Yc = Y.rowwise() - ym;
  Eigen::MatrixXd A;  // P x Q
  if (Xc.rows() < P) {
    Eigen::MatrixXd K = Xc * Xc.transpose();
    K.diagonal().array() += ridge;
    A = Xc.transpose() * K.ldlt().solve(Yc);
  } else {
    Eigen::MatrixXd K = Xc.transpose() * Xc;
    K.diagonal().array() += ridge;
    A = K.ldlt().solve(Xc.transpose() * Yc);
  }
  Eigen::MatrixXd W(Y.cols(), P + 1);
  W.leftCols(P) = A.transpose();
  W.col(P) = (ym - xm * A).transpose();
  return W;
}

bool is_derivative_plane(int k) { return k % 4 != 0; }

}  // namespace

double field_mismatch_objective(const PairDataset& ds, int k_feat, const Eigen::MatrixXd& weights, double lambda,
                                Eigen::MatrixXd* grad) {
  const Grid& g = ds.grid();
  const auto n = static_cast<Eigen::Index>(g.size());
  const Eigen::Index S = static_cast<Eigen::Index>(ds.size());
  const double scale = 1.0 / (static_cast<double>(S) * static_cast<double>(n));
  const Eigen::MatrixXd F = feature_matrix(ds, k_feat);
  const Eigen::MatrixXd C = weights * F.transpose();  // Q x S
  Eigen::MatrixXd G;
  if (grad) G = Eigen::MatrixXd::Zero(C.rows(), S);
  std::vector<double> per_sample(static_cast<std::size_t>(S));
  for (Eigen::Index s = 0; s < S; ++s) {
    const HermiteInterpolant src(g, ds.inputs(s).back().scalar());
    const Plane& tgt = ds.target(s).scalar();
    double data = 0.0;
    for (Eigen::Index k = 0; k < n; ++k) {
      const int j = static_cast<int>(k / g.nx());
      const int i = static_cast<int>(k % g.nx());
      const HermiteJet jet = src.jet(g.x(i) + C(k, s), g.y(j) + C(4 * n + k, s));
      const double r = tgt(j, i) - jet.value;
      data += r * r;
      if (grad) {
        G(k, s) = -2.0 * scale * r * jet.dx;
        G(4 * n + k, s) = -2.0 * scale * r * jet.dy;
      }
    }
    double pen = 0.0;
    for (int p = 0; p < DiffeoMap::kPlanes; ++p) {
      if (!is_derivative_plane(p)) continue;
      const auto seg = C.col(s).segment(p * n, n);
      pen += seg.squaredNorm();
      if (grad) G.col(s).segment(p * n, n) = 2.0 * lambda * scale * seg;
    }
    per_sample[static_cast<std::size_t>(s)] = data + lambda * pen;
  }
  if (grad) *grad = G * F;
  return scale * pairwise_sum(per_sample.data(), per_sample.size());
}

SpectralLifter fit_spectral_lifter(const PairDataset& ds, int k_feat, double ridge, FitMode mode,
                                   const FieldMismatchConfig& fm, FitReport* report) {
  if (ds.size() == 0) throw DomainError("fit_spectral_lifter: empty dataset");
  ridge = std::max(ridge, 1e-10);
  const Grid& g = ds.grid();
  const auto Q = static_cast<Eigen::Index>(DiffeoMap::kPlanes * g.size());
  const Eigen::Index P = SpectralLifter::feature_count(ds.window(), k_feat);
  // Validates k_feat against the grid before any heavy work.
  SpectralLifter probe(g, ds.window(), k_feat, ridge, Eigen::MatrixXd::Zero(Q, P));
  (void)probe;

  Eigen::MatrixXd W = Eigen::MatrixXd::Zero(Q, P);
  const bool have_maps = ds.has_target_maps();
  if (mode == FitMode::MapSupervised && !have_maps) {
    throw DomainError("fit_spectral_lifter: map-supervised mode needs target submaps");
  }
  const Eigen::MatrixXd F = feature_matrix(ds, k_feat);
  Eigen::MatrixXd Y;
  if (have_maps) {
    Y.resize(F.rows(), Q);
    for (Eigen::Index s = 0; s < F.rows(); ++s) {
      Y.row(s) = SpectralLifter::coefficients_from_map(ds.target_map(s)).transpose();
    }
    W = ridge_solve(F, Y, ridge);
  }

  FitReport rep;
  if (mode == FitMode::FieldMismatch) {
    auto f = [&](const Eigen::ArrayXXd& w, Eigen::ArrayXXd* grad) {
      Eigen::MatrixXd gm;
      const double J = field_mismatch_objective(ds, k_feat, w.matrix(), fm.lambda, grad ? &gm : nullptr);
      if (grad) *grad = gm.array();
      return J;
    };
    Eigen::ArrayXXd w = W.array();
    const GdOutcome run = armijo_descent(w, f, fm.max_iters, fm.armijo_c, 1e-2 * fm.step_init, fm.tol_rel);
    W = w.matrix();
    rep.objective_history = run.history;
  }
  if (have_maps) {
    const Eigen::MatrixXd pred = F * W.transpose();
    rep.train_map_mse = (pred - Y).squaredNorm() / static_cast<double>(pred.size());
  }
  if (report) *report = std::move(rep);
  return SpectralLifter(g, ds.window(), k_feat, ridge, std::move(W));
}

}  // namespace dflow
