// dflow: data generation, lifter fitting, rollout and diagnostics from the command line.

#include "dflow/config.hpp"
#include "dflow/diagnostics.hpp"
#include "dflow/errors.hpp"
#include "dflow/interp.hpp"
#include "dflow/io_store.hpp"
#include "dflow/lifting.hpp"
#include "dflow/log.hpp"
#include "dflow/parallel.hpp"
#include "dflow/rollout.hpp"
#include "dflow/solvers.hpp"
#include "dflow/spectral.hpp"

#include <CLI11.hpp>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <memory>
#include <optional>

namespace fs = std::filesystem;
using namespace dflow;

namespace {

struct Common {
  std::string config_path;
  std::string out_dir;
  int threads = 1;
  std::optional<std::uint64_t> seed;
};

struct UsageError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

RunConfig resolve(const Common& c) {
  RunConfig cfg = c.config_path.empty() ? RunConfig{} : load_config(c.config_path);
  if (c.seed) cfg.ic_seed = *c.seed;
  if (!c.out_dir.empty()) cfg.out_dir = c.out_dir;
  cfg.validate();
  set_worker_count(c.threads);
  fs::create_directories(cfg.out_dir);
  return cfg;
}

void add_common(CLI::App* cmd, Common& c) {
  cmd->add_option("--config", c.config_path, "key=value run configuration")->check(CLI::ExistingFile);
  cmd->add_option("--out", c.out_dir, "output directory (overrides out.dir)");
  cmd->add_option("--threads", c.threads, "worker thread cap")->check(CLI::PositiveNumber);
  cmd->add_option("--seed", c.seed, "overrides ic.seed");
}

fs::path out_path(const RunConfig& cfg, const std::string& name) { return fs::path(cfg.out_dir) / name; }

void write_report(const RunConfig& cfg, const std::string& name, const DiagnosticsReport& rep) {
  std::ofstream os(out_path(cfg, name));
  if (!os) throw IoError(IoError::Code::Open, "cannot write " + out_path(cfg, name).string());
  rep.write_csv(os);
  if (!os) throw IoError(IoError::Code::Open, "write failed for " + out_path(cfg, name).string());
  std::cout << "wrote " << out_path(cfg, name).string() << "\n";
}

ScalarSampler slotted_cylinder_default() { return slotted_cylinder({std::numbers::pi, std::numbers::pi}, 1.5, 0.5, 1.0); }

ScalarSampler ic_sampler(const RunConfig& cfg, std::uint64_t seed) {
  if (cfg.ic_kind == "random_vorticity") return TrigSeries(cfg.ic_K, seed).sampler();
  if (cfg.ic_kind == "slotted_cylinder") return slotted_cylinder_default();
  return parse_expression(cfg.ic_expr);
}

CmmConfig cmm_config(const RunConfig& cfg, double T) {
  CmmConfig c;
  c.T = T;
  c.dt = cfg.time_dt;
  c.remap_every = cfg.solver_remap_every;
  return c;
}

// Vorticity initial data evolves under Euler; other initial data is transported by (2 pi, 0).
Trajectory generate_trajectory(const RunConfig& cfg, std::uint64_t seed, double T) {
  const Grid grid(cfg.grid_n);
  Trajectory t(grid);
  if (cfg.ic_kind == "random_vorticity") {
    t = euler_cmm(random_vorticity(grid, cfg.ic_K, seed), cmm_config(cfg, T));
  } else {
    t = advect_cmm(constant_velocity({kTwoPi, 0.0}), ic_sampler(cfg, seed), grid, cmm_config(cfg, T));
  }
  t.meta.seed = seed;
  return t;
}

std::vector<std::shared_ptr<const Trajectory>> load_trajectories(const std::vector<std::string>& paths) {
  std::vector<std::shared_ptr<const Trajectory>> out;
  for (const auto& p : paths) out.push_back(std::make_shared<const Trajectory>(load_trajectory(p)));
  return out;
}

Scheme scheme_of(const RunConfig& cfg) {
  return cfg.rollout_scheme == "semilag" ? Scheme::SemiLagrangian : Scheme::Compose;
}

RolloutConfig rollout_config(const RunConfig& cfg, double dt) {
  RolloutConfig rc;
  rc.scheme = scheme_of(cfg);
  rc.remap_every = cfg.rollout_remap_every;
  rc.dt = dt;
  return rc;
}

RegistrationConfig registration_config(const RunConfig& cfg) {
  RegistrationConfig rc;
  rc.lambda_reg = cfg.reg_lambda;
  rc.max_iters = cfg.reg_max_iters;
  return rc;
}

SpectralLifter fit_from(const RunConfig& cfg, const std::vector<std::shared_ptr<const Trajectory>>& train,
                        FitReport* report) {
  const PairDataset ds = build_dataset(train, cfg.lifter_window);
  const FitMode mode = ds.has_target_maps() ? FitMode::MapSupervised : FitMode::FieldMismatch;
  FieldMismatchConfig fm;
  fm.lambda = cfg.reg_lambda;
  return fit_spectral_lifter(ds, cfg.lifter_k_feat, cfg.lifter_ridge, mode, fm, report);
}

double held_out_map_mse(const SpectralLifter& lifter, const std::vector<std::shared_ptr<const Trajectory>>& test,
                        int window) {
  const PairDataset ds = build_dataset(test, window);
  if (!ds.has_target_maps() || ds.size() == 0) return std::nan("");
  double total = 0.0;
  for (std::size_t s = 0; s < ds.size(); ++s) {
    const Eigen::VectorXd pred = SpectralLifter::coefficients_from_map(lifter.lift(ds.inputs(s), s));
    const Eigen::VectorXd ref = SpectralLifter::coefficients_from_map(ds.target_map(s));
    total += (pred - ref).squaredNorm() / static_cast<double>(pred.size());
  }
  return total / static_cast<double>(ds.size());
}

// Per-frame scalar diagnostics of a trajectory against its own initial frame.
void trajectory_series(const Trajectory& t, const std::string& prefix, DiagnosticsReport& rep) {
  const PeriodicField& f0 = t.frames.front();
  for (std::size_t k = 0; k < t.frames.size(); ++k) {
    const PeriodicField& f = t.frames[k];
    const double time = t.time(k);
    rep.add(prefix + "mass", time, simpson_integral(f));
    PeriodicField sq(f.grid());
    sq.scalar() = f.scalar().square();
    rep.add(prefix + "enstrophy", time, simpson_integral(sq));
    const ExtremaExcess e = extrema_error(f, f0);
    rep.add(prefix + "min_excess", time, e.min_excess);
    rep.add(prefix + "max_excess", time, e.max_excess);
  }
}

void spectrum_series(const PeriodicField& w, const std::string& name, DiagnosticsReport& rep) {
  for (const auto& s : energy_spectrum(w)) rep.add(name, s.shell, s.energy);
}

// Largest per-map bw_eps of phi_j - id, used as L in the composition bound.
double per_map_bandwidth(const MapChain& chain, double eps, const Grid& g) {
  int L = 0;
  for (std::size_t j = 0; j < chain.size(); ++j) {
    const auto pts = g.vertices();
    const Points d = chain_displace(chain.slice(j, 1), pts) - pts;
    std::array<Spectrum, 2> spec{dft(g, Plane(d.row(0).reshaped<Eigen::RowMajor>(g.ny(), g.nx()))),
                                 dft(g, Plane(d.row(1).reshaped<Eigen::RowMajor>(g.ny(), g.nx())))};
    for (auto& s : spec) s.at(0, 0) = 0.0;
    L = std::max(L, effective_bandwidth(std::span<const Spectrum>(spec), eps));
  }
  return std::max(L, 1);
}

int cmd_generate(const Common& c, int count) {
  const RunConfig cfg = resolve(c);
  for (int i = 0; i < count; ++i) {
    const std::uint64_t seed = cfg.ic_seed + static_cast<std::uint64_t>(i);
    const Trajectory t = generate_trajectory(cfg, seed, cfg.time_T);
    const fs::path p = out_path(cfg, "traj_seed" + std::to_string(seed) + ".dflo");
    save_trajectory(p, t);
    std::cout << "wrote " << p.string() << " (" << t.frames.size() << " frames)\n";
  }
  return 0;
}

int cmd_fit(const Common& c, const std::vector<std::string>& archives) {
  if (archives.empty()) throw UsageError("fit: no training archives given");
  const RunConfig cfg = resolve(c);
  if (cfg.lifter_kind != "spectral") {
    throw ConfigError("fit: lifter.kind=" + cfg.lifter_kind + " has no trainable parameters; use spectral");
  }
  auto all = load_trajectories(archives);
  DatasetSplit split = all.size() > 1 ? split_trajectories(all, 0.8, cfg.ic_seed) : DatasetSplit{all, {}};
  FitReport fr;
  const SpectralLifter lifter = fit_from(cfg, split.train, &fr);
  save_lifter(out_path(cfg, "lifter.dflo"), lifter);
  std::cout << "wrote " << out_path(cfg, "lifter.dflo").string() << "\n";
  DiagnosticsReport rep;
  rep.add("train_map_mse", 0.0, fr.train_map_mse);
  if (!split.test.empty()) {
    const double test = held_out_map_mse(lifter, split.test, cfg.lifter_window);
    if (std::isfinite(test)) rep.add("test_map_mse", 0.0, test);
  }
  for (std::size_t i = 0; i < fr.objective_history.size(); ++i) {
    rep.add("field_mismatch_objective", static_cast<double>(i), fr.objective_history[i]);
  }
  write_report(cfg, "fit_report.csv", rep);
  return 0;
}

int cmd_rollout(const Common& c, const std::string& lifter_path, const std::string& reference_path) {
  const RunConfig cfg = resolve(c);
  std::optional<Trajectory> ref;
  if (!reference_path.empty()) ref = load_trajectory(reference_path);

  std::unique_ptr<Lifter> lifter;
  if (cfg.lifter_kind == "spectral") {
    if (lifter_path.empty()) throw UsageError("rollout: lifter.kind=spectral needs --lifter");
    lifter = std::make_unique<SpectralLifter>(load_lifter(lifter_path));
  } else if (!ref) {
    throw UsageError("rollout: lifter.kind=" + cfg.lifter_kind + " needs --reference");
  } else if (cfg.lifter_kind == "oracle") {
    lifter = std::make_unique<OracleLifter>(oracle_lifter(*ref));
  } else {
    lifter = std::make_unique<RegistrationLifter>(ref->frames, registration_config(cfg));
  }
  const std::size_t m = static_cast<std::size_t>(lifter->window());

  std::vector<PeriodicField> window;
  double dt = cfg.frame_dt();
  if (ref) {
    if (ref->frames.size() < m) throw DomainError("rollout: reference is shorter than the lifter window");
    window.assign(ref->frames.begin(), ref->frames.begin() + static_cast<std::ptrdiff_t>(m));
    dt = ref->dt;
  } else {
    const Trajectory head = generate_trajectory(cfg, cfg.ic_seed, static_cast<double>(m - 1) * cfg.frame_dt());
    window.assign(head.frames.begin(), head.frames.begin() + static_cast<std::ptrdiff_t>(m));
  }
  std::size_t steps = static_cast<std::size_t>(std::llround(cfg.time_T / dt)) - (m - 1);
  if (ref) steps = std::min(steps, ref->frames.size() - m);

  const RolloutResult res = rollout(window, *lifter, steps, rollout_config(cfg, dt), m - 1);
  Trajectory out = res.trajectory;
  out.submaps = res.chain;
  out.meta.seed = cfg.ic_seed;
  save_trajectory(out_path(cfg, "rollout.dflo"), out);
  std::cout << "wrote " << out_path(cfg, "rollout.dflo").string() << " (" << out.frames.size() << " frames)\n";
  if (ref) {
    DiagnosticsReport rep;
    for (std::size_t k = 0; k < out.frames.size(); ++k) {
      rep.add("mse", static_cast<double>(k + m - 1) * dt, mse(out.frames[k], ref->frames[k + m - 1]));
    }
    write_report(cfg, "rollout_errors.csv", rep);
  }
  return 0;
}

int cmd_diagnose(const Common& c, const std::vector<std::string>& archives, const std::string& reference_path) {
  if (archives.empty()) throw UsageError("diagnose: no archives given");
  const RunConfig cfg = resolve(c);
  std::optional<Trajectory> ref;
  if (!reference_path.empty()) ref = load_trajectory(reference_path);
  const Grid quad(cfg.diag_quad_n);
  for (const auto& path : archives) {
    const ArchiveHeader h = read_header(path);
    DiagnosticsReport rep;
    rep.set_meta("archive", path);
    MapChain chain;
    ScalarSampler a0;
    std::optional<Grid> grid;
    if (h.kind == ArchiveKind::Trajectory) {
      const Trajectory t = load_trajectory(path);
      grid = t.grid;
      trajectory_series(t, "", rep);
      spectrum_series(t.frames.back(), "energy_spectrum_final", rep);
      if (ref) {
        const std::size_t offset = t.frames.size() <= ref->frames.size() ? ref->frames.size() - t.frames.size() : 0;
        for (std::size_t k = 0; k < t.frames.size() && k + offset < ref->frames.size(); ++k) {
          if (t.frames[k].grid() == ref->frames[k + offset].grid()) {
            rep.add("mse_vs_reference", t.time(k + offset), mse(t.frames[k], ref->frames[k + offset]));
          }
        }
      }
      chain = t.submaps;
      const ScalarSampler f0 = bilinear_sampler(t.frames.front());
      a0 = [f0](const Points& p) -> Eigen::VectorXd { return f0(p).array().square(); };
    } else if (h.kind == ArchiveKind::Chain) {
      chain = load_chain(path);
      grid = chain.grid();
      a0 = parse_expression("1 + 0.5*sin(x)*cos(y)");
    } else {
      throw UsageError("diagnose: " + path + " is neither a trajectory nor a chain archive");
    }
    if (!chain.empty()) {
      rep.add("conservation_error", 0.0, conservation_error(chain, a0, quad));
      const MapChain head = chain.slice(0, std::min<std::size_t>(5, chain.size()));
      const int sample_n = std::min(1024, std::max(cfg.diag_quad_n, 4 * grid->nx()));
      const double L = per_map_bandwidth(head, cfg.diag_eps, *grid);
      for (const auto& b : bandwidth_study(head, cfg.diag_eps, L, sample_n)) {
        rep.add("bandwidth_measured", b.k, b.measured);
        rep.add("bandwidth_bound", b.k, b.bound);
      }
      const Grid fine(4 * grid->nx(), 4 * grid->ny());
      rep.add("resolution_consistency", 0.0, resolution_consistency_check(chain, a0, *grid, fine));
      rep.add("resampling_deviation", 0.0, resampling_deviation(chain, a0, *grid, fine));
    }
    write_report(cfg, "diagnostics_" + fs::path(path).stem().string() + ".csv", rep);
  }
  return 0;
}

std::unique_ptr<Lifter> experiment_lifter(const RunConfig& cfg, const Trajectory& ref,
                                          const std::vector<std::shared_ptr<const Trajectory>>& train) {
  if (cfg.lifter_kind == "oracle") return std::make_unique<OracleLifter>(oracle_lifter(ref));
  if (cfg.lifter_kind == "registration") {
    return std::make_unique<RegistrationLifter>(ref.frames, registration_config(cfg));
  }
  return std::make_unique<SpectralLifter>(fit_from(cfg, train, nullptr));
}

int cmd_experiment_advection(const RunConfig& cfg) {
  const Grid grid(cfg.grid_n);
  const double dt = cfg.frame_dt();
  const auto steps = static_cast<std::size_t>(std::llround(cfg.time_T / dt));
  // Training data: one smooth field over a few frames; the test field is the slotted cylinder.
  RunConfig train_cfg = cfg;
  train_cfg.ic_kind = "expression";
  train_cfg.ic_expr = "exp(-((x-pi)^2+(y-pi)^2))";
  const int m = cfg.lifter_kind == "spectral" ? cfg.lifter_window : 1;
  auto train = std::make_shared<const Trajectory>(generate_trajectory(train_cfg, cfg.ic_seed, (m + 4) * dt));

  std::unique_ptr<Lifter> lifter;
  if (cfg.lifter_kind == "oracle") {
    lifter = std::make_unique<ConstantLifter>(train->submaps[0]);
  } else if (cfg.lifter_kind == "registration") {
    lifter = std::make_unique<ConstantLifter>(
        register_pair(train->frames[0], train->frames[1], registration_config(cfg)).map);
  } else {
    lifter = std::make_unique<SpectralLifter>(fit_from(cfg, {train}, nullptr));
  }

  const ScalarSampler u0 = slotted_cylinder_default();
  std::vector<PeriodicField> window;
  for (int k = 0; k < m; ++k) {
    PeriodicField f(grid);
    Points p = grid.vertices();
    p.row(0).array() -= kTwoPi * k * dt;
    f.flat() = u0(p);
    window.push_back(std::move(f));
  }
  DiagnosticsReport errors, conservation;
  const PeriodicField initial = window.back();
  const double mass0 = simpson_integral(initial);
  const std::size_t quad_every = std::max<std::size_t>(1, steps / 10);
  const RolloutObserver obs = [&](const RolloutState& s) {
    const double t = static_cast<double>(s.step_index()) * dt;
    Points p = grid.vertices();
    p.row(0).array() -= kTwoPi * t;
    PeriodicField exact(grid);
    exact.flat() = u0(p);
    errors.add("mse", t, mse(s.frame(), exact));
    const ExtremaExcess e = extrema_error(s.frame(), initial);
    errors.add("min_excess", t, e.min_excess);
    errors.add("max_excess", t, e.max_excess);
    conservation.add("mass_relative_drift", t, (simpson_integral(s.frame()) - mass0) / mass0);
    if ((s.step_index() - (m - 1)) % quad_every == 0) {
      const ScalarSampler one = [](const Points& q) { return Eigen::VectorXd::Ones(q.cols()); };
      conservation.add("conservation_error_unit_density", t,
                       conservation_error(s.chain(), one, Grid(cfg.diag_quad_n)));
    }
  };
  rollout(window, *lifter, steps, rollout_config(cfg, dt), static_cast<std::size_t>(m - 1),
          bilinear_sampler(initial), obs);
  write_report(cfg, "advection_errors.csv", errors);
  write_report(cfg, "advection_conservation.csv", conservation);
  return 0;
}

int cmd_experiment_euler(const RunConfig& cfg) {
  const Grid grid(cfg.grid_n);
  const Trajectory ref = generate_trajectory(cfg, cfg.ic_seed, cfg.time_T);
  std::vector<std::shared_ptr<const Trajectory>> train;
  if (cfg.lifter_kind == "spectral") {
    for (std::uint64_t s = 1; s <= 4; ++s) {
      train.push_back(std::make_shared<const Trajectory>(generate_trajectory(cfg, cfg.ic_seed + s, cfg.time_T)));
    }
  }
  const std::unique_ptr<Lifter> lifter = experiment_lifter(cfg, ref, train);
  const auto m = static_cast<std::size_t>(lifter->window());
  const std::vector<PeriodicField> window(ref.frames.begin(), ref.frames.begin() + static_cast<std::ptrdiff_t>(m));
  const std::size_t steps = ref.frames.size() - m;

  const PeriodicField w0 = ref.frames[m - 1];
  const ScalarSampler a0 = [f = bilinear_sampler(w0)](const Points& p) -> Eigen::VectorXd {
    return f(p).array().square();
  };
  PeriodicField w0sq(grid);
  w0sq.scalar() = w0.scalar().square();
  const double a0_norm = simpson_integral(w0sq);

  DiagnosticsReport errors, conservation, spectra;
  const std::size_t quad_every = std::max<std::size_t>(1, steps / 10);
  const RolloutObserver obs = [&](const RolloutState& s) {
    const std::size_t k = s.step_index();
    const double t = ref.time(k);
    errors.add("mse", t, mse(s.frame(), ref.frames[k]));
    if ((k - (m - 1)) % quad_every == 0 || k + 1 == ref.frames.size()) {
      conservation.add("enstrophy_conservation_error_relative", t,
                       conservation_error(s.chain(), a0, Grid(cfg.diag_quad_n)) / a0_norm);
    }
  };
  const RolloutResult res =
      rollout(window, *lifter, steps, rollout_config(cfg, ref.dt), m - 1, bilinear_sampler(w0), obs);
  const Grid fine(4 * cfg.grid_n);
  const PeriodicField super = pullback_field(res.chain, bilinear_sampler(w0), fine);
  const auto spec = energy_spectrum(super);
  spectrum_series(super, "energy_spectrum_final", spectra);
  const auto [lo, hi] = default_slope_range(static_cast<int>(spec.size()));
  spectra.add("spectrum_slope", ref.time(ref.frames.size() - 1), spectrum_slope(spec, lo, hi));
  spectra.set_meta("slope_range", std::to_string(lo) + "-" + std::to_string(hi));
  write_report(cfg, "euler_errors.csv", errors);
  write_report(cfg, "euler_conservation.csv", conservation);
  write_report(cfg, "euler_spectrum.csv", spectra);
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Diffeomorphic evolution-operator learning on the 2-torus"};
  app.require_subcommand(1);

  Common common;
  int count = 1;
  std::vector<std::string> archives;
  std::string lifter_path, reference_path, experiment;

  auto* gen = app.add_subcommand("generate", "write reference trajectory archives");
  add_common(gen, common);
  gen->add_option("--count", count, "number of consecutive seeds")->check(CLI::PositiveNumber);

  auto* fit = app.add_subcommand("fit", "fit a spectral lifter on trajectory archives");
  add_common(fit, common);
  fit->add_option("archives", archives, "training trajectory archives");

  auto* roll = app.add_subcommand("rollout", "autoregressive rollout from the configured initial condition");
  add_common(roll, common);
  roll->add_option("--lifter", lifter_path, "lifter archive (spectral)");
  roll->add_option("--reference", reference_path, "reference trajectory (initial window, oracle maps)");

  auto* diag = app.add_subcommand("diagnose", "diagnostic CSV reports for trajectory or chain archives");
  add_common(diag, common);
  diag->add_option("archives", archives, "archives to diagnose");
  diag->add_option("--reference", reference_path, "reference trajectory for MSE");

  auto* exp = app.add_subcommand("experiment", "end-to-end advection or Euler pipeline");
  add_common(exp, common);
  exp->add_option("name", experiment, "advection | euler")->required()->check(CLI::IsMember({"advection", "euler"}));

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 2;
  }

  try {
    if (*gen) return cmd_generate(common, count);
    if (*fit) return cmd_fit(common, archives);
    if (*roll) return cmd_rollout(common, lifter_path, reference_path);
    if (*diag) return cmd_diagnose(common, archives, reference_path);
    const RunConfig cfg = resolve(common);
    return experiment == "advection" ? cmd_experiment_advection(cfg) : cmd_experiment_euler(cfg);
  } catch (const UsageError& e) {
    std::cerr << "usage error: " << e.what() << "\n" << app.help();
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
}
