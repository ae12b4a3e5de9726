#pragma once

#include "dflow/grid.hpp"

#include <cstdint>
#include <istream>
#include <map>
#include <string>

namespace dflow {

/// Run parameters read from a plain `key = value` file; `#` starts a comment.
struct RunConfig {
  int grid_n = 128;
  double time_dt = 0.001;
  double time_T = 1.0;
  int solver_remap_every = 10;
  std::string ic_kind = "random_vorticity";  // random_vorticity | slotted_cylinder | expression
  int ic_K = 10;
  std::uint64_t ic_seed = 0;
  std::string ic_expr = "cos(y)";
  std::string lifter_kind = "oracle";  // oracle | registration | spectral
  int lifter_window = 5;
  int lifter_k_feat = 32;
  double lifter_ridge = 1e-8;
  double reg_lambda = 1e-3;
  int reg_max_iters = 500;
  std::string rollout_scheme = "compose";  // compose | semilag
  int rollout_remap_every = 10;
  int diag_quad_n = 512;
  double diag_eps = 1e-6;
  std::string out_dir = ".";

  /// Applies one key; throws ConfigError for unknown keys and malformed values.
  void set(const std::string& key, const std::string& value);

  /// Throws ConfigError when a value is out of range.
  void validate() const;

  /// Time between stored frames, time.dt * solver.remap_every.
  double frame_dt() const { return time_dt * solver_remap_every; }

  /// All keys with their current values, in file syntax.
  std::map<std::string, std::string> entries() const;
};

RunConfig parse_config(std::istream& in);
RunConfig load_config(const std::string& path);

/// Arithmetic expression in x and y: + - * / ^, unary minus, parentheses, the constant pi and
/// the functions sin cos tan exp log sqrt abs tanh.
ScalarSampler parse_expression(const std::string& text);

}  // namespace dflow
