#pragma once

#include "sparseid/sparsify.hpp"

#include <cstdint>
#include <iosfwd>
#include <map>
#include <string>
#include <vector>

namespace sparseid {

/// Run configuration read from a flat `key = value` file. Lines starting with
/// '#' are comments. Setting `example` loads an experiment's defaults (model,
/// weights, step, data generator), which later keys override. Keys:
///
///   example            lorenz-full | lorenz-partial | vanderpol
///   n_x, channels      state dimension and measurement channel names
///   physics            zero | lorenz | vanderpol | vanderpol-forcing | linear
///   physics.<name>     physics constant
///   network            polynomial | feedforward-elu | none
///   degree, hidden     polynomial degree; hidden layer sizes "10,10"
///   dt                 maximal grid step
///   W_x, W_y           one value (times identity) or the diagonal
///   mu_x, mu_a         regularization constants
///   lm.lambda0, lm.rho1, lm.rho2, lm.sigma, lm.max_iters, lm.lambda_max
///   solver             parallel | dense
///   batches, workers   batch count (0 = automatic, worker independent); threads
///   prune.criterion    cost-limit | aic | bic | cross-validation
///   prune.kappa, prune.staged, prune.warm_start, prune.max_rounds,
///   prune.validation_fraction
///   seed, init.param_std
///   data, out          measurement CSV, output directory
struct RunConfig {
  std::string example;
  int n_x = 0;
  std::vector<std::string> channels;
  std::string physics = "zero";
  std::map<std::string, double> physics_constants;
  std::string network = "polynomial";
  int degree = 2;
  std::vector<int> hidden;
  double dt = 1e-3;
  std::vector<double> w_x;
  std::vector<double> w_y;
  double mu_x = 0.0;
  double mu_a = 1e-3;
  std::string solver = "parallel";
  int batches = 0;
  int workers = 1;
  PruneConfig prune;
  double validation_fraction = 0.2;
  std::uint64_t seed = 1;
  double param_std = 0.1;
  std::string data;
  std::string out = "out";

  /// Throws ConfigError on inconsistent or out-of-range settings.
  void validate() const;
  [[nodiscard]] SystemModel build_model() const;
  [[nodiscard]] Weights build_weights() const;
  /// Batch count actually used for a grid of n_d points.
  [[nodiscard]] int resolved_batches(int n_d) const;
};

[[nodiscard]] RunConfig parse_config(std::istream& in);
[[nodiscard]] RunConfig load_config(const std::string& path);

/// Measurements named by `config.data`, or generated from the example when no
/// file is given.
[[nodiscard]] MeasurementSet load_data(const RunConfig& config);

enum class RunMode { Fit, Prune };

/// Executes the pipeline and writes the artifacts into config.out. Returns the
/// process exit code; log lines go to `log`.
int run(const RunConfig& config, RunMode mode, bool dry_run, std::ostream& log);

/// Fixed-step RK4 rollout of a saved model, written as CSV (t, x...).
void simulate(const std::string& model_path, const Vec& x0, double t0, double t1, double dt, std::ostream& out);

/// Command-line entry point.
int run_cli(int argc, char** argv);

}  // namespace sparseid
