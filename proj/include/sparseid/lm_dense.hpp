#pragma once

#include "sparseid/residual.hpp"

#include <functional>
#include <string>
#include <vector>

namespace sparseid {

struct LMConfig {
  double lambda0 = 1e-2;
  double rho1 = 2.0;  // lambda /= rho1 after an accepted step
  double rho2 = 3.0;  // lambda *= rho2 after a rejected step
  /// Gradient-norm stop; <= 0 selects 1e-6 * (1 + ||grad(b0)||).
  double sigma = 0.0;
  int max_iters = 500;
  double lambda_max = 1e12;
  double lambda_min = 1e-14;
  /// Relative cost decreases below this count as rejections.
  double min_rel_decrease = 1e-12;
  /// Threads used for residual assembly and batch elimination; 0 = all.
  int workers = 1;

  void validate() const;
};

enum class Termination { GradientTolerance, MaxIterations, LambdaLimit };
[[nodiscard]] std::string to_string(Termination t);

struct LMResult {
  Vec b;
  double cost = 0.0;
  double gradient_norm = 0.0;
  double sigma = 0.0;
  int iterations = 0;
  Termination termination = Termination::MaxIterations;
  /// Entry 0 is the initial point; one entry per iteration afterwards, holding
  /// the cost after the iteration, the lambda used for its step and whether
  /// the step was accepted.
  std::vector<double> cost_history;
  std::vector<double> lambda_history;
  std::vector<bool> accepted;
};

/// Computes the damped step gamma for given blocks and lambda.
using StepSolver = std::function<Vec(const ResidualBlocks&, double)>;
using IterationObserver = std::function<void(int, double, double, bool)>;

/// The accept/reject Levenberg-Marquardt loop shared by both step solvers.
[[nodiscard]] LMResult levenberg_marquardt(const Problem& problem, const Vec& b0, const LMConfig& config,
                                           const StepSolver& step, const IterationObserver& observer = {});

/// gamma = -(J^T J + lambda I)^{-1} J^T g by a sparse LDL^T factorization of the
/// normal equations and one refinement sweep.
[[nodiscard]] Vec lm_step_dense(const ResidualBlocks& blocks, double lambda);

/// Reference solver: single threaded, normal equations over the full vector.
[[nodiscard]] LMResult solve_dense(const Problem& problem, const Vec& b0, LMConfig config,
                                   const IterationObserver& observer = {});

}  // namespace sparseid
