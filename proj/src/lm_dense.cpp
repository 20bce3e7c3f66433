#include "sparseid/lm_dense.hpp"

#include <Eigen/SparseCholesky>

#include <cmath>

namespace sparseid {

void LMConfig::validate() const {
  if (!(lambda0 > 0.0)) throw ConfigError("lambda0 must be positive");
  if (!(rho1 > 1.0) || !(rho2 >= rho1)) throw ConfigError("need rho2 >= rho1 > 1");
  if (max_iters < 0) throw ConfigError("max_iters must be nonnegative");
  if (!(lambda_max > lambda0)) throw ConfigError("lambda_max must exceed lambda0");
  if (lambda_min < 0.0 || lambda_min > lambda0) throw ConfigError("lambda_min must lie in [0, lambda0]");
  if (min_rel_decrease < 0.0) throw ConfigError("min_rel_decrease must be nonnegative");
  if (workers < 0) throw ConfigError("workers must be nonnegative");
}

std::string to_string(Termination t) {
  switch (t) {
    case Termination::GradientTolerance: return "gradient-tolerance";
    case Termination::MaxIterations: return "max-iterations";
    case Termination::LambdaLimit: return "lambda-limit";
  }
  return "unknown";
}

LMResult levenberg_marquardt(const Problem& problem, const Vec& b0, const LMConfig& config,
                             const StepSolver& step, const IterationObserver& observer) {
  config.validate();
  if (b0.size() != problem.n_b()) throw ContractError("initial decision vector has wrong length");
  const int workers = resolve_workers(config.workers);

  LMResult res;
  res.b = b0;
  ResidualBlocks blocks = assemble(problem, res.b, true, workers);
  res.cost = cost(blocks);
  if (!std::isfinite(res.cost)) throw SolverError("cost is not finite at the initial point");
  Vec grad = gradient(blocks);
  res.gradient_norm = grad.norm();
  res.sigma = config.sigma > 0.0 ? config.sigma : 1e-6 * (1.0 + res.gradient_norm);
  res.cost_history.push_back(res.cost);
  res.lambda_history.push_back(config.lambda0);
  res.accepted.push_back(true);

  double lambda = config.lambda0;
  res.termination = Termination::MaxIterations;
  while (true) {
    if (res.gradient_norm <= res.sigma) {
      res.termination = Termination::GradientTolerance;
      break;
    }
    if (res.iterations >= config.max_iters) break;
    ++res.iterations;

    bool ok = false;
    Vec trial;
    double trial_cost = 0.0;
    try {
      const Vec gamma = step(blocks, lambda);
      if (gamma.allFinite()) {
        trial = res.b + gamma;
        trial_cost = cost(problem, trial, workers);
        ok = std::isfinite(trial_cost) && trial_cost < res.cost * (1.0 - config.min_rel_decrease);
      }
    } catch (const SolverError&) {
      ok = false;
    }
    const double used = lambda;
    if (ok) {
      res.b = std::move(trial);
      blocks = assemble(problem, res.b, true, workers);
      res.cost = cost(blocks);
      grad = gradient(blocks);
      res.gradient_norm = grad.norm();
      lambda = std::max(lambda / config.rho1, config.lambda_min);
    } else {
      lambda *= config.rho2;
    }
    res.cost_history.push_back(res.cost);
    res.lambda_history.push_back(used);
    res.accepted.push_back(ok);
    if (observer) observer(res.iterations, res.cost, used, ok);
    if (lambda > config.lambda_max) {
      res.termination = Termination::LambdaLimit;
      break;
    }
  }
  return res;
}

Vec lm_step_dense(const ResidualBlocks& blocks, double lambda) {
  if (!(lambda > 0.0)) throw ContractError("dense step needs lambda > 0");
  const Eigen::SparseMatrix<double> j = jacobian(blocks);
  const Vec g = stacked_residual(blocks);
  Eigen::SparseMatrix<double> a = (j.transpose() * j).pruned();
  for (Index i = 0; i < a.rows(); ++i) a.coeffRef(i, i) += lambda;
  a.makeCompressed();
  const Vec rhs = -(j.transpose() * g);
  Eigen::SimplicialLDLT<Eigen::SparseMatrix<double>> ldlt(a);
  if (ldlt.info() != Eigen::Success) throw SolverError("normal equations could not be factorized");
  Vec x = ldlt.solve(rhs);
  const Vec r = rhs - a * x;
  x += ldlt.solve(r);
  return x;
}

LMResult solve_dense(const Problem& problem, const Vec& b0, LMConfig config, const IterationObserver& observer) {
  config.workers = 1;
  return levenberg_marquardt(problem, b0, config, lm_step_dense, observer);
}

}  // namespace sparseid
