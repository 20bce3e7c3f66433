#pragma once

#include "sparseid/lm_dense.hpp"
#include "sparseid/qr_solver.hpp"

#include <vector>

namespace sparseid {

/// Split of the summands q_0 .. q_{N_d} (q_0 = 0) into contiguous batches.
/// Batch s (1-based) holds summands zeta[s-1] .. zeta[s]-1. State indices in
/// this module are 1-based like the summands: beta_j lives at grid point j-1.
struct Partition {
  std::vector<int> zeta;
  int n_d = 0;

  [[nodiscard]] int n_batches() const noexcept { return static_cast<int>(zeta.size()) - 1; }
  /// Checks zeta(1) = 0, zeta(N_s+1) = N_d + 1 and strict increase.
  void validate() const;
};

/// Balanced partition, larger batches first.
[[nodiscard]] Partition make_partition(int n_d, int n_batches);
/// min(workers, ceil(N_d / 4)), at least one.
[[nodiscard]] int default_batches(int n_d, int workers);

/// Labeled summands, mainly for inspection and tests. Groups are named
/// "beta<j>" and "delta". build_q(0) is the empty summand.
[[nodiscard]] QuadraticBlock build_q(const ResidualBlocks& blocks, double lambda, int j);
[[nodiscard]] QuadraticBlock build_r(const ResidualBlocks& blocks, double lambda);

/// Output of the within-batch eliminations. `w` has columns
/// [beta_right (if has_right) | beta_left (if has_left) | delta | 1] where
/// beta_left = beta_{zeta(s)} and beta_right = beta_{zeta(s+1)}. policies[i]
/// reconstructs beta_{first + i} from [beta_{j+1} (if j < N_d) | tail], tail
/// being [beta_left (if has_left) | delta | 1].
struct BatchResult {
  int s = 0;
  int left = 0;   // zeta(s)
  int right = 0;  // zeta(s+1)
  bool has_left = false;
  bool has_right = false;
  int first = 0;  // first eliminated state index
  int last = -1;  // last eliminated state index
  Mat w;
  std::vector<Mat> policies;
};

[[nodiscard]] BatchResult batch_forward(const ResidualBlocks& blocks, double lambda, const Partition& partition,
                                        int s);

/// Forward pass of one damped step: batch eliminations, the chain over batch
/// boundaries and the final quadratic in delta. Reusable for any delta.
class StepFactorization {
 public:
  StepFactorization(const ResidualBlocks& blocks, double lambda, const Partition& partition, int workers = 1);

  /// Rows R with r + G_{N_s} = ||R [delta; 1]||^2 (triangular, n_a + 1 columns).
  [[nodiscard]] const Mat& delta_quadratic() const noexcept { return q_delta_; }
  /// Minimum-norm minimizer of the delta quadratic.
  [[nodiscard]] Vec solve_delta() const;
  /// Full step (all beta then delta) for a given delta, by back substitution.
  [[nodiscard]] Vec reconstruct(const Vec& delta) const;
  [[nodiscard]] const std::vector<BatchResult>& batches() const noexcept { return batches_; }

 private:
  Partition partition_;
  int workers_;
  int n_x_;
  int n_a_;
  int n_d_;
  std::vector<BatchResult> batches_;
  std::vector<Mat> chain_;  // chain_[s] gives beta_{zeta(s)} for s = 2..N_s
  Mat q_delta_;
};

/// One damped step via the batch recursion.
[[nodiscard]] Vec lm_step_parallel(const ResidualBlocks& blocks, double lambda, const Partition& partition,
                                   int workers = 1);

/// Levenberg-Marquardt with the batch-parallel step. n_batches = 0 uses
/// default_batches().
[[nodiscard]] LMResult solve_parallel(const Problem& problem, const Vec& b0, const LMConfig& config,
                                      int n_batches = 0, const IterationObserver& observer = {});

}  // namespace sparseid
