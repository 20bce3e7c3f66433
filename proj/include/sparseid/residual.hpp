#pragma once

#include "sparseid/common.hpp"
#include "sparseid/grid.hpp"
#include "sparseid/model.hpp"

#include <Eigen/Sparse>

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

namespace sparseid {

/// Weighting of model errors and measurement errors, W = S S^T. Empty
/// matrices mean identity. W_y is given over state components and restricted
/// to the selected ones at every measurement; general measurement maps use the
/// per-slot hook instead.
struct Weights {
  Mat W_x;
  Mat W_y;
  double mu_x = 0.0;
  double mu_a = 0.0;
  std::function<Mat(double)> W_x_at;  // optional time-varying W_x(t)
  std::function<Mat(int)> W_y_at;     // optional W_y per measurement slot
};

/// Measurements in grouped form. For the builtin selection map, `components`
/// lists which state each value observes. Times need not be distinct; repeated
/// times are merged by the problem.
struct MeasurementSet {
  std::vector<double> times;
  std::vector<std::vector<int>> components;
  std::vector<Vec> values;

  [[nodiscard]] int size() const noexcept { return static_cast<int>(times.size()); }
  /// Total number of scalar measurements.
  [[nodiscard]] int n_scalar() const;
  /// Records with t0 <= t <= t1.
  [[nodiscard]] MeasurementSet window(double t0, double t1) const;
};

/// A complete identification problem on a fixed grid. Parameters can be frozen,
/// in which case the decision vector holds states only.
class Problem {
 public:
  Problem(SystemModel model, const MeasurementSet& data, Weights weights, double dt);
  /// General measurement map; its times must be distinct and sorted.
  Problem(SystemModel model, MeasurementMap h, std::vector<Vec> values, Weights weights, double dt);

  [[nodiscard]] const SystemModel& model() const noexcept { return model_; }
  [[nodiscard]] SystemModel& model() noexcept { return model_; }
  [[nodiscard]] const Grid& grid() const noexcept { return grid_; }
  [[nodiscard]] const MeasurementMap& measurement_map() const noexcept { return h_; }
  [[nodiscard]] const Weights& weights() const noexcept { return weights_; }
  [[nodiscard]] const Vec& measurement(int slot) const { return y_.at(static_cast<std::size_t>(slot)); }
  /// Observed state components per slot; empty for general measurement maps.
  [[nodiscard]] const std::vector<std::vector<int>>& selections() const noexcept { return selections_; }

  [[nodiscard]] int n_x() const noexcept { return model_.n_x(); }
  [[nodiscard]] int n_d() const noexcept { return grid_.size(); }
  /// Parameters carried by the decision vector (0 when frozen).
  [[nodiscard]] int n_a() const noexcept { return frozen_ ? 0 : model_.n_params(); }
  [[nodiscard]] int n_b() const noexcept { return n_x() * n_d() + n_a(); }
  /// Number of scalar measurement residuals.
  [[nodiscard]] int n_measurements() const noexcept { return n_meas_; }

  /// Fix the parameters to `a`; the decision vector then excludes them.
  void freeze_params(const Vec& a);
  void unfreeze_params();
  [[nodiscard]] bool frozen() const noexcept { return frozen_; }
  /// Parameters used for evaluation given a decision vector.
  [[nodiscard]] Vec params_of(const Vec& b) const;

  [[nodiscard]] auto state(const Vec& b, int j) const { return b.segment(static_cast<Index>(j) * n_x(), n_x()); }
  [[nodiscard]] auto state(Vec& b, int j) const { return b.segment(static_cast<Index>(j) * n_x(), n_x()); }
  [[nodiscard]] Vec pack(const std::vector<Vec>& states, const Vec& a) const;

  /// Inverse factors S^{-1}, cached per interval and per measurement slot.
  [[nodiscard]] const Mat& sx_inv(int interval) const;
  [[nodiscard]] const Mat& sy_inv(int slot) const { return sy_inv_.at(static_cast<std::size_t>(slot)); }

 private:
  void finish_setup();

  SystemModel model_;
  Grid grid_;
  MeasurementMap h_;
  std::vector<Vec> y_;
  std::vector<std::vector<int>> selections_;  // empty for general maps
  Weights weights_;
  bool frozen_ = false;
  Vec fixed_a_;
  int n_meas_ = 0;
  std::vector<Mat> sx_inv_;  // one entry when W_x is constant
  std::vector<Mat> sy_inv_;
};

/// Residual block of one interval j (states j and j+1). Rows: defect, the two
/// trajectory regularization groups when mu_x > 0, measurement rows when j is a
/// measurement index.
struct IntervalBlock {
  Vec p;
  Mat jx;
  Mat jz;
  Mat ja;
};

/// g(b) split into per-interval blocks, the terminal measurement block and the
/// parameter regularization.
struct ResidualBlocks {
  int n_x = 0;
  int n_a = 0;
  std::vector<IntervalBlock> intervals;
  Vec p_term;
  Mat j_term;
  Vec p_a;
  double sqrt_mu_a = 0.0;
  bool has_jacobian = false;

  [[nodiscard]] int n_d() const noexcept { return static_cast<int>(intervals.size()) + 1; }
  [[nodiscard]] int n_b() const noexcept { return n_x * n_d() + n_a; }
  [[nodiscard]] Index n_rows() const;
};

/// Evaluate all blocks at b. Parallel over intervals; output independent of
/// the worker count.
[[nodiscard]] ResidualBlocks assemble(const Problem& problem, const Vec& b, bool with_jacobian = true,
                                      int workers = 1);

/// ||g||^2, summed in block order.
[[nodiscard]] double cost(const ResidualBlocks& blocks);
/// Cost without building Jacobians.
[[nodiscard]] double cost(const Problem& problem, const Vec& b, int workers = 1);
/// 2 J^T g from the blocks.
[[nodiscard]] Vec gradient(const ResidualBlocks& blocks);
/// Stacked residual g in block order.
[[nodiscard]] Vec stacked_residual(const ResidualBlocks& blocks);
/// J as a sparse matrix, rows in the order of stacked_residual().
[[nodiscard]] Eigen::SparseMatrix<double> jacobian(const ResidualBlocks& blocks);
/// J v and J^T w without forming J.
[[nodiscard]] Vec jacobian_times(const ResidualBlocks& blocks, const Vec& v);
[[nodiscard]] Vec jacobian_transpose_times(const ResidualBlocks& blocks, const Vec& w);

/// Starting point: measured components linearly interpolated, unmeasured
/// components zero, parameters N(0, param_std^2) from `seed`. Masked weights
/// start at zero.
[[nodiscard]] Vec initial_guess(const Problem& problem, std::uint64_t seed, double param_std = 0.1);

}  // namespace sparseid
