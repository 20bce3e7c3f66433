#pragma once

#include "sparseid/common.hpp"

#include <vector>

namespace sparseid {

/// Discretization points containing every measurement time, with spacing no
/// larger than a prescribed step. Indices are 0-based throughout.
class Grid {
 public:
  /// Merges measurement times closer than 1e-12 of the span, then subdivides
  /// every interval uniformly into the minimal number of pieces of length <= dt.
  static Grid build(const std::vector<double>& measurement_times, double dt);

  [[nodiscard]] int size() const noexcept { return static_cast<int>(t_.size()); }
  [[nodiscard]] int n_intervals() const noexcept { return size() - 1; }
  [[nodiscard]] const std::vector<double>& times() const noexcept { return t_; }
  [[nodiscard]] double t(int j) const { return t_.at(static_cast<std::size_t>(j)); }
  [[nodiscard]] double step(int j) const { return h_.at(static_cast<std::size_t>(j)); }
  [[nodiscard]] double midpoint(int j) const { return 0.5 * (t(j) + t(j + 1)); }
  [[nodiscard]] const std::vector<double>& steps() const noexcept { return h_; }
  [[nodiscard]] double max_step() const noexcept { return dt_; }

  /// Grid index of every (merged) measurement time, ascending.
  [[nodiscard]] const std::vector<int>& measurement_indices() const noexcept { return jm_; }
  /// Merged measurement times, one per entry of measurement_indices().
  [[nodiscard]] const std::vector<double>& measurement_times() const noexcept { return tm_; }
  /// Measurement slot at grid point j, or -1.
  [[nodiscard]] int measurement_at(int j) const { return slot_.at(static_cast<std::size_t>(j)); }
  /// For each input time of build(), the merged slot it landed in.
  [[nodiscard]] const std::vector<int>& input_slot() const noexcept { return input_slot_; }

 private:
  std::vector<double> t_;
  std::vector<double> h_;
  std::vector<int> jm_;
  std::vector<double> tm_;
  std::vector<int> slot_;
  std::vector<int> input_slot_;
  double dt_ = 0.0;
};

/// Minimal N with length / N <= dt, tolerating relative rounding of 1e-10.
[[nodiscard]] int subdivisions(double length, double dt);

}  // namespace sparseid
