#include "sparseid/grid.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

namespace sparseid {

int subdivisions(double length, double dt) {
  if (!(dt > 0.0) || !std::isfinite(dt)) throw InvalidInput("step size must be positive and finite");
  if (!(length > 0.0)) throw InvalidInput("interval length must be positive");
  // Without the slack 0.3 / 1e-3 would round up to 301 pieces.
  auto n = static_cast<long long>(std::ceil(length / dt * (1.0 - 1e-10)));
  n = std::max(n, 1LL);
  if (n > 100'000'000LL) throw InvalidInput("step size too small for the measurement span");
  return static_cast<int>(n);
}

Grid Grid::build(const std::vector<double>& measurement_times, double dt) {
  if (measurement_times.size() < 2) throw InvalidInput("need at least two measurement times");
  if (!(dt > 0.0) || !std::isfinite(dt)) throw InvalidInput("step size must be positive and finite");
  for (double t : measurement_times) {
    if (!std::isfinite(t)) throw InvalidInput("measurement times must be finite");
  }
  const double span = measurement_times.back() - measurement_times.front();
  if (!(span > 0.0)) throw InvalidInput("measurement times must increase");
  const double merge_tol = 1e-12 * span;
  for (std::size_t k = 0; k + 1 < measurement_times.size(); ++k) {
    if (measurement_times[k + 1] - measurement_times[k] <= -merge_tol) {
      throw InvalidInput("measurement times must be sorted");
    }
  }

  Grid g;
  g.dt_ = dt;
  g.input_slot_.assign(measurement_times.size(), -1);
  for (std::size_t k = 0; k < measurement_times.size(); ++k) {
    const double t = measurement_times[k];
    if (g.tm_.empty() || t - g.tm_.back() >= merge_tol) g.tm_.push_back(t);
    g.input_slot_[k] = static_cast<int>(g.tm_.size()) - 1;
  }

  g.t_.push_back(g.tm_.front());
  g.jm_.push_back(0);
  for (std::size_t i = 0; i + 1 < g.tm_.size(); ++i) {
    const double a = g.tm_[i];
    const double b = g.tm_[i + 1];
    const int n = subdivisions(b - a, dt);
    for (int k = 1; k < n; ++k) g.t_.push_back(a + (b - a) * k / n);
    g.t_.push_back(b);
    g.jm_.push_back(static_cast<int>(g.t_.size()) - 1);
  }
  g.h_.resize(g.t_.size() - 1);
  for (std::size_t j = 0; j + 1 < g.t_.size(); ++j) g.h_[j] = g.t_[j + 1] - g.t_[j];
  g.slot_.assign(g.t_.size(), -1);
  for (std::size_t i = 0; i < g.jm_.size(); ++i) g.slot_[static_cast<std::size_t>(g.jm_[i])] = static_cast<int>(i);
  return g;
}

}  // namespace sparseid
