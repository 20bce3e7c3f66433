#pragma once

#include "sparseid/residual.hpp"

#include <cstdint>
#include <map>
#include <string>
#include <vector>

namespace sparseid {

/// Measurement channel group sampled on an arithmetic schedule.
struct ChannelSchedule {
  std::vector<int> components;
  double t0 = 0.0;
  double t1 = 0.0;
  double step = 0.0;
};

/// One of the identification experiments, possibly at reduced scale.
struct ExperimentSpec {
  std::string name;
  std::string truth_physics;
  std::map<std::string, double> truth_constants;
  Vec x0;
  std::vector<ChannelSchedule> schedule;
  double noise_variance = 0.0;
  std::string physics;  // first-principle part of the identification model
  std::map<std::string, double> physics_constants;
  std::string network = "polynomial";  // or "feedforward-elu"
  int degree = 2;
  std::vector<int> hidden;
  Weights weights;
  double dt = 1e-3;
  double truth_dt = 1e-4;

  [[nodiscard]] int n_x() const noexcept { return static_cast<int>(x0.size()); }
};

[[nodiscard]] ExperimentSpec lorenz_full();
[[nodiscard]] ExperimentSpec lorenz_partial();
/// Forced Van der Pol oscillator on [0, t_end] with identification step dt.
[[nodiscard]] ExperimentSpec vanderpol(double t_end = 20.0, double dt = 1e-2);
/// Lookup by name: "lorenz-full", "lorenz-partial", "vanderpol".
[[nodiscard]] ExperimentSpec experiment(const std::string& name);

/// t0, t0 + step, ..., up to t1 (inclusive within rounding).
[[nodiscard]] std::vector<double> arithmetic_schedule(double t0, double t1, double step);

using Rhs = std::function<Vec(double, const Vec&)>;
/// Classical fourth-order Runge-Kutta from t0 through every time in `times`
/// (ascending, all >= t0), with steps no larger than dt. Returns the state at
/// each requested time. Throws SolverError with the time stamp on non-finite
/// states.
[[nodiscard]] std::vector<Vec> rk4(const Rhs& f, const Vec& x0, double t0, const std::vector<double>& times,
                                   double dt);

struct GeneratedData {
  MeasurementSet data;
  std::vector<double> times;      // distinct measurement times
  std::vector<Vec> truth;         // truth state at those times
};

/// Truth simulation sampled on the schedule plus seeded Gaussian noise.
[[nodiscard]] GeneratedData generate(const ExperimentSpec& spec, std::uint64_t seed);

/// The model error e(t, x) of the experiment: truth dynamics minus physics.
[[nodiscard]] Vec true_error(const ExperimentSpec& spec, double t, const Vec& x);

/// Identification model of the experiment with an untrained network.
[[nodiscard]] SystemModel build_model(const ExperimentSpec& spec);

}  // namespace sparseid
