#include "sparseid/examples.hpp"

#include <algorithm>
#include <cmath>
#include <random>
#include <sstream>

namespace sparseid {

ExperimentSpec lorenz_full() {
  ExperimentSpec s;
  s.name = "lorenz-full";
  s.truth_physics = "lorenz";
  s.truth_constants = {{"sigma", 10.0}, {"rho", 28.0}, {"beta", 8.0 / 3.0}};
  s.x0 = Vec(3);
  s.x0 << -8.0, 8.0, 27.0;
  s.schedule = {{{0, 1}, 0.0, 4.8, 0.3}, {{2}, 0.0, 4.8, 0.4}};
  s.noise_variance = 1.0;
  s.physics = "zero";
  s.network = "polynomial";
  s.degree = 2;
  s.weights.W_x = 10.0 * Mat::Identity(3, 3);
  s.weights.W_y = Mat::Identity(3, 3);
  s.weights.mu_x = 1e-8;
  s.weights.mu_a = 1e-3;
  s.dt = 1e-3;
  return s;
}

ExperimentSpec lorenz_partial() {
  ExperimentSpec s = lorenz_full();
  s.name = "lorenz-partial";
  s.schedule = {{{0, 1}, 0.0, 5.0, 0.01}};
  s.noise_variance = 1e-4;
  return s;
}

ExperimentSpec vanderpol(double t_end, double dt) {
  ExperimentSpec s;
  s.name = "vanderpol";
  s.truth_physics = "vanderpol";
  s.truth_constants = {{"A", 1.0}, {"mu", 1.0}, {"omega", 0.2}};
  s.x0 = Vec(2);
  s.x0 << 2.0, 0.0;
  s.schedule = {{{0, 1}, 0.0, t_end, 0.1}};
  s.noise_variance = 0.01;
  s.physics = "vanderpol-forcing";
  s.physics_constants = {{"A", 1.0}, {"omega", 0.2}};
  s.network = "feedforward-elu";
  s.hidden = {10, 10};
  s.weights.W_x = Mat::Identity(2, 2);
  s.weights.W_y = Mat::Identity(2, 2);
  s.weights.mu_x = 0.0;
  s.weights.mu_a = 1e-3;
  s.dt = dt;
  return s;
}

ExperimentSpec experiment(const std::string& name) {
  if (name == "lorenz-full") return lorenz_full();
  if (name == "lorenz-partial") return lorenz_partial();
  if (name == "vanderpol") return vanderpol();
  throw ConfigError("unknown example '" + name + "' (lorenz-full, lorenz-partial, vanderpol)");
}

std::vector<double> arithmetic_schedule(double t0, double t1, double step) {
  if (!(step > 0.0) || !(t1 >= t0)) throw InvalidInput("schedule needs step > 0 and t1 >= t0");
  const auto n = static_cast<long long>(std::floor((t1 - t0) / step + 1e-9));
  std::vector<double> out;
  out.reserve(static_cast<std::size_t>(n + 1));
  for (long long k = 0; k <= n; ++k) out.push_back(t0 + static_cast<double>(k) * step);
  return out;
}

std::vector<Vec> rk4(const Rhs& f, const Vec& x0, double t0, const std::vector<double>& times, double dt) {
  if (!(dt > 0.0)) throw InvalidInput("integration step must be positive");
  std::vector<Vec> out;
  out.reserve(times.size());
  Vec x = x0;
  double t = t0;
  for (double target : times) {
    if (target < t) throw InvalidInput("output times must be ascending and not before t0");
    const double len = target - t;
    const int n = len > 0.0 ? subdivisions(len, dt) : 0;
    const double h = n > 0 ? len / n : 0.0;
    for (int k = 0; k < n; ++k) {
      const double tk = t + k * h;
      const Vec k1 = f(tk, x);
      const Vec k2 = f(tk + 0.5 * h, x + 0.5 * h * k1);
      const Vec k3 = f(tk + 0.5 * h, x + 0.5 * h * k2);
      const Vec k4 = f(tk + h, x + h * k3);
      x += h / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
      if (!x.allFinite()) {
        std::ostringstream os;
        os << "state became non-finite at t = " << tk + h;
        throw SolverError(os.str());
      }
    }
    t = target;
    out.push_back(x);
  }
  return out;
}

GeneratedData generate(const ExperimentSpec& spec, std::uint64_t seed) {
  if (spec.noise_variance < 0.0) throw InvalidInput("noise variance must be nonnegative");
  struct Rec {
    double t;
    std::size_t group;
  };
  std::vector<Rec> recs;
  for (std::size_t g = 0; g < spec.schedule.size(); ++g) {
    const auto& ch = spec.schedule[g];
    for (double t : arithmetic_schedule(ch.t0, ch.t1, ch.step)) recs.push_back({t, g});
  }
  std::stable_sort(recs.begin(), recs.end(), [](const Rec& a, const Rec& b) { return a.t < b.t; });
  if (recs.empty()) throw InvalidInput("empty measurement schedule");

  GeneratedData out;
  const double span = recs.back().t - recs.front().t;
  for (const auto& r : recs) {
    if (out.times.empty() || r.t - out.times.back() >= 1e-12 * span) out.times.push_back(r.t);
  }
  const PhysicsModel truth = make_physics(spec.truth_physics, spec.n_x(), spec.truth_constants);
  out.truth = rk4(truth.f, spec.x0, out.times.front(), out.times, spec.truth_dt);

  std::mt19937_64 rng(seed);
  std::normal_distribution<double> noise(0.0, std::sqrt(spec.noise_variance));
  std::size_t slot = 0;
  for (const auto& r : recs) {
    while (slot + 1 < out.times.size() && r.t - out.times[slot] >= 1e-12 * span) ++slot;
    const auto& comps = spec.schedule[r.group].components;
    Vec y(static_cast<Index>(comps.size()));
    for (std::size_t k = 0; k < comps.size(); ++k) {
      y[static_cast<Index>(k)] = out.truth[slot][comps[k]];
      if (spec.noise_variance > 0.0) y[static_cast<Index>(k)] += noise(rng);
    }
    out.data.times.push_back(out.times[slot]);
    out.data.components.push_back(comps);
    out.data.values.push_back(std::move(y));
  }
  return out;
}

Vec true_error(const ExperimentSpec& spec, double t, const Vec& x) {
  const PhysicsModel truth = make_physics(spec.truth_physics, spec.n_x(), spec.truth_constants);
  const PhysicsModel phys = make_physics(spec.physics, spec.n_x(), spec.physics_constants);
  return truth.f(t, x) - phys.f(t, x);
}

SystemModel build_model(const ExperimentSpec& spec) {
  const int n_x = spec.n_x();
  SystemModel model(n_x, make_physics(spec.physics, n_x, spec.physics_constants));
  if (spec.network == "polynomial") {
    model.with_network(ErrorNetwork::polynomial(n_x, n_x, spec.degree));
  } else if (spec.network == "feedforward-elu") {
    std::vector<int> layers{n_x};
    layers.insert(layers.end(), spec.hidden.begin(), spec.hidden.end());
    layers.push_back(n_x);
    model.with_network(ErrorNetwork::feedforward_elu(layers));
  } else if (spec.network != "none") {
    throw ConfigError("unknown network kind '" + spec.network + "'");
  }
  return model;
}

}  // namespace sparseid
