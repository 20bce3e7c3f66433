#include "sparseid/examples.hpp"

#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <set>

using namespace sparseid;

TEST_CASE("experiment definitions") {
  const ExperimentSpec lf = lorenz_full();
  CHECK(lf.n_x() == 3);
  CHECK(lf.weights.W_x(0, 0) == 10.0);
  CHECK(lf.weights.mu_x == 1e-8);
  CHECK(build_model(lf).n_params() == 30);
  CHECK(build_model(vanderpol()).network()->n_weights() == 140);
  CHECK(experiment("lorenz-partial").noise_variance == 1e-4);
  CHECK_THROWS_AS((void)experiment("duffing"), ConfigError);
}

TEST_CASE("schedules") {
  CHECK(arithmetic_schedule(0.0, 4.8, 0.3).size() == 17);
  CHECK(arithmetic_schedule(0.0, 4.8, 0.4).size() == 13);
  CHECK(arithmetic_schedule(0.0, 20.0, 0.1).size() == 201);
  CHECK(arithmetic_schedule(0.0, 100.0, 0.1).size() == 1001);

  const GeneratedData g = generate(lorenz_full(), 1);
  CHECK(g.times.size() == 25);
  CHECK(g.data.n_scalar() == 47);
  std::set<double> full;
  for (int i = 0; i < g.data.size(); ++i) {
    if (g.data.components[static_cast<std::size_t>(i)].size() == 2) full.insert(g.data.times[static_cast<std::size_t>(i)]);
  }
  CHECK(full.size() == 17);
  CHECK(generate(vanderpol(), 1).times.size() == 201);
}

TEST_CASE("generator determinism and noise") {
  const GeneratedData a = generate(lorenz_full(), 7);
  const GeneratedData b = generate(lorenz_full(), 7);
  const GeneratedData c = generate(lorenz_full(), 8);
  bool same = true, differ = false;
  for (std::size_t i = 0; i < a.data.values.size(); ++i) {
    same = same && a.data.values[i] == b.data.values[i];
    differ = differ || a.data.values[i] != c.data.values[i];
  }
  CHECK(same);
  CHECK(differ);

  ExperimentSpec clean = lorenz_full();
  clean.noise_variance = 0.0;
  const GeneratedData d = generate(clean, 1);
  for (std::size_t i = 0; i < d.data.values.size(); ++i) {
    const std::size_t slot = static_cast<std::size_t>(
        std::find(d.times.begin(), d.times.end(), d.data.times[i]) - d.times.begin());
    const auto& comps = d.data.components[i];
    for (std::size_t k = 0; k < comps.size(); ++k) {
      CHECK(d.data.values[i][static_cast<Index>(k)] == d.truth[slot][comps[k]]);
    }
  }
}

TEST_CASE("rk4") {
  const Rhs grow = [](double, const Vec& x) { return x; };
  const std::vector<Vec> x = rk4(grow, Vec::Ones(1), 0.0, {0.5, 1.0}, 1e-3);
  CHECK(x[1][0] == doctest::Approx(std::exp(1.0)).epsilon(1e-12));

  // Step halving on the Lorenz window.
  const ExperimentSpec s = lorenz_full();
  const PhysicsModel truth = make_physics("lorenz", 3, s.truth_constants);
  const std::vector<double> ts = arithmetic_schedule(0.0, 4.8, 0.1);
  const std::vector<Vec> h1 = rk4(truth.f, s.x0, 0.0, ts, 1e-4);
  const std::vector<Vec> h2 = rk4(truth.f, s.x0, 0.0, ts, 5e-5);
  double worst = 0.0;
  for (std::size_t i = 0; i < ts.size(); ++i) worst = std::max(worst, (h1[i] - h2[i]).lpNorm<Eigen::Infinity>());
  CHECK(worst <= 1e-6);

  const Rhs blow = [](double, const Vec& v) { return (v.array() * v.array()).matrix().eval(); };
  try {
    (void)rk4(blow, Vec::Ones(1), 0.0, {2.0}, 1e-3);
    FAIL("expected a solver error");
  } catch (const SolverError& e) {
    CHECK(std::string(e.what()).find("t = ") != std::string::npos);
  }
}

TEST_CASE("true model errors") {
  const ExperimentSpec lf = lorenz_full();
  CHECK(true_error(lf, 0.0, Vec::Zero(3)).isZero());
  const ExperimentSpec vdp = vanderpol();
  Vec x(2);
  x << 0.0, 1.0;
  const Vec e = true_error(vdp, 3.0, x);
  CHECK(e[0] == 0.0);
  CHECK(e[1] == doctest::Approx(1.0));
  x << 1.5, -0.7;
  CHECK(true_error(vdp, 1.0, x)[0] == 0.0);
  CHECK(true_error(vdp, 1.0, x)[1] == doctest::Approx(-1.5 + (1.0 - 2.25) * -0.7));
}
