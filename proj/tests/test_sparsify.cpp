#include "sparseid/sparsify.hpp"
#include "oracles.hpp"
#include "test_support.hpp"

#include <doctest.h>

#include <cmath>
#include <sstream>

using namespace sparseid;
using namespace sparseid::testing;

namespace {

struct Trained {
  Problem problem;
  Vec b;
};

LMConfig tight() {
  LMConfig c;
  c.sigma = 1e-10;
  return c;
}

Trained train_spiral(std::uint64_t seed, const std::vector<int>& masked = {}) {
  const ExperimentSpec spec = spiral_spec();
  const GeneratedData gen = generate(spec, seed);
  Problem p(build_model(spec), gen.data, spec.weights, spec.dt);
  for (int e : masked) p.model().network()->remove_edge(e);
  const LMResult r = solve_parallel(p, initial_guess(p, seed), tight(), 2);
  p.model().network()->set_params(p.params_of(r.b));
  return {p, r.b};
}

}  // namespace

TEST_CASE("criteria") {
  CHECK(parse_criterion("bic") == Criterion::BIC);
  CHECK(to_string(Criterion::CrossValidation) == "cross-validation");
  CHECK_THROWS_AS((void)parse_criterion("lasso"), ConfigError);

  PruneConfig c;
  c.criterion = Criterion::CostLimit;
  c.kappa = 1.05;
  CHECK(accept(c, {10.0, 5, 100, 0.0}, {9.0, 4, 100, 0.0}, 10.0));
  CHECK_FALSE(accept(c, {10.0, 5, 100, 0.0}, {10.6, 4, 100, 0.0}, 10.0));

  c.criterion = Criterion::AIC;
  CHECK(accept(c, {10.0, 5, 100, 0.0}, {10.0, 4, 100, 0.0}, 10.0));
  // AIC allows a cost increase up to a factor exp(2 / N) per parameter.
  CHECK(accept(c, {10.0, 5, 100, 0.0}, {10.0 * std::exp(0.019), 4, 100, 0.0}, 10.0));
  CHECK_FALSE(accept(c, {10.0, 5, 100, 0.0}, {10.0 * std::exp(0.021), 4, 100, 0.0}, 10.0));
  CHECK(information_criterion(Criterion::BIC, 2.0, 10, 3) == doctest::Approx(10 * std::log(0.2) + 3 * std::log(10.0)));

  c.criterion = Criterion::CrossValidation;
  CHECK(accept(c, {1.0, 5, 10, 2.0}, {5.0, 4, 10, 2.0}, 1.0));
  CHECK_FALSE(accept(c, {1.0, 5, 10, 2.0}, {1.0, 4, 10, 2.1}, 1.0));
}

TEST_CASE("stage candidates") {
  ErrorNetwork net = ErrorNetwork::polynomial(3, 3, 2);
  CHECK(stage_candidates(net, -1).size() == 30);
  const auto deg2 = stage_candidates(net, 2);
  CHECK(deg2.size() == 18);
  for (int e : deg2) CHECK(net.monomial_degree(e) == 2);
  CHECK(stage_candidates(net, 0).size() == 3);
  net.remove_edge(4);
  CHECK(stage_candidates(net, 2).size() == 17);
}

TEST_CASE("parameter quadratic at a trained point") {
  const Trained t = train_spiral(3);
  const Problem& p = t.problem;
  const ErrorNetwork& net = *p.model().network();
  const ParamQuadratic q(p, t.b, make_partition(p.n_d(), 3));

  // No parameter change: the states alone re-attain the optimum.
  CHECK(std::abs(q.value(Vec::Zero(p.n_a())) - q.trained_cost()) <= 1e-9 * (1.0 + q.trained_cost()));
  CHECK(std::abs(q.minimum() - q.trained_cost()) <= 1e-9 * (1.0 + q.trained_cost()));

  const Mat r = q.rows().leftCols(p.n_a());
  const Eigen::SelfAdjointEigenSolver<Mat> eig(r.transpose() * r);
  CHECK(eig.eigenvalues().minCoeff() >= -1e-10);

  const Vec a_c = p.params_of(t.b);
  const ParamQuadratic single(p, t.b, make_partition(p.n_d(), 1));
  for (int e : net.active_weights()) {
    const RemovalEstimate est = estimate_removal(q, net, e);
    CHECK(est.delta[e] == -a_c[e]);
    CHECK(est.v_e >= q.trained_cost() - 1e-9);
    const double oracle = dense_constrained(p, t.b, e, -a_c[e]);
    CHECK(std::abs(est.v_e - oracle) <= 1e-8 * (1.0 + oracle));
    // The estimate does not depend on the partition the quadratic came from.
    const RemovalEstimate again = estimate_removal(single, net, e);
    CHECK(std::abs(est.v_e - again.v_e) <= 1e-10 * (1.0 + est.v_e));
  }

  const std::vector<RemovalEstimate> ranked = rank_candidates(q, net, net.active_weights(), 2);
  for (std::size_t k = 1; k < ranked.size(); ++k) {
    const bool ordered = ranked[k - 1].v_e < ranked[k].v_e ||
                         (ranked[k - 1].v_e == ranked[k].v_e && ranked[k - 1].edge < ranked[k].edge);
    CHECK(ordered);
  }
  // The warm start pins the removed weight to exactly zero.
  const RemovalEstimate warm = estimate_removal(q, net, ranked.front().edge, true);
  CHECK(warm.b_e[warm.b_e.size() - p.n_a() + warm.edge] == 0.0);

  // Biases and removed weights are not candidates.
  ErrorNetwork cut = net;
  cut.remove_edge(5);
  CHECK_THROWS_AS((void)estimate_removal(q, cut, 5), InvalidCandidate);
}

TEST_CASE("removing an edge that is already zero costs nothing") {
  // Train with edge 7 masked, then restore it with value zero: b_c is optimal
  // in every other direction, so pinning the edge at zero keeps V_c.
  Trained t = train_spiral(5, {7});
  ErrorNetwork& net = *t.problem.model().network();
  net.set_mask_bits(std::string(static_cast<std::size_t>(net.n_weights()), '1'));
  const ParamQuadratic q(t.problem, t.b, make_partition(t.problem.n_d(), 2));
  const RemovalEstimate est = estimate_removal(q, net, 7);
  CHECK(std::abs(est.v_e - q.trained_cost()) <= 1e-9 * (1.0 + q.trained_cost()));
}

TEST_CASE("validation cost") {
  SUBCASE("empty network and zero data") {
    MeasurementSet data;
    data.times = {0.0, 0.5, 1.0};
    data.components = {{0}, {0}, {0}};
    data.values = {Vec::Zero(1), Vec::Zero(1), Vec::Zero(1)};
    SystemModel m(1, make_physics("zero", 1));
    m.with_network(ErrorNetwork::polynomial(1, 1, 1));
    ErrorNetwork net = *m.network();
    net.remove_edge(0);
    net.remove_edge(1);
    Problem p(m, data, Weights{}, 0.1);
    CHECK(validation_cost(p, net, Vec::Zero(2), LMConfig{}) == doctest::Approx(0.0));
  }
  SUBCASE("validation on the training set") {
    const Trained t = train_spiral(7);
    const Vec a = t.problem.params_of(t.b);
    const double expect = cost(t.problem, t.b) - t.problem.weights().mu_a * a.squaredNorm();
    const double got = validation_cost(t.problem, *t.problem.model().network(), a, tight());
    CHECK(got == doctest::Approx(expect).epsilon(1e-6));
  }
  SUBCASE("finer grids fit smooth data better") {
    const ExperimentSpec spec = spiral_spec();
    const GeneratedData gen = generate(spec, 9);
    SystemModel m(2, make_physics("linear", 2, spec.truth_constants));
    m.with_network(ErrorNetwork::polynomial(2, 2, 1));
    const ErrorNetwork net = *m.network();
    const Vec a = Vec::Zero(net.n_params());
    MeasurementSet clean = gen.data;
    for (std::size_t i = 0; i < clean.values.size(); ++i) clean.values[i] = gen.truth[i];
    const double coarse = validation_cost(Problem(m, clean, Weights{}, 0.1), net, a, tight());
    const double fine = validation_cost(Problem(m, clean, Weights{}, 0.05), net, a, tight());
    CHECK(fine < coarse);
  }
}

TEST_CASE("backward elimination recovers the linear support") {
  const Trained t = train_spiral(11);
  PruneConfig c;
  c.criterion = Criterion::BIC;
  c.staged = true;
  c.lm = tight();
  c.n_batches = 2;
  int calls = 0;
  const PruneResult r = prune_loop(t.problem, t.b, c, nullptr, [&](const PruneRecord&) { ++calls; });
  const ErrorNetwork& net = *r.problem.model().network();
  // Support: out0 <- x1, x2 and out1 <- x1, x2 (monomial indices 1 and 2).
  CHECK(net.active_weights() == std::vector<int>{1, 2, 7, 8});
  CHECK(calls == static_cast<int>(r.log.size()));
  const Vec a = r.problem.params_of(r.b);
  CHECK(a[1] == doctest::Approx(-0.5).epsilon(0.05));
  CHECK(a[2] == doctest::Approx(1.0).epsilon(0.05));
  CHECK(a[7] == doctest::Approx(-1.0).epsilon(0.05));
  CHECK(a[8] == doctest::Approx(-0.5).epsilon(0.05));

  std::ostringstream os;
  write_prune_log(os, r.log);
  CHECK(os.str().rfind("round,stage,edge,layer,source,target,label,predicted_cost,retrained_cost,criterion,criterion_value,decision,start\n", 0) == 0);
}

TEST_CASE("elimination without candidates is a no-op") {
  Trained t = train_spiral(13);
  ErrorNetwork& net = *t.problem.model().network();
  for (int e : net.active_weights()) net.remove_edge(e);
  PruneConfig c;
  const PruneResult r = prune_loop(t.problem, t.b, c);
  CHECK(r.log.empty());
  CHECK(r.b == t.b);
}
