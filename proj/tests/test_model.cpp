#include "sparseid/model.hpp"

#include <doctest.h>

#include <cmath>
#include <random>

using namespace sparseid;

namespace {

Vec vec(std::initializer_list<double> v) {
  Vec out(static_cast<Index>(v.size()));
  Index i = 0;
  for (double x : v) out[i++] = x;
  return out;
}

// Central differences of f with respect to x and a.
void fd_jacobians(const SystemModel& m, double t, const Vec& x, const Vec& a, Mat& jx, Mat& ja) {
  jx.resize(m.n_x(), x.size());
  ja.resize(m.n_x(), a.size());
  for (Index i = 0; i < x.size(); ++i) {
    const double h = 1e-6 * (1.0 + std::abs(x[i]));
    Vec xp = x, xm = x;
    xp[i] += h;
    xm[i] -= h;
    jx.col(i) = (m.eval_f(t, xp, a) - m.eval_f(t, xm, a)) / (2.0 * h);
  }
  for (Index i = 0; i < a.size(); ++i) {
    const double h = 1e-6 * (1.0 + std::abs(a[i]));
    Vec ap = a, am = a;
    ap[i] += h;
    am[i] -= h;
    ja.col(i) = (m.eval_f(t, x, ap) - m.eval_f(t, x, am)) / (2.0 * h);
  }
}

double rel_err(const Mat& a, const Mat& b) { return (a - b).norm() / std::max(1.0, b.norm()); }

}  // namespace

TEST_CASE("elu") {
  CHECK(elu(0.0) == 0.0);
  CHECK(elu(1.0) == 1.0);
  CHECK(elu(-1.0) == doctest::Approx(-0.63212).epsilon(1e-5));
  CHECK(elu_derivative(2.0) == 1.0);
  CHECK(elu_derivative(-1.0) == doctest::Approx(std::exp(-1.0)));
}

TEST_CASE("monomial bookkeeping") {
  CHECK(monomial_count(3, 2) == 10);
  CHECK(monomial_count(2, 0) == 1);
  const auto mons = graded_lex_monomials(3, 2);
  REQUIRE(mons.size() == 10);
  CHECK(mons[0] == std::vector<int>{0, 0, 0});
  CHECK(mons[1] == std::vector<int>{1, 0, 0});
  CHECK(mons[3] == std::vector<int>{0, 0, 1});
  CHECK(mons[4] == std::vector<int>{2, 0, 0});
  CHECK(mons[5] == std::vector<int>{1, 1, 0});
  CHECK(mons[9] == std::vector<int>{0, 0, 2});
}

TEST_CASE("lorenz truth model") {
  const PhysicsModel p = make_physics("lorenz", 3, {{"sigma", 10.0}, {"rho", 28.0}, {"beta", 8.0 / 3.0}});
  const Vec f = p.f(0.0, vec({1, 1, 1}));
  CHECK(f[0] == doctest::Approx(0.0));
  CHECK(f[1] == doctest::Approx(26.0));
  CHECK(f[2] == doctest::Approx(1.0 - 8.0 / 3.0));
  CHECK_THROWS_AS((void)make_physics("lorenz", 3, {{"sigmaa", 1.0}}), ConfigError);
  CHECK_THROWS_AS((void)make_physics("nonsense", 3), ConfigError);
}

TEST_CASE("zero model without network") {
  SystemModel m(3, make_physics("zero", 3));
  CHECK(m.n_params() == 0);
  CHECK(m.eval_f(0.3, vec({4, 5, 6}), Vec()).isZero());
  CHECK_THROWS_AS((void)m.eval_f(0.0, vec({1, 2}), Vec()), ContractError);
}

TEST_CASE("polynomial network evaluation") {
  SystemModel m(3, make_physics("zero", 3));
  m.with_network(ErrorNetwork::polynomial(3, 3, 2));
  const auto& net = *m.network();
  CHECK(net.n_params() == 30);
  CHECK(net.n_weights() == 30);
  // Only x1*x2 feeding the third output, gain 0.960.
  Vec a = Vec::Zero(30);
  a[2 * 10 + 5] = 0.960;
  const Vec f = m.eval_f(0.0, vec({2, 3, 7}), a);
  CHECK(f[2] == doctest::Approx(5.76));
  CHECK(f[0] == 0.0);
  CHECK(net.describe_edge(25) == "out2:in0*in1");
  CHECK(net.monomial_degree(25) == 2);
  CHECK(net.monomial_degree(0) == 0);

  // x1^2 with gain 2: d/dx1 = 2 w x1 = 12 at x1 = 3.
  Vec b = Vec::Zero(30);
  b[4] = 2.0;
  const Mat jx = m.jac_f_x(0.0, vec({3, 0, 0}), b);
  CHECK(jx(0, 0) == doctest::Approx(12.0));
}

TEST_CASE("linear physics jacobian") {
  const PhysicsModel p = make_physics("linear", 2, {{"a00", 1.0}, {"a01", 2.0}, {"a10", -3.0}, {"a11", 0.5}});
  Mat expect(2, 2);
  expect << 1.0, 2.0, -3.0, 0.5;
  CHECK((p.jac_x(0.0, vec({5, -1})) - expect).norm() == 0.0);
  CHECK((p.f(0.0, vec({1, 1})) - expect * vec({1, 1})).norm() == 0.0);
}

TEST_CASE("jacobians match finite differences") {
  std::mt19937_64 rng(17);
  std::normal_distribution<double> n01(0.0, 1.0);
  SystemModel poly(3, make_physics("lorenz", 3, {{"sigma", 10.0}, {"rho", 28.0}, {"beta", 8.0 / 3.0}}));
  poly.with_network(ErrorNetwork::polynomial(3, 3, 3));
  SystemModel ffn(2, make_physics("vanderpol-forcing", 2, {{"A", 1.0}, {"omega", 0.2}}));
  ffn.with_network(ErrorNetwork::feedforward_elu({2, 10, 10, 2}));
  for (int draw = 0; draw < 100; ++draw) {
    SystemModel& m = draw % 2 == 0 ? poly : ffn;
    Vec x(m.n_x()), a(m.n_params());
    for (Index i = 0; i < x.size(); ++i) x[i] = n01(rng);
    for (Index i = 0; i < a.size(); ++i) a[i] = 0.5 * n01(rng);
    const double t = n01(rng);
    Mat jx, ja;
    fd_jacobians(m, t, x, a, jx, ja);
    CHECK(rel_err(m.jac_f_x(t, x, a), jx) <= 1e-6);
    CHECK(rel_err(m.jac_f_a(t, x, a), ja) <= 1e-6);
  }
}

TEST_CASE("mask soundness") {
  std::mt19937_64 rng(23);
  std::normal_distribution<double> n01(0.0, 1.0);
  SystemModel m(2, make_physics("zero", 2));
  m.with_network(ErrorNetwork::feedforward_elu({2, 4, 3, 2}));
  auto& net = *m.network();
  Vec a(net.n_params());
  for (Index i = 0; i < a.size(); ++i) a[i] = n01(rng);
  // Layout: weights 0..7, biases 8..11, weights 12..23, biases 24..26, weights 27..32.
  const std::vector<int> removed{0, 5, 13, 20, 28};
  for (int e : removed) net.remove_edge(e);
  const Vec x = Vec::Random(2);
  const Vec f0 = m.eval_f(0.0, x, a);
  const Mat jx0 = m.jac_f_x(0.0, x, a);
  const Mat ja0 = m.jac_f_a(0.0, x, a);
  Vec a2 = a;
  for (int e : removed) a2[e] = 100.0 * n01(rng);
  CHECK((m.eval_f(0.0, x, a2) - f0).norm() == 0.0);
  CHECK((m.jac_f_x(0.0, x, a2) - jx0).norm() == 0.0);
  CHECK((m.jac_f_a(0.0, x, a2) - ja0).norm() == 0.0);
  for (int e : removed) CHECK(ja0.col(e).isZero());
}

TEST_CASE("edge removal") {
  ErrorNetwork net = ErrorNetwork::feedforward_elu({2, 10, 10, 2});
  CHECK(net.n_weights() == 140);
  CHECK(net.n_params() == 160);
  CHECK(net.n_effective_params() == 160);

  // Removal equals the dense net with that weight zeroed.
  Vec a = Vec::LinSpaced(net.n_params(), -1.0, 1.0);
  const Vec x = Vec::LinSpaced(2, 0.3, -0.7);
  ErrorNetwork pruned = net;
  pruned.set_params(a);
  pruned.remove_edge(7);
  CHECK(pruned.params()[7] == 0.0);
  CHECK(pruned.n_active_weights() == 139);
  Vec zeroed = a;
  zeroed[7] = 0.0;
  Vec f_pruned, f_dense;
  pruned.evaluate(x, a, f_pruned, nullptr, nullptr);
  net.evaluate(x, zeroed, f_dense, nullptr, nullptr);
  CHECK((f_pruned - f_dense).norm() == 0.0);

  CHECK_THROWS_AS(pruned.remove_edge(7), InvalidCandidate);
  // The first hidden layer biases follow its 20 weights.
  CHECK_FALSE(net.is_weight(20));
  CHECK_THROWS_AS(net.remove_edge(20), InvalidCandidate);

  // Cutting both inputs of hidden unit 0 (weights 0 and 1) kills it.
  ErrorNetwork cut = net;
  CHECK(cut.remove_edge(0).empty());
  const auto dead = cut.remove_edge(1);
  REQUIRE(dead.size() == 1);
  CHECK(dead[0] == NeuronId{1, 0});
  CHECK(cut.dead_neurons().size() == 1);
  // Without inputs the unit still feeds the constant elu(bias) forward, so its
  // bias keeps counting.
  CHECK(cut.n_effective_params() == 158);
  // Cutting its outgoing weights as well removes the bias from the count.
  for (int q = 0; q < 10; ++q) cut.remove_edge(30 + q * 10);
  CHECK(cut.n_effective_params() == 160 - 2 - 10 - 1);
}

TEST_CASE("edge geometry") {
  const ErrorNetwork net = ErrorNetwork::feedforward_elu({2, 3, 2});
  // Layer 0: weights 0..5 (target-major), biases 6..8; layer 1: weights 9..14.
  CHECK(net.n_params() == 15);
  const EdgeInfo e = net.edge(3);
  CHECK(e.layer == 0);
  CHECK(e.target == 1);
  CHECK(e.source == 1);
  const EdgeInfo f = net.edge(9 + 4);
  CHECK(f.layer == 1);
  CHECK(f.target == 1);
  CHECK(f.source == 1);
}

TEST_CASE("measurement selections") {
  MeasurementMap h({0.0, 0.5, 1.0}, {{0, 1, 2}, {0, 1}, {2}}, 3);
  const Vec x = vec({1, 2, 3});
  CHECK(h.eval_h(0.0, x) == x);
  CHECK(h.eval_h(0.5, x) == vec({1, 2}));
  const Mat j = h.jac_h_x(1.0, x);
  CHECK(j.rows() == 1);
  CHECK(j(0, 2) == 1.0);
  CHECK(j.row(0).sum() == 1.0);
  CHECK_THROWS_AS((void)h.eval_h(0.25, x), LookupError);
}

TEST_CASE("model json round trip") {
  SystemModel m(3, make_physics("lorenz", 3, {{"sigma", 10.0}, {"rho", 28.0}, {"beta", 8.0 / 3.0}}));
  m.with_network(ErrorNetwork::polynomial(3, 3, 2));
  Vec a = Vec::LinSpaced(30, -1.0, 2.0);
  m.network()->set_params(a);
  m.network()->remove_edge(4);
  m.network()->remove_edge(17);
  const SystemModel back = model_from_json(nlohmann::json::parse(model_to_json(m).dump()));
  REQUIRE(back.network().has_value());
  CHECK(back.network()->mask_bits() == m.network()->mask_bits());
  CHECK((back.network()->params() - m.network()->params()).norm() == 0.0);
  const Vec x = vec({0.1, -0.2, 0.3});
  CHECK((back.eval_f(0.0, x, a) - m.eval_f(0.0, x, a)).norm() == 0.0);

  nlohmann::json bad = model_to_json(m);
  bad["format"] = "other";
  CHECK_THROWS_AS((void)model_from_json(bad), ConfigError);
}
