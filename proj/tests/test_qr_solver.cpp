#include "sparseid/qr_solver.hpp"
#include "oracles.hpp"

#include <doctest.h>

#include <cmath>
#include <random>

using namespace sparseid;
using namespace sparseid::testing;

namespace {

std::vector<VarGroup> rs_groups(int n_r, int n_s) {
  std::vector<VarGroup> g{{"r", n_r}};
  if (n_s > 0) g.push_back({"s", n_s});
  return g;
}

}  // namespace

TEST_CASE("eliminate a hand example") {
  // ||r - s||^2 + ||r||^2 with scalar r, s: r = s / 2, reduced = s^2 / 2.
  Mat m(2, 3);
  m << 1.0, -1.0, 0.0,
       1.0, 0.0, 0.0;
  const Elimination e = eliminate(QuadraticBlock(rs_groups(1, 1), m), {"r"});
  CHECK(e.rank == 1);
  CHECK(e.policy.k(0, 0) == doctest::Approx(0.5));
  CHECK(e.policy.k(0, 1) == doctest::Approx(0.0));
  for (double s : {-2.0, 0.3, 5.0}) {
    Vec v(1);
    v[0] = s;
    CHECK(e.reduced.value(v) == doctest::Approx(s * s / 2.0));
  }
}

TEST_CASE("eliminating a variable without effect") {
  Mat m(3, 4);
  m << 0.0, 1.0, 2.0, 3.0,
       0.0, -1.0, 0.5, 1.0,
       0.0, 4.0, 0.0, -2.0;
  const QuadraticBlock b({{"r", 1}, {"s", 2}}, m);
  const Elimination e = eliminate(b, {"r"});
  CHECK(e.rank == 0);
  CHECK(e.policy.k.isZero());
  const Vec s = Vec::LinSpaced(2, -1.0, 2.0);
  Vec full(3);
  full << 0.0, s;
  CHECK(e.reduced.value(s) == doctest::Approx(b.value(full)).epsilon(1e-13));
}

TEST_CASE("elimination against the pseudoinverse formulas") {
  std::mt19937_64 rng(67);
  std::normal_distribution<double> n01(0.0, 1.0);
  for (int trial = 0; trial < 200; ++trial) {
    const RandomBlock rb = random_block(rng, trial % 3 == 0);
    const QuadraticBlock block(rs_groups(rb.n_r, rb.n_s), rb.m);
    const Elimination e = eliminate(block, {"r"});
    const EliminationOracle o = eliminate_oracle(rb.m, rb.n_r);
    const double scale = 1.0 + o.policy.norm();
    CHECK((e.policy.k - o.policy).norm() <= 1e-10 * scale);
    for (int k = 0; k < 3; ++k) {
      Vec s(rb.n_s);
      for (Index i = 0; i < s.size(); ++i) s[i] = n01(rng);
      Vec s1(rb.n_s + 1);
      s1 << s, 1.0;
      const double expect = s1.dot(o.reduced_q * s1);
      const double got = e.reduced.value(s);
      CHECK(std::abs(got - expect) <= 1e-10 * (1.0 + expect));
      // The policy attains the reduced value and is a minimum.
      Vec full(rb.n_r + rb.n_s);
      full << e.policy.apply(s), s;
      CHECK(std::abs(block.value(full) - got) <= 1e-10 * (1.0 + got));
      Vec bump(rb.n_r);
      for (Index i = 0; i < bump.size(); ++i) bump[i] = n01(rng);
      full.head(rb.n_r) += 1e-3 * bump.normalized();
      CHECK(block.value(full) >= got - 1e-12 * (1.0 + got));
    }
  }
}

TEST_CASE("stacking blocks") {
  std::mt19937_64 rng(71);
  std::normal_distribution<double> n01(0.0, 1.0);
  const QuadraticBlock a({{"x", 2}, {"y", 1}}, Mat::Random(3, 4));
  const QuadraticBlock b({{"y", 1}, {"z", 2}}, Mat::Random(2, 4));
  const QuadraticBlock s = stack({a, b});
  REQUIRE(s.groups().size() == 3);
  CHECK(s.offset("x") == 0);
  CHECK(s.offset("y") == 2);
  CHECK(s.offset("z") == 3);
  for (int k = 0; k < 10; ++k) {
    Vec v(5);
    for (Index i = 0; i < 5; ++i) v[i] = n01(rng);
    const double expect = a.value(v.head(3)) + b.value(v.tail(3));
    CHECK(s.value(v) == doctest::Approx(expect).epsilon(1e-14));
  }
  // A zero-row block changes nothing.
  const QuadraticBlock with_zero = stack({a, QuadraticBlock::zero(a.groups())});
  CHECK(with_zero.matrix() == a.matrix());
  // Groups with the same name must agree in size.
  const QuadraticBlock bad({{"y", 2}}, Mat::Random(1, 3));
  CHECK_THROWS_AS((void)stack({a, bad}), ContractError);
}

TEST_CASE("reordering and compression keep the value") {
  std::mt19937_64 rng(73);
  std::normal_distribution<double> n01(0.0, 1.0);
  const QuadraticBlock a({{"x", 2}, {"y", 3}}, Mat::Random(9, 6));
  const QuadraticBlock r = a.reordered({{"y", 3}, {"x", 2}});
  const QuadraticBlock c = a.compressed();
  CHECK(c.rows() <= 6);
  Vec v(5);
  for (Index i = 0; i < 5; ++i) v[i] = n01(rng);
  Vec w(5);
  w << v.tail(3), v.head(2);
  CHECK(r.value(w) == doctest::Approx(a.value(v)).epsilon(1e-13));
  CHECK(c.value(v) == doctest::Approx(a.value(v)).epsilon(1e-12));
}

TEST_CASE("triangular accumulator keeps the gram matrix") {
  std::mt19937_64 rng(79);
  TriangularAccumulator acc(5);
  Mat all(0, 5);
  for (int k = 0; k < 40; ++k) {
    const Mat rows = Mat::Random(1 + k % 4, 5);
    acc.add(rows);
    Mat grown(all.rows() + rows.rows(), 5);
    grown << all, rows;
    all = grown;
  }
  const Mat r = acc.result();
  CHECK(r.rows() <= 5);
  const Mat g1 = r.transpose() * r;
  const Mat g2 = all.transpose() * all;
  CHECK((g1 - g2).norm() <= 1e-12 * g2.norm());
}

TEST_CASE("leading elimination with a deficient lead") {
  // Two identical columns in r: the minimum-norm policy splits evenly.
  Mat m(3, 3);
  m << 1.0, 1.0, -2.0,
       1.0, 1.0, -2.0,
       0.0, 0.0, 1.0;
  const LeadingElimination e = eliminate_leading(m, 2);
  CHECK(e.rank == 1);
  CHECK(e.policy(0, 0) == doctest::Approx(1.0));
  CHECK(e.policy(1, 0) == doctest::Approx(1.0));
  CHECK(e.remainder.squaredNorm() == doctest::Approx(1.0));
}
