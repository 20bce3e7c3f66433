#include "sparseid/residual.hpp"

#include <algorithm>
#include <cmath>
#include <exception>
#include <map>
#include <random>

namespace sparseid {

namespace {

Mat inverse_factor(const Mat& w, const char* what) {
  Eigen::LLT<Mat> llt(w);
  if (llt.info() != Eigen::Success || !w.isApprox(w.transpose())) {
    throw ConfigError(std::string(what) + " is not symmetric positive definite");
  }
  const Mat l = llt.matrixL();
  const Mat inv = l.triangularView<Eigen::Lower>().solve(Mat::Identity(w.rows(), w.cols()));
  if (!inv.allFinite()) throw ConfigError(std::string(what) + " is singular");
  return inv;
}

// Runs body(j) for j in [0, n) on `workers` threads, rethrowing the first
// exception (by index) on the calling thread.
template <typename Body>
void parallel_for(int n, int workers, Body&& body) {
  std::vector<std::exception_ptr> errors(static_cast<std::size_t>(n));
#pragma omp parallel for num_threads(workers) schedule(static) if (workers > 1)
  for (int j = 0; j < n; ++j) {
    try {
      body(j);
    } catch (...) {
      errors[static_cast<std::size_t>(j)] = std::current_exception();
    }
  }
  for (auto& e : errors) {
    if (e) std::rethrow_exception(e);
  }
}

}  // namespace

int MeasurementSet::n_scalar() const {
  int n = 0;
  for (const auto& v : values) n += static_cast<int>(v.size());
  return n;
}

MeasurementSet MeasurementSet::window(double t0, double t1) const {
  MeasurementSet out;
  for (std::size_t i = 0; i < times.size(); ++i) {
    if (times[i] >= t0 && times[i] <= t1) {
      out.times.push_back(times[i]);
      out.components.push_back(components[i]);
      out.values.push_back(values[i]);
    }
  }
  return out;
}

Problem::Problem(SystemModel model, const MeasurementSet& data, Weights weights, double dt)
    : model_(std::move(model)),
      grid_(Grid::build(data.times, dt)),
      h_(std::vector<double>{}, std::vector<std::vector<int>>{}, 1),
      weights_(std::move(weights)) {
  if (data.components.size() != data.times.size() || data.values.size() != data.times.size()) {
    throw InvalidInput("measurement set fields have different lengths");
  }
  const std::size_t n_slots = grid_.measurement_times().size();
  selections_.assign(n_slots, {});
  std::vector<std::vector<double>> vals(n_slots);
  for (std::size_t i = 0; i < data.times.size(); ++i) {
    const auto slot = static_cast<std::size_t>(grid_.input_slot()[i]);
    if (data.components[i].size() != static_cast<std::size_t>(data.values[i].size())) {
      throw InvalidInput("measurement components and values differ in length");
    }
    for (std::size_t k = 0; k < data.components[i].size(); ++k) {
      const int c = data.components[i][k];
      if (c < 0 || c >= model_.n_x()) throw InvalidInput("measured component outside the state");
      selections_[slot].push_back(c);
      vals[slot].push_back(data.values[i][static_cast<Index>(k)]);
    }
  }
  for (std::size_t s = 0; s < n_slots; ++s) {
    if (selections_[s].empty()) throw InvalidInput("measurement without values");
    y_.emplace_back(Eigen::Map<const Vec>(vals[s].data(), static_cast<Index>(vals[s].size())));
  }
  h_ = MeasurementMap(grid_.measurement_times(), selections_, model_.n_x());
  finish_setup();
}

Problem::Problem(SystemModel model, MeasurementMap h, std::vector<Vec> values, Weights weights,
                 double dt)
    : model_(std::move(model)),
      grid_(Grid::build(h.times(), dt)),
      h_(std::move(h)),
      y_(std::move(values)),
      weights_(std::move(weights)) {
  if (grid_.measurement_times().size() != h_.times().size()) {
    throw InvalidInput("general measurement maps need distinct times");
  }
  if (y_.size() != h_.times().size()) throw InvalidInput("one measurement vector per time");
  for (int i = 0; i < h_.size(); ++i) {
    if (y_[static_cast<std::size_t>(i)].size() != h_.n_y(i)) {
      throw InvalidInput("measurement vector length differs from n_y");
    }
  }
  if (!std::is_sorted(h_.times().begin(), h_.times().end())) {
    throw InvalidInput("measurement times must be sorted");
  }
  finish_setup();
}

void Problem::finish_setup() {
  const int n_x = model_.n_x();
  if (weights_.mu_x < 0.0 || weights_.mu_a < 0.0 || !std::isfinite(weights_.mu_x) ||
      !std::isfinite(weights_.mu_a)) {
    throw ConfigError("regularization weights must be finite and nonnegative");
  }
  if (model_.input() && !model_.input()->covers(grid_.t(0), grid_.t(grid_.size() - 1))) {
    throw InvalidInput("exogenous signal does not cover the measurement window");
  }
  if (weights_.W_x_at) {
    sx_inv_.resize(static_cast<std::size_t>(grid_.n_intervals()));
    for (int j = 0; j < grid_.n_intervals(); ++j) {
      const Mat w = weights_.W_x_at(grid_.midpoint(j));
      if (w.rows() != n_x || w.cols() != n_x) throw ConfigError("W_x(t) must be n_x by n_x");
      sx_inv_[static_cast<std::size_t>(j)] = inverse_factor(w, "W_x(t)");
    }
  } else if (weights_.W_x.size() == 0) {
    sx_inv_.assign(1, Mat::Identity(n_x, n_x));
  } else {
    if (weights_.W_x.rows() != n_x || weights_.W_x.cols() != n_x) throw ConfigError("W_x must be n_x by n_x");
    sx_inv_.assign(1, inverse_factor(weights_.W_x, "W_x"));
  }

  n_meas_ = 0;
  sy_inv_.clear();
  for (int s = 0; s < h_.size(); ++s) {
    const int n_y = h_.n_y(s);
    n_meas_ += n_y;
    Mat w;
    if (weights_.W_y_at) {
      w = weights_.W_y_at(s);
    } else if (weights_.W_y.size() == 0) {
      w = Mat::Identity(n_y, n_y);
    } else if (!selections_.empty()) {
      if (weights_.W_y.rows() != n_x || weights_.W_y.cols() != n_x) {
        throw ConfigError("W_y must be n_x by n_x for selection measurements");
      }
      const auto& sel = selections_[static_cast<std::size_t>(s)];
      w.resize(n_y, n_y);
      for (int r = 0; r < n_y; ++r) {
        for (int c = 0; c < n_y; ++c) w(r, c) = weights_.W_y(sel[static_cast<std::size_t>(r)], sel[static_cast<std::size_t>(c)]);
      }
    } else {
      w = weights_.W_y;
    }
    if (w.rows() != n_y || w.cols() != n_y) throw ConfigError("W_y has wrong size for a measurement");
    sy_inv_.push_back(inverse_factor(w, "W_y"));
  }
}

const Mat& Problem::sx_inv(int interval) const {
  return sx_inv_.size() == 1 ? sx_inv_.front() : sx_inv_.at(static_cast<std::size_t>(interval));
}

void Problem::freeze_params(const Vec& a) {
  if (a.size() != model_.n_params()) throw ContractError("frozen parameter vector has wrong length");
  frozen_ = true;
  fixed_a_ = a;
}

void Problem::unfreeze_params() {
  frozen_ = false;
  fixed_a_.resize(0);
}

Vec Problem::params_of(const Vec& b) const {
  if (b.size() != n_b()) throw ContractError("decision vector has wrong length");
  if (frozen_) return fixed_a_;
  return b.tail(n_a());
}

Vec Problem::pack(const std::vector<Vec>& states, const Vec& a) const {
  if (static_cast<int>(states.size()) != n_d() || a.size() != n_a()) {
    throw ContractError("cannot pack decision vector: wrong sizes");
  }
  Vec b(n_b());
  for (int j = 0; j < n_d(); ++j) state(b, j) = states[static_cast<std::size_t>(j)];
  b.tail(n_a()) = a;
  return b;
}

Index ResidualBlocks::n_rows() const {
  Index n = p_term.size() + p_a.size();
  for (const auto& blk : intervals) n += blk.p.size();
  return n;
}

ResidualBlocks assemble(const Problem& problem, const Vec& b, bool with_jacobian, int workers) {
  const Vec a = problem.params_of(b);
  const int n_x = problem.n_x();
  const int n_a = problem.n_a();
  const Grid& grid = problem.grid();
  const Weights& w = problem.weights();
  const bool mu_rows = w.mu_x > 0.0;

  ResidualBlocks out;
  out.n_x = n_x;
  out.n_a = n_a;
  out.has_jacobian = with_jacobian;
  out.intervals.resize(static_cast<std::size_t>(grid.n_intervals()));

  const MeasurementMap& h = problem.measurement_map();
  parallel_for(grid.n_intervals(), resolve_workers(workers), [&](int j) {
    IntervalBlock& blk = out.intervals[static_cast<std::size_t>(j)];
    const double dt = grid.step(j);
    const double sdt = std::sqrt(dt);
    const Vec x = problem.state(b, j);
    const Vec z = problem.state(b, j + 1);
    const int slot = grid.measurement_at(j);
    const int n_y = slot >= 0 ? h.n_y(slot) : 0;
    const int rows = n_x + (mu_rows ? 2 * n_x : 0) + n_y;
    blk.p.resize(rows);

    Vec f;
    Mat fx;
    Mat fa;
    problem.model().evaluate(grid.midpoint(j), 0.5 * (x + z), a, f, with_jacobian ? &fx : nullptr,
                             with_jacobian && n_a > 0 ? &fa : nullptr);
    const Mat& s_inv = problem.sx_inv(j);
    blk.p.head(n_x) = sdt * (s_inv * ((z - x) / dt - f));
    if (with_jacobian) {
      blk.jx.setZero(rows, n_x);
      blk.jz.setZero(rows, n_x);
      blk.ja.setZero(rows, n_a);
      const Mat half = 0.5 * fx;
      blk.jx.topRows(n_x) = sdt * (s_inv * (-Mat::Identity(n_x, n_x) / dt - half));
      blk.jz.topRows(n_x) = sdt * (s_inv * (Mat::Identity(n_x, n_x) / dt - half));
      if (n_a > 0) blk.ja.topRows(n_x) = -sdt * (s_inv * fa);
    }
    Index r = n_x;
    if (mu_rows) {
      const double c = std::sqrt(0.5 * w.mu_x) * sdt;
      blk.p.segment(r, n_x) = c * x;
      blk.p.segment(r + n_x, n_x) = c * z;
      if (with_jacobian) {
        blk.jx.block(r, 0, n_x, n_x).diagonal().setConstant(c);
        blk.jz.block(r + n_x, 0, n_x, n_x).diagonal().setConstant(c);
      }
      r += 2 * n_x;
    }
    if (slot >= 0) {
      const Mat& sy = problem.sy_inv(slot);
      blk.p.segment(r, n_y) = sy * (problem.measurement(slot) - h.eval(slot, x));
      if (with_jacobian) blk.jx.block(r, 0, n_y, n_x) = -sy * h.jac(slot, x);
    }
  });

  const int last = grid.size() - 1;
  const int slot = grid.measurement_at(last);
  const Vec x_last = problem.state(b, last);
  const Mat& sy = problem.sy_inv(slot);
  out.p_term = sy * (problem.measurement(slot) - h.eval(slot, x_last));
  if (with_jacobian) out.j_term = -sy * h.jac(slot, x_last);

  out.sqrt_mu_a = n_a > 0 ? std::sqrt(w.mu_a) : 0.0;
  out.p_a = n_a > 0 && w.mu_a > 0.0 ? Vec(out.sqrt_mu_a * a) : Vec();
  return out;
}

double cost(const ResidualBlocks& blocks) {
  double c = 0.0;
  for (const auto& blk : blocks.intervals) c += blk.p.squaredNorm();
  c += blocks.p_term.squaredNorm();
  c += blocks.p_a.squaredNorm();
  return c;
}

double cost(const Problem& problem, const Vec& b, int workers) {
  return cost(assemble(problem, b, false, workers));
}

Vec gradient(const ResidualBlocks& blocks) {
  return 2.0 * jacobian_transpose_times(blocks, stacked_residual(blocks));
}

Vec stacked_residual(const ResidualBlocks& blocks) {
  Vec g(blocks.n_rows());
  Index r = 0;
  for (const auto& blk : blocks.intervals) {
    g.segment(r, blk.p.size()) = blk.p;
    r += blk.p.size();
  }
  g.segment(r, blocks.p_term.size()) = blocks.p_term;
  r += blocks.p_term.size();
  g.segment(r, blocks.p_a.size()) = blocks.p_a;
  return g;
}

namespace {

void require_jacobian(const ResidualBlocks& blocks) {
  if (!blocks.has_jacobian) throw ContractError("residual blocks were assembled without Jacobians");
}

}  // namespace

Eigen::SparseMatrix<double> jacobian(const ResidualBlocks& blocks) {
  require_jacobian(blocks);
  const int n_x = blocks.n_x;
  const Index state_cols = static_cast<Index>(n_x) * blocks.n_d();
  std::vector<Eigen::Triplet<double>> trips;
  Index r = 0;
  auto put = [&](const Mat& m, Index row0, Index col0) {
    for (Index c = 0; c < m.cols(); ++c) {
      for (Index i = 0; i < m.rows(); ++i) {
        if (m(i, c) != 0.0) trips.emplace_back(row0 + i, col0 + c, m(i, c));
      }
    }
  };
  for (std::size_t j = 0; j < blocks.intervals.size(); ++j) {
    const auto& blk = blocks.intervals[j];
    put(blk.jx, r, static_cast<Index>(j) * n_x);
    put(blk.jz, r, static_cast<Index>(j + 1) * n_x);
    put(blk.ja, r, state_cols);
    r += blk.p.size();
  }
  put(blocks.j_term, r, state_cols - n_x);
  r += blocks.p_term.size();
  for (Index i = 0; i < blocks.p_a.size(); ++i) trips.emplace_back(r + i, state_cols + i, blocks.sqrt_mu_a);
  Eigen::SparseMatrix<double> j(blocks.n_rows(), blocks.n_b());
  j.setFromTriplets(trips.begin(), trips.end());
  return j;
}

Vec jacobian_times(const ResidualBlocks& blocks, const Vec& v) {
  require_jacobian(blocks);
  if (v.size() != blocks.n_b()) throw ContractError("vector length differs from n_b");
  const int n_x = blocks.n_x;
  const Index sc = static_cast<Index>(n_x) * blocks.n_d();
  Vec out(blocks.n_rows());
  Index r = 0;
  for (std::size_t j = 0; j < blocks.intervals.size(); ++j) {
    const auto& blk = blocks.intervals[j];
    out.segment(r, blk.p.size()) = blk.jx * v.segment(static_cast<Index>(j) * n_x, n_x) +
                                   blk.jz * v.segment(static_cast<Index>(j + 1) * n_x, n_x) +
                                   blk.ja * v.tail(blocks.n_a);
    r += blk.p.size();
  }
  out.segment(r, blocks.p_term.size()) = blocks.j_term * v.segment(sc - n_x, n_x);
  r += blocks.p_term.size();
  out.segment(r, blocks.p_a.size()) = blocks.sqrt_mu_a * v.tail(blocks.p_a.size());
  return out;
}

Vec jacobian_transpose_times(const ResidualBlocks& blocks, const Vec& w) {
  require_jacobian(blocks);
  if (w.size() != blocks.n_rows()) throw ContractError("vector length differs from the row count");
  const int n_x = blocks.n_x;
  const Index sc = static_cast<Index>(n_x) * blocks.n_d();
  Vec out = Vec::Zero(blocks.n_b());
  Index r = 0;
  for (std::size_t j = 0; j < blocks.intervals.size(); ++j) {
    const auto& blk = blocks.intervals[j];
    const auto wj = w.segment(r, blk.p.size());
    out.segment(static_cast<Index>(j) * n_x, n_x) += blk.jx.transpose() * wj;
    out.segment(static_cast<Index>(j + 1) * n_x, n_x) += blk.jz.transpose() * wj;
    out.tail(blocks.n_a) += blk.ja.transpose() * wj;
    r += blk.p.size();
  }
  out.segment(sc - n_x, n_x) += blocks.j_term.transpose() * w.segment(r, blocks.p_term.size());
  r += blocks.p_term.size();
  out.tail(blocks.p_a.size()) += blocks.sqrt_mu_a * w.segment(r, blocks.p_a.size());
  return out;
}

Vec initial_guess(const Problem& problem, std::uint64_t seed, double param_std) {
  const int n_x = problem.n_x();
  const Grid& grid = problem.grid();
  Vec b = Vec::Zero(problem.n_b());
  const auto& sel = problem.selections();
  if (!sel.empty()) {
    for (int c = 0; c < n_x; ++c) {
      std::vector<double> ts;
      std::vector<double> vs;
      for (std::size_t s = 0; s < sel.size(); ++s) {
        for (std::size_t k = 0; k < sel[s].size(); ++k) {
          if (sel[s][k] != c) continue;
          // Repeated observations of one component at one time are averaged.
          const double t = grid.measurement_times()[s];
          const double v = problem.measurement(static_cast<int>(s))[static_cast<Index>(k)];
          if (!ts.empty() && ts.back() == t) {
            vs.back() = 0.5 * (vs.back() + v);
          } else {
            ts.push_back(t);
            vs.push_back(v);
          }
        }
      }
      if (ts.empty()) continue;
      for (int j = 0; j < grid.size(); ++j) {
        const double t = grid.t(j);
        double v;
        if (t <= ts.front()) {
          v = vs.front();
        } else if (t >= ts.back()) {
          v = vs.back();
        } else {
          const auto hi = static_cast<std::size_t>(std::upper_bound(ts.begin(), ts.end(), t) - ts.begin());
          const double wgt = (t - ts[hi - 1]) / (ts[hi] - ts[hi - 1]);
          v = (1.0 - wgt) * vs[hi - 1] + wgt * vs[hi];
        }
        b[static_cast<Index>(j) * n_x + c] = v;
      }
    }
  }
  if (problem.n_a() > 0) {
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> normal(0.0, param_std);
    Vec a(problem.n_a());
    for (Index i = 0; i < a.size(); ++i) a[i] = normal(rng);
    if (const auto& net = problem.model().network()) {
      for (Index i = 0; i < a.size(); ++i) {
        if (!net->is_active(static_cast<int>(i))) a[i] = 0.0;
      }
    }
    b.tail(problem.n_a()) = a;
  }
  return b;
}

}  // namespace sparseid
