#include "sparseid/lm_parallel.hpp"

#include <Eigen/QR>

#include <algorithm>
#include <cmath>
#include <exception>
#include <string>

namespace sparseid {

void Partition::validate() const {
  if (zeta.size() < 2) throw InvalidInput("partition needs at least one batch");
  if (zeta.front() != 0 || zeta.back() != n_d + 1) throw InvalidInput("partition must span summands 0..N_d");
  for (std::size_t i = 1; i < zeta.size(); ++i) {
    if (zeta[i] <= zeta[i - 1]) throw InvalidInput("partition indices must increase strictly");
  }
}

Partition make_partition(int n_d, int n_batches) {
  if (n_d < 2) throw InvalidInput("need at least two grid points");
  if (n_batches < 1 || n_batches > n_d) throw ConfigError("number of batches must lie in [1, N_d]");
  Partition p;
  p.n_d = n_d;
  const int summands = n_d + 1;
  const int base = summands / n_batches;
  const int extra = summands % n_batches;
  p.zeta.push_back(0);
  for (int s = 0; s < n_batches; ++s) p.zeta.push_back(p.zeta.back() + base + (s < extra ? 1 : 0));
  return p;
}

int default_batches(int n_d, int workers) {
  const int cap = std::max(1, (n_d + 3) / 4);
  return std::clamp(resolve_workers(workers), 1, cap);
}

namespace {

std::string beta(int j) { return "beta" + std::to_string(j); }

// Splits rows over [v (n) | tail] into a triangular lead in (v, tail) and
// rows in tail only, which go to the accumulator.
Mat split_lead(Mat rem, int n, TriangularAccumulator& acc) {
  if (rem.rows() <= n) return rem;
  Eigen::HouseholderQR<Mat> qr(rem.leftCols(n));
  const Index tw = rem.cols() - n;
  Mat tail = rem.rightCols(tw);
  tail.applyOnTheLeft(qr.householderQ().transpose());
  Mat lead(n, rem.cols());
  lead.leftCols(n) = qr.matrixQR().topRows(n).triangularView<Eigen::Upper>();
  lead.rightCols(tw) = tail.topRows(n);
  acc.add(tail.bottomRows(rem.rows() - n));
  return lead;
}

}  // namespace

QuadraticBlock build_q(const ResidualBlocks& blocks, double lambda, int j) {
  const int n_x = blocks.n_x;
  const int n_a = blocks.n_a;
  const int n_d = blocks.n_d();
  if (j < 0 || j > n_d) throw ContractError("summand index out of range");
  if (lambda < 0.0) throw ContractError("lambda must be nonnegative");
  const double sl = std::sqrt(lambda);
  if (j == 0) return QuadraticBlock::zero({});
  if (j == n_d) {
    const Index rows = blocks.p_term.size();
    Mat m = Mat::Zero(rows + n_x, n_x + 1);
    m.topLeftCorner(rows, n_x) = blocks.j_term;
    m.col(n_x).head(rows) = blocks.p_term;
    m.bottomLeftCorner(n_x, n_x).diagonal().setConstant(sl);
    return QuadraticBlock({{beta(j), n_x}}, std::move(m));
  }
  const IntervalBlock& blk = blocks.intervals[static_cast<std::size_t>(j - 1)];
  const Index rows = blk.p.size();
  Mat m = Mat::Zero(rows + n_x, 2 * n_x + n_a + 1);
  m.block(0, 0, rows, n_x) = blk.jx;
  m.block(0, n_x, rows, n_x) = blk.jz;
  m.block(0, 2 * n_x, rows, n_a) = blk.ja;
  m.col(2 * n_x + n_a).head(rows) = blk.p;
  m.block(rows, 0, n_x, n_x).diagonal().setConstant(sl);
  return QuadraticBlock({{beta(j), n_x}, {beta(j + 1), n_x}, {"delta", n_a}}, std::move(m));
}

QuadraticBlock build_r(const ResidualBlocks& blocks, double lambda) {
  if (lambda < 0.0) throw ContractError("lambda must be nonnegative");
  const int n_a = blocks.n_a;
  const Index pa = blocks.p_a.size();
  Mat m = Mat::Zero(pa + n_a, n_a + 1);
  m.topLeftCorner(pa, pa).diagonal().setConstant(blocks.sqrt_mu_a);
  m.col(n_a).head(pa) = blocks.p_a;
  m.block(pa, 0, n_a, n_a).diagonal().setConstant(std::sqrt(lambda));
  return QuadraticBlock({{"delta", n_a}}, std::move(m));
}

BatchResult batch_forward(const ResidualBlocks& blocks, double lambda, const Partition& partition, int s) {
  if (!blocks.has_jacobian) throw ContractError("batch elimination needs Jacobian blocks");
  if (lambda < 0.0) throw ContractError("lambda must be nonnegative");
  const int n_x = blocks.n_x;
  const int n_a = blocks.n_a;
  const int n_d = blocks.n_d();
  const int n_s = partition.n_batches();
  if (partition.n_d != n_d) throw ContractError("partition was made for a different grid");
  if (s < 1 || s > n_s) throw ContractError("batch index out of range");
  const double sl = std::sqrt(lambda);

  BatchResult out;
  out.s = s;
  out.left = partition.zeta[static_cast<std::size_t>(s - 1)];
  out.right = partition.zeta[static_cast<std::size_t>(s)];
  out.has_left = s > 1;
  out.has_right = s < n_s;
  out.first = out.left + 1;
  out.last = out.has_right ? out.right - 1 : n_d;
  const int lw = out.has_left ? n_x : 0;
  const int tw = lw + n_a + 1;
  const int dcol = lw;  // delta offset inside the tail

  TriangularAccumulator acc(tw);
  Mat lead(0, n_x + tw);  // over [beta_cur | tail]

  if (out.has_left) {
    if (out.left == n_d) {
      const Index rows = blocks.p_term.size();
      Mat m = Mat::Zero(rows + n_x, tw);
      m.topLeftCorner(rows, n_x) = blocks.j_term;
      m.col(tw - 1).head(rows) = blocks.p_term;
      m.bottomLeftCorner(n_x, n_x).diagonal().setConstant(sl);
      acc.add(m);
    } else {
      const IntervalBlock& blk = blocks.intervals[static_cast<std::size_t>(out.left - 1)];
      const Index rows = blk.p.size();
      lead = Mat::Zero(rows + n_x, n_x + tw);
      lead.block(0, 0, rows, n_x) = blk.jz;
      lead.block(0, n_x, rows, n_x) = blk.jx;
      lead.block(0, n_x + dcol, rows, n_a) = blk.ja;
      lead.col(n_x + tw - 1).head(rows) = blk.p;
      lead.block(rows, n_x, n_x, n_x).diagonal().setConstant(sl);
      lead = split_lead(std::move(lead), n_x, acc);
    }
  }

  for (int j = out.first; j <= out.last; ++j) {
    const Index lr = lead.rows();
    if (j < n_d) {
      const IntervalBlock& blk = blocks.intervals[static_cast<std::size_t>(j - 1)];
      const Index rows = blk.p.size();
      Mat m = Mat::Zero(lr + rows + n_x, 2 * n_x + tw);
      m.topLeftCorner(lr, n_x) = lead.leftCols(n_x);
      m.topRightCorner(lr, tw) = lead.rightCols(tw);
      m.block(lr, 0, rows, n_x) = blk.jx;
      m.block(lr, n_x, rows, n_x) = blk.jz;
      m.block(lr, 2 * n_x + dcol, rows, n_a) = blk.ja;
      m.col(2 * n_x + tw - 1).segment(lr, rows) = blk.p;
      m.block(lr + rows, 0, n_x, n_x).diagonal().setConstant(sl);
      LeadingElimination le = eliminate_leading(m, n_x, false);
      out.policies.push_back(std::move(le.policy));
      lead = split_lead(std::move(le.remainder), n_x, acc);
    } else {
      const Index rows = blocks.p_term.size();
      Mat m = Mat::Zero(lr + rows + n_x, n_x + tw);
      m.topRows(lr) = lead;
      m.block(lr, 0, rows, n_x) = blocks.j_term;
      m.col(n_x + tw - 1).segment(lr, rows) = blocks.p_term;
      m.block(lr + rows, 0, n_x, n_x).diagonal().setConstant(sl);
      LeadingElimination le = eliminate_leading(m, n_x, false);
      out.policies.push_back(std::move(le.policy));
      acc.add(le.remainder);
      lead.resize(0, n_x + tw);
    }
  }

  const Mat rest = acc.result();
  if (out.has_right) {
    out.w = Mat::Zero(lead.rows() + rest.rows(), n_x + tw);
    out.w.topRows(lead.rows()) = lead;
    out.w.bottomRightCorner(rest.rows(), tw) = rest;
  } else {
    out.w = rest;
  }
  return out;
}

StepFactorization::StepFactorization(const ResidualBlocks& blocks, double lambda, const Partition& partition,
                                     int workers)
    : partition_(partition), workers_(resolve_workers(workers)), n_x_(blocks.n_x), n_a_(blocks.n_a),
      n_d_(blocks.n_d()) {
  partition_.validate();
  const int n_s = partition_.n_batches();
  batches_.resize(static_cast<std::size_t>(n_s));
  std::vector<std::exception_ptr> errors(static_cast<std::size_t>(n_s));
#pragma omp parallel for num_threads(workers_) schedule(dynamic, 1) if (workers_ > 1)
  for (int s = 1; s <= n_s; ++s) {
    try {
      batches_[static_cast<std::size_t>(s - 1)] = batch_forward(blocks, lambda, partition_, s);
    } catch (...) {
      errors[static_cast<std::size_t>(s - 1)] = std::current_exception();
    }
  }
  for (auto& e : errors) {
    if (e) std::rethrow_exception(e);
  }

  // Chain over batch boundaries in ascending s.
  const int n_x = n_x_;
  const int ta = n_a_ + 1;
  chain_.resize(static_cast<std::size_t>(n_s + 1));
  Mat g = batches_.front().w;  // [beta_{zeta(2)} | delta | 1] or [delta | 1]
  for (int s = 2; s <= n_s; ++s) {
    const BatchResult& b = batches_[static_cast<std::size_t>(s - 1)];
    const int nr = b.has_right ? n_x : 0;
    const Index wr = b.w.rows();
    Mat m = Mat::Zero(g.rows() + wr, n_x + nr + ta);
    m.topLeftCorner(g.rows(), n_x) = g.leftCols(n_x);
    m.topRightCorner(g.rows(), ta) = g.rightCols(ta);
    m.block(g.rows(), 0, wr, n_x) = b.w.middleCols(nr, n_x);
    m.block(g.rows(), n_x, wr, nr) = b.w.leftCols(nr);
    m.bottomRightCorner(wr, ta) = b.w.rightCols(ta);
    LeadingElimination le = eliminate_leading(m, n_x, true);
    chain_[static_cast<std::size_t>(s)] = std::move(le.policy);
    g = std::move(le.remainder);
  }

  const QuadraticBlock r = build_r(blocks, lambda);
  Mat m(g.rows() + r.rows(), ta);
  m.topRows(g.rows()) = g;
  m.bottomRows(r.rows()) = r.matrix();
  q_delta_ = eliminate_leading(m, 0, true).remainder;
}

Vec StepFactorization::solve_delta() const {
  if (n_a_ == 0) return Vec(0);
  Mat q = q_delta_;
  if (q.rows() < n_a_ + 1) {
    q.conservativeResize(n_a_ + 1, Eigen::NoChange);
    q.bottomRows(n_a_ + 1 - q_delta_.rows()).setZero();
  }
  return eliminate_leading(q, n_a_, false).policy.col(0);
}

Vec StepFactorization::reconstruct(const Vec& delta) const {
  if (delta.size() != n_a_) throw ContractError("delta has wrong length");
  const int n_x = n_x_;
  const int n_s = partition_.n_batches();
  Vec gamma(static_cast<Index>(n_x) * n_d_ + n_a_);
  gamma.tail(n_a_) = delta;
  auto state = [&](int j) { return gamma.segment(static_cast<Index>(j - 1) * n_x, n_x); };

  for (int s = n_s; s >= 2; --s) {
    const BatchResult& b = batches_[static_cast<std::size_t>(s - 1)];
    Vec in(chain_[static_cast<std::size_t>(s)].cols());
    Index k = 0;
    if (b.has_right) {
      in.head(n_x) = state(b.right);
      k = n_x;
    }
    in.segment(k, n_a_) = delta;
    in[in.size() - 1] = 1.0;
    state(b.left) = chain_[static_cast<std::size_t>(s)] * in;
  }

#pragma omp parallel for num_threads(workers_) schedule(dynamic, 1) if (workers_ > 1)
  for (int s = 1; s <= n_s; ++s) {
    const BatchResult& b = batches_[static_cast<std::size_t>(s - 1)];
    const int lw = b.has_left ? n_x : 0;
    for (int j = b.last; j >= b.first; --j) {
      const Mat& pol = b.policies[static_cast<std::size_t>(j - b.first)];
      const int nn = j < n_d_ ? n_x : 0;
      Vec in(pol.cols());
      if (nn > 0) in.head(n_x) = state(j + 1);
      if (lw > 0) in.segment(nn, n_x) = state(b.left);
      in.segment(nn + lw, n_a_) = delta;
      in[in.size() - 1] = 1.0;
      state(j) = pol * in;
    }
  }
  return gamma;
}

Vec lm_step_parallel(const ResidualBlocks& blocks, double lambda, const Partition& partition, int workers) {
  const StepFactorization f(blocks, lambda, partition, workers);
  return f.reconstruct(f.solve_delta());
}

LMResult solve_parallel(const Problem& problem, const Vec& b0, const LMConfig& config, int n_batches,
                        const IterationObserver& observer) {
  const int workers = resolve_workers(config.workers);
  const Partition part = make_partition(problem.n_d(), n_batches > 0 ? n_batches : default_batches(problem.n_d(), workers));
  return levenberg_marquardt(
      problem, b0, config,
      [&](const ResidualBlocks& blocks, double lambda) { return lm_step_parallel(blocks, lambda, part, workers); },
      observer);
}

}  // namespace sparseid
