#include "sparseid/qr_solver.hpp"

#include <Eigen/QR>

#include <algorithm>
#include <cmath>

namespace sparseid {

QuadraticBlock::QuadraticBlock(std::vector<VarGroup> groups, Mat m) : groups_(std::move(groups)), m_(std::move(m)) {
  int n = 0;
  for (const auto& g : groups_) {
    if (g.dim < 0) throw ContractError("variable group with negative dimension");
    n += g.dim;
  }
  for (std::size_t i = 0; i < groups_.size(); ++i) {
    for (std::size_t k = i + 1; k < groups_.size(); ++k) {
      if (groups_[i].name == groups_[k].name) throw ContractError("duplicate variable group " + groups_[i].name);
    }
  }
  if (m_.cols() != n + 1) throw ContractError("block matrix needs one column per variable plus a constant");
}

QuadraticBlock QuadraticBlock::zero(std::vector<VarGroup> groups) {
  int n = 0;
  for (const auto& g : groups) n += g.dim;
  return QuadraticBlock(std::move(groups), Mat::Zero(0, n + 1));
}

bool QuadraticBlock::has_group(const std::string& name) const noexcept {
  return std::any_of(groups_.begin(), groups_.end(), [&](const VarGroup& g) { return g.name == name; });
}

int QuadraticBlock::offset(const std::string& name) const {
  int off = 0;
  for (const auto& g : groups_) {
    if (g.name == name) return off;
    off += g.dim;
  }
  throw ContractError("unknown variable group " + name);
}

const VarGroup& QuadraticBlock::group(const std::string& name) const {
  for (const auto& g : groups_) {
    if (g.name == name) return g;
  }
  throw ContractError("unknown variable group " + name);
}

double QuadraticBlock::value(const Vec& v) const {
  if (v.size() != n_vars()) throw ContractError("value() needs one entry per variable");
  return (m_.leftCols(n_vars()) * v + m_.col(n_vars())).squaredNorm();
}

QuadraticBlock QuadraticBlock::reordered(const std::vector<VarGroup>& order) const {
  if (order.size() != groups_.size()) throw ContractError("reorder must be a permutation of the groups");
  Mat m(m_.rows(), m_.cols());
  int dst = 0;
  for (const auto& g : order) {
    if (!(group(g.name) == g)) throw ContractError("group " + g.name + " changed dimension");
    m.middleCols(dst, g.dim) = m_.middleCols(offset(g.name), g.dim);
    dst += g.dim;
  }
  m.col(dst) = m_.col(n_vars());
  return {order, std::move(m)};
}

QuadraticBlock QuadraticBlock::compressed() const {
  if (m_.rows() <= m_.cols()) return *this;
  Eigen::HouseholderQR<Mat> qr(m_);
  Mat r = qr.matrixQR().topRows(m_.cols()).triangularView<Eigen::Upper>();
  return {groups_, std::move(r)};
}

Vec LinearPolicy::apply(const Vec& s) const {
  if (s.size() + 1 != k.cols()) throw ContractError("policy input has wrong length");
  return k.leftCols(s.size()) * s + k.col(s.size());
}

namespace {

LeadingElimination eliminate_deficient(const Mat& m, int n_r, bool compact) {
  const Index rest = m.cols() - n_r;
  LeadingElimination out;
  const auto mr = m.leftCols(n_r);
  const Mat ms = m.rightCols(rest);
  Eigen::CompleteOrthogonalDecomposition<Mat> cod(mr);
  cod.setThreshold(kRankTolerance);
  out.rank = static_cast<int>(cod.rank());
  out.policy = -cod.solve(ms);
  // The remainder is the projection of ms onto the orthogonal complement of
  // range(M_r), expressed in the basis given by the trailing columns of Q.
  Eigen::ColPivHouseholderQR<Mat> qr(mr);
  qr.setThreshold(kRankTolerance);
  const Index rank = qr.rank();
  Mat qt_ms = qr.householderQ().transpose() * ms;
  Mat rem = qt_ms.bottomRows(m.rows() - rank);
  if (compact && rem.rows() > rest) {
    Eigen::HouseholderQR<Mat> q2(rem);
    rem = q2.matrixQR().topRows(rest).triangularView<Eigen::Upper>();
  }
  out.remainder = std::move(rem);
  return out;
}

}  // namespace

LeadingElimination eliminate_leading(const Mat& m, int n_r, bool compact) {
  if (n_r < 0 || n_r >= m.cols()) throw ContractError("eliminated columns must leave the constant column");
  const Index rest = m.cols() - n_r;
  LeadingElimination out;
  if (n_r == 0) {
    out.policy.resize(0, rest);
    out.remainder = m;
    if (compact && m.rows() > rest) {
      Eigen::HouseholderQR<Mat> qr(m);
      out.remainder = qr.matrixQR().topRows(rest).triangularView<Eigen::Upper>();
    }
    return out;
  }
  if (m.rows() < n_r) return eliminate_deficient(m, n_r, compact);

  Eigen::HouseholderQR<Mat> qr(m.leftCols(n_r));
  const auto diag = qr.matrixQR().topLeftCorner(n_r, n_r).diagonal().cwiseAbs();
  const double dmax = diag.maxCoeff();
  const double dmin = diag.minCoeff();
  if (!(dmin > kRankTolerance * dmax)) return eliminate_deficient(m, n_r, compact);

  Mat rest_cols = m.rightCols(rest);
  rest_cols.applyOnTheLeft(qr.householderQ().transpose());
  const auto r11 = qr.matrixQR().topLeftCorner(n_r, n_r).triangularView<Eigen::Upper>();
  out.policy = -r11.solve(rest_cols.topRows(n_r));
  out.rank = n_r;
  Mat rem = rest_cols.bottomRows(m.rows() - n_r);
  if (compact && rem.rows() > rest) {
    Eigen::HouseholderQR<Mat> q2(rem);
    rem = q2.matrixQR().topRows(rest).triangularView<Eigen::Upper>();
  }
  out.remainder = std::move(rem);
  return out;
}

Elimination eliminate(const QuadraticBlock& block, const std::vector<std::string>& over) {
  std::vector<VarGroup> r_groups;
  std::vector<VarGroup> s_groups;
  for (const auto& name : over) r_groups.push_back(block.group(name));
  for (const auto& g : block.groups()) {
    if (std::find(over.begin(), over.end(), g.name) == over.end()) s_groups.push_back(g);
  }
  std::vector<VarGroup> order = r_groups;
  order.insert(order.end(), s_groups.begin(), s_groups.end());
  const QuadraticBlock ordered = block.reordered(order);
  int n_r = 0;
  for (const auto& g : r_groups) n_r += g.dim;
  LeadingElimination le = eliminate_leading(ordered.matrix(), n_r);
  Elimination out;
  out.policy = {r_groups, s_groups, std::move(le.policy)};
  out.reduced = QuadraticBlock(s_groups, std::move(le.remainder));
  out.rank = le.rank;
  return out;
}

QuadraticBlock stack(const std::vector<QuadraticBlock>& blocks) {
  std::vector<VarGroup> groups;
  Index rows = 0;
  for (const auto& b : blocks) {
    rows += b.rows();
    for (const auto& g : b.groups()) {
      auto it = std::find_if(groups.begin(), groups.end(), [&](const VarGroup& h) { return h.name == g.name; });
      if (it == groups.end()) groups.push_back(g);
      else if (it->dim != g.dim) throw ContractError("group " + g.name + " has inconsistent dimensions");
    }
  }
  QuadraticBlock layout = QuadraticBlock::zero(groups);
  Mat m = Mat::Zero(rows, layout.n_vars() + 1);
  Index r = 0;
  for (const auto& b : blocks) {
    int src = 0;
    for (const auto& g : b.groups()) {
      m.block(r, layout.offset(g.name), b.rows(), g.dim) = b.matrix().middleCols(src, g.dim);
      src += g.dim;
    }
    m.block(r, layout.n_vars(), b.rows(), 1) = b.matrix().col(b.n_vars());
    r += b.rows();
  }
  return {groups, std::move(m)};
}

TriangularAccumulator::TriangularAccumulator(Index cols) : cols_(cols), buf_(Mat::Zero(2 * cols + 8, cols)) {}

void TriangularAccumulator::add(const Eigen::Ref<const Mat>& rows) {
  if (rows.cols() != cols_) throw ContractError("accumulator rows have the wrong column count");
  Index done = 0;
  while (done < rows.rows()) {
    if (used_ == buf_.rows()) compress();
    const Index n = std::min(rows.rows() - done, buf_.rows() - used_);
    buf_.middleRows(used_, n) = rows.middleRows(done, n);
    used_ += n;
    done += n;
  }
}

void TriangularAccumulator::compress() {
  if (used_ <= cols_) return;
  Eigen::Ref<Mat> view = buf_.topRows(used_);
  Eigen::HouseholderQR<Eigen::Ref<Mat>> qr(view);
  const Index keep = std::min(used_, cols_);
  buf_.topRows(keep).triangularView<Eigen::StrictlyLower>().setZero();
  buf_.middleRows(keep, used_ - keep).setZero();
  used_ = keep;
}

Mat TriangularAccumulator::result() {
  compress();
  return buf_.topRows(used_);
}

}  // namespace sparseid
