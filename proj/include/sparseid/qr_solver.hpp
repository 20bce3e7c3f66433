#pragma once

#include "sparseid/common.hpp"

#include <string>
#include <vector>

namespace sparseid {

/// A named group of decision variables, e.g. "beta12" or "delta".
struct VarGroup {
  std::string name;
  int dim = 0;
  friend bool operator==(const VarGroup&, const VarGroup&) = default;
};

/// Sum of squares ||M [v; 1]||^2 over the concatenation v of the groups. The
/// last column of M is the constant term. Zero rows are allowed.
class QuadraticBlock {
 public:
  QuadraticBlock() = default;
  QuadraticBlock(std::vector<VarGroup> groups, Mat m);
  static QuadraticBlock zero(std::vector<VarGroup> groups);

  [[nodiscard]] const std::vector<VarGroup>& groups() const noexcept { return groups_; }
  [[nodiscard]] const Mat& matrix() const noexcept { return m_; }
  [[nodiscard]] Index rows() const noexcept { return m_.rows(); }
  [[nodiscard]] int n_vars() const noexcept { return static_cast<int>(m_.cols()) - 1; }
  [[nodiscard]] bool has_group(const std::string& name) const noexcept;
  /// Column offset of a group; throws ContractError for unknown names.
  [[nodiscard]] int offset(const std::string& name) const;
  [[nodiscard]] const VarGroup& group(const std::string& name) const;

  /// Value at v (all groups concatenated in group order).
  [[nodiscard]] double value(const Vec& v) const;
  /// Same block with columns permuted to `order` (must be a permutation of the groups).
  [[nodiscard]] QuadraticBlock reordered(const std::vector<VarGroup>& order) const;
  /// Equivalent block with at most n_vars + 1 rows (upper triangular).
  [[nodiscard]] QuadraticBlock compressed() const;

 private:
  std::vector<VarGroup> groups_;
  Mat m_{Mat::Zero(0, 1)};
};

/// Affine reconstruction r = K [s; 1] of eliminated variables from the
/// remaining ones.
struct LinearPolicy {
  std::vector<VarGroup> output;
  std::vector<VarGroup> inputs;
  Mat k;  // dim(output) x (dim(inputs) + 1)

  [[nodiscard]] Vec apply(const Vec& s) const;
};

struct Elimination {
  LinearPolicy policy;
  QuadraticBlock reduced;
  int rank = 0;
};

/// Minimizes over the named groups. The policy is the minimum-norm minimizer
/// when the eliminated columns are rank deficient.
[[nodiscard]] Elimination eliminate(const QuadraticBlock& block, const std::vector<std::string>& over);

/// Sum of blocks: groups are merged in order of first appearance, groups with
/// the same name must agree in dimension.
[[nodiscard]] QuadraticBlock stack(const std::vector<QuadraticBlock>& blocks);

/// Matrix-level kernel. `m` has columns [r (n_r) | rest]. On return
/// `policy` satisfies r = policy * rest_vars (rest includes the constant) and
/// `remainder` holds rows whose squared norm is the minimized value. When
/// `compact` is set the remainder has at most rest-column many rows.
struct LeadingElimination {
  Mat policy;
  Mat remainder;
  int rank = 0;
};
[[nodiscard]] LeadingElimination eliminate_leading(const Mat& m, int n_r, bool compact = true);

/// Diagonal threshold for treating R11 as rank deficient, relative to max |diag|.
inline constexpr double kRankTolerance = 1e-12;

/// Collects rows over a fixed column set and keeps them triangular: the sum
/// of squares is preserved while storage stays O(cols^2).
class TriangularAccumulator {
 public:
  explicit TriangularAccumulator(Index cols = 0);

  void add(const Eigen::Ref<const Mat>& rows);
  [[nodiscard]] Index cols() const noexcept { return cols_; }
  /// Compressed rows (at most cols of them).
  [[nodiscard]] Mat result();

 private:
  void compress();

  Index cols_;
  Mat buf_;
  Index used_ = 0;
};

}  // namespace sparseid
