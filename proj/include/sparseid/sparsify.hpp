#pragma once

#include "sparseid/lm_parallel.hpp"

#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

namespace sparseid {

enum class Criterion { CostLimit, AIC, BIC, CrossValidation };
[[nodiscard]] Criterion parse_criterion(const std::string& name);
[[nodiscard]] std::string to_string(Criterion c);

struct PruneConfig {
  Criterion criterion = Criterion::AIC;
  /// Cost-limit factor: accept while V <= kappa * V_full.
  double kappa = 1.05;
  /// Remove higher-degree monomial edges first; a rejection ends the stage.
  bool staged = false;
  LMConfig lm;
  int n_batches = 0;
  int max_rounds = 100000;
  /// Use the linearized warm start b_e when retraining (else hard zeroing).
  bool warm_start = true;

  void validate() const;
};

/// Linearized cost as a function of the parameter step only, the states being
/// eliminated at lambda = 0 around a trained point b_c.
class ParamQuadratic {
 public:
  ParamQuadratic(const Problem& problem, const Vec& b_c, const Partition& partition, int workers = 1);

  [[nodiscard]] double trained_cost() const noexcept { return v_c_; }
  /// Rows R with Q(delta) = ||R [delta; 1]||^2.
  [[nodiscard]] const Mat& rows() const noexcept { return factorization_.delta_quadratic(); }
  [[nodiscard]] double value(const Vec& delta) const;
  /// Minimum of Q over delta with masked weights pinned at zero step.
  [[nodiscard]] double minimum() const;
  [[nodiscard]] const Vec& trained_point() const noexcept { return b_c_; }
  [[nodiscard]] const StepFactorization& factorization() const noexcept { return factorization_; }

  /// Minimum of Q with delta pinned at `pinned` on the given indices and free
  /// elsewhere; also returns the minimizing delta.
  [[nodiscard]] double constrained_minimum(const std::vector<int>& indices, const Vec& pinned, Vec* delta) const;

 private:
  Vec b_c_;
  double v_c_;
  int n_a_;
  std::vector<int> masked_;
  StepFactorization factorization_;
};

struct RemovalEstimate {
  int edge = -1;
  double v_e = 0.0;
  Vec delta;  // parameter step, delta[edge] == -a_c[edge]
  Vec b_e;    // warm start (filled by estimate_removal only when requested)
};

/// Predicted cost after removing `edge`, with the option of reconstructing the
/// warm-start point through the stored policies.
[[nodiscard]] RemovalEstimate estimate_removal(const ParamQuadratic& q, const ErrorNetwork& net, int edge,
                                               bool with_warm_start = false);

/// Ascending predicted V_e, ties by lower edge index.
[[nodiscard]] std::vector<RemovalEstimate> rank_candidates(const ParamQuadratic& q, const ErrorNetwork& net,
                                                           const std::vector<int>& candidates, int workers = 1);

/// Candidate edges for the current stage: all active weights, or only those on
/// monomials of the highest remaining degree when staged.
[[nodiscard]] std::vector<int> stage_candidates(const ErrorNetwork& net, int degree);

struct CriterionStats {
  double cost = 0.0;
  int n_params = 0;
  int n_measurements = 0;
  double validation_cost = 0.0;
};

[[nodiscard]] double information_criterion(Criterion c, double v, int n, int p);
/// Decides whether the pruned model (after) replaces the current one (before).
[[nodiscard]] bool accept(const PruneConfig& config, const CriterionStats& before, const CriterionStats& after,
                          double v_full);
/// Value reported in the log for a model under a criterion.
[[nodiscard]] double criterion_value(const PruneConfig& config, const CriterionStats& stats, double v_full);

/// Cost on a validation problem with the network parameters frozen at `a`,
/// the states being re-optimized.
[[nodiscard]] double validation_cost(Problem validation, const ErrorNetwork& net, const Vec& a,
                                     const LMConfig& config, int n_batches = 0);

struct PruneRecord {
  int round = 0;
  int stage = 0;
  int edge = -1;
  EdgeInfo info;
  std::string label;
  double predicted = 0.0;
  double retrained = 0.0;
  std::string criterion_name;
  double criterion = 0.0;
  bool accepted = false;
  bool warm_start = true;
};

struct PruneResult {
  Problem problem;  // with the final network mask
  Vec b;
  std::vector<PruneRecord> log;
  double v_full = 0.0;
  int rounds = 0;
};

/// Backward elimination starting from a trained point. `validation` is
/// required for the cross-validation criterion.
[[nodiscard]] PruneResult prune_loop(const Problem& problem, const Vec& b_trained, const PruneConfig& config,
                                     const Problem* validation = nullptr,
                                     const std::function<void(const PruneRecord&)>& observer = {});

void write_prune_log(std::ostream& os, const std::vector<PruneRecord>& log);

}  // namespace sparseid
