#include "sparseid/sparsify.hpp"

#include <algorithm>
#include <cmath>
#include <exception>
#include <iomanip>
#include <ostream>
#include <set>

namespace sparseid {

Criterion parse_criterion(const std::string& name) {
  if (name == "cost-limit") return Criterion::CostLimit;
  if (name == "aic") return Criterion::AIC;
  if (name == "bic") return Criterion::BIC;
  if (name == "cross-validation") return Criterion::CrossValidation;
  throw ConfigError("unknown criterion '" + name + "' (cost-limit, aic, bic, cross-validation)");
}

std::string to_string(Criterion c) {
  switch (c) {
    case Criterion::CostLimit: return "cost-limit";
    case Criterion::AIC: return "aic";
    case Criterion::BIC: return "bic";
    case Criterion::CrossValidation: return "cross-validation";
  }
  return "unknown";
}

void PruneConfig::validate() const {
  if (criterion == Criterion::CostLimit && !(kappa >= 1.0)) throw ConfigError("kappa must be at least 1");
  if (max_rounds < 0) throw ConfigError("max_rounds must be nonnegative");
  if (n_batches < 0) throw ConfigError("n_batches must be nonnegative");
  lm.validate();
}

ParamQuadratic::ParamQuadratic(const Problem& problem, const Vec& b_c, const Partition& partition, int workers)
    : b_c_(b_c),
      v_c_(cost(problem, b_c, workers)),
      n_a_(problem.n_a()),
      factorization_(assemble(problem, b_c, true, workers), 0.0, partition, workers) {
  if (const auto& net = problem.model().network(); net && n_a_ > 0) {
    for (int i = 0; i < n_a_; ++i) {
      if (!net->is_active(i)) masked_.push_back(i);
    }
  }
}

double ParamQuadratic::value(const Vec& delta) const {
  if (delta.size() != n_a_) throw ContractError("delta has wrong length");
  const Mat& r = rows();
  return (r.leftCols(n_a_) * delta + r.col(n_a_)).squaredNorm();
}

double ParamQuadratic::minimum() const { return constrained_minimum({}, Vec(0), nullptr); }

double ParamQuadratic::constrained_minimum(const std::vector<int>& indices, const Vec& pinned, Vec* delta) const {
  if (static_cast<Index>(indices.size()) != pinned.size()) throw ContractError("one pinned value per index");
  const Mat& r = rows();
  Vec d = Vec::Zero(n_a_);
  std::vector<bool> fixed(static_cast<std::size_t>(n_a_), false);
  for (int i : masked_) fixed[static_cast<std::size_t>(i)] = true;
  for (std::size_t k = 0; k < indices.size(); ++k) {
    const int i = indices[k];
    if (i < 0 || i >= n_a_) throw ContractError("pinned index out of range");
    fixed[static_cast<std::size_t>(i)] = true;
    d[i] = pinned[static_cast<Index>(k)];
  }
  std::vector<int> free;
  for (int i = 0; i < n_a_; ++i) {
    if (!fixed[static_cast<std::size_t>(i)]) free.push_back(i);
  }
  const int nf = static_cast<int>(free.size());
  Mat m(r.rows(), nf + 1);
  m.col(nf) = r.col(n_a_);
  for (int i = 0; i < n_a_; ++i) {
    if (fixed[static_cast<std::size_t>(i)] && d[i] != 0.0) m.col(nf) += d[i] * r.col(i);
  }
  for (int k = 0; k < nf; ++k) m.col(k) = r.col(free[static_cast<std::size_t>(k)]);
  const LeadingElimination le = eliminate_leading(m, nf, true);
  for (int k = 0; k < nf; ++k) d[free[static_cast<std::size_t>(k)]] = le.policy(k, 0);
  if (delta) *delta = d;
  return le.remainder.squaredNorm();
}

RemovalEstimate estimate_removal(const ParamQuadratic& q, const ErrorNetwork& net, int edge, bool with_warm_start) {
  if (!net.is_weight(edge)) throw InvalidCandidate("parameter " + std::to_string(edge) + " is a bias");
  if (!net.is_active(edge)) throw InvalidCandidate("edge " + std::to_string(edge) + " is not active");
  const Vec& b_c = q.trained_point();
  const Index n_a = net.n_params();
  const double alpha = b_c[b_c.size() - n_a + edge];
  RemovalEstimate est;
  est.edge = edge;
  Vec pin(1);
  pin[0] = -alpha;
  est.v_e = q.constrained_minimum({edge}, pin, &est.delta);
  est.delta[edge] = -alpha;
  if (with_warm_start) {
    est.b_e = b_c + q.factorization().reconstruct(est.delta);
    est.b_e[est.b_e.size() - n_a + edge] = 0.0;  // alpha + (-alpha) is already exact
  }
  return est;
}

std::vector<RemovalEstimate> rank_candidates(const ParamQuadratic& q, const ErrorNetwork& net,
                                             const std::vector<int>& candidates, int workers) {
  std::vector<RemovalEstimate> out(candidates.size());
  std::vector<std::exception_ptr> errors(candidates.size());
  const int w = resolve_workers(workers);
  const int n = static_cast<int>(candidates.size());
#pragma omp parallel for num_threads(w) schedule(dynamic, 1) if (w > 1)
  for (int k = 0; k < n; ++k) {
    try {
      out[static_cast<std::size_t>(k)] = estimate_removal(q, net, candidates[static_cast<std::size_t>(k)]);
    } catch (...) {
      errors[static_cast<std::size_t>(k)] = std::current_exception();
    }
  }
  for (auto& e : errors) {
    if (e) std::rethrow_exception(e);
  }
  std::stable_sort(out.begin(), out.end(), [](const RemovalEstimate& a, const RemovalEstimate& b) {
    if (a.v_e != b.v_e) return a.v_e < b.v_e;
    return a.edge < b.edge;
  });
  return out;
}

std::vector<int> stage_candidates(const ErrorNetwork& net, int degree) {
  std::vector<int> out;
  for (int i : net.active_weights()) {
    if (degree < 0 || net.monomial_degree(i) == degree) out.push_back(i);
  }
  return out;
}

double information_criterion(Criterion c, double v, int n, int p) {
  if (n <= 0) throw ContractError("information criteria need measurements");
  const double fit = n * std::log(std::max(v, 1e-300) / n);
  if (c == Criterion::AIC) return fit + 2.0 * p;
  if (c == Criterion::BIC) return fit + p * std::log(static_cast<double>(n));
  throw ContractError("not an information criterion");
}

bool accept(const PruneConfig& config, const CriterionStats& before, const CriterionStats& after, double v_full) {
  switch (config.criterion) {
    case Criterion::CostLimit: return after.cost <= config.kappa * v_full;
    case Criterion::AIC:
    case Criterion::BIC:
      return information_criterion(config.criterion, after.cost, after.n_measurements, after.n_params) <
             information_criterion(config.criterion, before.cost, before.n_measurements, before.n_params);
    case Criterion::CrossValidation: return after.validation_cost <= before.validation_cost;
  }
  throw ConfigError("unknown criterion");
}

double criterion_value(const PruneConfig& config, const CriterionStats& stats, double v_full) {
  switch (config.criterion) {
    case Criterion::CostLimit: return v_full > 0.0 ? stats.cost / v_full : 0.0;
    case Criterion::AIC:
    case Criterion::BIC:
      return information_criterion(config.criterion, stats.cost, stats.n_measurements, stats.n_params);
    case Criterion::CrossValidation: return stats.validation_cost;
  }
  return 0.0;
}

double validation_cost(Problem validation, const ErrorNetwork& net, const Vec& a, const LMConfig& config,
                       int n_batches) {
  if (validation.model().network()) {
    auto& vnet = *validation.model().network();
    if (vnet.layer_sizes() != net.layer_sizes() || vnet.kind() != net.kind()) {
      throw ContractError("validation model has a different network");
    }
    vnet.set_mask_bits(net.mask_bits());
    vnet.set_params(a);
  }
  validation.freeze_params(a);
  const Vec b0 = initial_guess(validation, 0);
  return solve_parallel(validation, b0, config, n_batches).cost;
}

namespace {

CriterionStats stats_of(const Problem& problem, double cost_value, const PruneConfig& config,
                        const Problem* validation, const Vec& b) {
  CriterionStats s;
  s.cost = cost_value;
  const auto& net = problem.model().network();
  s.n_params = net ? net->n_effective_params() : problem.n_a();
  s.n_measurements = problem.n_measurements();
  if (config.criterion == Criterion::CrossValidation) {
    s.validation_cost = validation_cost(*validation, *net, problem.params_of(b), config.lm, config.n_batches);
  }
  return s;
}

}  // namespace

PruneResult prune_loop(const Problem& problem, const Vec& b_trained, const PruneConfig& config,
                       const Problem* validation, const std::function<void(const PruneRecord&)>& observer) {
  config.validate();
  if (config.criterion == Criterion::CrossValidation && validation == nullptr) {
    throw ConfigError("cross-validation needs a validation data set");
  }
  if (problem.frozen()) throw ContractError("cannot prune a problem with frozen parameters");
  PruneResult res{problem, b_trained, {}, cost(problem, b_trained, config.lm.workers), 0};
  if (!problem.model().network()) return res;

  const int workers = resolve_workers(config.lm.workers);
  const Partition part =
      make_partition(problem.n_d(), config.n_batches > 0 ? config.n_batches : default_batches(problem.n_d(), workers));
  CriterionStats current = stats_of(res.problem, res.v_full, config, validation, res.b);

  std::vector<int> stages{-1};
  const ErrorNetwork& net0 = *problem.model().network();
  if (config.staged && net0.kind() == NetworkKind::Polynomial) {
    stages.clear();
    for (int d = net0.degree(); d >= 0; --d) stages.push_back(d);
  }

  bool stop = false;
  for (std::size_t st = 0; st < stages.size() && !stop; ++st) {
    while (res.rounds < config.max_rounds) {
      const ErrorNetwork& net = *res.problem.model().network();
      const std::vector<int> cands = stage_candidates(net, stages[st]);
      if (cands.empty()) break;
      ++res.rounds;

      const ParamQuadratic q(res.problem, res.b, part, workers);
      const std::vector<RemovalEstimate> ranked = rank_candidates(q, net, cands, workers);
      const RemovalEstimate best = estimate_removal(q, net, ranked.front().edge, true);

      Problem trial = res.problem;
      trial.model().network()->remove_edge(best.edge);
      const Index a_idx = res.b.size() - res.problem.n_a() + best.edge;
      Vec hard = res.b;
      hard[a_idx] = 0.0;
      Vec start = hard;
      bool warm = false;
      if (config.warm_start) {
        const double c_warm = cost(trial, best.b_e, workers);
        const double c_hard = cost(trial, hard, workers);
        if (std::isfinite(c_warm) && c_warm <= c_hard) {
          start = best.b_e;
          warm = true;
        }
      }
      const LMResult fit = solve_parallel(trial, start, config.lm, config.n_batches);
      const CriterionStats after = stats_of(trial, fit.cost, config, validation, fit.b);

      PruneRecord rec;
      rec.round = res.rounds;
      rec.stage = static_cast<int>(st);
      rec.edge = best.edge;
      rec.info = net.edge(best.edge);
      rec.label = net.describe_edge(best.edge);
      rec.predicted = best.v_e;
      rec.retrained = fit.cost;
      rec.criterion_name = to_string(config.criterion);
      rec.criterion = criterion_value(config, after, res.v_full);
      rec.accepted = accept(config, current, after, res.v_full);
      rec.warm_start = warm;
      res.log.push_back(rec);
      if (observer) observer(rec);

      if (rec.accepted) {
        res.problem = std::move(trial);
        res.b = fit.b;
        res.problem.model().network()->set_params(res.problem.params_of(res.b));
        current = after;
      } else {
        stop = !config.staged;
        break;
      }
    }
  }
  return res;
}

void write_prune_log(std::ostream& os, const std::vector<PruneRecord>& log) {
  os << "round,stage,edge,layer,source,target,label,predicted_cost,retrained_cost,criterion,criterion_value,"
        "decision,start\n";
  os << std::setprecision(17);
  for (const auto& r : log) {
    os << r.round << ',' << r.stage << ',' << r.edge << ',' << r.info.layer << ',' << r.info.source << ','
       << r.info.target << ',' << r.label << ',' << r.predicted << ',' << r.retrained << ',' << r.criterion_name
       << ',' << r.criterion << ',' << (r.accepted ? "accept" : "reject") << ','
       << (r.warm_start ? "warm" : "hard-zero") << '\n';
  }
}

}  // namespace sparseid
