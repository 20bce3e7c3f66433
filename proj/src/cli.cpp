#include "sparseid/cli.hpp"

#include "sparseid/examples.hpp"
#include "sparseid/io.hpp"

#include <CLI11.hpp>

#include <algorithm>
#include <charconv>
#include <chrono>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <set>
#include <sstream>

namespace sparseid {

namespace {

namespace fs = std::filesystem;

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

std::vector<std::string> split_list(const std::string& s) {
  std::vector<std::string> out;
  std::stringstream ss(s);
  std::string item;
  while (std::getline(ss, item, ',')) {
    item = trim(item);
    if (!item.empty()) out.push_back(item);
  }
  return out;
}

struct Entry {
  std::string key;
  std::string value;
  int line = 0;
};

[[noreturn]] void fail(const Entry& e, const std::string& what) {
  throw ConfigError("line " + std::to_string(e.line) + ": " + e.key + ": " + what);
}

double to_double(const Entry& e, const std::string& text) {
  double v = 0.0;
  const auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), v);
  if (text.empty() || ec != std::errc() || ptr != text.data() + text.size() || !std::isfinite(v)) {
    fail(e, "expected a number, got '" + text + "'");
  }
  return v;
}

long long to_integer(const Entry& e, const std::string& text) {
  long long v = 0;
  const auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), v);
  if (text.empty() || ec != std::errc() || ptr != text.data() + text.size()) {
    fail(e, "expected an integer, got '" + text + "'");
  }
  return v;
}

int to_int(const Entry& e) {
  const long long v = to_integer(e, e.value);
  if (v < -1000000000LL || v > 1000000000LL) fail(e, "integer out of range");
  return static_cast<int>(v);
}

bool to_bool(const Entry& e) {
  if (e.value == "true" || e.value == "yes" || e.value == "1") return true;
  if (e.value == "false" || e.value == "no" || e.value == "0") return false;
  fail(e, "expected true or false, got '" + e.value + "'");
}

std::vector<double> to_doubles(const Entry& e) {
  std::vector<double> out;
  for (const auto& item : split_list(e.value)) out.push_back(to_double(e, item));
  if (out.empty()) fail(e, "expected a number list");
  return out;
}

std::vector<std::string> default_channels(int n_x) {
  std::vector<std::string> out;
  for (int i = 0; i < n_x; ++i) out.push_back("x" + std::to_string(i + 1));
  return out;
}

void apply_example(RunConfig& c, const Entry& e) {
  ExperimentSpec spec;
  try {
    spec = experiment(e.value);
  } catch (const ConfigError& err) {
    fail(e, err.what());
  }
  c.example = spec.name;
  c.n_x = spec.n_x();
  c.channels = default_channels(c.n_x);
  c.physics = spec.physics;
  c.physics_constants = spec.physics_constants;
  c.network = spec.network;
  c.degree = spec.degree;
  c.hidden = spec.hidden;
  c.dt = spec.dt;
  const Vec dx = spec.weights.W_x.diagonal();
  const Vec dy = spec.weights.W_y.diagonal();
  c.w_x.assign(dx.data(), dx.data() + dx.size());
  c.w_y.assign(dy.data(), dy.data() + dy.size());
  c.mu_x = spec.weights.mu_x;
  c.mu_a = spec.weights.mu_a;
  // Polynomial networks are pruned by degree under BIC. The ELU network has
  // no degrees and uses AIC.
  const bool polynomial = spec.network == "polynomial";
  c.prune.criterion = polynomial ? Criterion::BIC : Criterion::AIC;
  c.prune.staged = polynomial;
}

void apply(RunConfig& c, const Entry& e) {
  const std::string& k = e.key;
  const std::string& v = e.value;
  if (k == "n_x") {
    c.n_x = to_int(e);
    if (c.channels.size() != static_cast<std::size_t>(std::max(c.n_x, 0))) c.channels = default_channels(c.n_x);
  } else if (k == "channels") {
    c.channels = split_list(v);
  } else if (k == "physics") {
    c.physics = v;
  } else if (k.rfind("physics.", 0) == 0 && k.size() > 8) {
    c.physics_constants[k.substr(8)] = to_double(e, v);
  } else if (k == "network") {
    c.network = v;
  } else if (k == "degree") {
    c.degree = to_int(e);
  } else if (k == "hidden") {
    c.hidden.clear();
    for (const auto& item : split_list(v)) c.hidden.push_back(static_cast<int>(to_integer(e, item)));
  } else if (k == "dt") {
    c.dt = to_double(e, v);
  } else if (k == "W_x") {
    c.w_x = to_doubles(e);
  } else if (k == "W_y") {
    c.w_y = to_doubles(e);
  } else if (k == "mu_x") {
    c.mu_x = to_double(e, v);
  } else if (k == "mu_a") {
    c.mu_a = to_double(e, v);
  } else if (k == "lm.lambda0") {
    c.prune.lm.lambda0 = to_double(e, v);
  } else if (k == "lm.rho1") {
    c.prune.lm.rho1 = to_double(e, v);
  } else if (k == "lm.rho2") {
    c.prune.lm.rho2 = to_double(e, v);
  } else if (k == "lm.sigma") {
    c.prune.lm.sigma = to_double(e, v);
  } else if (k == "lm.max_iters") {
    c.prune.lm.max_iters = to_int(e);
  } else if (k == "lm.lambda_max") {
    c.prune.lm.lambda_max = to_double(e, v);
  } else if (k == "solver") {
    c.solver = v;
  } else if (k == "batches") {
    c.batches = to_int(e);
  } else if (k == "workers") {
    c.workers = to_int(e);
  } else if (k == "prune.criterion") {
    try {
      c.prune.criterion = parse_criterion(v);
    } catch (const ConfigError& err) {
      fail(e, err.what());
    }
  } else if (k == "prune.kappa") {
    c.prune.kappa = to_double(e, v);
  } else if (k == "prune.staged") {
    c.prune.staged = to_bool(e);
  } else if (k == "prune.warm_start") {
    c.prune.warm_start = to_bool(e);
  } else if (k == "prune.max_rounds") {
    c.prune.max_rounds = to_int(e);
  } else if (k == "prune.validation_fraction") {
    c.validation_fraction = to_double(e, v);
  } else if (k == "seed") {
    const long long s = to_integer(e, v);
    if (s < 0) fail(e, "seed must be nonnegative");
    c.seed = static_cast<std::uint64_t>(s);
  } else if (k == "init.param_std") {
    c.param_std = to_double(e, v);
  } else if (k == "data") {
    c.data = v;
  } else if (k == "out") {
    c.out = v;
  } else {
    fail(e, "unknown key");
  }
}

Mat diagonal_weight(const std::vector<double>& diag, int n_x, const char* name) {
  if (diag.empty()) return Mat::Identity(n_x, n_x);
  if (diag.size() == 1) return diag[0] * Mat::Identity(n_x, n_x);
  if (diag.size() != static_cast<std::size_t>(n_x)) {
    throw ConfigError(std::string(name) + " needs 1 or n_x = " + std::to_string(n_x) + " values");
  }
  return Eigen::Map<const Vec>(diag.data(), n_x).asDiagonal();
}

}  // namespace

void RunConfig::validate() const {
  if (n_x < 1) throw ConfigError("n_x must be positive (or set example)");
  if (channels.size() != static_cast<std::size_t>(n_x)) throw ConfigError("channels must name all n_x states");
  if (std::set<std::string>(channels.begin(), channels.end()).size() != channels.size()) {
    throw ConfigError("channel names must be distinct");
  }
  if (!(dt > 0.0)) throw ConfigError("dt must be positive");
  for (double w : w_x) {
    if (!(w > 0.0)) throw ConfigError("W_x entries must be positive");
  }
  for (double w : w_y) {
    if (!(w > 0.0)) throw ConfigError("W_y entries must be positive");
  }
  (void)diagonal_weight(w_x, n_x, "W_x");
  (void)diagonal_weight(w_y, n_x, "W_y");
  if (mu_x < 0.0 || mu_a < 0.0) throw ConfigError("mu_x and mu_a must be nonnegative");
  if (network != "polynomial" && network != "feedforward-elu" && network != "none") {
    throw ConfigError("network must be polynomial, feedforward-elu or none");
  }
  if (network == "polynomial" && degree < 0) throw ConfigError("degree must be nonnegative");
  for (int h : hidden) {
    if (h < 1) throw ConfigError("hidden layer sizes must be positive");
  }
  if (solver != "parallel" && solver != "dense") throw ConfigError("solver must be parallel or dense");
  if (batches < 0) throw ConfigError("batches must be nonnegative");
  if (workers < 0) throw ConfigError("workers must be nonnegative");
  if (!(validation_fraction > 0.0 && validation_fraction < 1.0)) {
    throw ConfigError("prune.validation_fraction must lie in (0, 1)");
  }
  if (!(param_std >= 0.0)) throw ConfigError("init.param_std must be nonnegative");
  if (data.empty() && example.empty()) throw ConfigError("data is required unless an example is selected");
  prune.validate();
  (void)build_model();
}

SystemModel RunConfig::build_model() const {
  SystemModel model(n_x, make_physics(physics, n_x, physics_constants));
  if (network == "polynomial") {
    model.with_network(ErrorNetwork::polynomial(n_x, n_x, degree));
  } else if (network == "feedforward-elu") {
    std::vector<int> layers{n_x};
    layers.insert(layers.end(), hidden.begin(), hidden.end());
    layers.push_back(n_x);
    model.with_network(ErrorNetwork::feedforward_elu(layers));
  }
  return model;
}

Weights RunConfig::build_weights() const {
  Weights w;
  w.W_x = diagonal_weight(w_x, n_x, "W_x");
  w.W_y = diagonal_weight(w_y, n_x, "W_y");
  w.mu_x = mu_x;
  w.mu_a = mu_a;
  return w;
}

int RunConfig::resolved_batches(int n_d) const {
  // The automatic choice deliberately ignores the worker count so that results
  // do not depend on it.
  if (batches > 0) return std::min(batches, n_d);
  return default_batches(n_d, 8);
}

RunConfig parse_config(std::istream& in) {
  std::vector<Entry> entries;
  std::set<std::string> seen;
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    const std::string t = trim(line);
    if (t.empty() || t[0] == '#') continue;
    const auto eq = t.find('=');
    if (eq == std::string::npos) {
      throw ConfigError("line " + std::to_string(line_no) + ": expected 'key = value'");
    }
    Entry e{trim(t.substr(0, eq)), trim(t.substr(eq + 1)), line_no};
    if (e.key.empty()) throw ConfigError("line " + std::to_string(line_no) + ": empty key");
    if (!seen.insert(e.key).second) fail(e, "duplicate key");
    entries.push_back(std::move(e));
  }
  RunConfig c;
  for (const auto& e : entries) {
    if (e.key == "example") apply_example(c, e);
  }
  for (const auto& e : entries) {
    if (e.key != "example") apply(c, e);
  }
  return c;
}

RunConfig load_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config " + path);
  RunConfig c = parse_config(in);
  // Relative data paths are resolved against the config file location.
  if (!c.data.empty() && fs::path(c.data).is_relative() && !fs::exists(c.data)) {
    const fs::path alt = fs::path(path).parent_path() / c.data;
    if (fs::exists(alt)) c.data = alt.string();
  }
  return c;
}

MeasurementSet load_data(const RunConfig& config) {
  if (!config.data.empty()) return ingest_csv_file(config.data, config.channels);
  return generate(experiment(config.example), config.seed).data;
}

namespace {

struct HistoryRow {
  std::string phase;
  int iter;
  double cost;
  double lambda;
  bool accepted;
};

void append_history(std::vector<HistoryRow>& rows, const std::string& phase, const LMResult& r) {
  for (std::size_t k = 0; k < r.cost_history.size(); ++k) {
    rows.push_back({phase, static_cast<int>(k), r.cost_history[k], r.lambda_history[k], r.accepted[k]});
  }
}

void write_history(const fs::path& path, const std::vector<HistoryRow>& rows) {
  std::ofstream os(path);
  os << "phase,iter,cost,lambda,accepted\n" << std::setprecision(17);
  for (const auto& r : rows) {
    os << r.phase << ',' << r.iter << ',' << r.cost << ',' << r.lambda << ',' << (r.accepted ? 1 : 0) << '\n';
  }
}

void write_states(const fs::path& path, const Problem& problem, const Vec& b, const std::vector<std::string>& names) {
  std::vector<Vec> x;
  for (int j = 0; j < problem.n_d(); ++j) x.emplace_back(problem.state(b, j));
  std::ofstream os(path);
  write_states_csv(os, problem.grid().times(), x, names);
}

// Training window and validation window for cross-validation: the last
// `fraction` of the measured time span is held out.
std::pair<MeasurementSet, MeasurementSet> split_data(const MeasurementSet& data, double fraction) {
  const auto [lo, hi] = std::minmax_element(data.times.begin(), data.times.end());
  const double t_split = *lo + (1.0 - fraction) * (*hi - *lo);
  MeasurementSet train;
  MeasurementSet valid;
  for (int i = 0; i < data.size(); ++i) {
    const auto idx = static_cast<std::size_t>(i);
    MeasurementSet& dst = data.times[idx] <= t_split ? train : valid;
    dst.times.push_back(data.times[idx]);
    dst.components.push_back(data.components[idx]);
    dst.values.push_back(data.values[idx]);
  }
  return {train, valid};
}

int count_distinct(const MeasurementSet& d) { return static_cast<int>(std::set<double>(d.times.begin(), d.times.end()).size()); }

}  // namespace

int run(const RunConfig& config, RunMode mode, bool dry_run, std::ostream& log) {
  config.validate();
  const MeasurementSet all = load_data(config);
  const bool cv = mode == RunMode::Prune && config.prune.criterion == Criterion::CrossValidation;

  MeasurementSet train = all;
  MeasurementSet valid;
  if (cv) {
    std::tie(train, valid) = split_data(all, config.validation_fraction);
    if (count_distinct(train) < 2 || count_distinct(valid) < 2) {
      throw ConfigError("cross-validation split leaves fewer than two measurement times on one side");
    }
  }
  Problem problem(config.build_model(), train, config.build_weights(), config.dt);
  const int n_batches = config.resolved_batches(problem.n_d());
  log << "grid points " << problem.n_d() << ", measurements " << problem.n_measurements() << ", parameters "
      << problem.n_a() << ", batches " << n_batches << ", workers " << resolve_workers(config.workers) << "\n";
  if (dry_run) return 0;

  const fs::path out(config.out);
  fs::create_directories(out);
  LMConfig lm = config.prune.lm;
  lm.workers = config.workers;

  std::vector<HistoryRow> history;
  std::ostringstream report;
  report << std::setprecision(10);
  report << "mode: " << (mode == RunMode::Fit ? "fit" : "prune") << "\n";
  report << "example: " << (config.example.empty() ? "none" : config.example) << "\n";
  report << "seed: " << config.seed << "\n";
  report << "solver: " << config.solver << "\n";
  report << "batches: " << n_batches << "\n";
  report << "grid_points: " << problem.n_d() << "\n";
  report << "measurements: " << problem.n_measurements() << "\n";

  const auto fail_report = [&](const std::string& what) {
    write_history(out / "history.csv", history);
    std::ofstream os(out / "report.txt");
    os << "status: failed (partial artifacts)\nerror: " << what << "\n" << report.str();
    log << "error: " << what << "\n";
    return 2;
  };

  const auto t_start = std::chrono::steady_clock::now();
  LMResult fit;
  try {
    const Vec b0 = initial_guess(problem, config.seed, config.param_std);
    fit = config.solver == "dense" ? solve_dense(problem, b0, lm) : solve_parallel(problem, b0, lm, n_batches);
  } catch (const SolverError& e) {
    return fail_report(e.what());
  }
  append_history(history, "fit", fit);
  if (!std::isfinite(fit.cost)) return fail_report("non-finite cost after training");
  log << "fit: cost " << fit.cost << ", " << fit.iterations << " iterations, " << to_string(fit.termination) << std::endl;
  report << "fit_iterations: " << fit.iterations << "\n";
  report << "fit_termination: " << to_string(fit.termination) << "\n";
  report << "fit_cost: " << fit.cost << "\n";

  Problem final_problem = problem;
  Vec b = fit.b;
  if (final_problem.model().network()) final_problem.model().network()->set_params(final_problem.params_of(b));

  if (mode == RunMode::Prune) {
    if (!problem.model().network()) throw ConfigError("prune needs a network");
    {
      std::ofstream os(out / "model_fit.json");
      os << model_to_json(final_problem.model()).dump(2) << "\n";
    }
    PruneConfig pc = config.prune;
    pc.lm = lm;
    pc.n_batches = n_batches;
    std::optional<Problem> validation;
    if (cv) validation.emplace(config.build_model(), valid, config.build_weights(), config.dt);
    std::optional<PruneResult> pr;
    try {
      pr = prune_loop(final_problem, b, pc, validation ? &*validation : nullptr, [&](const PruneRecord& r) {
        log << "round " << r.round << ": " << r.label << " predicted " << r.predicted << " retrained "
            << r.retrained << " -> " << (r.accepted ? "accept" : "reject") << std::endl;
      });
    } catch (const SolverError& e) {
      return fail_report(e.what());
    }
    final_problem = pr->problem;
    b = pr->b;
    std::ofstream os(out / "prune_log.csv");
    write_prune_log(os, pr->log);
    report << "criterion: " << to_string(pc.criterion) << "\n";
    report << "staged: " << (pc.staged ? "true" : "false") << "\n";
    report << "prune_rounds: " << pr->rounds << "\n";
    report << "criterion_trace:\n";
    for (const auto& r : pr->log) {
      report << "  " << r.round << " " << r.label << " " << r.criterion_name << "=" << r.criterion << " "
             << (r.accepted ? "accept" : "reject") << "\n";
    }
  }

  const double final_cost = cost(final_problem, b, 1);
  report << "final_cost: " << final_cost << "\n";
  if (const auto& net = final_problem.model().network()) {
    report << "active_edges: " << net->n_active_weights() << " / " << net->n_weights() << "\n";
    report << "effective_params: " << net->n_effective_params() << "\n";
    report << "dead_neurons: " << net->dead_neurons().size() << "\n";
    if (net->kind() == NetworkKind::Polynomial) {
      report << "coefficients:\n";
      for (int i : net->active_weights()) report << "  " << net->describe_edge(i) << " = " << net->params()[i] << "\n";
    }
  }

  {
    std::ofstream os(out / "model.json");
    os << model_to_json(final_problem.model()).dump(2) << "\n";
  }
  write_states(out / "states.csv", final_problem, b, config.channels);
  write_history(out / "history.csv", history);
  {
    std::ofstream os(out / "report.txt");
    os << "status: ok\n" << report.str();
  }
  log << "wall time " << std::chrono::duration<double>(std::chrono::steady_clock::now() - t_start).count()
      << " s, artifacts in " << out.string() << "\n";
  return 0;
}

void simulate(const std::string& model_path, const Vec& x0, double t0, double t1, double dt, std::ostream& out) {
  std::ifstream in(model_path);
  if (!in) throw ConfigError("cannot open model " + model_path);
  nlohmann::json doc;
  try {
    in >> doc;
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("malformed model file: ") + e.what());
  }
  const SystemModel model = model_from_json(doc);
  if (x0.size() != model.n_x()) throw InvalidInput("x0 needs " + std::to_string(model.n_x()) + " entries");
  if (!(t1 > t0)) throw InvalidInput("t1 must exceed t0");
  const Vec a = model.network() ? model.network()->params() : Vec();
  const Rhs f = [&](double t, const Vec& x) { return model.eval_f(t, x, a); };
  std::vector<double> times = arithmetic_schedule(t0, t1, dt);
  if (t1 - times.back() > 1e-9 * dt) times.push_back(t1);
  const std::vector<Vec> xs = rk4(f, x0, t0, times, dt);
  std::vector<std::string> names = default_channels(model.n_x());
  write_states_csv(out, times, xs, names);
}

int run_cli(int argc, char** argv) {
  CLI::App app{"Sparse identification of ODE systems"};
  app.require_subcommand(1);

  std::string config_path;
  std::string data_path;
  std::string out_dir;
  int workers = -1;
  long long seed = -1;
  bool dry_run = false;

  const auto add_run_options = [&](CLI::App* sub) {
    sub->add_option("--config", config_path, "run configuration file")->required();
    sub->add_option("--data", data_path, "measurement CSV (time,channel,value)");
    sub->add_option("--out", out_dir, "output directory");
    sub->add_option("--workers", workers, "threads, 0 = all")->check(CLI::NonNegativeNumber);
    sub->add_option("--seed", seed, "random seed")->check(CLI::NonNegativeNumber);
    sub->add_flag("--dry-run", dry_run, "validate and print the grid size only");
  };
  CLI::App* fit = app.add_subcommand("fit", "train the full model");
  add_run_options(fit);
  CLI::App* prune = app.add_subcommand("prune", "train, then prune by backward elimination");
  add_run_options(prune);

  CLI::App* validate = app.add_subcommand("validate-config", "check a configuration file");
  validate->add_option("--config", config_path, "run configuration file")->required();

  std::string gen_out;
  CLI::App* gen = app.add_subcommand("generate", "write the synthetic data of an example as CSV");
  gen->add_option("--config", config_path, "run configuration file")->required();
  gen->add_option("--seed", seed, "random seed")->check(CLI::NonNegativeNumber);
  gen->add_option("--out", gen_out, "output CSV (default stdout)");

  std::string model_path;
  std::string x0_text;
  std::string sim_out;
  double t0 = 0.0;
  double t1 = 0.0;
  double dt = 1e-3;
  CLI::App* sim = app.add_subcommand("simulate", "RK4 rollout of a saved model");
  sim->add_option("--model", model_path, "model.json")->required();
  sim->add_option("--x0", x0_text, "initial state, comma separated")->required();
  sim->add_option("--t0", t0, "start time");
  sim->add_option("--t1", t1, "end time")->required();
  sim->add_option("--dt", dt, "step size")->check(CLI::PositiveNumber);
  sim->add_option("--out", sim_out, "output CSV (default stdout)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e);
  }

  try {
    if (*sim) {
      std::vector<double> vals;
      for (const auto& item : split_list(x0_text)) vals.push_back(std::stod(item));
      const Vec x0 = Eigen::Map<const Vec>(vals.data(), static_cast<Index>(vals.size()));
      if (sim_out.empty()) {
        simulate(model_path, x0, t0, t1, dt, std::cout);
      } else {
        std::ofstream os(sim_out);
        simulate(model_path, x0, t0, t1, dt, os);
      }
      return 0;
    }

    RunConfig config = load_config(config_path);
    if (!data_path.empty()) config.data = data_path;
    if (!out_dir.empty()) config.out = out_dir;
    if (workers >= 0) config.workers = workers;
    if (seed >= 0) config.seed = static_cast<std::uint64_t>(seed);

    if (*validate) {
      config.validate();
      std::cout << "ok: n_x " << config.n_x << ", network " << config.network << ", criterion "
                << to_string(config.prune.criterion) << "\n";
      return 0;
    }
    if (*gen) {
      if (config.example.empty()) throw ConfigError("generate needs an example");
      const MeasurementSet data = generate(experiment(config.example), config.seed).data;
      if (gen_out.empty()) {
        write_measurements_csv(std::cout, data, config.channels);
      } else {
        std::ofstream os(gen_out);
        write_measurements_csv(os, data, config.channels);
      }
      return 0;
    }
    return run(config, *fit ? RunMode::Fit : RunMode::Prune, dry_run, std::cout);
  } catch (const SolverError& e) {
    std::cerr << "solver error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
}

}  // namespace sparseid
