#include "sparseid/cli.hpp"
#include "sparseid/examples.hpp"
#include "sparseid/io.hpp"

#include <doctest.h>

#include <filesystem>
#include <fstream>
#include <sstream>

using namespace sparseid;
namespace fs = std::filesystem;

namespace {

fs::path scratch_dir(const std::string& name) {
  const fs::path p = fs::temp_directory_path() / ("sparseid_test_" + name);
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

int ingest_error_line(const std::string& csv) {
  std::istringstream in(csv);
  try {
    (void)ingest_csv(in, {"x1", "x2", "x3"});
  } catch (const IngestError& e) {
    return e.line();
  }
  return -1;
}

// Small spiral data set written in long format, plus a config running on it.
fs::path write_spiral_case(const fs::path& dir, const std::string& extra = "") {
  ExperimentSpec spec;
  spec.truth_physics = "linear";
  spec.truth_constants = {{"a00", -0.5}, {"a01", 1.0}, {"a10", -1.0}, {"a11", -0.5}};
  spec.x0 = Vec::Zero(2);
  spec.x0[0] = 1.0;
  spec.schedule = {{{0}, 0.0, 3.0, 0.1}, {{1}, 0.0, 3.0, 0.15}};
  spec.noise_variance = 1e-4;
  const GeneratedData gen = generate(spec, 2);
  {
    std::ofstream os(dir / "data.csv");
    write_measurements_csv(os, gen.data, {"pos", "vel"});
  }
  std::ofstream cfg(dir / "run.cfg");
  cfg << "# spiral\n"
         "n_x = 2\n"
         "channels = pos, vel\n"
         "network = polynomial\n"
         "degree = 2\n"
         "dt = 0.05\n"
         "mu_a = 1e-6\n"
         "data = data.csv\n"
         "prune.criterion = bic\n"
         "prune.staged = true\n"
         "batches = 3\n"
      << "out = " << (dir / "out").string() << "\n"
      << extra;
  return dir / "run.cfg";
}

}  // namespace

TEST_CASE("csv ingest") {
  std::istringstream ok(
      "time,channel,value\n"
      "0,x1,1.5\n"
      "0,x2,2.5\n"
      "# comment\n"
      "0,x3,3.5\n"
      "\n"
      "0.5,x3,-1\n");
  const MeasurementSet m = ingest_csv(ok, {"x1", "x2", "x3"});
  REQUIRE(m.size() == 2);
  CHECK(m.components[0] == std::vector<int>{0, 1, 2});
  CHECK(m.values[0][2] == 3.5);
  CHECK(m.components[1] == std::vector<int>{2});

  CHECK(ingest_error_line("time,channel,value\n0,x1,1\n0,x1,2\n") == 3);
  CHECK(ingest_error_line("time,channel,value\n0,x9,1\n") == 2);
  CHECK(ingest_error_line("time,channel,value\n0,x1,abc\n") == 2);
  CHECK(ingest_error_line("time,channel,value\n0,x1\n") == 2);
  CHECK(ingest_error_line("t,c,v\n") == 1);
  CHECK(ingest_error_line("") == 0);
  CHECK(ingest_error_line("time,channel,value\n") == 1);
}

TEST_CASE("lorenz schedule file round trip") {
  const GeneratedData g = generate(lorenz_full(), 4);
  std::stringstream ss;
  write_measurements_csv(ss, g.data, {"x1", "x2", "x3"});
  const MeasurementSet m = ingest_csv(ss, {"x1", "x2", "x3"});
  CHECK(m.size() == 25);
  int full = 0;
  for (const auto& c : m.components) full += c.size() == 3 ? 1 : 0;
  CHECK(full == 5);
  CHECK(m.n_scalar() == 47);
}

TEST_CASE("config parsing") {
  std::istringstream in(
      "seed = 4\n"
      "example = lorenz-full\n"
      "W_x = 5, 6, 7\n"
      "lm.max_iters = 20\n"
      "prune.criterion = aic\n");
  const RunConfig c = parse_config(in);
  CHECK(c.example == "lorenz-full");
  CHECK(c.n_x == 3);
  CHECK(c.seed == 4);
  CHECK(c.w_x == std::vector<double>{5.0, 6.0, 7.0});
  CHECK(c.w_y == std::vector<double>{1.0, 1.0, 1.0});
  CHECK(c.mu_x == 1e-8);
  CHECK(c.prune.lm.max_iters == 20);
  CHECK(c.prune.criterion == Criterion::AIC);
  CHECK(c.prune.staged);
  CHECK(c.build_weights().W_x(2, 2) == 7.0);
  CHECK_NOTHROW(c.validate());

  const auto fails = [](const std::string& text) {
    std::istringstream s(text);
    try {
      parse_config(s).validate();
    } catch (const ConfigError&) {
      return true;
    }
    return false;
  };
  CHECK(fails("example = lorenz-full\ncolour = red\n"));
  CHECK(fails("example = lorenz-full\nseed = 1\nseed = 2\n"));
  CHECK(fails("example = lorenz-full\ndt = -1\n"));
  CHECK(fails("example = lorenz-full\ndt = fast\n"));
  CHECK(fails("example = lorenz-full\nW_x = 1, 2\n"));
  CHECK(fails("example = lorenz-full\nlm.rho1 = 0.5\n"));
  CHECK(fails("example = lorenz-full\nprune.criterion = lasso\n"));
  CHECK(fails("example = nowhere\n"));
  CHECK(fails("n_x = 2\n"));  // no data and no example
  CHECK(fails("example lorenz-full\n"));
}

TEST_CASE("dry run") {
  const fs::path dir = scratch_dir("dry");
  const RunConfig c = load_config(write_spiral_case(dir).string());
  std::ostringstream log;
  CHECK(run(c, RunMode::Fit, true, log) == 0);
  CHECK(log.str().find("grid points 61") != std::string::npos);
  CHECK_FALSE(fs::exists(dir / "out"));
}

TEST_CASE("fit and prune artifacts") {
  const fs::path dir = scratch_dir("run");
  RunConfig c = load_config(write_spiral_case(dir).string());
  std::ostringstream log;
  REQUIRE(run(c, RunMode::Prune, false, log) == 0);
  for (const char* f : {"model.json", "model_fit.json", "states.csv", "history.csv", "prune_log.csv", "report.txt"}) {
    CHECK(fs::exists(dir / "out" / f));
  }
  const std::string report = slurp(dir / "out" / "report.txt");
  CHECK(report.rfind("status: ok", 0) == 0);
  CHECK(report.find("active_edges: 4 / 12") != std::string::npos);
  CHECK(slurp(dir / "out" / "states.csv").rfind("t,pos,vel\n", 0) == 0);
  CHECK(slurp(dir / "out" / "history.csv").rfind("phase,iter,cost,lambda,accepted\nfit,0,", 0) == 0);

  // Identical artifacts for any worker count.
  RunConfig c2 = c;
  c2.workers = 3;
  c2.out = (dir / "out2").string();
  REQUIRE(run(c2, RunMode::Prune, false, log) == 0);
  for (const char* f : {"model.json", "model_fit.json", "states.csv", "history.csv", "prune_log.csv", "report.txt"}) {
    CHECK(slurp(dir / "out" / f) == slurp(dir / "out2" / f));
  }

  // Roll the identified model out from the fitted initial state.
  std::ostringstream sim;
  Vec x0(2);
  x0 << 1.0, 0.0;
  simulate((dir / "out" / "model.json").string(), x0, 0.0, 3.0, 0.01, sim);
  std::istringstream lines(sim.str());
  std::string line, last;
  int n = 0;
  while (std::getline(lines, line)) {
    last = line;
    ++n;
  }
  CHECK(n == 302);
  CHECK(last.rfind("3,", 0) == 0);
}

TEST_CASE("cross-validation run") {
  const fs::path dir = scratch_dir("cv");
  RunConfig c = load_config(write_spiral_case(dir, "").string());
  c.prune.criterion = Criterion::CrossValidation;
  c.prune.staged = false;
  std::ostringstream log;
  REQUIRE(run(c, RunMode::Prune, false, log) == 0);
  CHECK(slurp(dir / "out" / "report.txt").find("criterion: cross-validation") != std::string::npos);
}

TEST_CASE("solver failure is reported") {
  const fs::path dir = scratch_dir("fail");
  RunConfig c = load_config(write_spiral_case(dir, "physics = linear\nphysics.a00 = 1e300\n").string());
  std::ostringstream log;
  CHECK(run(c, RunMode::Fit, false, log) == 2);
  CHECK(slurp(dir / "out" / "report.txt").rfind("status: failed", 0) == 0);
}

TEST_CASE("command line") {
  const fs::path dir = scratch_dir("cli");
  const std::string cfg = write_spiral_case(dir).string();
  const auto call = [](std::vector<std::string> args) {
    std::vector<char*> argv;
    for (auto& a : args) argv.push_back(a.data());
    return run_cli(static_cast<int>(argv.size()), argv.data());
  };
  CHECK(call({"sparseid", "validate-config", "--config", cfg}) == 0);
  CHECK(call({"sparseid", "fit", "--config", cfg, "--dry-run", "--workers", "2"}) == 0);
  CHECK(call({"sparseid", "fit", "--config", (dir / "missing.cfg").string()}) == 1);
  CHECK(call({"sparseid", "frobnicate"}) != 0);
  CHECK(call({"sparseid", "fit", "--config", cfg, "--data", (dir / "nothing.csv").string()}) == 1);
}
