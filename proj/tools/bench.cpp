// Times one damped step on the Lorenz grid: sparse normal equations (serial
// reference) against the batch recursion for several worker counts.

#include "sparseid/examples.hpp"
#include "sparseid/lm_parallel.hpp"

#include <CLI11.hpp>

#include <omp.h>

#include <chrono>
#include <cstdio>
#include <vector>

using namespace sparseid;

namespace {

template <class F>
double best_of(int reps, F&& f) {
  double best = 1e300;
  for (int r = 0; r < reps; ++r) {
    const auto t0 = std::chrono::steady_clock::now();
    f();
    best = std::min(best, std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count());
  }
  return best;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Step solver benchmark"};
  std::vector<int> workers{1, 2, 4, 8};
  int reps = 3;
  int batches = 0;
  double lambda = 1e-2;
  std::uint64_t seed = 1;
  app.add_option("--workers", workers, "worker counts to time, e.g. 1,2,4,8")->delimiter(',');
  app.add_option("--reps", reps, "repetitions, the best is reported")->check(CLI::PositiveNumber);
  app.add_option("--batches", batches, "batch count, 0 = one per worker");
  app.add_option("--lambda", lambda, "damping");
  app.add_option("--seed", seed, "data seed");
  CLI11_PARSE(app, argc, argv);

  const ExperimentSpec spec = lorenz_full();
  const GeneratedData gen = generate(spec, seed);
  const Problem problem(build_model(spec), gen.data, spec.weights, spec.dt);
  const Vec b = initial_guess(problem, seed);
  std::printf("grid points %d, parameters %d, hardware threads %d\n", problem.n_d(), problem.n_a(),
              omp_get_num_procs());

  const ResidualBlocks serial_blocks = assemble(problem, b, true, 1);
  const double t_asm = best_of(reps, [&] { (void)assemble(problem, b, true, 1); });
  const double t_dense = best_of(reps, [&] { (void)lm_step_dense(serial_blocks, lambda); });
  std::printf("%-28s %10.4f s\n", "assembly, serial", t_asm);
  std::printf("%-28s %10.4f s\n", "step, normal equations", t_dense);

  const Vec ref = lm_step_dense(serial_blocks, lambda);
  for (int w : workers) {
    const int n_s = batches > 0 ? batches : default_batches(problem.n_d(), w);
    const Partition part = make_partition(problem.n_d(), n_s);
    const double ta = best_of(reps, [&] { (void)assemble(problem, b, true, w); });
    Vec step;
    const double ts = best_of(reps, [&] { step = lm_step_parallel(serial_blocks, lambda, part, w); });
    const double diff = (step - ref).norm() / ref.norm();
    std::printf("workers %2d batches %3d   assembly %8.4f s   step %8.4f s   iteration %8.4f s   rel.diff %.1e\n",
                w, n_s, ta, ts, ta + ts, diff);
  }
  return 0;
}
