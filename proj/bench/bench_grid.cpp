// Serial vs OpenMP evaluation of the operating-point grid.
#include <omp.h>

#include <chrono>
#include <cstdio>
#include <cstdlib>
#include <vector>

#include "pmsm/analysis.hpp"

using namespace pmsm;
using Clock = std::chrono::steady_clock;

namespace {

template <class F>
double best_of(int reps, F&& f) {
  double best = 1e300;
  for (int r = 0; r < reps; ++r) {
    const auto t0 = Clock::now();
    f();
    best = std::min(best, std::chrono::duration<double>(Clock::now() - t0).count());
  }
  return best;
}

}  // namespace

int main(int argc, char** argv) {
  const int reps = argc > 1 ? std::atoi(argv[1]) : 5;
  analysis::MapInputs in;
  in.estimated = reference_machine().params;
  in.omega_n = reference_machine().base.omega_n;
  in.delta.psi_m = -0.1 * in.estimated.psi_m;

  std::printf("threads %d, best of %d\n", omp_get_max_threads(), reps);
  std::printf("%10s %12s %12s %8s %s\n", "cells", "serial_ms", "omp_ms", "speedup", "identical");
  for (const std::size_t count : {81u, 201u, 501u}) {
    const auto g = analysis::OperatingGrid::uniform(-1.0, 1.0, count, -1.0, 1.0, count);
    std::vector<analysis::MapCell> a, b;
    const double ts = best_of(reps, [&] { a = analysis::evaluate_grid_serial(g, in); });
    const double tp = best_of(reps, [&] { b = analysis::evaluate_grid_parallel(g, in); });
    std::printf("%10zu %12.3f %12.3f %8.2f %s\n", g.size(), 1e3 * ts, 1e3 * tp, ts / tp, a == b ? "yes" : "no");
  }
  return 0;
}
