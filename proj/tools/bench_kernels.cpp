// Compares the serial reference kernels against the OpenMP versions on a
// representative instance and prints a timing table.
#include <chrono>
#include <cstdio>
#include <random>

#include "sdpf/geometry.hpp"
#include "sdpf/instances.hpp"
#include "sdpf/kernels.hpp"

using namespace sdpf;

namespace {

using clock_type = std::chrono::steady_clock;

template <typename F>
double time_ms(F&& fn, int reps) {
  const auto t0 = clock_type::now();
  for (int i = 0; i < reps; ++i) fn();
  const auto t1 = clock_type::now();
  return std::chrono::duration<double, std::milli>(t1 - t0).count() / reps;
}

}  // namespace

int main(int argc, char** argv) {
  int n = argc > 1 ? std::atoi(argv[1]) : 2000;
  double density = argc > 2 ? std::atof(argv[2]) : 4.0 / n;
  int r = argc > 3 ? std::atoi(argv[3]) : 12;
  int reps = argc > 4 ? std::atoi(argv[4]) : 20;

  std::mt19937_64 rng(7);
  std::uniform_real_distribution<double> coin(0.0, 1.0);
  GraphData g;
  g.n = n;
  for (int i = 1; i <= n; ++i)
    for (int j = i + 1; j <= n && static_cast<int>(g.edges.size()) < 8 * n; ++j)
      if (coin(rng) < density) g.edges.emplace_back(i, j, 1.0);
  ConeProblem prob = theta_problem(g);

  std::normal_distribution<double> gauss(0.0, 1.0);
  Matrix T(n, r), W(n, r);
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < r; ++j) {
      T(i, j) = gauss(rng);
      W(i, j) = gauss(rng);
    }
  Vector lam(prob.m);
  for (int i = 0; i < prob.m; ++i) lam[i] = gauss(rng);

  std::printf("theta instance: n=%d m=%d r=%d, %d reps, max threads=%d\n", n, prob.m, r, reps,
              num_threads());
  std::printf("%-18s %12s %12s %8s\n", "kernel", "serial (ms)", "openmp (ms)", "speedup");

  Vector out1, out2;
  Matrix mout1, mout2;

  const double t_mi_s = time_ms([&] { kernels::seq_multi_inner(prob.A, T, W, out1); }, reps);
  const double t_mi_p = time_ms([&] { kernels::par_multi_inner(prob.A, T, W, out2); }, reps);
  std::printf("%-18s %12.3f %12.3f %7.2fx (max diff %.2e)\n", "multi_inner", t_mi_s, t_mi_p,
              t_mi_s / t_mi_p, (out1 - out2).cwiseAbs().maxCoeff());

  const double t_wa_s = time_ms([&] { kernels::seq_weighted_apply(prob.A, lam, T, mout1); }, reps);
  const double t_wa_p = time_ms([&] { kernels::par_weighted_apply(prob.A, lam, T, mout2); }, reps);
  std::printf("%-18s %12.3f %12.3f %7.2fx (max diff %.2e)\n", "weighted_apply", t_wa_s, t_wa_p,
              t_wa_s / t_wa_p, (mout1 - mout2).cwiseAbs().maxCoeff());

  const double t_gd_s = time_ms([&] { kernels::seq_gram_diag(prob.A, T, 0, out1); }, reps);
  const double t_gd_p = time_ms([&] { kernels::par_gram_diag(prob.A, T, 0, out2); }, reps);
  std::printf("%-18s %12.3f %12.3f %7.2fx (max diff %.2e)\n", "gram_diag", t_gd_s, t_gd_p,
              t_gd_s / t_gd_p, (out1 - out2).cwiseAbs().maxCoeff());

  SpMat Q1, Q2;
  const double t_ga_s = time_ms([&] { Q1 = kernels::seq_gram_assemble(prob.A, T, 0); }, std::max(1, reps / 4));
  const double t_ga_p = time_ms([&] { Q2 = kernels::par_gram_assemble(prob.A, T, 0); }, std::max(1, reps / 4));
  double gdiff = 0.0;
  {
    SpMat D = Q1 - Q2;
    for (int o = 0; o < D.outerSize(); ++o)
      for (SpMat::InnerIterator it(D, o); it; ++it) gdiff = std::max(gdiff, std::abs(it.value()));
  }
  std::printf("%-18s %12.3f %12.3f %7.2fx (max diff %.2e, nnz %ld)\n", "gram_assemble", t_ga_s,
              t_ga_p, t_ga_s / t_ga_p, gdiff, static_cast<long>(Q1.nonZeros()));

  // End-to-end multiplier-system matvec (the PCG hot path).
  GramOperator gram(prob, T, Matrix(Vector::Zero(0)));
  Vector gv1, gv2;
  set_num_threads(1);
  const double t_gm_s = time_ms([&] { gv1 = gram.apply(lam); }, reps);
  set_num_threads(0);
  const double t_gm_p = time_ms([&] { gv2 = gram.apply(lam); }, reps);
  std::printf("%-18s %12.3f %12.3f %7.2fx (max diff %.2e)\n", "gram matvec", t_gm_s, t_gm_p,
              t_gm_s / t_gm_p, (gv1 - gv2).cwiseAbs().maxCoeff());
  return 0;
}
