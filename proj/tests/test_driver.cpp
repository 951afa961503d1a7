#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include "oracles.hpp"
#include "sdpf/instances.hpp"
#include "sdpf/solver.hpp"

using namespace sdpf;

TEST_CASE("phase 1: theta starts at a vertex indicator with zero residual") {
  GraphData g;
  g.n = 6;
  g.edges.emplace_back(1, 2, 1.0);
  g.edges.emplace_back(2, 3, 1.0);
  ConeProblem prob = theta_problem(g);
  std::mt19937_64 r(61);
  FactorPoint pt = phase1_feasible(prob, 4, r);
  CHECK((apply_K(prob, pt.rhat(), pt.x()) - prob.b).norm() == 0.0);
  CHECK(pt.R.col(0).cwiseAbs().maxCoeff() == doctest::Approx(1.0));
}

TEST_CASE("phase 1: boxqp rank-1 start has zero residual") {
  Matrix Q = 2.0 * Matrix::Identity(6, 6);
  Vector a = Vector::Constant(6, -3.0);
  ConeProblem prob = boxqp_problem(Q, a);
  std::mt19937_64 r(62);
  FactorPoint pt = phase1_feasible(prob, 4, r);
  CHECK((apply_K(prob, pt.rhat(), pt.x()) - prob.b).norm() <= 1e-14);
}

TEST_CASE("phase 1: unconstrained problems accept any Gaussian start") {
  SnlOptions so;
  so.sensors = 5;
  so.seed = 3;
  ConeProblem prob = snl_problem(so);
  std::mt19937_64 r(63);
  FactorPoint pt = phase1_feasible(prob, 3, r);
  CHECK(pt.rank() == 3);
}

TEST_CASE("phase 1: generic Gauss-Newton start reaches feasibility") {
  std::mt19937_64 gen(64);
  ConeProblem prob = oracle::random_problem(12, 1, 3, 8, 4, gen);
  prob.init.reset();  // force the generic path
  std::mt19937_64 r(65);
  FactorPoint pt = phase1_feasible(prob, 5, r);
  CHECK((apply_K(prob, pt.rhat(), pt.x()) - prob.b).norm() <= 1e-8 * (1.0 + prob.b.norm()));
}

TEST_CASE("rank cap: identity below n, Gram-preserving refactorization above") {
  std::mt19937_64 r(66);
  {
    FactorPoint pt;
    pt.k = 0;
    pt.R = oracle::randn(3, 2, r);
    CHECK((rank_cap(pt, 3).R - pt.R).norm() == 0.0);
  }
  {
    FactorPoint pt;
    pt.k = 0;
    pt.R = oracle::randn(3, 5, r);
    FactorPoint capped = rank_cap(pt, 3);
    CHECK(capped.rank() <= 3);
    Matrix X1 = pt.R * pt.R.transpose();
    Matrix X2 = capped.R * capped.R.transpose();
    CHECK((X1 - X2).norm() <= 1e-10 * (1.0 + X1.norm()));
  }
  {
    // duplicated columns halve to an equivalent factor
    Matrix base = oracle::randn(4, 3, r);
    FactorPoint pt;
    pt.k = 1;
    pt.R.resize(4, 6);
    pt.R << base, base;
    pt.R /= std::sqrt(2.0);
    Matrix That = pt.rhat();
    // make the top row consistent with the identity block structure
    FactorPoint capped = rank_cap(pt, 4);
    CHECK(capped.rank() <= 4);
    Matrix X1 = pt.rhat() * pt.rhat().transpose();
    Matrix X2 = capped.rhat() * capped.rhat().transpose();
    CHECK((X1 - X2).norm() <= 1e-10 * (1.0 + X1.norm()));
    CHECK((capped.rhat().topLeftCorner(1, 1) - Matrix::Identity(1, 1)).norm() == 0.0);
  }
}

TEST_CASE("reduction rule arithmetic on crafted spectra") {
  std::mt19937_64 r(67);
  SolveOptions opts;
  PreconditionerState pc = PreconditionerState::make(0);
  LinsysStats st;

  // sigma = (1.0, 0.5, 1e-4): max ratio 5000 at the second gap -> keep 2
  {
    ConeProblem prob;  // unconstrained so the retraction is the identity
    prob.n = 5;
    prob.A.n = 5;
    prob.b = Vector::Zero(0);
    prob.B.resize(0, 0);
    LinearObjective obj;
    obj.C.n = 5;
    obj.C.finalize();  // zero objective: any reduction is free
    obj.c = Vector::Zero(0);
    prob.objective = obj;
    prob.finalize();

    Matrix U = Eigen::HouseholderQR<Matrix>(oracle::randn(5, 3, r)).householderQ() *
               Matrix::Identity(5, 3);
    Matrix V = Eigen::HouseholderQR<Matrix>(oracle::randn(3, 3, r)).householderQ();
    Vector sig(3);
    sig << 1.0, 0.5, 1e-4;
    FactorPoint pt;
    pt.k = 0;
    pt.R = U * sig.asDiagonal() * V.transpose();
    ReductionEvent ev;
    FactorPoint red = reduce_rank_support(prob, pt, opts, 0.0, prob.b, pc, st, &ev);
    CHECK(ev.accepted);
    CHECK(red.rank() == 2);

    // sigma = (1.0, 0.5): ratio 2 < 10 -> unchanged
    Vector sig2(2);
    sig2 << 1.0, 0.5;
    pt.R = U.leftCols(2) * sig2.asDiagonal();
    FactorPoint red2 = reduce_rank_support(prob, pt, opts, 0.0, prob.b, pc, st, &ev);
    CHECK(red2.rank() == 2);
  }
}

TEST_CASE("support reduction drops trailing entries of x") {
  // x = (1.0, 2.0, 1e-5), x_max = 2 -> drop j = 3
  ConeProblem prob;
  prob.n = 2;
  prob.k = 0;
  prob.p = 3;
  prob.m = 0;
  prob.A.n = 2;
  prob.A.finalize();
  prob.b = Vector::Zero(0);
  prob.B.resize(0, 3);
  LinearObjective obj;
  obj.C.n = 2;
  obj.C.finalize();
  obj.c = Vector::Zero(3);
  prob.objective = obj;
  prob.finalize();

  FactorPoint pt;
  pt.k = 0;
  pt.R = Matrix::Identity(2, 2);
  pt.y.resize(3);
  pt.y << 1.0, std::sqrt(2.0), std::sqrt(1e-5);
  pt.refresh_support();
  SolveOptions opts;
  PreconditionerState pc = PreconditionerState::make(0);
  LinsysStats st;
  ReductionEvent ev;
  FactorPoint red = reduce_rank_support(prob, pt, opts, 0.0, prob.b, pc, st, &ev);
  CHECK(ev.accepted);
  CHECK(ev.support_dropped == 1);
  CHECK(red.y[2] == 0.0);
  CHECK(red.support[2] == 0);
  CHECK(red.support[0] == 1);
  CHECK(red.support[1] == 1);
}

TEST_CASE("gradient step honors the non-monotone acceptance predicate") {
  std::mt19937_64 r(68);
  ConeProblem prob = oracle::random_problem(10, 0, 2, 5, 3, r);
  FactorPoint pt = oracle::point_from_init(prob);
  PreconditionerState pc = PreconditionerState::make(prob.m);
  pc.set_diag(GramOperator(prob, pt.rhat(), Matrix(pt.y)).diag());
  LinsysStats st;
  ObjectiveEval ev = eval_objective(prob, pt.rhat(), pt.x());
  RiemannianGrad rg = riemannian_grad(prob, pt, ev, pc, st);
  REQUIRE(rg.norm > 1e-3);
  SolveOptions opts;
  std::deque<double> window{ev.value};
  GradStepResult res = gradient_step(prob, pt, rg, 1.0, window, opts, prob.b, pc, st);
  REQUIRE(res.accepted);
  CHECK(res.f_new <= ev.value - opts.armijo_c1 * res.t * rg.norm * rg.norm);
  const double feas = (apply_K(prob, res.point.rhat(), res.point.x()) - prob.b).norm();
  CHECK(feas <= 1e-8 * (1.0 + prob.b.norm()));
}

TEST_CASE("BB descent on an unconstrained quadratic converges linearly") {
  // f = ||R - R*||^2 via squared residual terms on the factor itself is not
  // linear SDP; emulate with the solver on a diag objective whose optimum is
  // known: min <I, X> - 2<R*, ...> is awkward, so check the trajectory of
  // the solver on a strongly convex quadratic instead.
  std::mt19937_64 r(69);
  SnlOptions so;
  so.sensors = 12;
  so.seed = 21;
  so.noise = 0.0;
  ConeProblem prob = snl_problem(so);
  SolveOptions opts;
  opts.seed = 5;
  opts.r0 = 3;
  opts.tau = 1;
  opts.eps_g = 1e-7;
  opts.eps_h = 1e-6;
  opts.max_outer_iter = 20000;
  SolveResult res = solve(prob, opts);
  CHECK(res.report.status == SolveStatus::Stationary);
  // per-step decrease ratio below 1 over the last stretch of the run
  const auto& traj = res.report.objective_trajectory;
  REQUIRE(traj.size() >= 10);
  const double fstar = res.report.objective;
  int ok = 0, total = 0;
  for (size_t i = traj.size() - 9; i < traj.size(); ++i) {
    const double before = traj[i - 1] - fstar, after = traj[i] - fstar;
    if (before > 1e-14) {
      ++total;
      if (after <= 0.99 * before || after <= 1e-14) ++ok;
    }
  }
  CHECK(ok >= total - 2);
}

TEST_CASE("empty-graph theta solves to -n") {
  GraphData g;
  g.n = 5;
  ConeProblem prob = theta_problem(g);
  SolveOptions opts;
  opts.seed = 1;
  SolveResult res = solve(prob, opts);
  CHECK(res.report.status == SolveStatus::Stationary);
  CHECK(res.report.objective == doctest::Approx(-5.0).epsilon(1e-5));
}

TEST_CASE("BoxQP tight family: objective -2n, empty final support") {
  Matrix Q = 2.0 * Matrix::Identity(10, 10);
  Vector a = Vector::Constant(10, -3.0);
  ConeProblem prob = boxqp_problem(Q, a);
  SolveOptions opts;
  opts.seed = 2;
  SolveResult res = solve(prob, opts);
  CHECK(res.report.status == SolveStatus::Stationary);
  CHECK(std::abs(res.report.objective - (-20.0)) <= 1e-5);
  int supp = 0;
  for (auto s : res.point.support) supp += s != 0;
  CHECK(supp == 0);
}

TEST_CASE("monotone envelope and termination invariants on C5 theta") {
  GraphData g;
  g.n = 5;
  for (int i = 1; i <= 5; ++i)
    g.edges.emplace_back(std::min(i, i % 5 + 1), std::max(i, i % 5 + 1), 1.0);
  ConeProblem prob = theta_problem(g);
  SolveOptions opts;
  opts.seed = 1;
  SolveResult res = solve(prob, opts);
  REQUIRE(res.report.status == SolveStatus::Stationary);
  CHECK(std::abs(res.report.objective - (-std::sqrt(5.0))) <= 1e-4);

  // running minimum of the trajectory is non-increasing (trivially) and the
  // trajectory never rises above it by more than the per-event budget
  const auto& traj = res.report.objective_trajectory;
  double run_min = traj.front();
  for (double f : traj) {
    run_min = std::min(run_min, f);
    CHECK(run_min <= f + 1e-12 * (1.0 + std::abs(f)));
  }

  // histories have one entry per outer iteration
  CHECK(static_cast<long>(traj.size()) == res.report.t_alg);
  CHECK(static_cast<long>(res.report.rank_history.size()) == res.report.t_alg);
  CHECK(static_cast<long>(res.report.support_history.size()) == res.report.t_alg);

  // termination implies the stationarity definition numerically
  CHECK(res.report.grad_norm <= opts.eps_g);
  CHECK(res.report.xi >= -opts.eps_h);

  // rank history never exceeds n
  for (int rk : res.report.rank_history) CHECK(rk <= prob.n);
}

TEST_CASE("deterministic counters under a fixed seed") {
  GraphData g;
  g.n = 5;
  for (int i = 1; i <= 5; ++i)
    g.edges.emplace_back(std::min(i, i % 5 + 1), std::max(i, i % 5 + 1), 1.0);
  ConeProblem prob = theta_problem(g);
  SolveOptions opts;
  opts.seed = 77;
  set_num_threads(1);
  SolveResult a = solve(prob, opts);
  SolveResult b = solve(prob, opts);
  set_num_threads(0);
  CHECK(a.report.t_alg == b.report.t_alg);
  CHECK(a.report.t_cg == b.report.t_cg);
  CHECK(a.report.t_lin == b.report.t_lin);
  CHECK(a.report.t_ch == b.report.t_ch);
  CHECK(a.report.objective == b.report.objective);
  CHECK((a.point.R - b.point.R).norm() == 0.0);
}

TEST_CASE("random sparse instance solves against its recorded start") {
  ConeProblem prob = random_sparse_problem(10, 4, 20, 5);
  SolveOptions opts;
  opts.seed = 4;
  SolveResult res = solve(prob, opts);
  CHECK(res.report.status == SolveStatus::Stationary);
  CHECK(res.report.max_residue() <= 1e-6);
}

TEST_CASE("support mask only shrinks at reductions and grows at revivals") {
  ConeProblem prob = random_sparse_problem(8, 5, 16, 9);
  SolveOptions opts;
  opts.seed = 6;
  SolveResult res = solve(prob, opts);
  const auto& supp = res.report.support_history;
  const auto& reds = res.report.reduction_events;
  const auto& escs = res.report.escape_events;
  for (size_t i = 1; i < supp.size(); ++i) {
    if (supp[i] < supp[i - 1]) {
      bool redhere = false;
      for (const auto& e : reds) redhere |= e.iter == static_cast<long>(i - 1) && e.support_dropped > 0;
      CHECK(redhere);
    } else if (supp[i] > supp[i - 1]) {
      bool eschere = false;
      for (const auto& e : escs) eschere |= e.iter == static_cast<long>(i - 1) && e.revived >= 0;
      CHECK(eschere);
    }
  }
}

namespace {

// C5 theta plus a nearly duplicated trace row: ill-conditioned everywhere,
// so the PCG cap trips deterministically and the perturbation machinery runs.
ConeProblem degenerate_theta() {
  GraphData g;
  g.n = 5;
  for (int i = 1; i <= 5; ++i)
    g.edges.emplace_back(std::min(i, i % 5 + 1), std::max(i, i % 5 + 1), 1.0);
  ConeProblem prob = theta_problem(g);
  SymOp dup = SymOp::identity(5);
  dup.upper.emplace_back(0, 0, 1e-6);
  dup.finalize();
  prob.A.ops.push_back(dup);
  prob.m += 1;
  prob.b.conservativeResize(prob.m);
  prob.b[prob.m - 1] = 1.0;
  prob.B.resize(prob.m, 0);
  prob.finalize();
  return prob;
}

}  // namespace

TEST_CASE("preconditioner refreshes stabilize before convergence") {
  // no refresh in the final stretch of a converged degenerate run
  ConeProblem prob = degenerate_theta();
  SolveOptions opts;
  opts.seed = 5;
  SolveResult res = solve(prob, opts);
  REQUIRE(res.report.status == SolveStatus::Stationary);
  REQUIRE(res.report.t_ch >= 1);
  CHECK(res.report.last_refresh_iter <= res.report.t_alg - 10);
}

TEST_CASE("a masked perturbation still smooths a degenerate theta run") {
  ConeProblem prob = degenerate_theta();
  SolveOptions opts;
  opts.seed = 5;
  opts.perturb_mask.assign(prob.m, 1);
  opts.perturb_mask[2] = 0;  // leave one edge row untouched
  SolveResult res = solve(prob, opts);
  CHECK(res.report.status == SolveStatus::Stationary);
  CHECK(res.report.perturbation_count >= 1);
  CHECK(res.report.rp <= 1e-6);
}

TEST_CASE("geometric objective decay on a nondegenerate sphere-constrained SDP") {
  std::mt19937_64 r(70);
  ConeProblem prob;
  prob.n = 12;
  prob.m = 1;
  prob.A.n = 12;
  prob.A.ops.push_back(SymOp::identity(12));
  prob.B.resize(1, 0);
  prob.b = Vector::Ones(1);
  LinearObjective obj;
  obj.C = oracle::random_symop(12, 40, r);  // generic spectrum: simple bottom eigenvalue
  obj.c = Vector::Zero(0);
  prob.objective = obj;
  prob.finalize();

  SolveOptions opts;
  opts.seed = 8;
  opts.eps_g = 1e-9;  // long tail to measure the local rate
  SolveResult res = solve(prob, opts);
  REQUIRE(res.report.status == SolveStatus::Stationary);
  Eigen::SelfAdjointEigenSolver<Matrix> es(std::get<LinearObjective>(prob.objective).C.dense());
  const double fstar = es.eigenvalues()[0];
  CHECK(std::abs(res.report.objective - fstar) <= 1e-7 * (1.0 + std::abs(fstar)));
  // geometric decay over the last 20 above-noise iterations, measured as an
  // aggregate rate (BB trajectories are non-monotone step to step)
  const auto& traj = res.report.objective_trajectory;
  const double noise = 1e-12 * (1.0 + std::abs(fstar));
  size_t iend = traj.size();
  while (iend > 1 && traj[iend - 1] - fstar <= noise) --iend;
  const size_t ibeg = iend > 21 ? iend - 21 : 0;
  REQUIRE(iend - ibeg >= 5);
  const double gap0 = traj[ibeg] - fstar, gap1 = traj[iend - 1] - fstar;
  REQUIRE(gap0 > noise);
  const double rate = std::pow(std::max(gap1, noise) / gap0, 1.0 / double(iend - 1 - ibeg));
  CHECK(rate <= 0.99);
}

TEST_CASE("wall-clock limit produces a TimeOut status") {
  ConeProblem prob = random_sparse_problem(8, 3, 12, 44);
  SolveOptions opts;
  opts.seed = 1;
  opts.max_time_seconds = 0.0;
  SolveResult res = solve(prob, opts);
  CHECK(res.report.status == SolveStatus::TimeOut);
}
