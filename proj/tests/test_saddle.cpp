#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <Eigen/Eigenvalues>

#include "oracles.hpp"
#include "sdpf/instances.hpp"
#include "sdpf/saddle.hpp"

using namespace sdpf;

namespace {

// Wraps fixed (W, s) operators into a problem/point pair so escape_direction
// sees exactly W = C22 - A~^*(lam) and s = c - B^T lam with lam = 0.
struct FixedEscape {
  ConeProblem prob;
  FactorPoint pt;
  ObjectiveEval ev;
  Vector lam;
};

FixedEscape make_fixed(const Matrix& W, const Vector& s) {
  FixedEscape fe;
  const int n = static_cast<int>(W.rows());
  const int p = static_cast<int>(s.size());
  fe.prob.n = n;
  fe.prob.k = 0;
  fe.prob.p = p;
  fe.prob.m = 0;
  fe.prob.A.n = n;
  fe.prob.A.finalize();
  fe.prob.B.resize(0, p);
  fe.prob.b = Vector::Zero(0);
  SymOp C;
  C.n = n;
  for (int i = 0; i < n; ++i)
    for (int j = i; j < n; ++j)
      if (W(i, j) != 0.0) C.upper.emplace_back(i, j, W(i, j));
  C.finalize();
  LinearObjective obj;
  obj.C = C;
  obj.c = s;
  fe.prob.objective = obj;
  fe.prob.finalize();
  fe.pt.k = 0;
  fe.pt.R = Matrix::Zero(n, 1);
  fe.pt.y = Vector::Zero(p);
  fe.pt.support.assign(p, 1);
  fe.ev = eval_objective(fe.prob, fe.pt.rhat(), fe.pt.x());
  fe.lam = Vector::Zero(0);
  return fe;
}

}  // namespace

TEST_CASE("escape direction on a diagonal spectrum") {
  Matrix W = Matrix::Zero(2, 2);
  W(0, 0) = 1.0;
  W(1, 1) = -2.0;
  FixedEscape fe = make_fixed(W, Vector::Zero(0));
  std::mt19937_64 r(51);
  EscapeDirection dir = escape_direction(fe.prob, fe.pt, fe.ev, fe.lam, 1, r);
  CHECK(dir.xi == doctest::Approx(-2.0).epsilon(1e-10));
  CHECK(dir.kind == EscapeDirection::Kind::Matrix);
  CHECK(std::abs(dir.v[1]) == doctest::Approx(1.0).epsilon(1e-10));
}

TEST_CASE("escape direction picks the vector coordinate when it is lower") {
  Matrix W = Matrix::Identity(3, 3);
  Vector s(2);
  s << 0.5, -0.1;
  FixedEscape fe = make_fixed(W, s);
  std::mt19937_64 r(52);
  EscapeDirection dir = escape_direction(fe.prob, fe.pt, fe.ev, fe.lam, 1, r);
  CHECK(dir.xi == doctest::Approx(-0.1).epsilon(1e-12));
  CHECK(dir.kind == EscapeDirection::Kind::VectorCoord);
  CHECK(dir.j == 1);
}

TEST_CASE("escape value matches the dense eigen oracle on random operators") {
  std::mt19937_64 r(53);
  for (int trial = 0; trial < 100; ++trial) {
    const int n = 10;
    Matrix A = oracle::randn(n, n, r);
    Matrix W = 0.5 * (A + A.transpose());
    FixedEscape fe = make_fixed(W, Vector::Zero(0));
    EscapeDirection dir = escape_direction(fe.prob, fe.pt, fe.ev, fe.lam, 1, r);
    Eigen::SelfAdjointEigenSolver<Matrix> es(W);
    CHECK(std::abs(dir.xi - es.eigenvalues()[0]) <= 1e-8 * (1.0 + std::abs(dir.xi)));
  }
}

TEST_CASE("lanczos path agrees with the dense oracle above the dense cutoff") {
  std::mt19937_64 r(54);
  for (int trial = 0; trial < 30; ++trial) {
    const int n = 80;
    Matrix A = oracle::randn(n, n, r);
    Matrix W = 0.5 * (A + A.transpose());
    auto op = [&W](const Vector& v) { return Vector(W * v); };
    auto res = lanczos_smallest(op, n, 1e-10, 500, r);
    REQUIRE(res.has_value());
    Eigen::SelfAdjointEigenSolver<Matrix> es(W);
    CHECK(std::abs(res->first - es.eigenvalues()[0]) <= 1e-8 * (1.0 + std::abs(res->first)));
    // residual check of the returned pair
    CHECK((W * res->second - res->first * res->second).norm() <= 1e-6 * (1.0 + std::abs(res->first)));
  }
}

TEST_CASE("brute force never beats the escape value") {
  std::mt19937_64 r(55);
  for (int rep = 0; rep < 5; ++rep) {
    const int nk = 6, p = 3, tau = 2;
    Matrix A = oracle::randn(nk, nk, r);
    Matrix W = 0.5 * (A + A.transpose());
    Vector s = oracle::randn_vec(p, r);
    FixedEscape fe = make_fixed(W, s);
    EscapeDirection dir = escape_direction(fe.prob, fe.pt, fe.ev, fe.lam, tau, r);
    double best = std::numeric_limits<double>::infinity();
    std::normal_distribution<double> g(0.0, 1.0);
    for (int it = 0; it < 100000; ++it) {
      Matrix H(nk, tau);
      Vector h(p);
      for (int i = 0; i < nk; ++i)
        for (int j = 0; j < tau; ++j) H(i, j) = g(r);
      for (int j = 0; j < p; ++j) h[j] = g(r);
      const double norm2 = H.squaredNorm() + h.squaredNorm();
      const double val = ((W * H).cwiseProduct(H)).sum() + s.dot(h.cwiseProduct(h));
      best = std::min(best, val / norm2);
    }
    CHECK(dir.xi <= best + 1e-8);
  }
}

TEST_CASE("escape step from the rank-1 saddle of the empty-graph theta") {
  GraphData g;
  g.n = 6;
  ConeProblem prob = theta_problem(g);
  // a rank-1 stationary point that is not the optimum: e^T R = 0
  FactorPoint pt;
  pt.k = 0;
  pt.R = Matrix::Zero(6, 1);
  pt.R(0, 0) = 1.0 / std::sqrt(2.0);
  pt.R(1, 0) = -1.0 / std::sqrt(2.0);
  PreconditionerState pc = PreconditionerState::make(prob.m);
  LinsysStats st;
  ObjectiveEval ev = eval_objective(prob, pt.rhat(), pt.x());
  pc.set_diag(GramOperator(prob, pt.rhat(), Matrix(pt.y)).diag());
  RiemannianGrad rg = riemannian_grad(prob, pt, ev, pc, st);
  REQUIRE(rg.norm <= 1e-10);  // genuinely stationary
  std::mt19937_64 r(56);
  EscapeDirection dir = escape_direction(prob, pt, ev, rg.lam, 1, r);
  CHECK(dir.xi < -1e-3);
  EscapeOutcome out = escape_step(prob, pt, dir, ev.value, prob.b, pc, st);
  REQUIRE(out.accepted);
  CHECK(out.point.rank() == pt.rank() + 1);
  CHECK(out.f_new < ev.value);
  CHECK(out.f_new - ev.value <= 0.5 * dir.xi * out.t * out.t);
  const double res = (apply_K(prob, out.point.rhat(), out.point.x()) - prob.b).norm();
  CHECK(res <= 1e-8 * (1.0 + prob.b.norm()));
}

TEST_CASE("nonnegative escape value leaves the point unchanged") {
  Matrix W = Matrix::Identity(4, 4);
  FixedEscape fe = make_fixed(W, Vector::Zero(0));
  std::mt19937_64 r(57);
  EscapeDirection dir = escape_direction(fe.prob, fe.pt, fe.ev, fe.lam, 1, r);
  CHECK(dir.xi >= 0.0);
  PreconditionerState pc = PreconditionerState::make(0);
  LinsysStats st;
  EscapeOutcome out = escape_step(fe.prob, fe.pt, dir, fe.ev.value, fe.prob.b, pc, st);
  CHECK_FALSE(out.accepted);
  CHECK(out.t == 0.0);
  CHECK((out.point.R - fe.pt.R).norm() == 0.0);
}

TEST_CASE("vector-kind escape revives a support index") {
  // one squared slack with negative reduced cost: escape must revive it
  std::mt19937_64 r(58);
  ConeProblem prob;
  prob.n = 2;
  prob.k = 0;
  prob.p = 2;
  prob.m = 1;
  prob.A.n = 2;
  prob.A.ops.push_back(SymOp::identity(2));
  prob.B.resize(1, 2);
  prob.B.insert(0, 0) = 1.0;
  prob.B.insert(0, 1) = 1.0;
  prob.b = Vector::Ones(1);  // trace(X) + x1 + x2 = 1
  LinearObjective obj;
  obj.C = SymOp::identity(2);  // minimizing trace rewards moving mass into x
  obj.c = Vector::Zero(2);
  obj.c[1] = -1.0;  // and especially into x2
  prob.objective = obj;
  prob.finalize();

  FactorPoint pt;
  pt.k = 0;
  pt.R = Matrix::Zero(2, 1);
  pt.R(0, 0) = 1.0;  // X = e1 e1^T, x = 0
  pt.y = Vector::Zero(2);
  pt.support.assign(2, 0);
  PreconditionerState pc = PreconditionerState::make(1);
  LinsysStats st;
  ObjectiveEval ev = eval_objective(prob, pt.rhat(), pt.x());
  pc.set_diag(GramOperator(prob, pt.rhat(), Matrix(pt.y)).diag());
  RiemannianGrad rg = riemannian_grad(prob, pt, ev, pc, st);
  EscapeDirection dir = escape_direction(prob, pt, ev, rg.lam, 1, r);
  REQUIRE(dir.kind == EscapeDirection::Kind::VectorCoord);
  CHECK(dir.j == 1);
  CHECK(dir.xi < 0.0);
  EscapeOutcome out = escape_step(prob, pt, dir, ev.value, prob.b, pc, st);
  REQUIRE(out.accepted);
  CHECK(out.revived == 1);
  CHECK(out.point.support[1] == 1);
  CHECK(out.point.y[1] != 0.0);
  CHECK(out.point.rank() == pt.rank() + 1);  // tau columns appended regardless
}

TEST_CASE("accepted step satisfies the curvature model to second order") {
  // at an exact saddle f(t) = f0 + xi t^2 + o(t^2): slope test at t, t/2
  GraphData g;
  g.n = 5;
  ConeProblem prob = theta_problem(g);
  FactorPoint pt;
  pt.k = 0;
  pt.R = Matrix::Zero(5, 1);
  pt.R(0, 0) = 1.0 / std::sqrt(2.0);
  pt.R(1, 0) = -1.0 / std::sqrt(2.0);
  PreconditionerState pc = PreconditionerState::make(prob.m);
  LinsysStats st;
  ObjectiveEval ev = eval_objective(prob, pt.rhat(), pt.x());
  pc.set_diag(GramOperator(prob, pt.rhat(), Matrix(pt.y)).diag());
  RiemannianGrad rg = riemannian_grad(prob, pt, ev, pc, st);
  std::mt19937_64 r(59);
  EscapeDirection dir = escape_direction(prob, pt, ev, rg.lam, 1, r);
  REQUIRE(dir.xi < 0.0);

  auto f_at = [&](double t) {
    VarietyPoint base;
    base.k = 0;
    base.S = Matrix::Zero(5, pt.rank() + 1);
    base.S.leftCols(pt.rank()) = pt.R;
    base.Y = Matrix::Zero(0, 2);
    base.S.col(pt.rank()) += t * dir.v;
    auto rt = newton_retract(prob, base, prob.b, pc, st);
    REQUIRE(rt.has_value());
    return eval_objective(prob, rt->shat(), rt->x()).value;
  };
  const double t = 1e-2;
  const double q1 = (f_at(t) - ev.value) / (t * t);
  const double q2 = (f_at(t / 2) - ev.value) / (t * t / 4);
  CHECK(q1 == doctest::Approx(dir.xi).epsilon(0.02));
  CHECK(q2 == doctest::Approx(dir.xi).epsilon(0.02));
}
