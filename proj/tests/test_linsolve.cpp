#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include "oracles.hpp"
#include "sdpf/linsolve.hpp"

using namespace sdpf;

namespace {

SpMat random_spd(int n, std::mt19937_64& r) {
  Matrix A = oracle::randn(n, n, r);
  Matrix S = A * A.transpose() + double(n) * Matrix::Identity(n, n);
  SpMat out = S.sparseView();
  return out;
}

LinOp to_op(const SpMat& Q) {
  return [&Q](const Vector& v) { return Vector(Q * v); };
}

}  // namespace

TEST_CASE("pcg solves the identity in one iteration") {
  std::mt19937_64 r(41);
  Vector rhs = oracle::randn_vec(7, r);
  PreconditionerState pc = PreconditionerState::make(7);
  Vector sol;
  auto op = [](const Vector& v) { return v; };
  PcgResult res = pcg(op, rhs, pc, 1e-12, 50, sol);
  CHECK(res.converged);
  CHECK(res.iters == 1);
  CHECK((sol - rhs).norm() <= 1e-12 * (1.0 + rhs.norm()));
}

TEST_CASE("exact diagonal preconditioner converges in one iteration") {
  Vector d(5);
  d << 1, 2, 3, 4, 5;
  SpMat Q(5, 5);
  for (int i = 0; i < 5; ++i) Q.insert(i, i) = d[i];
  PreconditionerState pc = PreconditionerState::make(5);
  pc.set_diag(d);
  std::mt19937_64 r(42);
  Vector rhs = oracle::randn_vec(5, r);
  Vector sol;
  PcgResult res = pcg(to_op(Q), rhs, pc, 1e-12, 50, sol);
  CHECK(res.converged);
  CHECK(res.iters == 1);
}

TEST_CASE("pcg matches a dense factorization oracle on random SPD systems") {
  std::mt19937_64 r(43);
  for (int trial = 0; trial < 50; ++trial) {
    SpMat Q = random_spd(20, r);
    Vector rhs = oracle::randn_vec(20, r);
    PreconditionerState pc = PreconditionerState::make(20);
    Vector dg(20);
    for (int i = 0; i < 20; ++i) dg[i] = Q.coeff(i, i);
    pc.set_diag(dg);
    Vector sol;
    PcgResult res = pcg(to_op(Q), rhs, pc, 1e-12, 200, sol);
    CHECK(res.converged);
    Matrix Qd = Matrix(Q);
    Vector ref = Qd.ldlt().solve(rhs);
    CHECK((sol - ref).norm() <= 1e-8 * (1.0 + ref.norm()));
  }
}

TEST_CASE("pcg returns converged=false at the cap, never throws") {
  std::mt19937_64 r(44);
  // severely ill-conditioned system, weak preconditioner, tiny cap
  Matrix A = oracle::randn(30, 6, r);
  Matrix S = A * A.transpose() + 1e-14 * Matrix::Identity(30, 30);
  SpMat Q = S.sparseView();
  Vector rhs = oracle::randn_vec(30, r);
  PreconditionerState pc = PreconditionerState::make(30);
  Vector sol;
  PcgResult res = pcg(to_op(Q), rhs, pc, 1e-12, 5, sol);
  CHECK_FALSE(res.converged);
  CHECK(res.iters <= 5);
}

TEST_CASE("refresh transitions: small m goes straight to exact Cholesky") {
  std::mt19937_64 r(45);
  SpMat Q = random_spd(12, r);
  PreconditionerState pc = PreconditionerState::make(500);
  CHECK(pc.t_cg == 20);
  int nch = refresh_preconditioner(pc, Q, 500, 3);
  CHECK(nch == 1);
  CHECK(pc.mode == PreconditionerState::Mode::Cholesky);
  CHECK(pc.last_factor_iter == 3);
}

TEST_CASE("refresh transitions: large m tries incomplete Cholesky first") {
  PreconditionerState pc = PreconditionerState::make(20000);
  CHECK(pc.t_cg == 50);
  SpMat Q(20000, 20000);
  Q.setIdentity();
  int nch = refresh_preconditioner(pc, Q, 20000, 0);
  CHECK(nch == 1);
  CHECK(pc.mode == PreconditionerState::Mode::IncompleteCholesky);
  // second trip escalates to exact
  refresh_preconditioner(pc, Q, 20000, 1);
  CHECK(pc.mode == PreconditionerState::Mode::Cholesky);
}

TEST_CASE("after an exact refresh the next solve takes at most 2 iterations") {
  std::mt19937_64 r(46);
  for (int trial = 0; trial < 20; ++trial) {
    SpMat Q = random_spd(25, r);
    PreconditionerState pc = PreconditionerState::make(25);
    refresh_preconditioner(pc, Q, 25, 0);
    Vector rhs = oracle::randn_vec(25, r);
    Vector sol;
    PcgResult res = pcg(to_op(Q), rhs, pc, 1e-9, 20, sol);
    CHECK(res.converged);
    CHECK(res.iters <= 2);
  }
}

TEST_CASE("Cholesky of an indefinite matrix fails loudly") {
  SpMat Q(3, 3);
  Q.insert(0, 0) = 1.0;
  Q.insert(1, 1) = -1.0;
  Q.insert(2, 2) = 1.0;
  PreconditionerState pc = PreconditionerState::make(3);
  CHECK_THROWS_AS(refresh_preconditioner(pc, Q, 3, 0), CholeskyFailed);
}

TEST_CASE("IC(0) factors SPD matrices and solves exactly on full patterns") {
  std::mt19937_64 r(47);
  for (int trial = 0; trial < 20; ++trial) {
    SpMat Q = random_spd(15, r);  // dense pattern: IC(0) equals exact Cholesky
    Ic0Factor f = Ic0Factor::build(Q);
    Vector rhs = oracle::randn_vec(15, r);
    Vector got = f.solve(rhs);
    Vector ref = Matrix(Q).ldlt().solve(rhs);
    CHECK((got - ref).norm() <= 1e-8 * (1.0 + ref.norm()));
  }
}

TEST_CASE("IC(0) as a preconditioner on a sparse pattern") {
  // tridiagonal SPD
  const int n = 40;
  SpMat Q(n, n);
  for (int i = 0; i < n; ++i) {
    Q.insert(i, i) = 4.0;
    if (i > 0) Q.insert(i, i - 1) = -1.0;
    if (i + 1 < n) Q.insert(i, i + 1) = -1.0;
  }
  Q.makeCompressed();
  Ic0Factor f = Ic0Factor::build(Q);
  PreconditionerState pc = PreconditionerState::make(n);
  pc.ic = std::make_shared<Ic0Factor>(f);
  pc.mode = PreconditionerState::Mode::IncompleteCholesky;
  std::mt19937_64 r(48);
  Vector rhs = oracle::randn_vec(n, r);
  Vector sol;
  PcgResult res = pcg([&Q](const Vector& v) { return Vector(Q * v); }, rhs, pc, 1e-10, 30, sol);
  CHECK(res.converged);
  CHECK(res.iters <= 5);  // tridiagonal IC(0) is exact up to rounding
}

TEST_CASE("perturb_rhs scaling contract and determinism") {
  Vector b(2);
  b << 1, 0;
  std::mt19937_64 r1(7), r2(7);
  auto [b1, v1] = perturb_rhs(b, 1e-6, r1);
  CHECK((b1 - b).norm() == doctest::Approx(1e-6).epsilon(1e-12));
  CHECK(v1.norm() == doctest::Approx(1e-6).epsilon(1e-12));
  auto [b2, v2] = perturb_rhs(b, 1e-6, r2);
  CHECK((b1 - b2).norm() == 0.0);  // bit-identical under the same seed
  std::mt19937_64 r3(9);
  auto [b3, v3] = perturb_rhs(b, 0.0, r3);
  CHECK((b3 - b).norm() == 0.0);
}

TEST_CASE("masked perturbation touches only the masked coordinates") {
  Vector b = Vector::Zero(6);
  std::vector<uint8_t> mask{1, 0, 1, 0, 0, 1};
  std::mt19937_64 r(49);
  auto [b_eps, v] = perturb_rhs_masked(b, 1e-4, mask, r);
  CHECK(v.norm() == doctest::Approx(1e-4).epsilon(1e-12));
  CHECK(v[1] == 0.0);
  CHECK(v[3] == 0.0);
  CHECK(v[4] == 0.0);
  CHECK(v[0] != 0.0);
}
