#include "sdpf/saddle.hpp"

#include <Eigen/Eigenvalues>

#include "sdpf/kernels.hpp"

namespace sdpf {

namespace {

constexpr int kDenseEigCutoff = 50;     // below this, skip Lanczos entirely
constexpr int kDenseEigFallback = 2000; // Lanczos stagnation fallback bound
constexpr int kLanczosMaxIter = 500;
constexpr double kLanczosTol = 1e-8;

// W = C22 - A~^*(lam) as a matrix-free operator on R^{n-k}.
struct EscapeOperator {
  const ConeProblem* prob;
  const GradOperator* C;
  const Vector* lam;

  Vector apply(const Vector& v) const {
    const int n = prob->n, k = prob->k;
    Matrix u = Matrix::Zero(n, 1);
    u.bottomRows(n - k) = v;
    Vector out = C->apply(u).bottomRows(n - k);
    if (prob->m > 0) {
      Matrix W;
      kernels::weighted_apply(prob->A, *lam, u, W);
      out -= W.bottomRows(n - k).col(0);
    }
    return out;
  }

  Matrix dense() const {
    const int n = prob->n, k = prob->k;
    Matrix full = Matrix::Zero(n, n);
    C->add_to_dense(full);
    for (int i = 0; i < prob->A.size(); ++i)
      if ((*lam)[i] != 0.0) prob->A.ops[i].add_to_dense(full, -(*lam)[i]);
    return full.bottomRightCorner(n - k, n - k);
  }
};

}  // namespace

std::optional<std::pair<double, Vector>> lanczos_smallest(
    const std::function<Vector(const Vector&)>& op, int dim, double tol, int max_iter,
    std::mt19937_64& rng) {
  if (dim == 1) {
    Vector e1 = Vector::Ones(1);
    return std::make_pair(op(e1)[0], e1);
  }
  std::normal_distribution<double> gauss(0.0, 1.0);
  Vector q(dim);
  for (int i = 0; i < dim; ++i) q[i] = gauss(rng);
  q.normalize();

  const int cap = std::min(max_iter, dim);
  Matrix V(dim, cap);
  Vector alpha(cap), beta(cap);
  V.col(0) = q;
  Vector w;
  for (int j = 0; j < cap; ++j) {
    w = op(V.col(j));
    alpha[j] = V.col(j).dot(w);
    w -= alpha[j] * V.col(j);
    if (j > 0) w -= beta[j - 1] * V.col(j - 1);
    // full reorthogonalization, twice for stability
    for (int pass = 0; pass < 2; ++pass)
      w -= V.leftCols(j + 1) * (V.leftCols(j + 1).transpose() * w);

    // Ritz values of the current tridiagonal section
    Matrix T = Matrix::Zero(j + 1, j + 1);
    for (int i = 0; i <= j; ++i) {
      T(i, i) = alpha[i];
      if (i > 0) {
        T(i, i - 1) = beta[i - 1];
        T(i - 1, i) = beta[i - 1];
      }
    }
    Eigen::SelfAdjointEigenSolver<Matrix> es(T);
    const double theta = es.eigenvalues()[0];
    const Vector y = es.eigenvectors().col(0);
    const double bnorm = w.norm();
    const double resid = bnorm * std::abs(y[j]);
    if (resid <= tol * std::max(1.0, std::abs(theta)) || bnorm <= 1e-300 || j + 1 == dim) {
      Vector ritz = V.leftCols(j + 1) * y;
      ritz.normalize();
      if (resid <= tol * std::max(1.0, std::abs(theta)) || j + 1 == dim)
        return std::make_pair(theta, ritz);
      return std::nullopt;  // invariant subspace hit without convergence
    }
    if (j + 1 < cap) {
      beta[j] = bnorm;
      V.col(j + 1) = w / bnorm;
    }
  }
  return std::nullopt;
}

EscapeDirection escape_direction(const ConeProblem& prob, const FactorPoint& pt,
                                 const ObjectiveEval& ev, const Vector& lam, int tau,
                                 std::mt19937_64& rng) {
  (void)pt;  // the escape operator depends on the point only through ev and lam
  EscapeDirection dir;
  dir.tau = tau;
  const int nk = prob.n - prob.k;

  EscapeOperator W{&prob, ev.C.get(), &lam};
  double eig_min;
  Vector eig_vec;
  if (nk <= kDenseEigCutoff) {
    Eigen::SelfAdjointEigenSolver<Matrix> es(W.dense());
    eig_min = es.eigenvalues()[0];
    eig_vec = es.eigenvectors().col(0);
  } else {
    auto apply = [&W](const Vector& v) { return W.apply(v); };
    auto res = lanczos_smallest(apply, nk, kLanczosTol, kLanczosMaxIter, rng);
    if (!res) {
      if (nk > kDenseEigFallback) throw EigSolverStagnated();
      Eigen::SelfAdjointEigenSolver<Matrix> es(W.dense());
      res = std::make_pair(es.eigenvalues()[0], Vector(es.eigenvectors().col(0)));
    }
    eig_min = res->first;
    eig_vec = res->second;
  }

  double s_min = std::numeric_limits<double>::infinity();
  int s_arg = -1;
  if (prob.p > 0) {
    Vector s = ev.c;
    if (prob.m > 0) s -= prob.B.transpose() * lam;
    for (int j = 0; j < prob.p; ++j)
      if (s[j] < s_min) {
        s_min = s[j];
        s_arg = j;
      }
  }

  // Ties break toward the matrix direction.
  if (s_arg >= 0 && s_min < eig_min) {
    dir.kind = EscapeDirection::Kind::VectorCoord;
    dir.xi = s_min;
    dir.j = s_arg;
  } else {
    dir.kind = EscapeDirection::Kind::Matrix;
    dir.xi = eig_min;
    dir.v = eig_vec;
  }
  return dir;
}

EscapeOutcome escape_step(const ConeProblem& prob, const FactorPoint& pt,
                          const EscapeDirection& dir, double f_old, const Vector& b_ref,
                          const PreconditionerState& pc, LinsysStats& stats,
                          int max_backtracks) {
  EscapeOutcome out;
  out.point = pt;
  if (dir.xi >= 0.0) return out;  // the t = 0 branch

  const int nk = prob.n - prob.k;
  const int r = pt.rank();
  const int tau = dir.tau;

  VarietyPoint base;
  base.k = prob.k;
  base.S = Matrix::Zero(nk, r + tau);
  base.S.leftCols(r) = pt.R;
  base.Y = Matrix::Zero(prob.p, 2);
  if (prob.p > 0) base.Y.col(0) = pt.y;

  Matrix U = Matrix::Zero(nk, r + tau);
  Matrix V = Matrix::Zero(prob.p, 2);
  if (dir.kind == EscapeDirection::Kind::Matrix)
    U.col(r) = dir.v;
  else
    V(dir.j, 1) = 1.0;

  // Below this step size the required decrease is not measurable in double
  // precision; accepting there would just grow the rank on noise.
  const double noise_floor = 8.0 * std::numeric_limits<double>::epsilon() * (1.0 + std::abs(f_old));
  double t = 1.0;
  for (int bt = 0; bt <= max_backtracks; ++bt, t *= 0.5) {
    if (0.5 * (-dir.xi) * t * t < noise_floor) break;
    VarietyPoint trial = base;
    trial.S += t * U;
    if (prob.p > 0) trial.Y += t * V;
    auto retracted = newton_retract(prob, trial, b_ref, pc, stats);
    if (!retracted) continue;
    Matrix Shat = retracted->shat();
    const double f_new = eval_objective(prob, Shat, retracted->x()).value;
    if (f_new <= f_old + 0.5 * dir.xi * t * t) {
      out.point = retracted->to_factor();
      // the support never shrinks here: keep transiently zero entries alive
      for (int j = 0; j < prob.p; ++j)
        out.point.support[j] = out.point.support[j] || pt.support[j];
      out.t = t;
      out.f_new = f_new;
      out.accepted = true;
      if (dir.kind == EscapeDirection::Kind::VectorCoord && out.point.y[dir.j] != 0.0)
        out.revived = dir.j;
      return out;
    }
  }
  return out;  // accepted = false: line-search failure, caller decides
}

}  // namespace sdpf
