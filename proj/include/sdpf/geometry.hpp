#pragma once

#include <optional>

#include "sdpf/linsolve.hpp"
#include "sdpf/problem.hpp"

namespace sdpf {

constexpr double kRetractionTol = 1e-8;
constexpr double kPcgTol = 1e-9;
constexpr int kRetractionMaxIter = 50;

/// The (SDPR) iterate: bottom factor block R, vector y with its support
/// mask. X = Rhat Rhat^T and x = y o y are derived, never stored densely.
struct FactorPoint {
  int k = 0;
  Matrix R;  // (n-k) x r
  Vector y;  // p
  std::vector<uint8_t> support;

  int rank() const { return static_cast<int>(R.cols()); }
  Matrix rhat() const { return make_rhat(k, R); }
  Vector x() const { return y.cwiseProduct(y); }
  void refresh_support() {
    support.assign(y.size(), 0);
    for (int j = 0; j < y.size(); ++j) support[j] = y[j] != 0.0;
  }
};

/// Iterate with a multi-column vector block Y (p x q). q = 1 reproduces the
/// ordinary variety; q = 2 is the augmented set used by the escape step,
/// with x = diag(Y Y^T).
struct VarietyPoint {
  int k = 0;
  Matrix S;  // (n-k) x rc
  Matrix Y;  // p x q
  Matrix shat() const { return make_rhat(k, S); }
  Vector x() const { return Y.size() == 0 ? Vector::Zero(Y.rows()) : Vector((Y.array() * Y.array()).rowwise().sum()); }

  static VarietyPoint from_factor(const FactorPoint& pt) {
    VarietyPoint v;
    v.k = pt.k;
    v.S = pt.R;
    v.Y = pt.y;
    return v;
  }
  /// Collapse Y back to a single nonnegative column sqrt(diag(Y Y^T)).
  FactorPoint to_factor() const {
    FactorPoint pt;
    pt.k = k;
    pt.R = S;
    pt.y = x().cwiseSqrt();
    pt.refresh_support();
    return pt;
  }
};

/// Accumulated linear-system counters for one solve.
struct LinsysStats {
  long cg_iters = 0;
  long solves = 0;
  long cholesky = 0;
  int cap_hits = 0;  // PCG solves that hit t_cg (escalation signals)
};

/// L_R(H): the differential of R -> Rhat Rhat^T, materialized densely. Test
/// and small-order use; the solver only ever touches it through inner
/// products inside apply_DG.
Matrix lr_apply_dense(int k, const Matrix& R, const Matrix& H);

/// D G(S,Y)[(U,V)] = K(L_S(U), 2 diag(Y V^T)).
Vector apply_DG(const ConeProblem& prob, const Matrix& Shat, const Matrix& Y,
                const Matrix& U, const Matrix& V);

/// D G(S,Y)^*[lam] = 2 (J A^*(lam) Shat, diag(B^T lam) Y).
std::pair<Matrix, Matrix> apply_DG_adjoint(const ConeProblem& prob, const Matrix& Shat,
                                           const Matrix& Y, const Vector& lam);

/// The SPD system operator D G o D G^* of the multiplier equation.
/// Matrix-free by default; assemble() produces the sparse form for the
/// Cholesky-based preconditioners.
class GramOperator {
 public:
  GramOperator(const ConeProblem& prob, Matrix Shat, Matrix Y);
  int m() const { return prob_->m; }
  Vector apply(const Vector& lam) const;
  Vector diag() const;
  SpMat assemble() const;

 private:
  const ConeProblem* prob_;
  Matrix Shat_;
  Matrix Y_;
  Vector x_;
};

struct MultiplierResult {
  Vector lam;
  int iters = 0;
  bool converged = false;
};

/// Solves (D G D G^*) lam = rhs by PCG at tolerance kPcgTol, capped at
/// pc.t_cg iterations. A cap hit is an escalation signal, not a failure.
MultiplierResult solve_multiplier(const GramOperator& gram, const Vector& rhs,
                                  const PreconditionerState& pc, LinsysStats& stats);

struct TangentPair {
  Matrix H;  // (n-k) x r
  Vector h;  // p
};

/// Orthogonal projection of (D, d) onto the tangent space at pt.
TangentPair project_tangent(const ConeProblem& prob, const FactorPoint& pt, const Matrix& D,
                            const Vector& d, const PreconditionerState& pc, LinsysStats& stats,
                            Vector* lam_out = nullptr);

struct RiemannianGrad {
  TangentPair grad;
  Vector lam;       // multiplier of the projection system
  Matrix eucl_R;    // 2 J C Rhat
  Vector eucl_y;    // 2 c o y
  double norm = 0;  // sqrt(||H||^2 + ||h||^2)
  bool multiplier_converged = true;
};

RiemannianGrad riemannian_grad(const ConeProblem& prob, const FactorPoint& pt,
                               const ObjectiveEval& ev, const PreconditionerState& pc,
                               LinsysStats& stats);

/// Gauss-Newton feasibility restoration: from the ambient point `start`,
/// iterate v <- v - DG(v)^*[(DG DG^*)^{-1} G(v)] until ||G|| <=
/// tol*(1+||b_ref||). Returns nullopt after kRetractionMaxIter corrections
/// (the caller halves its step and retries). Zero rows of Y stay zero.
std::optional<VarietyPoint> newton_retract(const ConeProblem& prob, VarietyPoint start,
                                           const Vector& b_ref, const PreconditionerState& pc,
                                           LinsysStats& stats, double tol = kRetractionTol,
                                           int max_iter = kRetractionMaxIter);

}  // namespace sdpf
