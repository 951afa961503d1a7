#pragma once

#include <functional>
#include <memory>
#include <optional>
#include <string>
#include <variant>
#include <vector>

#include "sdpf/symop.hpp"

namespace sdpf {

/// Handle for the objective gradient C = grad_X phi at a point. Everything
/// downstream (Riemannian gradient, escape operator, KKT residues) consumes
/// C through this interface, never as a dense matrix.
class GradOperator {
 public:
  virtual ~GradOperator() = default;
  virtual int order() const = 0;
  /// C * V for tall dense V (n x q).
  virtual Matrix apply(const Matrix& V) const = 0;
  /// <C, M> against a sparse-plus-low-rank M.
  virtual double inner(const SymOp& M) const = 0;
  /// M += C, dense accumulation (used by small-order eigendecompositions).
  virtual void add_to_dense(Matrix& M) const = 0;
  /// Frobenius norm of C (residue denominators).
  virtual double frob() const = 0;

  /// Trailing-block product C22 * V with V of height n-k.
  Matrix apply22(const Matrix& V, int k) const;
  /// <C That, That>.
  double quad(const Matrix& That) const;
};

using GradPtr = std::shared_ptr<const GradOperator>;

/// phi(X, x) = <C, X> + <c, x> with constant C.
struct LinearObjective {
  SymOp C;
  Vector c;
};

/// phi(X, x) = 1/2 sum_t (g_t^T X g_t - d_t)^2 (+ optional linear part).
struct QuadResidTerm {
  Eigen::SparseVector<double> g;
  double d = 0.0;
};
struct QuadraticResidualObjective {
  std::vector<QuadResidTerm> terms;
  bool has_linear = false;
  SymOp C0;   // linear part, valid when has_linear
  Vector c0;  // may be empty (treated as zero)
};

/// Caller-supplied callbacks. Convexity is trusted, not checked.
struct CustomObjective {
  std::function<double(const Matrix& That, const Vector& x)> value;
  std::function<GradPtr(const Matrix& That, const Vector& x)> grad_X;
  std::function<Vector(const Matrix& That, const Vector& x)> grad_x;
};

using Objective = std::variant<LinearObjective, QuadraticResidualObjective, CustomObjective>;

struct ObjectiveEval {
  double value = 0.0;
  GradPtr C;
  Vector c;  // grad_x phi, length p
};

/// The problem instance: min phi(X, x) over X psd with fixed leading k x k
/// identity block and x >= 0, subject to A(X) + B x = b. The fixed block is
/// never represented as constraint rows; it lives in the factorization.
struct ConeProblem {
  int n = 0;  // matrix order
  int k = 0;  // fixed-identity block size
  int p = 0;  // vector-variable length
  int m = 0;  // constraint count

  OpStack A;  // m symmetric operators on S^n
  SpMat B;    // m x p
  Vector b;   // length m
  Objective objective;

  std::string family;  // generator tag, informational
  // Recorded feasible start (bottom factor block and y), when the generator
  // provides one.
  std::optional<std::pair<Matrix, Vector>> init;

  void validate() const;          // throws DimensionError on inconsistency
  void finalize() { A.finalize(); validate(); }
};

/// [I_{k,r}; R] for a bottom block R ((n-k) x r, r >= k).
Matrix make_rhat(int k, const Matrix& R);

/// K(X, x) = A(X) + B x evaluated at X = That That^T without forming X.
Vector apply_K(const ConeProblem& prob, const Matrix& That, const Vector& x);

/// K(That That^T, x) - b_ref.
Vector residual_G(const ConeProblem& prob, const Matrix& That, const Vector& x,
                  const Vector& b_ref);

/// Objective value and gradient handles at (That That^T, x).
ObjectiveEval eval_objective(const ConeProblem& prob, const Matrix& That, const Vector& x);

GradPtr make_symop_grad(const SymOp& C);
/// C_base - A^*(mu), used by the dual-refinement inner problem.
GradPtr make_shifted_grad(GradPtr base, const OpStack& A, const Vector& mu);

}  // namespace sdpf
