#pragma once

#include <Eigen/SparseCholesky>

#include <functional>
#include <memory>
#include <random>

#include "sdpf/types.hpp"

namespace sdpf {

struct CholeskyFailed : std::runtime_error {
  CholeskyFailed() : std::runtime_error("Cholesky factorization failed: matrix not PD") {}
};

/// Zero fill-in incomplete Cholesky on the lower-triangle pattern of Q,
/// with a diagonal shift applied on breakdown.
struct Ic0Factor {
  SpMat L;  // lower triangular, column-compressed
  double shift = 0.0;
  Vector solve(const Vector& r) const;
  /// Builds IC(0); retries with shift sigma = 1e-8 * trace(Q)/m (doubling)
  /// on breakdown. Throws CholeskyFailed when even the shifted pattern dies.
  static Ic0Factor build(const SpMat& Q);
};

struct PreconditionerState {
  enum class Mode { Diagonal, IncompleteCholesky, Cholesky };

  Mode mode = Mode::Diagonal;
  int t_cg = 20;            // 20 when m < 10000, else 50
  int trip_count = 0;       // times a PCG solve hit the cap
  bool perturbed = false;   // b has been perturbed at least once
  int last_factor_iter = -1;

  Vector inv_diag;  // Diagonal mode
  std::shared_ptr<Eigen::SimplicialLLT<SpMat>> llt;
  std::shared_ptr<Ic0Factor> ic;

  static int default_t_cg(int m) { return m < 10000 ? 20 : 50; }
  static PreconditionerState make(int m) {
    PreconditionerState pc;
    pc.t_cg = default_t_cg(m);
    return pc;
  }

  Vector apply(const Vector& r) const;
  void set_diag(const Vector& q_diag);
};

struct PcgResult {
  int iters = 0;
  bool converged = false;
};

using LinOp = std::function<Vector(const Vector&)>;

/// Preconditioned conjugate gradients. converged => ||op sol - rhs|| <=
/// tol * (1 + ||rhs||). Never throws; returns converged=false at the cap.
PcgResult pcg(const LinOp& op, const Vector& rhs, const PreconditionerState& pc,
              double tol, int max_iter, Vector& sol);

/// Mode escalation after a PCG solve hits t_cg: m >= 10000 tries incomplete
/// Cholesky first and switches to exact on the next trip; smaller problems
/// go straight to exact. Increments the caller's Cholesky counter via the
/// return value (number of factorizations performed, 0 or 1).
/// Throws CholeskyFailed when the exact factorization finds Q not PD.
int refresh_preconditioner(PreconditionerState& pc, const SpMat& Q, int m, int outer_iter);

/// b + v with Gaussian v scaled so ||v|| = eps exactly; returns (b_eps, v).
std::pair<Vector, Vector> perturb_rhs(const Vector& b, double eps, std::mt19937_64& rng);

/// Same, with the draw restricted to the masked coordinates (mask[i] != 0);
/// an empty mask perturbs everything.
std::pair<Vector, Vector> perturb_rhs_masked(const Vector& b, double eps,
                                             const std::vector<uint8_t>& mask,
                                             std::mt19937_64& rng);

}  // namespace sdpf
