#pragma once

#include "sdpf/geometry.hpp"

namespace sdpf {

/// Dual certificate for (SDP): multiplier lam, fixed-block dual Lambda, the
/// slack operator S = C - A^*(lam) - I_{n,k} Lambda I_{n,k}^T (kept as an
/// operator), s = c - B^T lam, and the scaled KKT residues.
struct DualCertificate {
  Vector lam;     // m
  Matrix Lambda;  // k x k, symmetrized
  Vector s;       // p
  double lambda_asym = 0.0;  // asymmetry of the raw Lambda formula

  double rp = 0.0;
  double rd = 0.0;
  double rc = 0.0;
  bool rd_is_upper_bound = false;
  std::string rd_path;  // "dense" or "lanczos"
};

DualCertificate build_certificate(const ConeProblem& prob, const FactorPoint& pt,
                                  const Vector& lam, const ObjectiveEval& ev);

/// S * V as an operator product (V is n x q).
Matrix apply_S(const ConeProblem& prob, const ObjectiveEval& ev, const DualCertificate& cert,
               const Matrix& V);

/// Fills rp/rd/rc in cert. Rp is measured against b_original regardless of
/// any perturbation used during the solve. The factorized feasibility
/// X psd, x >= 0 holds by construction and is not measured.
void kkt_residues(const ConeProblem& prob, const FactorPoint& pt, DualCertificate& cert,
                  const ObjectiveEval& ev, const Vector& b_original,
                  std::mt19937_64* rng = nullptr, int rd_dense_cutoff = 2000);

enum class RefineMetric { GramInverse, Identity };

struct RefineResult {
  Vector lam;
  bool ok = false;          // false: inner solve failed, lam is the input
  double inner_final_grad = 0.0;
  Vector inner_residual;    // K(X,x) - b at the inner optimum; lam = lam0 - M * this
};

/// Dual refinement: solves the unconstrained factorized model of the
/// regularized problem at the solver output and returns
/// lam0 - M (K(X, x) - b) with M = Q^{-1} applied through its Cholesky
/// factors (or M = I when requested). The inner primal point is discarded.
RefineResult refine_dual(const ConeProblem& prob, const FactorPoint& pt, const Vector& lam0,
                         uint64_t seed, RefineMetric metric = RefineMetric::GramInverse);

}  // namespace sdpf
