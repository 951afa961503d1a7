#pragma once

#include <optional>
#include <random>

#include "sdpf/geometry.hpp"

namespace sdpf {

struct EigSolverStagnated : std::runtime_error {
  EigSolverStagnated() : std::runtime_error("Lanczos failed to converge the smallest eigenvalue") {}
};

/// Violation certificate of the second stationarity condition: the most
/// negative value of <W, H H^T> + <s, h o h> over unit-norm directions,
/// realized either by the eigenvector of W = C22 - A~^*(lam) or by a single
/// coordinate of s = c - B^T lam.
struct EscapeDirection {
  double xi = 0.0;
  enum class Kind { Matrix, VectorCoord } kind = Kind::Matrix;
  Vector v;   // unit eigenvector, Matrix kind
  int j = -1; // coordinate, VectorCoord kind
  int tau = 1;
};

/// Matrix-free smallest eigenpair by Lanczos with full reorthogonalization,
/// block size 1. Returns nullopt when the relative residual tolerance is not
/// reached within max_iter.
std::optional<std::pair<double, Vector>> lanczos_smallest(
    const std::function<Vector(const Vector&)>& op, int dim, double tol, int max_iter,
    std::mt19937_64& rng);

EscapeDirection escape_direction(const ConeProblem& prob, const FactorPoint& pt,
                                 const ObjectiveEval& ev, const Vector& lam, int tau,
                                 std::mt19937_64& rng);

struct EscapeOutcome {
  FactorPoint point;
  double t = 0.0;
  double f_new = 0.0;
  bool accepted = false;
  int revived = -1;  // support index revived by a vector-kind escape
};

/// Armijo backtracking on the augmented set: appends tau factor columns and
/// one vector column, steps along the escape direction, retracts, and
/// accepts when f_new <= f_old + c_h' * xi * t^2 (c_h' = 0.5, t0 = 1,
/// delta = 1/2). Returns accepted=false after max_backtracks failures.
EscapeOutcome escape_step(const ConeProblem& prob, const FactorPoint& pt,
                          const EscapeDirection& dir, double f_old, const Vector& b_ref,
                          const PreconditionerState& pc, LinsysStats& stats,
                          int max_backtracks = 30);

}  // namespace sdpf
