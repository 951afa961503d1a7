#pragma once

#include <vector>

#include "sdpf/types.hpp"

namespace sdpf {

/// Symmetric operator on S^n stored as a sparse part plus an optional
/// weighted low-rank part:  A = S + U diag(w) U^T.
///
/// The sparse part is kept as upper-triangle triplets (the canonical,
/// serializable form) and compiled into a mirrored row-grouped layout for
/// fast products against tall dense matrices.
struct SymOp {
  int n = 0;
  std::vector<Triplet> upper;  // i <= j entries of the sparse part
  Matrix lowrank;              // n x q, q == 0 when absent
  Vector lowrank_w;            // q weights

  // Compiled mirrored layout (filled by finalize()):
  // distinct rows touched by the sparse part, each with its column/value run.
  std::vector<int> rows;
  std::vector<int> rptr;  // rows.size()+1 offsets into rcol/rval
  std::vector<int> rcol;
  std::vector<double> rval;

  bool finalized() const { return rptr.size() == rows.size() + 1; }

  /// Mirrors the upper triangle and groups entries by row. Throws
  /// DimensionError on out-of-range indices. Symmetry of the stored data is
  /// implied by construction (only i <= j is accepted).
  void finalize();

  int lowrank_cols() const { return static_cast<int>(lowrank.cols()); }

  /// A * T for tall dense T (n x q).
  Matrix apply(const Matrix& T) const;

  /// <A T, W> = <A, W T^T> for n x q dense T, W.
  double inner(const Matrix& T, const Matrix& W) const;

  /// <A, T T^T>.
  double quad(const Matrix& T) const { return inner(T, T); }

  /// M += scale * A (dense accumulation, small n only).
  void add_to_dense(Matrix& M, double scale = 1.0) const;

  Matrix dense() const;

  /// Squared Frobenius norm of S + U diag(w) U^T.
  double frob_sq() const;

  static SymOp identity(int n);
  /// (E_ij + E_ji) * scale for i != j, E_ii * scale for i == j.
  static SymOp single_entry(int n, int i, int j, double scale);
};

/// Sum of two operators (sparse parts concatenate, low-rank parts stack).
SymOp add(const SymOp& a, const SymOp& b, double wa = 1.0, double wb = 1.0);

/// A set of SymOps over the same S^n plus an inverted row index across all
/// sparse parts, so adjoint-type accumulations can be partitioned by output
/// row without write conflicts.
struct OpStack {
  int n = 0;
  std::vector<SymOp> ops;

  // Inverted index: for output row a, entries (col, op, val) of every
  // mirrored sparse triplet with row a.
  std::vector<int> xptr;  // n+1
  std::vector<int> xcol;
  std::vector<int> xop;
  std::vector<double> xval;
  std::vector<int> lowrank_ops;  // ids of ops carrying a low-rank part

  int size() const { return static_cast<int>(ops.size()); }
  void finalize();
};

}  // namespace sdpf
