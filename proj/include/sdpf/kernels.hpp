#pragma once

#include "sdpf/symop.hpp"

namespace sdpf::kernels {

// Data-parallel primitives behind every constraint-side product. Each comes
// in a serial reference version (seq_*) and an OpenMP version (par_*); the
// unprefixed name dispatches on the configured worker count. The seq/par
// pair is compared directly by tests and by the bench tool.

/// out[i] = <ops[i] T, W>   (T, W are n x q dense).
void seq_multi_inner(const OpStack& s, const Matrix& T, const Matrix& W, Vector& out);
void par_multi_inner(const OpStack& s, const Matrix& T, const Matrix& W, Vector& out);
void multi_inner(const OpStack& s, const Matrix& T, const Matrix& W, Vector& out);

/// out = sum_i lam[i] * ops[i] * T.
void seq_weighted_apply(const OpStack& s, const Vector& lam, const Matrix& T, Matrix& out);
void par_weighted_apply(const OpStack& s, const Vector& lam, const Matrix& T, Matrix& out);
void weighted_apply(const OpStack& s, const Vector& lam, const Matrix& T, Matrix& out);

/// out[i] = || bottom n-k rows of ops[i] * That ||_F^2.
void seq_gram_diag(const OpStack& s, const Matrix& That, int k, Vector& out);
void par_gram_diag(const OpStack& s, const Matrix& That, int k, Vector& out);
void gram_diag(const OpStack& s, const Matrix& That, int k, Vector& out);

/// Sparse m x m matrix with G_ij = < J ops[i] That, J ops[j] That >, J the
/// selector of the bottom n-k rows. Only index pairs whose sparse supports
/// share a row are touched; ops with low-rank parts fall back to dense rows.
SpMat seq_gram_assemble(const OpStack& s, const Matrix& That, int k);
SpMat par_gram_assemble(const OpStack& s, const Matrix& That, int k);
SpMat gram_assemble(const OpStack& s, const Matrix& That, int k);

}  // namespace sdpf::kernels
