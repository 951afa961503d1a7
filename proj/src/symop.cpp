#include "sdpf/symop.hpp"

#include <algorithm>
#include <map>

namespace sdpf {

void SymOp::finalize() {
  rows.clear();
  rptr.clear();
  rcol.clear();
  rval.clear();

  // Mirror upper-triangle entries and coalesce duplicates.
  std::map<std::pair<int, int>, double> full;
  for (const auto& t : upper) {
    if (t.row() < 0 || t.col() < 0 || t.row() >= n || t.col() >= n)
      throw DimensionError("SymOp entry out of range");
    if (t.row() > t.col()) throw DimensionError("SymOp expects upper-triangle triplets");
    full[{t.row(), t.col()}] += t.value();
    if (t.row() != t.col()) full[{t.col(), t.row()}] += t.value();
  }
  if (lowrank.size() > 0) {
    if (lowrank.rows() != n || lowrank.cols() != lowrank_w.size())
      throw DimensionError("SymOp low-rank part has inconsistent shape");
  }

  int cur_row = -1;
  for (const auto& [ij, v] : full) {
    if (v == 0.0) continue;
    if (ij.first != cur_row) {
      rows.push_back(ij.first);
      rptr.push_back(static_cast<int>(rcol.size()));
      cur_row = ij.first;
    }
    rcol.push_back(ij.second);
    rval.push_back(v);
  }
  rptr.push_back(static_cast<int>(rcol.size()));
}

Matrix SymOp::apply(const Matrix& T) const {
  if (T.rows() != n) throw DimensionError("SymOp::apply: row mismatch");
  Matrix out = Matrix::Zero(n, T.cols());
  for (size_t ri = 0; ri < rows.size(); ++ri) {
    const int a = rows[ri];
    for (int e = rptr[ri]; e < rptr[ri + 1]; ++e)
      out.row(a) += rval[e] * T.row(rcol[e]);
  }
  if (lowrank.cols() > 0) {
    Matrix P = lowrank.transpose() * T;           // q x c
    out.noalias() += lowrank * (lowrank_w.asDiagonal() * P);
  }
  return out;
}

double SymOp::inner(const Matrix& T, const Matrix& W) const {
  double acc = 0.0;
  for (size_t ri = 0; ri < rows.size(); ++ri) {
    const int a = rows[ri];
    for (int e = rptr[ri]; e < rptr[ri + 1]; ++e)
      acc += rval[e] * T.row(rcol[e]).dot(W.row(a));
  }
  if (lowrank.cols() > 0) {
    Matrix P = lowrank.transpose() * T;  // q x c
    Matrix Q = lowrank.transpose() * W;  // q x c
    acc += (lowrank_w.asDiagonal() * P).cwiseProduct(Q).sum();
  }
  return acc;
}

void SymOp::add_to_dense(Matrix& M, double scale) const {
  for (size_t ri = 0; ri < rows.size(); ++ri) {
    const int a = rows[ri];
    for (int e = rptr[ri]; e < rptr[ri + 1]; ++e) M(a, rcol[e]) += scale * rval[e];
  }
  for (int j = 0; j < lowrank.cols(); ++j)
    M.noalias() += (scale * lowrank_w[j]) * lowrank.col(j) * lowrank.col(j).transpose();
}

Matrix SymOp::dense() const {
  Matrix M = Matrix::Zero(n, n);
  add_to_dense(M);
  return M;
}

double SymOp::frob_sq() const {
  double s2 = 0.0;
  for (double v : rval) s2 += v * v;  // mirrored entries already counted twice
  if (lowrank.cols() == 0) return s2;
  // ||S + U W U^T||^2 = ||S||^2 + 2 <S, U W U^T> + tr((U^T U W)^2)
  double cross = 0.0;
  for (int j = 0; j < lowrank.cols(); ++j) {
    const Vector& u = lowrank.col(j);
    double uSu = 0.0;
    for (size_t ri = 0; ri < rows.size(); ++ri) {
      const int a = rows[ri];
      for (int e = rptr[ri]; e < rptr[ri + 1]; ++e) uSu += rval[e] * u[rcol[e]] * u[a];
    }
    cross += lowrank_w[j] * uSu;
  }
  Matrix G = lowrank.transpose() * lowrank;  // q x q
  Matrix GW = G * lowrank_w.asDiagonal();
  double lr2 = (GW.array() * GW.transpose().array()).sum();
  return s2 + 2.0 * cross + lr2;
}

SymOp SymOp::identity(int n) {
  SymOp op;
  op.n = n;
  op.upper.reserve(n);
  for (int i = 0; i < n; ++i) op.upper.emplace_back(i, i, 1.0);
  op.finalize();
  return op;
}

SymOp SymOp::single_entry(int n, int i, int j, double scale) {
  SymOp op;
  op.n = n;
  if (i > j) std::swap(i, j);
  op.upper.emplace_back(i, j, scale);
  op.finalize();
  return op;
}

SymOp add(const SymOp& a, const SymOp& b, double wa, double wb) {
  if (a.n != b.n) throw DimensionError("SymOp add: order mismatch");
  SymOp out;
  out.n = a.n;
  out.upper.reserve(a.upper.size() + b.upper.size());
  for (const auto& t : a.upper) out.upper.emplace_back(t.row(), t.col(), wa * t.value());
  for (const auto& t : b.upper) out.upper.emplace_back(t.row(), t.col(), wb * t.value());
  const int qa = a.lowrank_cols(), qb = b.lowrank_cols();
  if (qa + qb > 0) {
    out.lowrank.resize(out.n, qa + qb);
    out.lowrank_w.resize(qa + qb);
    if (qa > 0) {
      out.lowrank.leftCols(qa) = a.lowrank;
      out.lowrank_w.head(qa) = wa * a.lowrank_w;
    }
    if (qb > 0) {
      out.lowrank.rightCols(qb) = b.lowrank;
      out.lowrank_w.tail(qb) = wb * b.lowrank_w;
    }
  }
  out.finalize();
  return out;
}

void OpStack::finalize() {
  xptr.assign(n + 1, 0);
  xcol.clear();
  xop.clear();
  xval.clear();
  lowrank_ops.clear();

  for (int i = 0; i < size(); ++i) {
    SymOp& op = ops[i];
    if (op.n != n) throw DimensionError("OpStack: operator order mismatch");
    if (!op.finalized()) op.finalize();
    if (op.lowrank_cols() > 0) lowrank_ops.push_back(i);
  }

  std::vector<int> counts(n, 0);
  for (const auto& op : ops)
    for (size_t ri = 0; ri < op.rows.size(); ++ri)
      counts[op.rows[ri]] += op.rptr[ri + 1] - op.rptr[ri];
  for (int a = 0; a < n; ++a) xptr[a + 1] = xptr[a] + counts[a];

  const int nnz = xptr[n];
  xcol.resize(nnz);
  xop.resize(nnz);
  xval.resize(nnz);
  std::vector<int> fill(xptr.begin(), xptr.end() - 1);
  for (int i = 0; i < size(); ++i) {
    const SymOp& op = ops[i];
    for (size_t ri = 0; ri < op.rows.size(); ++ri) {
      const int a = op.rows[ri];
      for (int e = op.rptr[ri]; e < op.rptr[ri + 1]; ++e) {
        const int pos = fill[a]++;
        xcol[pos] = op.rcol[e];
        xop[pos] = i;
        xval[pos] = op.rval[e];
      }
    }
  }
}

}  // namespace sdpf
