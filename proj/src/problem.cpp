#include "sdpf/problem.hpp"

#include "sdpf/kernels.hpp"

namespace sdpf {

Matrix GradOperator::apply22(const Matrix& V, int k) const {
  const int n = order();
  Matrix full = Matrix::Zero(n, V.cols());
  full.bottomRows(n - k) = V;
  return apply(full).bottomRows(n - k);
}

double GradOperator::quad(const Matrix& That) const {
  return (apply(That).cwiseProduct(That)).sum();
}

namespace {

class SymOpGrad final : public GradOperator {
 public:
  explicit SymOpGrad(SymOp op) : op_(std::move(op)) {
    if (!op_.finalized()) op_.finalize();
  }
  int order() const override { return op_.n; }
  Matrix apply(const Matrix& V) const override { return op_.apply(V); }
  double inner(const SymOp& M) const override {
    // <C, S + U diag(w) U^T> over the sparse triplets of M plus quadratic
    // forms against M's low-rank columns.
    double acc = 0.0;
    for (size_t ri = 0; ri < M.rows.size(); ++ri) {
      const int a = M.rows[ri];
      for (int e = M.rptr[ri]; e < M.rptr[ri + 1]; ++e) acc += M.rval[e] * entry(a, M.rcol[e]);
    }
    for (int j = 0; j < M.lowrank_cols(); ++j) {
      Matrix u = M.lowrank.col(j);
      acc += M.lowrank_w[j] * (op_.apply(u).col(0).dot(u.col(0)));
    }
    return acc;
  }
  void add_to_dense(Matrix& M) const override { op_.add_to_dense(M); }
  double frob() const override { return std::sqrt(op_.frob_sq()); }

 private:
  double entry(int a, int b) const {
    double v = 0.0;
    auto it = std::lower_bound(op_.rows.begin(), op_.rows.end(), a);
    if (it != op_.rows.end() && *it == a) {
      const size_t ri = static_cast<size_t>(it - op_.rows.begin());
      for (int e = op_.rptr[ri]; e < op_.rptr[ri + 1]; ++e)
        if (op_.rcol[e] == b) v += op_.rval[e];
    }
    for (int j = 0; j < op_.lowrank_cols(); ++j)
      v += op_.lowrank_w[j] * op_.lowrank(a, j) * op_.lowrank(b, j);
    return v;
  }
  SymOp op_;
};

// Gradient of the squared-residual objective: C = G diag(w) G^T + C0 with
// weights w_t = g_t^T X g_t - d_t at the evaluation point.
class QuadResidGrad final : public GradOperator {
 public:
  QuadResidGrad(const QuadraticResidualObjective* obj, int n, Vector w)
      : obj_(obj), n_(n), w_(std::move(w)) {}
  int order() const override { return n_; }
  Matrix apply(const Matrix& V) const override {
    Matrix out = Matrix::Zero(n_, V.cols());
    for (size_t t = 0; t < obj_->terms.size(); ++t) {
      if (w_[t] == 0.0) continue;
      const auto& g = obj_->terms[t].g;
      Eigen::RowVectorXd gv = Eigen::RowVectorXd::Zero(V.cols());
      for (Eigen::SparseVector<double>::InnerIterator it(g); it; ++it)
        gv += it.value() * V.row(it.index());
      for (Eigen::SparseVector<double>::InnerIterator it(g); it; ++it)
        out.row(it.index()) += (w_[t] * it.value()) * gv;
    }
    if (obj_->has_linear) out += obj_->C0.apply(V);
    return out;
  }
  double inner(const SymOp& M) const override {
    double acc = 0.0;
    for (size_t t = 0; t < obj_->terms.size(); ++t) {
      if (w_[t] == 0.0) continue;
      Matrix u = Matrix::Zero(n_, 1);
      for (Eigen::SparseVector<double>::InnerIterator it(obj_->terms[t].g); it; ++it)
        u(it.index(), 0) = it.value();
      acc += w_[t] * M.inner(u, u);  // w_t * <M, g g^T>
    }
    if (obj_->has_linear) {
      SymOpGrad c0(obj_->C0);
      acc += c0.inner(M);
    }
    return acc;
  }
  void add_to_dense(Matrix& M) const override {
    for (size_t t = 0; t < obj_->terms.size(); ++t) {
      if (w_[t] == 0.0) continue;
      Vector u = Vector::Zero(n_);
      for (Eigen::SparseVector<double>::InnerIterator it(obj_->terms[t].g); it; ++it)
        u[it.index()] = it.value();
      M.noalias() += w_[t] * u * u.transpose();
    }
    if (obj_->has_linear) obj_->C0.add_to_dense(M);
  }
  double frob() const override {
    // ||G W G^T + C0|| via the T x T Gram matrix of the g_t.
    const int T = static_cast<int>(obj_->terms.size());
    Matrix G(T, T);
    for (int s = 0; s < T; ++s)
      for (int t = s; t < T; ++t) {
        double d = obj_->terms[s].g.dot(obj_->terms[t].g);
        G(s, t) = d;
        G(t, s) = d;
      }
    Matrix GW = G * w_.asDiagonal();
    double total = (GW.array() * GW.transpose().array()).sum();
    if (obj_->has_linear) {
      total += obj_->C0.frob_sq();
      for (int t = 0; t < T; ++t) {
        if (w_[t] == 0.0) continue;
        Matrix u = Matrix::Zero(n_, 1);
        for (Eigen::SparseVector<double>::InnerIterator it(obj_->terms[t].g); it; ++it)
          u(it.index(), 0) = it.value();
        total += 2.0 * w_[t] * obj_->C0.inner(u, u);
      }
    }
    return std::sqrt(std::max(0.0, total));
  }

 private:
  const QuadraticResidualObjective* obj_;
  int n_;
  Vector w_;
};

class ShiftedGrad final : public GradOperator {
 public:
  ShiftedGrad(GradPtr base, const OpStack* A, Vector mu)
      : base_(std::move(base)), A_(A), mu_(std::move(mu)) {}
  int order() const override { return base_->order(); }
  Matrix apply(const Matrix& V) const override {
    Matrix out;
    kernels::weighted_apply(*A_, mu_, V, out);
    return base_->apply(V) - out;
  }
  double inner(const SymOp& M) const override {
    double acc = base_->inner(M);
    for (int i = 0; i < A_->size(); ++i) {
      if (mu_[i] == 0.0) continue;
      SymOpGrad ai(A_->ops[i]);
      acc -= mu_[i] * ai.inner(M);
    }
    return acc;
  }
  void add_to_dense(Matrix& M) const override {
    base_->add_to_dense(M);
    for (int i = 0; i < A_->size(); ++i)
      if (mu_[i] != 0.0) A_->ops[i].add_to_dense(M, -mu_[i]);
  }
  double frob() const override {
    Matrix M = Matrix::Zero(order(), order());
    add_to_dense(M);
    return M.norm();
  }

 private:
  GradPtr base_;
  const OpStack* A_;
  Vector mu_;
};

}  // namespace

GradPtr make_symop_grad(const SymOp& C) { return std::make_shared<SymOpGrad>(C); }

GradPtr make_shifted_grad(GradPtr base, const OpStack& A, const Vector& mu) {
  return std::make_shared<ShiftedGrad>(std::move(base), &A, mu);
}

void ConeProblem::validate() const {
  if (k < 0 || k > n || p < 0 || m < 0) throw DimensionError("ConeProblem: bad sizes");
  if (A.size() != m) throw DimensionError("ConeProblem: |A| != m");
  if (A.n != n) throw DimensionError("ConeProblem: A order mismatch");
  if (b.size() != m) throw DimensionError("ConeProblem: dim(b) != m");
  if (m > 0) {
    if (B.rows() != m) throw DimensionError("ConeProblem: rows(B) != m");
    if (B.cols() != p) throw DimensionError("ConeProblem: cols(B) != p");
  }
  if (const auto* lin = std::get_if<LinearObjective>(&objective)) {
    if (lin->C.n != n) throw DimensionError("ConeProblem: objective C order mismatch");
    if (lin->c.size() != p) throw DimensionError("ConeProblem: dim(c) != p");
  }
}

Matrix make_rhat(int k, const Matrix& R) {
  const int r = static_cast<int>(R.cols());
  if (r < k) throw DimensionError("make_rhat: rank below fixed block size");
  Matrix That(k + R.rows(), r);
  That.topRows(k).setZero();
  That.topLeftCorner(k, k).setIdentity();
  That.bottomRows(R.rows()) = R;
  return That;
}

Vector apply_K(const ConeProblem& prob, const Matrix& That, const Vector& x) {
  if (That.rows() != prob.n) throw DimensionError("apply_K: factor height mismatch");
  if (x.size() != prob.p) throw DimensionError("apply_K: vector length mismatch");
  Vector out;
  kernels::multi_inner(prob.A, That, That, out);
  if (prob.p > 0 && prob.m > 0) out += prob.B * x;
  return out;
}

Vector residual_G(const ConeProblem& prob, const Matrix& That, const Vector& x,
                  const Vector& b_ref) {
  return apply_K(prob, That, x) - b_ref;
}

ObjectiveEval eval_objective(const ConeProblem& prob, const Matrix& That, const Vector& x) {
  ObjectiveEval ev;
  if (const auto* lin = std::get_if<LinearObjective>(&prob.objective)) {
    ev.C = make_symop_grad(lin->C);
    ev.c = lin->c;
    ev.value = ev.C->quad(That) + lin->c.dot(x);
    return ev;
  }
  if (const auto* qr = std::get_if<QuadraticResidualObjective>(&prob.objective)) {
    const int T = static_cast<int>(qr->terms.size());
    Vector w(T);
    double val = 0.0;
    for (int t = 0; t < T; ++t) {
      const auto& g = qr->terms[t].g;
      Eigen::RowVectorXd gR = Eigen::RowVectorXd::Zero(That.cols());
      for (Eigen::SparseVector<double>::InnerIterator it(g); it; ++it)
        gR += it.value() * That.row(it.index());
      w[t] = gR.squaredNorm() - qr->terms[t].d;
      val += 0.5 * w[t] * w[t];
    }
    ev.C = std::make_shared<QuadResidGrad>(qr, prob.n, w);
    ev.c = qr->c0.size() == prob.p && prob.p > 0 ? qr->c0 : Vector::Zero(prob.p);
    if (qr->has_linear) {
      val += SymOpGrad(qr->C0).quad(That);
      val += ev.c.dot(x);
    }
    ev.value = val;
    return ev;
  }
  const auto& cb = std::get<CustomObjective>(prob.objective);
  ev.value = cb.value(That, x);
  ev.C = cb.grad_X(That, x);
  ev.c = cb.grad_x ? cb.grad_x(That, x) : Vector::Zero(prob.p);
  return ev;
}

}  // namespace sdpf
