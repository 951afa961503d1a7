#include "sdpf/geometry.hpp"

#include "sdpf/kernels.hpp"

namespace sdpf {

Matrix lr_apply_dense(int k, const Matrix& R, const Matrix& H) {
  const int nk = static_cast<int>(R.rows());
  const int r = static_cast<int>(R.cols());
  const int n = nk + k;
  if (H.rows() != nk || H.cols() != r) throw DimensionError("lr_apply_dense: shape mismatch");
  Matrix out = Matrix::Zero(n, n);
  // top-left block is zero; top-right is I_{k,r} H^T, bottom R H^T + H R^T.
  Matrix Ikr = Matrix::Zero(k, r);
  Ikr.leftCols(k).setIdentity();
  out.topRightCorner(k, nk) = Ikr * H.transpose();
  out.bottomLeftCorner(nk, k) = out.topRightCorner(k, nk).transpose();
  out.bottomRightCorner(nk, nk) = R * H.transpose() + H * R.transpose();
  return out;
}

namespace {

// Pads a bottom block to full height n (zero fixed-block rows).
Matrix pad_top(int k, const Matrix& bottom) {
  Matrix out = Matrix::Zero(k + bottom.rows(), bottom.cols());
  out.bottomRows(bottom.rows()) = bottom;
  return out;
}

// rowwise sum of Y o V: diag(Y V^T).
Vector diag_yvt(const Matrix& Y, const Matrix& V) {
  if (Y.size() == 0) return Vector::Zero(Y.rows());
  return (Y.array() * V.array()).rowwise().sum();
}

}  // namespace

Vector apply_DG(const ConeProblem& prob, const Matrix& Shat, const Matrix& Y,
                const Matrix& U, const Matrix& V) {
  // <A_i, L_S(U)> = 2 <J A_i Shat, U>
  Vector out;
  kernels::multi_inner(prob.A, Shat, pad_top(prob.k, U), out);
  out *= 2.0;
  if (prob.p > 0 && prob.m > 0) out += 2.0 * (prob.B * diag_yvt(Y, V));
  return out;
}

std::pair<Matrix, Matrix> apply_DG_adjoint(const ConeProblem& prob, const Matrix& Shat,
                                           const Matrix& Y, const Vector& lam) {
  Matrix W;
  kernels::weighted_apply(prob.A, lam, Shat, W);
  Matrix H = 2.0 * W.bottomRows(prob.n - prob.k);
  Matrix V;
  if (prob.p > 0) {
    Vector u = prob.B.transpose() * lam;
    V = 2.0 * (u.asDiagonal() * Y);
  } else {
    V.resize(0, Y.cols());
  }
  return {std::move(H), std::move(V)};
}

GramOperator::GramOperator(const ConeProblem& prob, Matrix Shat, Matrix Y)
    : prob_(&prob), Shat_(std::move(Shat)), Y_(std::move(Y)) {
  x_ = Y_.size() == 0 ? Vector::Zero(prob.p) : Vector((Y_.array() * Y_.array()).rowwise().sum());
}

Vector GramOperator::apply(const Vector& lam) const {
  Matrix W;
  kernels::weighted_apply(prob_->A, lam, Shat_, W);
  Vector out;
  kernels::multi_inner(prob_->A, Shat_, pad_top(prob_->k, Matrix(W.bottomRows(prob_->n - prob_->k))), out);
  out *= 4.0;
  if (prob_->p > 0) {
    Vector u = prob_->B.transpose() * lam;
    out += 4.0 * (prob_->B * u.cwiseProduct(x_));
  }
  return out;
}

Vector GramOperator::diag() const {
  Vector d;
  kernels::gram_diag(prob_->A, Shat_, prob_->k, d);
  d *= 4.0;
  if (prob_->p > 0) {
    for (int i = 0; i < prob_->B.outerSize(); ++i)
      for (SpMat::InnerIterator it(prob_->B, i); it; ++it)
        d[it.row()] += 4.0 * it.value() * it.value() * x_[it.col()];
  }
  return d;
}

SpMat GramOperator::assemble() const {
  SpMat Q = kernels::gram_assemble(prob_->A, Shat_, prob_->k);
  Q *= 4.0;
  if (prob_->p > 0 && prob_->B.nonZeros() > 0) {
    SpMat Bd = prob_->B * x_.asDiagonal();
    SpMat vec_part = Bd * prob_->B.transpose();
    Q += 4.0 * vec_part;
  }
  return Q;
}

MultiplierResult solve_multiplier(const GramOperator& gram, const Vector& rhs,
                                  const PreconditionerState& pc, LinsysStats& stats) {
  MultiplierResult res;
  res.lam = Vector::Zero(rhs.size());
  if (rhs.size() == 0) {
    res.converged = true;
    return res;
  }
  auto op = [&gram](const Vector& v) { return gram.apply(v); };
  PcgResult pr = pcg(op, rhs, pc, kPcgTol, pc.t_cg, res.lam);
  res.iters = pr.iters;
  res.converged = pr.converged;
  stats.cg_iters += pr.iters;
  stats.solves += 1;
  if (!pr.converged) stats.cap_hits += 1;
  return res;
}

TangentPair project_tangent(const ConeProblem& prob, const FactorPoint& pt, const Matrix& D,
                            const Vector& d, const PreconditionerState& pc, LinsysStats& stats,
                            Vector* lam_out) {
  const Matrix That = pt.rhat();
  Matrix Y = pt.y;
  Vector rhs = apply_DG(prob, That, Y, D, d);
  GramOperator gram(prob, That, Y);
  MultiplierResult mr = solve_multiplier(gram, rhs, pc, stats);
  auto [H, h] = apply_DG_adjoint(prob, That, Y, mr.lam);
  TangentPair out;
  out.H = D - H;
  out.h = prob.p > 0 ? Vector(d - h.col(0)) : Vector(d);
  if (lam_out) *lam_out = mr.lam;
  return out;
}

RiemannianGrad riemannian_grad(const ConeProblem& prob, const FactorPoint& pt,
                               const ObjectiveEval& ev, const PreconditionerState& pc,
                               LinsysStats& stats) {
  RiemannianGrad rg;
  const Matrix That = pt.rhat();
  rg.eucl_R = 2.0 * ev.C->apply(That).bottomRows(prob.n - prob.k);
  rg.eucl_y = prob.p > 0 ? Vector(2.0 * ev.c.cwiseProduct(pt.y)) : Vector::Zero(0);

  if (prob.m == 0) {
    rg.grad.H = rg.eucl_R;
    rg.grad.h = rg.eucl_y;
    rg.lam = Vector::Zero(0);
  } else {
    Matrix Y = pt.y;
    Vector rhs = apply_DG(prob, That, Y, rg.eucl_R, rg.eucl_y);
    GramOperator gram(prob, That, Y);
    MultiplierResult mr = solve_multiplier(gram, rhs, pc, stats);
    rg.multiplier_converged = mr.converged;
    rg.lam = mr.lam;
    auto [H, h] = apply_DG_adjoint(prob, That, Y, mr.lam);
    rg.grad.H = rg.eucl_R - H;
    rg.grad.h = prob.p > 0 ? Vector(rg.eucl_y - h.col(0)) : Vector::Zero(0);
  }
  rg.norm = std::sqrt(rg.grad.H.squaredNorm() + rg.grad.h.squaredNorm());
  return rg;
}

std::optional<VarietyPoint> newton_retract(const ConeProblem& prob, VarietyPoint start,
                                           const Vector& b_ref, const PreconditionerState& pc,
                                           LinsysStats& stats, double tol, int max_iter) {
  if (prob.m == 0) return start;  // the whole space is feasible
  const double target = tol * (1.0 + b_ref.norm());
  double g0 = -1.0;
  bool polished = false;
  VarietyPoint v = std::move(start);
  for (int it = 0; it <= max_iter; ++it) {
    Matrix Shat = v.shat();
    Vector g = apply_K(prob, Shat, v.x()) - b_ref;
    const double gn = g.norm();
    if (gn <= target) {
      // One extra correction once inside the tolerance: the quadratic tail
      // parks the residual at the numerical floor, so objective comparisons
      // between retracted points are not polluted by feasibility slack.
      if (polished || gn <= 0.01 * target) return v;
      polished = true;
    }
    if (it == max_iter) break;
    if (g0 < 0.0)
      g0 = gn;
    else if (!(gn < 1e4 * (g0 + 1.0)) || !std::isfinite(gn))
      break;  // diverging
    GramOperator gram(prob, Shat, v.Y);
    MultiplierResult mr = solve_multiplier(gram, g, pc, stats);
    auto [H, V] = apply_DG_adjoint(prob, Shat, v.Y, mr.lam);
    v.S -= H;
    if (prob.p > 0) v.Y -= V;
  }
  return std::nullopt;
}

}  // namespace sdpf
