#include "sdpf/certificate.hpp"

#include <Eigen/Eigenvalues>

#include "sdpf/kernels.hpp"
#include "sdpf/saddle.hpp"
#include "sdpf/solver.hpp"

namespace sdpf {

DualCertificate build_certificate(const ConeProblem& prob, const FactorPoint& pt,
                                  const Vector& lam, const ObjectiveEval& ev) {
  DualCertificate cert;
  cert.lam = lam;
  const int n = prob.n, k = prob.k;

  if (k > 0) {
    Matrix Ink = Matrix::Zero(n, k);
    Ink.topRows(k).setIdentity();
    Matrix TC = ev.C->apply(Ink);  // C I_{n,k}
    Matrix TA = Matrix::Zero(n, k);
    if (prob.m > 0) kernels::weighted_apply(prob.A, lam, Ink, TA);
    Matrix M = TC - TA;  // (C - A^*(lam)) I_{n,k}
    Matrix raw = TC.topRows(k) + pt.R.leftCols(k).transpose() * M.bottomRows(n - k) -
                 TA.topRows(k);
    cert.Lambda = 0.5 * (raw + raw.transpose());
    cert.lambda_asym = 0.5 * (raw - raw.transpose()).norm();
  } else {
    cert.Lambda.resize(0, 0);
  }

  cert.s = Vector::Zero(prob.p);
  if (prob.p > 0) {
    cert.s = ev.c;
    if (prob.m > 0) cert.s -= prob.B.transpose() * lam;
  }
  return cert;
}

Matrix apply_S(const ConeProblem& prob, const ObjectiveEval& ev, const DualCertificate& cert,
               const Matrix& V) {
  Matrix out = ev.C->apply(V);
  if (prob.m > 0) {
    Matrix W;
    kernels::weighted_apply(prob.A, cert.lam, V, W);
    out -= W;
  }
  if (prob.k > 0) out.topRows(prob.k) -= cert.Lambda * V.topRows(prob.k);
  return out;
}

namespace {

Matrix dense_S(const ConeProblem& prob, const ObjectiveEval& ev, const DualCertificate& cert) {
  Matrix S = Matrix::Zero(prob.n, prob.n);
  ev.C->add_to_dense(S);
  for (int i = 0; i < prob.m; ++i)
    if (cert.lam[i] != 0.0) prob.A.ops[i].add_to_dense(S, -cert.lam[i]);
  if (prob.k > 0) S.topLeftCorner(prob.k, prob.k) -= cert.Lambda;
  return S;
}

}  // namespace

void kkt_residues(const ConeProblem& prob, const FactorPoint& pt, DualCertificate& cert,
                  const ObjectiveEval& ev, const Vector& b_original, std::mt19937_64* rng,
                  int rd_dense_cutoff) {
  const Matrix That = pt.rhat();
  const Vector x = pt.x();

  // Rp: the fixed-block term ||X_{1:k,1:k} - I_k|| vanishes identically in
  // the factorized representation.
  double pr_num = 0.0;
  if (prob.m > 0) pr_num = (apply_K(prob, That, x) - b_original).norm();
  cert.rp = pr_num / (1.0 + std::sqrt(b_original.squaredNorm() + prob.k));

  const double cnorm = ev.C->frob();
  const double denom = 1.0 + std::sqrt(cnorm * cnorm + ev.c.squaredNorm());

  // Rc via the contraction identity <S,X> + <s,x> =
  // <C,X> + <c,x> - lam^T K(X,x) - tr(Lambda).
  double comp = ev.C->quad(That) + ev.c.dot(x);
  if (prob.m > 0) comp -= cert.lam.dot(apply_K(prob, That, x));
  if (prob.k > 0) comp -= cert.Lambda.trace();
  cert.rc = std::abs(comp) / denom;

  // Rd: negative part of S (and of s).
  double neg2 = 0.0;
  cert.rd_is_upper_bound = false;
  if (prob.n <= rd_dense_cutoff) {
    cert.rd_path = "dense";
    Eigen::SelfAdjointEigenSolver<Matrix> es(dense_S(prob, ev, cert), Eigen::EigenvaluesOnly);
    for (int i = 0; i < es.eigenvalues().size(); ++i) {
      const double e = es.eigenvalues()[i];
      if (e < 0.0) neg2 += e * e;
    }
  } else {
    // Iterative path: peel eigenvalues below -1e-12 ||C|| off S by deflation.
    cert.rd_path = "lanczos";
    const double thresh = -1e-12 * std::max(1.0, cnorm);
    std::vector<Vector> found;
    std::vector<double> vals;
    std::mt19937_64 local_rng(12345);
    std::mt19937_64& r = rng ? *rng : local_rng;
    const double shift_up = 10.0 * (1.0 + cnorm);
    for (int round = 0; round < 64; ++round) {
      auto op = [&](const Vector& v) {
        Matrix out = apply_S(prob, ev, cert, v);
        Vector w = out.col(0);
        for (const auto& q : found) w += shift_up * q.dot(v) * q;
        return w;
      };
      auto res = lanczos_smallest(op, prob.n, 1e-8, 500, r);
      if (!res) {
        cert.rd_is_upper_bound = true;
        break;
      }
      if (res->first >= thresh) break;
      neg2 += res->first * res->first;
      found.push_back(res->second);
      vals.push_back(res->first);
      if (round == 63) cert.rd_is_upper_bound = true;
    }
  }
  double negs2 = 0.0;
  for (int j = 0; j < prob.p; ++j)
    if (cert.s[j] < 0.0) negs2 += cert.s[j] * cert.s[j];
  cert.rd = std::sqrt(neg2 + negs2) / denom;
}

RefineResult refine_dual(const ConeProblem& prob, const FactorPoint& pt, const Vector& lam0,
                         uint64_t seed, RefineMetric metric) {
  RefineResult out;
  out.lam = lam0;
  if (prob.m == 0) {
    out.ok = true;
    return out;
  }

  const Matrix That = pt.rhat();
  ObjectiveEval ev_star = eval_objective(prob, That, pt.x());
  GradPtr C_star = ev_star.C;
  Vector c_star = ev_star.c;

  // M = Q^{-1} through a (possibly shifted) Cholesky of the Gram matrix at
  // the solver output; any positive definite metric is admissible here.
  std::shared_ptr<Eigen::SimplicialLLT<SpMat>> llt;
  if (metric == RefineMetric::GramInverse) {
    SpMat Q = GramOperator(prob, That, Matrix(pt.y)).assemble();
    llt = std::make_shared<Eigen::SimplicialLLT<SpMat>>();
    llt->compute(Q);
    if (llt->info() != Eigen::Success) {
      double tr = 0.0;
      for (int j = 0; j < Q.rows(); ++j) tr += Q.coeff(j, j);
      double sigma = 1e-10 * std::max(tr / std::max(1, prob.m), 1.0);
      SpMat I(prob.m, prob.m);
      I.setIdentity();
      bool done = false;
      for (int tries = 0; tries < 30 && !done; ++tries, sigma *= 10.0) {
        llt->compute(SpMat(Q + sigma * I));
        done = llt->info() == Eigen::Success;
      }
      if (!done) return out;  // keep lam0, flag failure
    }
  }
  auto apply_M = [&](const Vector& v) -> Vector {
    if (metric == RefineMetric::Identity) return v;
    return llt->solve(v);
  };

  // Unconstrained inner model sharing the outer fixed block and vector sign
  // structure; its objective references the outer K and b.
  ConeProblem inner;
  inner.n = prob.n;
  inner.k = prob.k;
  inner.p = prob.p;
  inner.m = 0;
  inner.A.n = prob.n;
  inner.A.finalize();
  inner.b = Vector::Zero(0);
  CustomObjective cb;
  cb.value = [&prob, &apply_M, lam0, C_star, c_star](const Matrix& Th, const Vector& xx) {
    Vector v = apply_K(prob, Th, xx) - prob.b;
    Vector Mv = apply_M(v);
    double val = C_star->quad(Th) + c_star.dot(xx) - lam0.dot(v) + 0.5 * v.dot(Mv);
    return val;
  };
  cb.grad_X = [&prob, &apply_M, lam0, C_star](const Matrix& Th, const Vector& xx) -> GradPtr {
    Vector v = apply_K(prob, Th, xx) - prob.b;
    Vector mu = lam0 - apply_M(v);
    return make_shifted_grad(C_star, prob.A, mu);
  };
  cb.grad_x = [&prob, &apply_M, lam0, c_star](const Matrix& Th, const Vector& xx) -> Vector {
    if (prob.p == 0) return Vector::Zero(0);
    Vector v = apply_K(prob, Th, xx) - prob.b;
    Vector mu = lam0 - apply_M(v);
    return Vector(c_star - prob.B.transpose() * mu);
  };
  inner.objective = cb;
  inner.family = "refine";
  inner.validate();

  const int r_inner =
      static_cast<int>(std::ceil(std::sqrt(double(prob.k) * (prob.k + 1) + 2.0 * prob.m)));

  SolveOptions iopts;
  iopts.eps_g = 1e-7;  // feasibility quality of the refined dual is the point
  iopts.eps_h = 1e-6;
  iopts.r0 = std::max(std::max(r_inner, prob.k), 1);
  iopts.seed = seed;
  iopts.refine = false;
  iopts.compute_certificate = false;
  iopts.max_outer_iter = 500;

  // Start from the solver output, column-padded to the inner rank.
  FactorPoint start;
  start.k = prob.k;
  start.R = Matrix::Zero(prob.n - prob.k, std::max(iopts.r0, pt.rank()));
  start.R.leftCols(pt.rank()) = pt.R;
  start.y = pt.y;
  start.support.assign(prob.p, 1);

  try {
    SolveResult inner_res = solve(inner, iopts, start);
    out.inner_final_grad = inner_res.report.grad_norm;
    Vector v = apply_K(prob, inner_res.point.rhat(), inner_res.point.x()) - prob.b;
    out.inner_residual = v;
    out.lam = lam0 - apply_M(v);
    out.ok = true;
  } catch (const std::exception&) {
    out.ok = false;  // keep lam0
  }
  return out;
}

}  // namespace sdpf
