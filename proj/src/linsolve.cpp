#include "sdpf/linsolve.hpp"

#include <cmath>

namespace sdpf {

Vector Ic0Factor::solve(const Vector& r) const {
  const int n = static_cast<int>(L.rows());
  Vector x = r;
  // forward: L y = r
  for (int j = 0; j < n; ++j) {
    double diag = 0.0;
    for (SpMat::InnerIterator it(L, j); it; ++it) {
      if (it.row() == j) {
        diag = it.value();
        break;
      }
    }
    x[j] /= diag;
    for (SpMat::InnerIterator it(L, j); it; ++it)
      if (it.row() > j) x[it.row()] -= it.value() * x[j];
  }
  // backward: L^T z = y
  for (int j = n - 1; j >= 0; --j) {
    double diag = 0.0, acc = 0.0;
    for (SpMat::InnerIterator it(L, j); it; ++it) {
      if (it.row() == j)
        diag = it.value();
      else if (it.row() > j)
        acc += it.value() * x[it.row()];
    }
    x[j] = (x[j] - acc) / diag;
  }
  return x;
}

namespace {

bool try_ic0(const SpMat& Q, double shift, SpMat& L_out) {
  const int n = static_cast<int>(Q.rows());
  // Column-major lower-triangle copy of Q with a guaranteed diagonal slot
  // (+ shift), so a structurally missing diagonal can still be salvaged.
  std::vector<std::vector<std::pair<int, double>>> cols(n);
  for (int j = 0; j < n; ++j) {
    bool has_diag = false;
    for (SpMat::InnerIterator it(Q, j); it; ++it) {
      if (it.row() < j) continue;
      double v = it.value();
      if (it.row() == j) {
        v += shift;
        has_diag = true;
        cols[j].insert(cols[j].begin(), {j, v});
        continue;
      }
      cols[j].emplace_back(it.row(), v);
    }
    if (!has_diag) cols[j].insert(cols[j].begin(), {j, shift});
  }
  // Left-looking IC(0): column j is updated by every previous column k with
  // L(j,k) != 0, restricted to the pattern of column j.
  std::vector<double> work(n, 0.0);
  std::vector<std::vector<std::pair<int, double>>> L(n);         // computed columns
  std::vector<std::vector<std::pair<int, double>>> row_list(n);  // j -> (k, L_jk)
  for (int j = 0; j < n; ++j) {
    for (auto& [i, v] : cols[j]) work[i] = v;
    for (auto& [kcol, ljk] : row_list[j]) {
      for (auto& [i, lik] : L[kcol])
        if (i >= j && work[i] != 0.0) work[i] -= lik * ljk;  // pattern-restricted
    }
    double djj = work[j];
    if (!(djj > 0.0)) {
      for (auto& [i, v] : cols[j]) work[i] = 0.0;
      return false;
    }
    const double root = std::sqrt(djj);
    L[j].reserve(cols[j].size());
    for (auto& [i, v] : cols[j]) {
      const double lij = i == j ? root : work[i] / root;
      L[j].emplace_back(i, lij);
      if (i != j) row_list[i].emplace_back(j, lij);
      work[i] = 0.0;
    }
  }
  std::vector<Triplet> trips;
  for (int j = 0; j < n; ++j)
    for (auto& [i, v] : L[j]) trips.emplace_back(i, j, v);
  L_out.resize(n, n);
  L_out.setFromTriplets(trips.begin(), trips.end());
  return true;
}

}  // namespace

Ic0Factor Ic0Factor::build(const SpMat& Q) {
  Ic0Factor f;
  const int m = static_cast<int>(Q.rows());
  double trace = 0.0;
  for (int j = 0; j < m; ++j) trace += Q.coeff(j, j);
  double sigma = 0.0;
  for (int attempt = 0; attempt < 12; ++attempt) {
    if (try_ic0(Q, sigma, f.L)) {
      f.shift = sigma;
      return f;
    }
    sigma = sigma == 0.0 ? 1e-8 * trace / std::max(1, m) : 2.0 * sigma;
  }
  throw CholeskyFailed();
}

Vector PreconditionerState::apply(const Vector& r) const {
  switch (mode) {
    case Mode::Cholesky:
      return llt->solve(r);
    case Mode::IncompleteCholesky:
      return ic->solve(r);
    case Mode::Diagonal:
    default:
      if (inv_diag.size() == r.size()) return inv_diag.cwiseProduct(r);
      return r;
  }
}

void PreconditionerState::set_diag(const Vector& q_diag) {
  const double floor = 1e-14 * std::max(1.0, q_diag.maxCoeff());
  inv_diag = q_diag.unaryExpr([floor](double d) { return 1.0 / std::max(d, floor); });
}

PcgResult pcg(const LinOp& op, const Vector& rhs, const PreconditionerState& pc,
              double tol, int max_iter, Vector& sol) {
  PcgResult res;
  const double target = tol * (1.0 + rhs.norm());
  if (sol.size() != rhs.size()) sol = Vector::Zero(rhs.size());
  if (rhs.size() == 0) {
    res.converged = true;
    return res;
  }

  Vector r = rhs - (sol.isZero(0) ? Vector(Vector::Zero(rhs.size())) : Vector(op(sol)));
  if (r.norm() <= target) {
    res.converged = true;
    return res;
  }
  Vector z = pc.apply(r);
  Vector p = z;
  double rz = r.dot(z);

  for (int it = 0; it < max_iter; ++it) {
    Vector qp = op(p);
    const double pqp = p.dot(qp);
    if (!(pqp > 0.0) || !std::isfinite(pqp)) {
      // Singular or indefinite direction: report as a cap hit so the caller
      // escalates along the perturbation path.
      res.iters = max_iter;
      return res;
    }
    const double alpha = rz / pqp;
    sol += alpha * p;
    r -= alpha * qp;
    ++res.iters;
    if (r.norm() <= target) {
      // Validate against the true residual; the recurrence can drift.
      Vector true_r = rhs - op(sol);
      if (true_r.norm() <= target) {
        res.converged = true;
        return res;
      }
      r = true_r;
    }
    z = pc.apply(r);
    const double rz_new = r.dot(z);
    p = z + (rz_new / rz) * p;
    rz = rz_new;
  }
  return res;
}

int refresh_preconditioner(PreconditionerState& pc, const SpMat& Q, int m, int outer_iter) {
  if (m >= 10000 && pc.mode == PreconditionerState::Mode::Diagonal) {
    pc.ic = std::make_shared<Ic0Factor>(Ic0Factor::build(Q));
    pc.mode = PreconditionerState::Mode::IncompleteCholesky;
    pc.last_factor_iter = outer_iter;
    return 1;
  }
  auto llt = std::make_shared<Eigen::SimplicialLLT<SpMat>>();
  llt->compute(Q);
  if (llt->info() != Eigen::Success) throw CholeskyFailed();
  pc.llt = std::move(llt);
  pc.mode = PreconditionerState::Mode::Cholesky;
  pc.last_factor_iter = outer_iter;
  return 1;
}

std::pair<Vector, Vector> perturb_rhs(const Vector& b, double eps, std::mt19937_64& rng) {
  return perturb_rhs_masked(b, eps, {}, rng);
}

std::pair<Vector, Vector> perturb_rhs_masked(const Vector& b, double eps,
                                             const std::vector<uint8_t>& mask,
                                             std::mt19937_64& rng) {
  if (eps <= 0.0 || b.size() == 0) return {b, Vector::Zero(b.size())};
  std::normal_distribution<double> gauss(0.0, 1.0);
  Vector v(b.size());
  for (int i = 0; i < b.size(); ++i) v[i] = gauss(rng);
  if (!mask.empty()) {
    for (int i = 0; i < b.size(); ++i)
      if (i >= static_cast<int>(mask.size()) || !mask[i]) v[i] = 0.0;
  }
  const double nv = v.norm();
  if (nv == 0.0) return {b, Vector::Zero(b.size())};
  v *= eps / nv;
  return {b + v, v};
}

}  // namespace sdpf
