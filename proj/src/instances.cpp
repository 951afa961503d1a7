#include "sdpf/instances.hpp"

#include <cmath>
#include <fstream>
#include <map>
#include <random>
#include <set>
#include <sstream>

namespace sdpf {

GraphData parse_graph(std::istream& in) {
  GraphData g;
  std::string line;
  int lineno = 0;
  auto next_line = [&]() -> bool {
    while (std::getline(in, line)) {
      ++lineno;
      if (line.find_first_not_of(" \t\r\n") != std::string::npos) return true;
    }
    return false;
  };
  if (!next_line()) throw ParseError("empty graph file");
  std::istringstream hdr(line);
  long m = 0;
  if (!(hdr >> g.n >> m) || g.n <= 0 || m < 0)
    throw ParseError("bad header at line " + std::to_string(lineno));
  std::set<std::pair<int, int>> seen;
  for (long e = 0; e < m; ++e) {
    if (!next_line()) throw ParseError("unexpected end of file after line " + std::to_string(lineno));
    std::istringstream ls(line);
    int i = 0, j = 0;
    double w = 1.0;
    if (!(ls >> i >> j)) throw ParseError("bad edge at line " + std::to_string(lineno));
    ls >> w;  // optional weight
    if (i < 1 || j < 1 || i > g.n || j > g.n)
      throw ParseError("vertex out of range at line " + std::to_string(lineno));
    if (i == j) throw SelfLoopError(lineno);
    if (i > j) std::swap(i, j);
    if (!seen.insert({i, j}).second) throw DuplicateEdgeError(lineno);
    g.edges.emplace_back(i, j, w);
  }
  return g;
}

GraphData read_graph(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ParseError("cannot open graph file: " + path);
  return parse_graph(in);
}

void write_graph(const GraphData& g, const std::string& path) {
  std::ofstream out(path);
  out << g.n << " " << g.edges.size() << "\n";
  for (const auto& [i, j, w] : g.edges) out << i << " " << j << " " << w << "\n";
}

ConeProblem theta_problem(const GraphData& g) {
  ConeProblem prob;
  prob.n = g.n;
  prob.k = 0;
  prob.p = 0;
  prob.m = static_cast<int>(g.edges.size()) + 1;
  prob.family = "theta";

  prob.A.n = g.n;
  prob.A.ops.reserve(prob.m);
  for (const auto& [i, j, w] : g.edges) {
    (void)w;  // constraints are X_ij = 0 regardless of the weight
    prob.A.ops.push_back(SymOp::single_entry(g.n, i - 1, j - 1, 0.5));
  }
  prob.A.ops.push_back(SymOp::identity(g.n));

  prob.b = Vector::Zero(prob.m);
  prob.b[prob.m - 1] = 1.0;
  prob.B.resize(prob.m, 0);

  LinearObjective obj;
  obj.C.n = g.n;
  obj.C.lowrank = Matrix::Ones(g.n, 1);
  obj.C.lowrank_w = Vector::Constant(1, -1.0);
  obj.C.finalize();
  obj.c = Vector::Zero(0);
  prob.objective = std::move(obj);

  prob.finalize();
  return prob;
}

ConeProblem boxqp_problem(const Matrix& Q, const Vector& a) {
  const int n = static_cast<int>(Q.rows());
  if (Q.cols() != n || a.size() != n) throw DimensionError("boxqp_problem: bad Q or a");
  ConeProblem prob;
  prob.n = n + 1;
  prob.k = 1;
  prob.p = n;
  prob.m = n;
  prob.family = "boxqp";

  prob.A.n = n + 1;
  prob.A.ops.reserve(n);
  for (int i = 0; i < n; ++i) {
    SymOp op;
    op.n = n + 1;
    op.upper.emplace_back(i + 1, i + 1, 1.0);   // Z_ii
    op.upper.emplace_back(0, i + 1, -0.5);      // -z_i
    op.finalize();
    prob.A.ops.push_back(std::move(op));
  }
  prob.B.resize(n, n);
  prob.B.setIdentity();
  prob.b = Vector::Zero(n);

  LinearObjective obj;
  obj.C.n = n + 1;
  for (int i = 0; i < n; ++i) {
    obj.C.upper.emplace_back(0, i + 1, a[i] / 2.0);
    for (int j = i; j < n; ++j)
      if (Q(i, j) != 0.0) obj.C.upper.emplace_back(i + 1, j + 1, Q(i, j) / 2.0);
  }
  obj.C.finalize();
  obj.c = Vector::Zero(n);
  prob.objective = std::move(obj);

  prob.finalize();
  return prob;
}

ConeProblem boxqp_random(int n, double rho, uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_int_distribution<int> qval(-50, 50);
  std::uniform_int_distribution<int> aval(-100, 100);
  std::uniform_real_distribution<double> coin(0.0, 1.0);
  Matrix Q = Matrix::Zero(n, n);
  for (int i = 0; i < n; ++i) {
    Q(i, i) = qval(rng);
    for (int j = i + 1; j < n; ++j) {
      if (coin(rng) < rho) {
        Q(i, j) = qval(rng);
        Q(j, i) = Q(i, j);
      }
    }
  }
  Vector a(n);
  for (int i = 0; i < n; ++i) a[i] = aval(rng);
  return boxqp_problem(Q, a);
}

ConeProblem snl_problem(const SnlOptions& sopt) {
  const int d = 3, q = 8;
  const int p = sopt.sensors;
  if (p < 1) throw DimensionError("snl_problem: need at least one sensor");
  std::mt19937_64 rng(sopt.seed);
  std::uniform_real_distribution<double> unif(-0.5, 0.5);
  std::normal_distribution<double> gauss(0.0, 1.0);

  Matrix anchors(q, d);
  for (int i = 0; i < q; ++i)
    for (int c = 0; c < d; ++c) anchors(i, c) = (i >> c) & 1 ? 0.3 : -0.3;

  Matrix pos(p, d);
  if (sopt.fixed_positions) {
    if (sopt.positions.rows() != p || sopt.positions.cols() != d)
      throw DimensionError("snl_problem: positions shape mismatch");
    pos = sopt.positions;
  } else {
    for (int i = 0; i < p; ++i)
      for (int c = 0; c < d; ++c) pos(i, c) = unif(rng);
  }

  const int n = d + p;
  ConeProblem prob;
  prob.n = n;
  prob.k = d;
  prob.p = 0;
  prob.m = 0;
  prob.family = "snl";
  prob.A.n = n;
  prob.A.finalize();
  prob.b = Vector::Zero(0);
  prob.B.resize(0, 0);

  QuadraticResidualObjective obj;
  const double radius = std::cbrt(15.0 / (M_PI * p));
  for (int i = 0; i < p; ++i) {
    for (int j = i + 1; j < p; ++j) {
      const double dist = (pos.row(i) - pos.row(j)).norm();
      if (dist > radius) continue;
      QuadResidTerm term;
      term.g.resize(n);
      term.g.insert(d + i) = 1.0;
      term.g.insert(d + j) = -1.0;
      const double noisy = (1.0 + sopt.noise * gauss(rng)) * dist;
      term.d = noisy * noisy;
      obj.terms.push_back(std::move(term));
    }
  }
  for (int i = 0; i < p; ++i) {
    for (int a = 0; a < q; ++a) {
      const double dist = (pos.row(i) - anchors.row(a)).norm();
      if (dist > 0.3) continue;
      QuadResidTerm term;
      term.g.resize(n);
      for (int c = 0; c < d; ++c)
        if (anchors(a, c) != 0.0) term.g.insert(c) = -anchors(a, c);
      term.g.insert(d + i) = 1.0;
      const double noisy = (1.0 + sopt.noise * gauss(rng)) * dist;
      term.d = noisy * noisy;
      obj.terms.push_back(std::move(term));
    }
  }

  // Regularizer -(1/p) <I - a a^T, X> with a = [ahat; ehat].
  Vector avec(n);
  for (int c = 0; c < d; ++c) avec[c] = anchors.col(c).sum() / std::sqrt(double(p + q));
  avec.tail(p).setConstant(1.0 / std::sqrt(double(p + q)));
  obj.has_linear = true;
  obj.C0.n = n;
  for (int i = 0; i < n; ++i) obj.C0.upper.emplace_back(i, i, -1.0 / p);
  obj.C0.lowrank = avec;
  obj.C0.lowrank_w = Vector::Constant(1, 1.0 / p);
  obj.C0.finalize();
  obj.c0 = Vector::Zero(0);
  prob.objective = std::move(obj);

  prob.finalize();
  return prob;
}

ConeProblem random_sparse_problem(int half_order, int p, int m, uint64_t seed) {
  if (m < 1) throw DimensionError("random_sparse_problem: need m >= 1");
  const int n = 2 * half_order;
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> gauss(0.0, 1.0);
  std::uniform_int_distribution<int> vtx(0, half_order - 1);
  std::uniform_int_distribution<int> col(0, std::max(0, p - 1));

  ConeProblem prob;
  prob.n = n;
  prob.k = 0;
  prob.p = p;
  prob.m = m;
  prob.family = "random";
  prob.A.n = n;
  prob.A.ops.reserve(m);

  for (int i = 0; i < m; ++i) {
    SymOp op;
    op.n = n;
    for (int blk = 0; blk < 2; ++blk) {
      const int off = blk * half_order;
      for (int t = 0; t < 3; ++t) {
        int a = vtx(rng), b = vtx(rng);
        if (a > b) std::swap(a, b);
        op.upper.emplace_back(off + a, off + b, gauss(rng));
      }
    }
    op.finalize();
    prob.A.ops.push_back(std::move(op));
  }

  std::vector<Triplet> btrips;
  if (p > 0) {
    for (int i = 0; i < m; ++i)
      for (int t = 0; t < 3; ++t) btrips.emplace_back(i, col(rng), gauss(rng));
  }
  prob.B.resize(m, p);
  prob.B.setFromTriplets(btrips.begin(), btrips.end());

  // Interior primal point: X0 = R0 R0^T with a well-conditioned factor,
  // x0 = y0 o y0 > 0. b is its image, so Omega_r is nonempty and phase 1
  // starts from the recorded factor.
  const int r0 = static_cast<int>(std::ceil(std::sqrt(2.0 * m)));
  Matrix R0(n, std::max(r0, 1));
  for (int i = 0; i < R0.rows(); ++i)
    for (int j = 0; j < R0.cols(); ++j) R0(i, j) = gauss(rng) / std::sqrt(double(R0.cols()));
  Vector y0(p);
  for (int j = 0; j < p; ++j) y0[j] = 0.5 + std::abs(gauss(rng));

  // Dual-feasible cost: C = A^*(lhat) + S0 with S0 > 0 and c = B^T lhat + s0
  // with s0 > 0, so the instance is bounded below with an attained optimum.
  Vector lhat(m);
  for (int i = 0; i < m; ++i) lhat[i] = gauss(rng);
  LinearObjective obj;
  obj.C.n = n;
  std::map<std::pair<int, int>, double> centries;
  for (int i = 0; i < m; ++i)
    for (const auto& t : prob.A.ops[i].upper)
      centries[{t.row(), t.col()}] += lhat[i] * t.value();
  for (int i = 0; i < n; ++i) centries[{i, i}] += 1.0 + std::abs(gauss(rng));  // S0 diagonal
  for (const auto& [ij, v] : centries) obj.C.upper.emplace_back(ij.first, ij.second, v);
  obj.C.finalize();
  obj.c = Vector::Zero(p);
  if (p > 0) {
    obj.c = prob.B.transpose() * lhat;
    for (int j = 0; j < p; ++j) obj.c[j] += 0.5 + std::abs(gauss(rng));
  }
  prob.objective = std::move(obj);

  prob.b = Vector::Zero(m);
  prob.finalize();
  prob.b = apply_K(prob, R0, y0.cwiseProduct(y0));
  prob.init = std::make_pair(R0, y0);
  return prob;
}

}  // namespace sdpf
