#pragma once

#include <string>

#include "sdpf/problem.hpp"

namespace sdpf {

struct GraphData {
  int n = 0;
  // 1-based vertices, i < j, simple graph
  std::vector<std::tuple<int, int, double>> edges;
};

struct SelfLoopError : ParseError {
  explicit SelfLoopError(int line) : ParseError("self loop at line " + std::to_string(line)) {}
};
struct DuplicateEdgeError : ParseError {
  explicit DuplicateEdgeError(int line)
      : ParseError("duplicate edge at line " + std::to_string(line)) {}
};

/// Header "n m" followed by m lines "i j w" (Gset-compatible edge list).
GraphData read_graph(const std::string& path);
GraphData parse_graph(std::istream& in);
void write_graph(const GraphData& g, const std::string& path);

/// min -<ee^T, X> s.t. <I, X> = 1, X_ij = 0 on edges, X psd.
/// m = |E| + 1, k = 0, p = 0. Edge weights are ignored.
ConeProblem theta_problem(const GraphData& g);

/// SDP relaxation of min 1/2 z^T Q z + a^T z over the unit box: k = 1,
/// matrix order n+1, p = n slacks, m = n rows diag(Z) + x = z.
ConeProblem boxqp_problem(const Matrix& Q, const Vector& a);

/// Seeded box-constrained QP data: Q with off-diagonal density rho and
/// uniform integer entries in [-50, 50], a uniform in [-100, 100].
ConeProblem boxqp_random(int n, double rho, uint64_t seed);

struct SnlOptions {
  int sensors = 100;
  uint64_t seed = 0;
  double noise = 0.1;   // multiplicative (1 + noise * sigma)
  bool fixed_positions = false;
  Matrix positions;     // sensors x 3, used when fixed_positions
};

/// Sensor network localization with squared loss: 8 anchors at
/// (+-0.3, +-0.3, +-0.3), sensors uniform in [-0.5, 0.5]^3, neighbor radius
/// (15 / (pi p))^{1/3}, anchor radius 0.3, plus the -(1/p)<I - aa^T, X>
/// regularizer. k = 3, m = 0, p = 0.
ConeProblem snl_problem(const SnlOptions& opts);

/// Two same-size diagonal blocks emulated in one matrix of order
/// 2 * half_order; every A_i holds 3 upper-triangle entries per block, every
/// row of B 3 entries. b is the image of a recorded interior point and the
/// cost is built dual-feasibly, so the instance is solvable and phase 1
/// starts from the recorded factor.
ConeProblem random_sparse_problem(int half_order, int p, int m, uint64_t seed);

}  // namespace sdpf
