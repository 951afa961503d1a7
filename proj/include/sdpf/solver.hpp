#pragma once

#include <deque>

#include "sdpf/certificate.hpp"
#include "sdpf/saddle.hpp"

namespace sdpf {

struct InfeasibleError : std::runtime_error {
  InfeasibleError() : std::runtime_error("no feasible point found in phase 1") {}
};

enum class SolveStatus { Stationary, MaxIter, TimeOut, LineSearchFailed };

const char* to_string(SolveStatus s);

struct SolveOptions {
  double eps_g = 1e-5;
  double eps_h = 1e-6;
  int r0 = -1;  // default ceil(sqrt(2m + k(k+1)))
  int tau = 1;
  double kappa1 = 10.0;
  double kappa2 = 1e4;
  int max_reduction_events = 20;
  int max_outer_iter = 2000;
  double max_time_seconds = 3600.0;
  int nonmonotone_window = 5;
  double bb_min = 1e-10;
  double bb_max = 1e10;
  double armijo_c1 = 1e-4;
  double perturb_magnitude = -1.0;       // default 1e-7 * (1 + ||b||)
  std::vector<uint8_t> perturb_mask;     // empty: perturb every coordinate
  uint64_t seed = 0;
  bool refine = true;                    // run dual refinement when m > 0
  bool compute_certificate = true;
  int t_cg_override = -1;                // -1: 20 if m < 10000 else 50
  bool verbose = false;

  void validate() const;
};

struct EscapeEvent {
  long iter = 0;
  double xi = 0.0;
  double t = 0.0;
  double f_before = 0.0;
  double f_after = 0.0;
  bool matrix_kind = true;
  int revived = -1;
};

struct ReductionEvent {
  long iter = 0;
  int r_before = 0;
  int r_after = 0;
  int support_dropped = 0;
  bool accepted = false;
};

struct SolveReport {
  SolveStatus status = SolveStatus::MaxIter;
  double objective = 0.0;
  double grad_norm = 0.0;  // recomputed at the returned point
  double xi = 0.0;         // recomputed at the returned point

  std::vector<double> objective_trajectory;  // one entry per outer iteration
  std::vector<int> rank_history;
  std::vector<int> support_history;

  long t_alg = 0;  // outer iterations
  long t_cg = 0;   // total PCG iterations
  long t_lin = 0;  // linear systems solved
  long t_ch = 0;   // Cholesky factorizations (incomplete ones included)

  int perturbation_count = 0;
  double perturbation_norm = 0.0;  // ||b_active - b|| at exit
  long last_refresh_iter = -1;     // outer iteration of the last factorization
  int retraction_failures = 0;
  int line_search_failures = 0;

  std::vector<EscapeEvent> escape_events;
  std::vector<ReductionEvent> reduction_events;

  bool refined = false;
  double rd_before_refine = -1.0;

  double rp = 0.0, rd = 0.0, rc = 0.0;
  double max_residue() const { return std::max(rp, std::max(rd, rc)); }
};

struct SolveResult {
  FactorPoint point;
  DualCertificate cert;
  SolveReport report;
};

/// Family-aware feasible start: closed forms for recognized generator tags,
/// otherwise Gauss-Newton on 1/2 ||G||^2 from a seeded Gaussian point (200
/// correction cap). Throws InfeasibleError when the residual stays above
/// 1e-6 * (1 + ||b||).
FactorPoint phase1_feasible(const ConeProblem& prob, int r0, std::mt19937_64& rng);

/// Thin re-factorization when the rank parameter exceeds n: returns a factor
/// with at most n columns, the fixed identity block re-established, and
/// Rhat Rhat^T preserved to machine precision.
FactorPoint rank_cap(const FactorPoint& pt, int n);

/// Singular-value-ratio rank truncation (threshold kappa1) plus support
/// zeroing (threshold kappa2 on x = y o y), followed by a re-retraction.
/// Reverts to the input when the retraction fails or the objective rises by
/// more than the per-event budget 1e-8 * (1 + |f|).
FactorPoint reduce_rank_support(const ConeProblem& prob, const FactorPoint& pt,
                                const SolveOptions& opts, double f_cur, const Vector& b_ref,
                                const PreconditionerState& pc, LinsysStats& stats,
                                ReductionEvent* event = nullptr);

struct GradStepResult {
  FactorPoint point;
  double t = 0.0;
  double f_new = 0.0;
  bool accepted = false;
  int backtracks = 0;
  int retraction_failures = 0;
};

/// One non-monotone Armijo step along -grad with Newton retraction of each
/// trial. Acceptance: f_new <= max(window) - c1 * t * ||grad||^2 (+
/// noise_slack, used by the post-convergence polish where true decreases
/// drop below the floating-point measurement floor).
GradStepResult gradient_step(const ConeProblem& prob, const FactorPoint& pt,
                             const RiemannianGrad& rg, double t_init,
                             const std::deque<double>& f_window, const SolveOptions& opts,
                             const Vector& b_ref, const PreconditionerState& pc,
                             LinsysStats& stats, double noise_slack = 0.0);

SolveResult solve(const ConeProblem& prob, const SolveOptions& opts,
                  std::optional<FactorPoint> init = std::nullopt);

}  // namespace sdpf
