#include "sdpf/solver.hpp"

#include <Eigen/QR>
#include <Eigen/SVD>

#include <chrono>
#include <cmath>
#include <limits>

#include "sdpf/kernels.hpp"

namespace sdpf {

const char* to_string(SolveStatus s) {
  switch (s) {
    case SolveStatus::Stationary: return "stationary";
    case SolveStatus::MaxIter: return "max_iter";
    case SolveStatus::TimeOut: return "timeout";
    case SolveStatus::LineSearchFailed: return "line_search_failed";
  }
  return "unknown";
}

void SolveOptions::validate() const {
  if (eps_g <= 0 || eps_h <= 0) throw DimensionError("SolveOptions: tolerances must be positive");
  if (kappa1 <= 1 || kappa2 <= 1) throw DimensionError("SolveOptions: kappa thresholds must exceed 1");
  if (tau < 1) throw DimensionError("SolveOptions: tau must be >= 1");
}

namespace {

int default_r0(const ConeProblem& prob) {
  const double v = std::sqrt(2.0 * prob.m + double(prob.k) * (prob.k + 1));
  int r0 = static_cast<int>(std::ceil(v));
  r0 = std::max(r0, std::max(prob.k, 1));
  return std::min(r0, prob.n);
}

// Smallest rank at which the constraint Jacobian can be surjective: below
// m/(n-k) the variety has no regular points, the multiplier system is
// singular everywhere, and a b-perturbation can even empty the feasible set.
int licq_rank_floor(const ConeProblem& prob) {
  if (prob.m == 0 || prob.n == prob.k) return 1;
  const int nk = prob.n - prob.k;
  const int floor_r = static_cast<int>((prob.m + nk - 1) / nk);
  return std::clamp(floor_r, 1, prob.n);
}

FactorPoint collapse1(const VarietyPoint& v, const std::vector<uint8_t>& support) {
  FactorPoint pt;
  pt.k = v.k;
  pt.R = v.S;
  pt.y = v.Y.cols() == 1 ? Vector(v.Y.col(0)) : v.x().cwiseSqrt();
  pt.support = support;
  return pt;
}

// Highest-degree vertex of a theta instance, inferred from the edge rows.
int theta_hub(const ConeProblem& prob) {
  std::vector<int> deg(prob.n, 0);
  for (const auto& op : prob.A.ops) {
    if (op.upper.size() != 1) continue;
    const auto& t = op.upper.front();
    if (t.row() == t.col()) continue;
    ++deg[t.row()];
    ++deg[t.col()];
  }
  return static_cast<int>(std::max_element(deg.begin(), deg.end()) - deg.begin());
}

}  // namespace

FactorPoint phase1_feasible(const ConeProblem& prob, int r0, std::mt19937_64& rng) {
  const int nk = prob.n - prob.k;
  r0 = std::max(r0, std::max(prob.k, 1));
  if (!prob.init) r0 = std::min(std::max(r0, licq_rank_floor(prob)), prob.n);
  FactorPoint pt;
  pt.k = prob.k;
  pt.R = Matrix::Zero(nk, r0);
  pt.y = Vector::Zero(prob.p);
  pt.support.assign(prob.p, 1);

  const double tol = kRetractionTol * (1.0 + prob.b.norm());

  if (prob.init) {
    const auto& [R0, y0] = *prob.init;
    if (R0.rows() == nk) {
      pt.R = R0;
      pt.y = y0.size() == prob.p ? y0 : Vector::Zero(prob.p);
      pt.refresh_support();
      if (residual_G(prob, pt.rhat(), pt.x(), prob.b).norm() <= tol) return pt;
      pt.R = Matrix::Zero(nk, r0);
      pt.y = Vector::Zero(prob.p);
      pt.support.assign(prob.p, 1);
    }
  } else if (prob.family == "theta" && licq_rank_floor(prob) <= 1) {
    // A vertex-indicator start is only admissible when rank-1 iterates can
    // satisfy the constraint qualification; otherwise fall through to the
    // generic full-rank start.
    pt.R(theta_hub(prob), 0) = 1.0;
    if (residual_G(prob, pt.rhat(), pt.x(), prob.b).norm() <= tol) return pt;
    pt.R.setZero();
  } else if (prob.family == "boxqp" && prob.k == 1 && prob.p == nk) {
    pt.R.col(0).setConstant(0.5);
    pt.y.setConstant(0.5);
    if (residual_G(prob, pt.rhat(), pt.x(), prob.b).norm() <= tol) return pt;
    pt.R.setZero();
    pt.y.setZero();
  } else if (prob.family == "snl" && prob.m == 0) {
    return pt;  // only the fixed block constrains the factor
  }

  if (prob.m == 0) {
    std::normal_distribution<double> gauss(0.0, 1.0);
    for (int i = 0; i < pt.R.rows(); ++i)
      for (int j = 0; j < pt.R.cols(); ++j) pt.R(i, j) = gauss(rng) / std::sqrt(double(r0));
    return pt;
  }

  // Gauss-Newton on 1/2 ||G||^2 from a seeded Gaussian start.
  std::normal_distribution<double> gauss(0.0, 1.0);
  for (int i = 0; i < pt.R.rows(); ++i)
    for (int j = 0; j < pt.R.cols(); ++j) pt.R(i, j) = gauss(rng) / std::sqrt(double(r0));
  for (int j = 0; j < prob.p; ++j) pt.y[j] = gauss(rng);

  VarietyPoint v = VarietyPoint::from_factor(pt);
  PreconditionerState pc = PreconditionerState::make(prob.m);
  LinsysStats stats;
  for (int it = 0; it < 200; ++it) {
    Matrix Shat = v.shat();
    Vector g = residual_G(prob, Shat, v.x(), prob.b);
    if (g.norm() <= tol) break;
    GramOperator gram(prob, Shat, v.Y);
    pc.set_diag(gram.diag());
    MultiplierResult mr = solve_multiplier(gram, g, pc, stats);
    auto [H, V] = apply_DG_adjoint(prob, Shat, v.Y, mr.lam);
    v.S -= H;
    if (prob.p > 0) v.Y -= V;
  }
  FactorPoint out = collapse1(v, pt.support);
  out.refresh_support();
  const double res = residual_G(prob, out.rhat(), out.x(), prob.b).norm();
  if (res > 1e-6 * (1.0 + prob.b.norm())) throw InfeasibleError();
  return out;
}

namespace {

// Thin refactorization of Rhat Rhat^T: keeps the columns whose singular
// values exceed rel_tol * sigma_1 (at most max_cols), re-establishing the
// fixed identity block. X is preserved up to the dropped spectrum.
FactorPoint refactor_columns(const FactorPoint& pt, int max_cols, double rel_tol) {
  const int k = pt.k;
  Matrix That = pt.rhat();
  Eigen::BDCSVD<Matrix> svd(That, Eigen::ComputeThinU | Eigen::ComputeThinV);
  const Vector& sig = svd.singularValues();
  int keep = 0;
  for (int i = 0; i < sig.size() && keep < max_cols; ++i)
    if (sig[i] > rel_tol * sig[0]) ++keep;
  keep = std::max(keep, std::max(k, 1));
  keep = std::min<int>(keep, sig.size());
  Matrix F = svd.matrixU().leftCols(keep) * sig.head(keep).asDiagonal();  // F F^T ~ X
  FactorPoint out = pt;
  if (k == 0) {
    out.R = F;
    return out;
  }
  // Rotate so the leading k rows become [I_k, 0] again. The top block T of F
  // satisfies T T^T = I_k, so a QR of T^T supplies the orthogonal completion.
  Matrix T = F.topRows(k);
  Eigen::HouseholderQR<Matrix> qr(T.transpose());
  Matrix Q = qr.householderQ();
  Matrix G = F * Q;
  for (int j = 0; j < k; ++j)
    if (G(j, j) < 0.0) G.col(j) *= -1.0;
  G.topRows(k).setZero();
  G.topLeftCorner(k, k).setIdentity();
  out.R = G.bottomRows(That.rows() - k);
  return out;
}

}  // namespace

FactorPoint rank_cap(const FactorPoint& pt, int n) {
  if (pt.rank() <= n) return pt;
  return refactor_columns(pt, n, 0.0);
}

FactorPoint reduce_rank_support(const ConeProblem& prob, const FactorPoint& pt,
                                const SolveOptions& opts, double f_cur, const Vector& b_ref,
                                const PreconditionerState& pc, LinsysStats& stats,
                                ReductionEvent* event) {
  FactorPoint cand = pt;
  bool changed = false;
  int dropped = 0;

  const int min_rank = std::max({pt.k, 1, std::min(licq_rank_floor(prob), pt.rank())});
  if (pt.rank() > min_rank) {
    Eigen::BDCSVD<Matrix> svd(pt.R, Eigen::ComputeThinU | Eigen::ComputeThinV);
    const Vector& sig = svd.singularValues();
    int pos = 0;
    while (pos < sig.size() && sig[pos] > 0.0) ++pos;
    // Ratio rule over the nonzero spectrum; an exact-zero tail is dropped
    // regardless (it costs nothing).
    int best = -1;
    double best_ratio = 0.0;
    for (int i = 0; i + 1 < pos; ++i) {
      const double ratio = sig[i] / sig[i + 1];
      if (ratio > best_ratio) {
        best_ratio = ratio;
        best = i;
      }
    }
    int keep = best >= 0 && best_ratio > opts.kappa1 ? best + 1 : pos;
    keep = std::max(keep, min_rank);
    if (keep < pt.rank()) {
      if (pt.k == 0) {
        cand.R = svd.matrixU().leftCols(keep) * sig.head(keep).asDiagonal();
      } else {
        // Null the dropped spectrum in place, then refactor; a bare U*Sigma
        // would rotate the cross block against the fixed identity rows.
        cand.R = svd.matrixU().leftCols(keep) * sig.head(keep).asDiagonal() *
                 svd.matrixV().leftCols(keep).transpose();
        cand = refactor_columns(cand, keep + pt.k, 1e-13);
      }
      changed = cand.rank() < pt.rank();
    }
  }

  if (prob.p > 0) {
    Vector x = cand.y.cwiseProduct(cand.y);
    const double x_max = x.size() > 0 ? x.maxCoeff() : 0.0;
    if (x_max > 0.0) {
      // Relative rule from the support-adaptation threshold, plus an
      // absolute floor so a uniformly vanishing x can still empty its
      // support (the objective budget below reverts bad drops).
      const double cut = std::max(x_max / opts.kappa2, 1e-12);
      for (int j = 0; j < prob.p; ++j) {
        if (cand.support[j] && x[j] <= cut) {
          cand.y[j] = 0.0;
          cand.support[j] = 0;
          ++dropped;
          changed = true;
        }
      }
    }
  }

  if (event) {
    event->r_before = pt.rank();
    event->r_after = cand.rank();
    event->support_dropped = dropped;
    event->accepted = false;
  }
  if (!changed) return pt;

  auto rt = newton_retract(prob, VarietyPoint::from_factor(cand), b_ref, pc, stats);
  if (!rt) return pt;
  FactorPoint out = collapse1(*rt, cand.support);
  const double f_new = eval_objective(prob, out.rhat(), out.x()).value;
  if (f_new > f_cur + 1e-8 * (1.0 + std::abs(f_cur))) return pt;
  if (event) event->accepted = true;
  return out;
}

GradStepResult gradient_step(const ConeProblem& prob, const FactorPoint& pt,
                             const RiemannianGrad& rg, double t_init,
                             const std::deque<double>& f_window, const SolveOptions& opts,
                             const Vector& b_ref, const PreconditionerState& pc,
                             LinsysStats& stats, double noise_slack) {
  GradStepResult res;
  res.point = pt;
  double f_max = -std::numeric_limits<double>::infinity();
  for (double f : f_window) f_max = std::max(f_max, f);

  const double g2 = rg.norm * rg.norm;
  double t = std::clamp(t_init, opts.bb_min, opts.bb_max);
  // Keep the first trial within a few multiples of the iterate scale, so the
  // retraction-failure halving budget can always reach retractable steps.
  const double move_cap = 2.0 * (1.0 + std::sqrt(pt.R.squaredNorm() + pt.y.squaredNorm()));
  if (rg.norm > 0.0 && t * rg.norm > move_cap) t = move_cap / rg.norm;
  int halvings = 0;
  for (int bt = 0; bt <= 30; ++bt) {
    VarietyPoint trial;
    trial.k = pt.k;
    trial.S = pt.R - t * rg.grad.H;
    trial.Y = prob.p > 0 ? Matrix(pt.y - t * rg.grad.h) : Matrix(pt.y);
    auto rt = newton_retract(prob, trial, b_ref, pc, stats);
    res.backtracks = bt;
    if (!rt) {
      ++res.retraction_failures;
      if (++halvings > 20) return res;
      t *= 0.5;
      continue;
    }
    FactorPoint next = collapse1(*rt, pt.support);
    const double f_new = eval_objective(prob, next.rhat(), next.x()).value;
    if (f_new <= f_max - opts.armijo_c1 * t * g2 + noise_slack) {
      res.point = std::move(next);
      res.t = t;
      res.f_new = f_new;
      res.accepted = true;
      return res;
    }
    t *= 0.5;
  }
  return res;
}

namespace {

class Engine {
 public:
  Engine(const ConeProblem& prob, const SolveOptions& opts)
      : prob_(prob), opts_(opts), rng_(opts.seed), b_active_(prob.b) {
    pc_ = PreconditionerState::make(prob.m);
    if (opts.t_cg_override > 0) pc_.t_cg = opts.t_cg_override;
    perturb_eps_ = opts.perturb_magnitude > 0 ? opts.perturb_magnitude
                                              : 1e-7 * (1.0 + prob.b.norm());
    perturb_cap_ = 1e-5 * (1.0 + prob.b.norm());
  }

  SolveResult run(std::optional<FactorPoint> init);

 private:
  void apply_perturbation();
  void reretract(FactorPoint& pt);
  bool shifted_refresh(const SpMat& Q, long iter);
  void handle_escalation(FactorPoint& pt, long iter);
  bool refined_stationary(const FactorPoint& pt, const RiemannianGrad& rg);
  double bb_initial_step(const FactorPoint& pt, const RiemannianGrad& rg);
  void remember_bb(const FactorPoint& pt, const RiemannianGrad& rg);
  void push_window(double f);
  void finalize(SolveResult& out, const FactorPoint& pt);

  const ConeProblem& prob_;
  SolveOptions opts_;
  std::mt19937_64 rng_;
  Vector b_active_;
  PreconditionerState pc_;
  LinsysStats stats_;
  SolveReport rep_;

  std::deque<double> window_;
  bool bb_valid_ = false;
  bool bb_alt_ = false;
  Matrix prev_R_, prev_gH_;
  Vector prev_y_, prev_gh_;
  double last_t_ = -1.0;

  double perturb_eps_ = 0.0;
  double perturb_cap_ = 0.0;
  double eps_g_work_ = 0.0;  // tightens while escape decreases are unrealizable
  Vector cert_lam_;          // refined multiplier that certified stationarity
  bool cert_lam_valid_ = false;
  bool escalate_flag_ = false;
  int consecutive_lsf_ = 0;
  int escalations_since_progress_ = 0;
  int skipped_for_multiplier_ = 0;
  bool multiplier_distress_ = false;
  bool refine_checked_ = false;
  double refine_check_f_ = 0.0;
  int stagnation_ = 0;
  long last_escalation_iter_ = -1000;
  double f_prev_ = std::numeric_limits<double>::quiet_NaN();
};

void Engine::push_window(double f) {
  window_.push_back(f);
  while (static_cast<int>(window_.size()) > opts_.nonmonotone_window) window_.pop_front();
}

// The stationarity conditions ask for the existence of some multiplier; when
// the least-squares one is noise-limited near a degenerate optimum, the
// refined dual may still certify the point.
bool Engine::refined_stationary(const FactorPoint& pt, const RiemannianGrad& rg) {
  if (prob_.m == 0) return false;
  // The check costs an inner solve; a point that has not moved since the
  // last failed attempt cannot pass now.
  const double key = eval_objective(prob_, pt.rhat(), pt.x()).value;
  if (refine_checked_ && std::abs(key - refine_check_f_) <= 1e-13 * (1.0 + std::abs(key)))
    return false;
  refine_checked_ = true;
  refine_check_f_ = key;
  RefineResult rr = refine_dual(prob_, pt, rg.lam, opts_.seed ^ 0x517cc1b727220a95ULL);
  if (!rr.ok) return false;
  const Matrix That = pt.rhat();
  auto [H, h] = apply_DG_adjoint(prob_, That, Matrix(pt.y), rr.lam);
  const Matrix gH = rg.eucl_R - H;
  const Vector gh = prob_.p > 0 ? Vector(rg.eucl_y - h.col(0)) : Vector::Zero(0);
  const double gnorm = std::sqrt(gH.squaredNorm() + gh.squaredNorm());
  if (gnorm > opts_.eps_g) return false;
  ObjectiveEval ev = eval_objective(prob_, That, pt.x());
  EscapeDirection dir = escape_direction(prob_, pt, ev, rr.lam, opts_.tau, rng_);
  if (dir.xi < -opts_.eps_h) return false;
  cert_lam_ = rr.lam;
  cert_lam_valid_ = true;
  return true;
}

double Engine::bb_initial_step(const FactorPoint& pt, const RiemannianGrad& rg) {
  // A stale tiny step would freeze the descent; always offer a unit-length
  // move as an alternative and let the line search shrink it.
  const double fallback =
      std::max(last_t_ > 0 ? last_t_ : 0.0, 1.0 / std::max(1.0, rg.norm));
  if (!bb_valid_ || prev_R_.rows() != pt.R.rows() || prev_R_.cols() != pt.R.cols() ||
      prev_y_.size() != pt.y.size())
    return fallback;
  const Matrix sR = pt.R - prev_R_;
  const Vector sy = pt.y - prev_y_;
  const Matrix gR = rg.grad.H - prev_gH_;
  const Vector gy = rg.grad.h - prev_gh_;
  const double sg = (sR.cwiseProduct(gR)).sum() + sy.dot(gy);
  const double ss = sR.squaredNorm() + sy.squaredNorm();
  const double gg = gR.squaredNorm() + gy.squaredNorm();
  if (!(sg > 0.0) || ss == 0.0 || gg == 0.0) return fallback;
  const double t = bb_alt_ ? sg / gg : ss / sg;  // alternate BB2 / BB1
  return std::clamp(t, opts_.bb_min, opts_.bb_max);
}

void Engine::remember_bb(const FactorPoint& pt, const RiemannianGrad& rg) {
  prev_R_ = pt.R;
  prev_y_ = pt.y;
  prev_gH_ = rg.grad.H;
  prev_gh_ = rg.grad.h;
  bb_valid_ = true;
  bb_alt_ = !bb_alt_;
}

void Engine::apply_perturbation() {
  b_active_ = perturb_rhs_masked(b_active_, perturb_eps_, opts_.perturb_mask, rng_).first;
  ++rep_.perturbation_count;
  rep_.perturbation_norm = (b_active_ - prob_.b).norm();
  pc_.perturbed = true;
}

void Engine::reretract(FactorPoint& pt) {
  auto rt = newton_retract(prob_, VarietyPoint::from_factor(pt), b_active_, pc_, stats_,
                           kRetractionTol, 200);
  if (rt) pt = collapse1(*rt, pt.support);
}

bool Engine::shifted_refresh(const SpMat& Q, long iter) {
  double tr = 0.0;
  for (int j = 0; j < Q.rows(); ++j) tr += Q.coeff(j, j);
  double sigma = 1e-12 * std::max(tr / std::max(1, prob_.m), 1.0);
  SpMat I(prob_.m, prob_.m);
  I.setIdentity();
  for (int tries = 0; tries < 30; ++tries, sigma *= 10.0) {
    auto llt = std::make_shared<Eigen::SimplicialLLT<SpMat>>();
    llt->compute(SpMat(Q + sigma * I));
    if (llt->info() == Eigen::Success) {
      pc_.llt = std::move(llt);
      pc_.mode = PreconditionerState::Mode::Cholesky;
      pc_.last_factor_iter = static_cast<int>(iter);
      ++rep_.t_ch;
      return true;
    }
  }
  return false;
}

// Trip response: first occurrence perturbs b once and re-retracts, every
// occurrence refreshes the preconditioner at the current point. The Gram
// matrix is structurally PSD, so a failed exact factorization gets a
// diagonal shift first. The perturbation magnitude ladder engages when the
// conditioning distress persists (repeated escalations without an accepted
// step) or when even the shifted factorization dies.
void Engine::handle_escalation(FactorPoint& pt, long iter) {
  if (prob_.m == 0) return;
  ++pc_.trip_count;
  last_escalation_iter_ = iter;
  window_.clear();
  bb_valid_ = false;
  eps_g_work_ = opts_.eps_g;

  if (!pc_.perturbed) {
    apply_perturbation();
    reretract(pt);
  } else if (multiplier_distress_ && ++escalations_since_progress_ >= 3 &&
             perturb_eps_ < perturb_cap_) {
    // Only a multiplier system that stays untractable after fresh
    // factorizations justifies a larger perturbation; enlarging it on mere
    // line-search stalls would chase a moving optimum and inflate Rp.
    escalations_since_progress_ = 0;
    perturb_eps_ = std::min(2.0 * perturb_eps_, perturb_cap_);
    apply_perturbation();
    reretract(pt);
  }
  for (int attempt = 0; attempt < 12; ++attempt) {
    SpMat Q = GramOperator(prob_, pt.rhat(), Matrix(pt.y)).assemble();
    try {
      rep_.t_ch += refresh_preconditioner(pc_, Q, prob_.m, static_cast<int>(iter));
      return;
    } catch (const CholeskyFailed&) {
      if (shifted_refresh(Q, iter)) return;
      if (perturb_eps_ >= perturb_cap_) return;  // keep the old preconditioner
      perturb_eps_ = std::min(2.0 * perturb_eps_, perturb_cap_);
      apply_perturbation();
      reretract(pt);
    }
  }
}

SolveResult Engine::run(std::optional<FactorPoint> init) {
  SolveResult out;
  opts_.validate();
  eps_g_work_ = opts_.eps_g;
  int r0 = opts_.r0 > 0 ? std::min(opts_.r0, prob_.n) : default_r0(prob_);
  r0 = std::min(std::max(r0, licq_rank_floor(prob_)), prob_.n);

  FactorPoint pt = init ? *init : phase1_feasible(prob_, r0, rng_);
  if (init) pt.refresh_support();

  const auto t_start = std::chrono::steady_clock::now();
  auto elapsed = [&t_start]() {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - t_start).count();
  };

  int reduction_events = 0;
  rep_.status = SolveStatus::MaxIter;

  for (long iter = 0; iter < opts_.max_outer_iter; ++iter) {
    if (elapsed() > opts_.max_time_seconds) {
      rep_.status = SolveStatus::TimeOut;
      break;
    }

    if (escalate_flag_) {
      escalate_flag_ = false;
      handle_escalation(pt, iter);
    }

    const Matrix That = pt.rhat();
    const Vector x = pt.x();
    ObjectiveEval ev = eval_objective(prob_, That, x);
    const double f = ev.value;

    if (pc_.mode == PreconditionerState::Mode::Diagonal && prob_.m > 0)
      pc_.set_diag(GramOperator(prob_, That, Matrix(pt.y)).diag());

    RiemannianGrad rg = riemannian_grad(prob_, pt, ev, pc_, stats_);
    if (!rg.multiplier_converged) escalate_flag_ = true;
    multiplier_distress_ = !rg.multiplier_converged;

    ++rep_.t_alg;
    rep_.objective_trajectory.push_back(f);
    rep_.rank_history.push_back(pt.rank());
    int supp = 0;
    for (auto s : pt.support) supp += s != 0;
    rep_.support_history.push_back(supp);

    // stagnation guard
    if (std::isfinite(f_prev_) && f_prev_ - f < 1e-14 * (1.0 + std::abs(f)))
      ++stagnation_;
    else
      stagnation_ = 0;
    f_prev_ = f;
    if (stagnation_ >= 50 && iter - last_escalation_iter_ > 50) {
      escalate_flag_ = true;
      stagnation_ = 0;
    }

    if (opts_.verbose)
      std::fprintf(stderr, "iter %ld  f %.10e  |grad| %.3e  rank %d  cg %ld\n", iter, f,
                   rg.norm, pt.rank(), stats_.cg_iters);

    // Neither branch is worth running on an untrustworthy multiplier: the
    // escape value would be garbage and a line search along the stale
    // direction just burns retraction solves. Refresh first, step next
    // iteration (bounded: after two refreshes without improvement the step
    // is attempted anyway).
    if (!rg.multiplier_converged && prob_.m > 0 && skipped_for_multiplier_ < 2) {
      ++skipped_for_multiplier_;
      continue;
    }
    skipped_for_multiplier_ = 0;
    bool escape_test = rg.norm < eps_g_work_ && rg.multiplier_converged;
    if (rg.norm < eps_g_work_ && !rg.multiplier_converged) continue;
    bool polish_stalled = false;
    if (!escape_test) {
      const double t_init = bb_initial_step(pt, rg);
      remember_bb(pt, rg);
      if (window_.empty()) push_window(f);
      const bool polishing = eps_g_work_ < opts_.eps_g;
      const double slack =
          polishing ? 4.0 * std::numeric_limits<double>::epsilon() * (1.0 + std::abs(f)) : 0.0;
      GradStepResult res =
          gradient_step(prob_, pt, rg, t_init, window_, opts_, b_active_, pc_, stats_, slack);
      rep_.retraction_failures += res.retraction_failures;
      if (res.accepted) {
        // Real progress invalidates a tightened polish target.
        if (f - res.f_new > 1e-6 * (1.0 + std::abs(res.f_new))) eps_g_work_ = opts_.eps_g;
        pt = std::move(res.point);
        last_t_ = res.t;
        push_window(res.f_new);
        consecutive_lsf_ = 0;
        escalations_since_progress_ = 0;
      } else if (rg.multiplier_converged) {
        // No measurable descent along a trustworthy gradient: the point is
        // first-order stationary at working precision, so consult the
        // second-order test even when the measured norm sits above eps_g
        // (a strict saddle can hide behind the measurement floor).
        escape_test = true;
        polish_stalled = true;
      } else {
        ++rep_.line_search_failures;
        if (prob_.m > 0 && ++consecutive_lsf_ <= 6) {
          escalate_flag_ = true;
          continue;
        }
        rep_.status = SolveStatus::LineSearchFailed;
        break;
      }
    }

    if (escape_test) {
      EscapeDirection dir = escape_direction(prob_, pt, ev, rg.lam, opts_.tau, rng_);
      if (dir.xi >= -opts_.eps_h) {
        if (rg.norm <= opts_.eps_g) {
          rep_.status = SolveStatus::Stationary;
          break;
        }
        // Descent-exhausted but the gradient norm is not certifiable at
        // eps_g; a refined multiplier may still close the gap.
        if (refined_stationary(pt, rg)) {
          rep_.status = SolveStatus::Stationary;
          break;
        }
        if (prob_.m > 0 && ++consecutive_lsf_ <= 6) {
          escalate_flag_ = true;
          continue;
        }
        rep_.status = SolveStatus::LineSearchFailed;
        break;
      }
      EscapeOutcome esc = escape_step(prob_, pt, dir, f, b_active_, pc_, stats_);
      if (opts_.verbose)
        std::fprintf(stderr, "iter %ld  escape xi %.3e  accepted %d  t %.3e\n", iter, dir.xi,
                     (int)esc.accepted, esc.t);
      if (!esc.accepted) {
        ++rep_.line_search_failures;
        // An unrealizable escape decrease near a degenerate optimum: polish
        // the point further so xi is measured with a cleaner multiplier.
        if (!polish_stalled && eps_g_work_ > 1e-4 * opts_.eps_g) {
          eps_g_work_ *= 0.1;
          continue;
        }
        if (refined_stationary(pt, rg)) {
          rep_.status = SolveStatus::Stationary;
          break;
        }
        if (prob_.m > 0 && ++consecutive_lsf_ <= 6) {
          escalate_flag_ = true;
          continue;
        }
        rep_.status = SolveStatus::LineSearchFailed;
        break;
      }
      EscapeEvent evn;
      evn.iter = iter;
      evn.xi = dir.xi;
      evn.t = esc.t;
      evn.f_before = f;
      evn.f_after = esc.f_new;
      evn.matrix_kind = dir.kind == EscapeDirection::Kind::Matrix;
      evn.revived = esc.revived;
      rep_.escape_events.push_back(evn);
      pt = std::move(esc.point);
      push_window(esc.f_new);
      bb_valid_ = false;
      eps_g_work_ = opts_.eps_g;
      consecutive_lsf_ = 0;
      escalations_since_progress_ = 0;
    }

    if (pt.rank() > prob_.n) pt = rank_cap(pt, prob_.n);

    if (reduction_events < opts_.max_reduction_events) {
      ReductionEvent revn;
      revn.iter = iter;
      const double f_now = window_.empty() ? f : window_.back();
      FactorPoint reduced =
          reduce_rank_support(prob_, pt, opts_, f_now, b_active_, pc_, stats_, &revn);
      if (revn.accepted) {
        const bool really_changed =
            reduced.rank() != pt.rank() || revn.support_dropped > 0;
        if (really_changed) {
          // Only objective-increasing reductions draw on the capped budget;
          // free prunes (typically exact zero columns) never exhaust it.
          const double f_red = eval_objective(prob_, reduced.rhat(), reduced.x()).value;
          if (f_red > f_now + 8.0 * std::numeric_limits<double>::epsilon() * (1.0 + std::abs(f_now)))
            ++reduction_events;
          rep_.reduction_events.push_back(revn);
          bb_valid_ = false;
        }
        pt = std::move(reduced);
      }
    }
  }

  rep_.t_cg = stats_.cg_iters;
  rep_.t_lin = stats_.solves;
  rep_.last_refresh_iter = pc_.last_factor_iter;
  finalize(out, pt);
  return out;
}

void Engine::finalize(SolveResult& out, const FactorPoint& pt) {
  const Matrix That = pt.rhat();
  const Vector x = pt.x();
  ObjectiveEval ev = eval_objective(prob_, That, x);
  rep_.objective = ev.value;

  RiemannianGrad rg = riemannian_grad(prob_, pt, ev, pc_, stats_);
  Vector lam = rg.lam;
  double gnorm = rg.norm;
  if (cert_lam_valid_) {
    // The run terminated on the refined multiplier; report against it.
    lam = cert_lam_;
    auto [H, h] = apply_DG_adjoint(prob_, That, Matrix(pt.y), lam);
    const Matrix gH = rg.eucl_R - H;
    const Vector gh = prob_.p > 0 ? Vector(rg.eucl_y - h.col(0)) : Vector::Zero(0);
    gnorm = std::sqrt(gH.squaredNorm() + gh.squaredNorm());
  }
  rep_.grad_norm = gnorm;
  EscapeDirection dir = escape_direction(prob_, pt, ev, lam, opts_.tau, rng_);
  rep_.xi = dir.xi;

  out.point = pt;
  if (opts_.compute_certificate) {
    out.cert = build_certificate(prob_, pt, lam, ev);
    kkt_residues(prob_, pt, out.cert, ev, prob_.b, &rng_);
    if (opts_.refine && prob_.m > 0 && !cert_lam_valid_) {
      rep_.rd_before_refine = out.cert.rd;
      RefineResult rr = refine_dual(prob_, pt, lam, opts_.seed ^ 0x9e3779b97f4a7c15ULL);
      if (rr.ok) {
        DualCertificate cert2 = build_certificate(prob_, pt, rr.lam, ev);
        kkt_residues(prob_, pt, cert2, ev, prob_.b, &rng_);
        if (cert2.rd <= out.cert.rd) {
          out.cert = std::move(cert2);
          rep_.refined = true;
        }
      }
    }
    rep_.rp = out.cert.rp;
    rep_.rd = out.cert.rd;
    rep_.rc = out.cert.rc;
  }
  rep_.t_cg = stats_.cg_iters;
  rep_.t_lin = stats_.solves;
  out.report = rep_;
}

}  // namespace

SolveResult solve(const ConeProblem& prob, const SolveOptions& opts,
                  std::optional<FactorPoint> init) {
  Engine engine(prob, opts);
  return engine.run(std::move(init));
}

}  // namespace sdpf
