#include "sdpf/cli.hpp"

#include <cstdio>
#include <fstream>

#include "json.hpp"
#include "sdpf/instances.hpp"
#include "sdpf/io.hpp"

namespace sdpf::cli {

namespace {

bool ends_with(const std::string& s, const std::string& suffix) {
  return s.size() >= suffix.size() && s.compare(s.size() - suffix.size(), suffix.size(), suffix) == 0;
}

ConeProblem load_input(const RunConfig& cfg) {
  if (cfg.family == "theta" && !ends_with(cfg.input, ".json"))
    return theta_problem(read_graph(cfg.input));
  if (ends_with(cfg.input, ".dat-s")) return load_sdpa_sparse(cfg.input);
  return load_problem_json(cfg.input);
}

void write_failure_report(const std::string& path, const std::string& status) {
  nlohmann::json j;
  j["format"] = "sdpf-report";
  j["version"] = 1;
  j["status"] = status;
  std::ofstream out(path);
  out << j.dump(1);
}

}  // namespace

int cmd_solve(const RunConfig& cfg) {
  set_num_threads(cfg.threads);
  ConeProblem prob;
  try {
    prob = load_input(cfg);
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 2;
  }

  const std::string out_path = cfg.output.empty() ? "report.json" : cfg.output;
  try {
    SolveOptions opts = cfg.opts;
    opts.r0 = cfg.cli_r0 > 0 ? cfg.cli_r0 : (prob.family == "snl" ? 3 : -1);
    opts.tau = cfg.cli_tau > 0 ? cfg.cli_tau : (prob.family == "snl" ? 20 : 1);
    SolveResult res = solve(prob, opts);

    ReportFile rf;
    rf.report = res.report;
    rf.point = res.point;
    rf.lambda = res.cert.lam;
    rf.Lambda = res.cert.Lambda;
    rf.rd_path = res.cert.rd_path;
    rf.rd_is_upper_bound = res.cert.rd_is_upper_bound;
    rf.problem_hash = hash_file(cfg.input);
    rf.seed = opts.seed;
    rf.threads = cfg.threads;
    save_report(rf, out_path);

    std::printf("status=%s objective=%.10g Rp=%.3e Rd=%.3e Rc=%.3e rank=%d iters=%ld\n",
                to_string(res.report.status), res.report.objective, res.report.rp,
                res.report.rd, res.report.rc, res.point.rank(), res.report.t_alg);
    const bool ok =
        res.report.status == SolveStatus::Stationary && res.report.max_residue() <= cfg.tol;
    return ok ? 0 : 3;
  } catch (const InfeasibleError& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    write_failure_report(out_path, "infeasible");
    return 3;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    write_failure_report(out_path, "error");
    return 3;
  }
}

int cmd_generate(const RunConfig& cfg) {
  const std::string out_path = cfg.output.empty() ? "problem.json" : cfg.output;
  try {
    ConeProblem prob;
    if (cfg.family == "random") {
      if (cfg.gen_m <= 0 || cfg.gen_n <= 0) {
        std::fprintf(stderr, "error: random family needs --n > 0 and --m > 0\n");
        return 2;
      }
      prob = random_sparse_problem(cfg.gen_n, cfg.gen_p, cfg.gen_m, cfg.opts.seed);
    } else if (cfg.family == "boxqp") {
      if (cfg.gen_n <= 0) {
        std::fprintf(stderr, "error: boxqp family needs --n > 0\n");
        return 2;
      }
      prob = boxqp_random(cfg.gen_n, cfg.gen_density, cfg.opts.seed);
    } else if (cfg.family == "snl") {
      SnlOptions so;
      so.sensors = cfg.gen_sensors;
      so.seed = cfg.opts.seed;
      so.noise = cfg.gen_noise;
      prob = snl_problem(so);
    } else if (cfg.family == "theta") {
      // seeded Erdos-Renyi graph
      if (cfg.gen_n <= 0) {
        std::fprintf(stderr, "error: theta family needs --n > 0\n");
        return 2;
      }
      std::mt19937_64 rng(cfg.opts.seed);
      std::uniform_real_distribution<double> coin(0.0, 1.0);
      GraphData g;
      g.n = cfg.gen_n;
      for (int i = 1; i <= g.n; ++i)
        for (int j = i + 1; j <= g.n; ++j)
          if (coin(rng) < cfg.gen_density) g.edges.emplace_back(i, j, 1.0);
      prob = theta_problem(g);
    } else {
      std::fprintf(stderr, "error: unknown family '%s'\n", cfg.family.c_str());
      return 2;
    }
    save_problem_json(prob, out_path);
    std::printf("wrote %s (n=%d k=%d p=%d m=%d)\n", out_path.c_str(), prob.n, prob.k, prob.p,
                prob.m);
    return 0;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 2;
  }
}

int cmd_certify(const RunConfig& cfg) {
  set_num_threads(cfg.threads);
  ConeProblem prob;
  ReportFile rf;
  try {
    prob = load_problem_json(cfg.problem_path);
    rf = load_report(cfg.report_path);
    if (rf.problem_hash != hash_file(cfg.problem_path)) {
      std::fprintf(stderr, "error: problem hash mismatch (report was produced from a different file)\n");
      return 2;
    }
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 2;
  }

  try {
    const FactorPoint& pt = rf.point;
    ObjectiveEval ev = eval_objective(prob, pt.rhat(), pt.x());
    DualCertificate cert = build_certificate(prob, pt, rf.lambda, ev);
    std::mt19937_64 rng(rf.seed);
    kkt_residues(prob, pt, cert, ev, prob.b, &rng);

    auto close = [](double a, double b) { return std::abs(a - b) <= 1e-10 + 1e-8 * std::abs(b); };
    const bool match =
        close(cert.rp, rf.report.rp) && close(cert.rd, rf.report.rd) && close(cert.rc, rf.report.rc);
    std::printf("stored:     Rp=%.12e Rd=%.12e Rc=%.12e\n", rf.report.rp, rf.report.rd,
                rf.report.rc);
    std::printf("recomputed: Rp=%.12e Rd=%.12e Rc=%.12e\n", cert.rp, cert.rd, cert.rc);
    if (!match) std::printf("MISMATCH: stored residues do not match the stored iterate\n");

    if (cfg.refine) {
      RefineResult rr = refine_dual(prob, pt, rf.lambda, rf.seed ^ 0x9e3779b97f4a7c15ULL);
      DualCertificate cert2 = build_certificate(prob, pt, rr.lam, ev);
      kkt_residues(prob, pt, cert2, ev, prob.b, &rng);
      std::printf("refine:     Rd before=%.12e after=%.12e%s\n", cert.rd, cert2.rd,
                  rr.ok ? "" : " (inner solve failed, lambda unchanged)");
    }
    return match ? 0 : 1;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 2;
  }
}

}  // namespace sdpf::cli
