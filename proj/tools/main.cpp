#include <cstdlib>
#include <string>

#include "CLI11.hpp"
#include "sdpf/cli.hpp"

namespace {

uint64_t env_seed_fallback() {
  if (const char* s = std::getenv("SDPF_SEED")) return std::strtoull(s, nullptr, 10);
  return 0;
}

void add_solver_flags(CLI::App* app, sdpf::cli::RunConfig& cfg) {
  app->add_option("--eps-g", cfg.opts.eps_g, "gradient-norm tolerance");
  app->add_option("--eps-h", cfg.opts.eps_h, "escape-value tolerance");
  app->add_option("--r0", cfg.cli_r0, "initial rank (default: family rule)");
  app->add_option("--tau", cfg.cli_tau, "columns added per escape (default: family rule)");
  app->add_option("--kappa1", cfg.opts.kappa1, "rank-reduction threshold");
  app->add_option("--kappa2", cfg.opts.kappa2, "support-reduction threshold");
  app->add_option("--max-reductions", cfg.opts.max_reduction_events, "reduction event cap");
  app->add_option("--max-iter", cfg.opts.max_outer_iter, "outer iteration cap");
  app->add_option("--max-time", cfg.opts.max_time_seconds, "wall-time cap in seconds");
  app->add_option("--window", cfg.opts.nonmonotone_window, "non-monotone window");
  app->add_option("--perturb-magnitude", cfg.opts.perturb_magnitude,
                  "perturbation norm (default 1e-7*(1+||b||))");
  app->add_option("--t-cg", cfg.opts.t_cg_override, "PCG iteration cap override");
  app->add_flag_callback("--no-refine", [&cfg]() { cfg.opts.refine = false; },
                         "skip the dual-refinement pass");
  app->add_option("--seed", cfg.opts.seed, "rng seed (or env SDPF_SEED)");
  app->add_option("--threads", cfg.threads, "worker threads (1 = bit-reproducible)");
  app->add_flag("-v,--verbose", cfg.opts.verbose, "per-iteration progress on stderr");
  app->add_option_function<std::string>(
      "--perturb-mask",
      [&cfg](const std::string& spec) {
        cfg.opts.perturb_mask.clear();
        for (char c : spec)
          if (c == '0' || c == '1') cfg.opts.perturb_mask.push_back(c == '1');
      },
      "per-coordinate perturbation mask, e.g. 110011 (default: all)");
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"sdpf: a feasible-method solver for low-rank conic programs"};
  app.require_subcommand(1);
  app.set_config("--config", "", "ini file with [solve]/[generate]/[certify] sections");

  sdpf::cli::RunConfig cfg;
  cfg.opts.seed = env_seed_fallback();  // explicit --seed (cli or config) overrides

  auto* solve = app.add_subcommand("solve", "solve an instance and write a JSON report");
  solve->fallthrough();
  solve->add_option("input", cfg.input, "problem file (.json, .dat-s, or edge list with --family theta)")
      ->required();
  solve->add_option("-o,--out", cfg.output, "report path (default report.json)");
  solve->add_option("--tol", cfg.tol, "max KKT residue for exit code 0");
  solve->add_option("--family", cfg.family, "input family hint (theta reads an edge list)");
  add_solver_flags(solve, cfg);

  auto* gen = app.add_subcommand("generate", "write a problem JSON for a benchmark family");
  gen->fallthrough();
  gen->add_option("--family", cfg.family, "random | boxqp | snl | theta")->required();
  gen->add_option("-o,--out", cfg.output, "output path (default problem.json)");
  gen->add_option("--n", cfg.gen_n, "order parameter (block size / box dimension / vertices)");
  gen->add_option("--p", cfg.gen_p, "vector variable length (random family)");
  gen->add_option("--m", cfg.gen_m, "constraint count (random family)");
  gen->add_option("--sensors", cfg.gen_sensors, "sensor count (snl family)");
  gen->add_option("--density", cfg.gen_density, "density (boxqp Q / theta edges)");
  gen->add_option("--noise", cfg.gen_noise, "distance noise level (snl family)");
  gen->add_option("--seed", cfg.opts.seed, "rng seed (or env SDPF_SEED)");

  auto* cert = app.add_subcommand("certify", "recompute residues from a stored report");
  cert->fallthrough();
  cert->add_option("--problem", cfg.problem_path, "problem JSON")->required();
  cert->add_option("--report", cfg.report_path, "report JSON")->required();
  cert->add_flag("--refine", cfg.refine, "run dual refinement and print Rd before/after");
  cert->add_option("--threads", cfg.threads, "worker threads");

  CLI11_PARSE(app, argc, argv);

  if (solve->parsed()) return sdpf::cli::cmd_solve(cfg);
  if (gen->parsed()) return sdpf::cli::cmd_generate(cfg);
  if (cert->parsed()) return sdpf::cli::cmd_certify(cfg);
  return 2;
}
