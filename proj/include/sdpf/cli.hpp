#pragma once

#include <string>

#include "sdpf/solver.hpp"

namespace sdpf::cli {

struct RunConfig {
  std::string input;        // solve: problem/graph path
  std::string output;       // solve/generate: output path
  std::string problem_path; // certify
  std::string report_path;  // certify
  std::string family;       // generate family, or "theta" to read a graph
  SolveOptions opts;
  int cli_r0 = -1;   // -1: family default
  int cli_tau = -1;  // -1: family default
  double tol = 1e-6;
  int threads = 1;
  bool refine = false;      // certify --refine

  // generate parameters
  int gen_n = 10;
  int gen_p = 0;
  int gen_m = -1;
  int gen_sensors = 50;
  double gen_density = 0.25;
  double gen_noise = 0.1;
};

// Exit codes: 0 success; 2 parse/usage failure; 3 solver non-convergence
// (the report is still written); 1 certify mismatch.
int cmd_solve(const RunConfig& cfg);
int cmd_generate(const RunConfig& cfg);
int cmd_certify(const RunConfig& cfg);

}  // namespace sdpf::cli
