#pragma once

#include <string>

#include "sdpf/geometry.hpp"
#include "sdpf/solver.hpp"

namespace sdpf {

/// Versioned JSON problem schema ("sdpf-problem", version 1). This is the
/// native format: it carries the fixed block size, the vector variable and
/// nonlinear objectives, which SDPA sparse cannot express.
ConeProblem problem_from_json(const std::string& text);
std::string problem_to_json(const ConeProblem& prob);
ConeProblem load_problem_json(const std::string& path);
void save_problem_json(const ConeProblem& prob, const std::string& path);

/// SDPA sparse (.dat-s) reader, restricted to pure linear instances with
/// k = 0, p = 0: min <F0, X> s.t. <F_i, X> = c_i, X psd (blocks embedded
/// block-diagonally into one matrix).
ConeProblem load_sdpa_sparse(const std::string& path);

/// FNV-1a 64 over the raw file bytes, hex-encoded.
std::string hash_file(const std::string& path);

struct ReportFile {
  SolveReport report;
  FactorPoint point;
  Vector lambda;
  Matrix Lambda;
  std::string problem_hash;
  std::string rd_path;  // "dense" or "lanczos"
  bool rd_is_upper_bound = false;
  uint64_t seed = 0;
  int threads = 1;
};

std::string report_to_json(const ReportFile& rf);
ReportFile report_from_json(const std::string& text);
void save_report(const ReportFile& rf, const std::string& path);
ReportFile load_report(const std::string& path);

}  // namespace sdpf
