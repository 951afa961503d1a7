#include "sdpf/io.hpp"

#include <fstream>
#include <sstream>

#include "json.hpp"

namespace sdpf {

using nlohmann::json;

namespace {

json symop_to_json(const SymOp& op) {
  json j;
  json sparse = json::array();
  for (const auto& t : op.upper) sparse.push_back({t.row(), t.col(), t.value()});
  j["sparse"] = std::move(sparse);
  if (op.lowrank_cols() > 0) {
    json cols = json::array();
    for (int c = 0; c < op.lowrank.cols(); ++c) {
      json col = json::array();
      for (int i = 0; i < op.lowrank.rows(); ++i) col.push_back(op.lowrank(i, c));
      cols.push_back(std::move(col));
    }
    j["lowrank"] = {{"columns", std::move(cols)},
                    {"weights", std::vector<double>(op.lowrank_w.begin(), op.lowrank_w.end())}};
  }
  return j;
}

SymOp symop_from_json(const json& j, int n) {
  SymOp op;
  op.n = n;
  for (const auto& t : j.at("sparse"))
    op.upper.emplace_back(t.at(0).get<int>(), t.at(1).get<int>(), t.at(2).get<double>());
  if (j.contains("lowrank")) {
    const auto& lr = j.at("lowrank");
    const auto& cols = lr.at("columns");
    op.lowrank.resize(n, cols.size());
    for (size_t c = 0; c < cols.size(); ++c)
      for (int i = 0; i < n; ++i) op.lowrank(i, c) = cols.at(c).at(i).get<double>();
    const auto& w = lr.at("weights");
    op.lowrank_w.resize(w.size());
    for (size_t c = 0; c < w.size(); ++c) op.lowrank_w[c] = w.at(c).get<double>();
  }
  op.finalize();
  return op;
}

json vector_to_json(const Vector& v) {
  json arr = json::array();
  for (int i = 0; i < v.size(); ++i) arr.push_back(v[i]);
  return arr;
}

Vector vector_from_json(const json& j) {
  Vector v(j.size());
  for (size_t i = 0; i < j.size(); ++i) v[i] = j.at(i).get<double>();
  return v;
}

json matrix_to_json(const Matrix& m) {
  json rows = json::array();
  for (int i = 0; i < m.rows(); ++i) {
    json row = json::array();
    for (int c = 0; c < m.cols(); ++c) row.push_back(m(i, c));
    rows.push_back(std::move(row));
  }
  return rows;
}

Matrix matrix_from_json(const json& j) {
  const int rows = static_cast<int>(j.size());
  const int cols = rows > 0 ? static_cast<int>(j.at(0).size()) : 0;
  Matrix m(rows, cols);
  for (int i = 0; i < rows; ++i)
    for (int c = 0; c < cols; ++c) m(i, c) = j.at(i).at(c).get<double>();
  return m;
}

json sparse_to_json(const SpMat& s) {
  json arr = json::array();
  for (int o = 0; o < s.outerSize(); ++o)
    for (SpMat::InnerIterator it(s, o); it; ++it)
      arr.push_back({static_cast<int>(it.row()), static_cast<int>(it.col()), it.value()});
  return arr;
}

SpMat sparse_from_json(const json& j, int rows, int cols) {
  std::vector<Triplet> trips;
  trips.reserve(j.size());
  for (const auto& t : j)
    trips.emplace_back(t.at(0).get<int>(), t.at(1).get<int>(), t.at(2).get<double>());
  SpMat s(rows, cols);
  s.setFromTriplets(trips.begin(), trips.end());
  return s;
}

}  // namespace

std::string problem_to_json(const ConeProblem& prob) {
  json j;
  j["format"] = "sdpf-problem";
  j["version"] = 1;
  j["family"] = prob.family;
  j["n"] = prob.n;
  j["k"] = prob.k;
  j["p"] = prob.p;
  j["m"] = prob.m;
  json ops = json::array();
  for (const auto& op : prob.A.ops) ops.push_back(symop_to_json(op));
  j["A"] = std::move(ops);
  j["B"] = sparse_to_json(prob.B);
  j["b"] = vector_to_json(prob.b);

  if (const auto* lin = std::get_if<LinearObjective>(&prob.objective)) {
    j["objective"] = {{"type", "linear"},
                      {"C", symop_to_json(lin->C)},
                      {"c", vector_to_json(lin->c)}};
  } else if (const auto* qr = std::get_if<QuadraticResidualObjective>(&prob.objective)) {
    json terms = json::array();
    for (const auto& term : qr->terms) {
      json g = json::array();
      for (Eigen::SparseVector<double>::InnerIterator it(term.g); it; ++it)
        g.push_back({static_cast<int>(it.index()), it.value()});
      terms.push_back({{"g", std::move(g)}, {"d", term.d}});
    }
    json obj = {{"type", "quadratic_residual"}, {"terms", std::move(terms)}};
    if (qr->has_linear)
      obj["linear"] = {{"C", symop_to_json(qr->C0)}, {"c", vector_to_json(qr->c0)}};
    j["objective"] = std::move(obj);
  } else {
    throw ParseError("custom objectives do not serialize");
  }

  if (prob.init) {
    j["init"] = {{"R", matrix_to_json(prob.init->first)},
                 {"y", vector_to_json(prob.init->second)}};
  }
  return j.dump(1);
}

ConeProblem problem_from_json(const std::string& text) {
  json j = json::parse(text);
  if (j.value("format", "") != "sdpf-problem") throw ParseError("not an sdpf-problem file");
  ConeProblem prob;
  prob.n = j.at("n").get<int>();
  prob.k = j.at("k").get<int>();
  prob.p = j.at("p").get<int>();
  prob.m = j.at("m").get<int>();
  prob.family = j.value("family", "");
  prob.A.n = prob.n;
  for (const auto& opj : j.at("A")) prob.A.ops.push_back(symop_from_json(opj, prob.n));
  prob.B = sparse_from_json(j.at("B"), prob.m, prob.p);
  prob.b = vector_from_json(j.at("b"));

  const auto& obj = j.at("objective");
  const std::string type = obj.at("type").get<std::string>();
  if (type == "linear") {
    LinearObjective lin;
    lin.C = symop_from_json(obj.at("C"), prob.n);
    lin.c = vector_from_json(obj.at("c"));
    prob.objective = std::move(lin);
  } else if (type == "quadratic_residual") {
    QuadraticResidualObjective qr;
    for (const auto& tj : obj.at("terms")) {
      QuadResidTerm term;
      term.g.resize(prob.n);
      for (const auto& e : tj.at("g")) term.g.insert(e.at(0).get<int>()) = e.at(1).get<double>();
      term.d = tj.at("d").get<double>();
      qr.terms.push_back(std::move(term));
    }
    if (obj.contains("linear")) {
      qr.has_linear = true;
      qr.C0 = symop_from_json(obj.at("linear").at("C"), prob.n);
      qr.c0 = vector_from_json(obj.at("linear").at("c"));
    }
    prob.objective = std::move(qr);
  } else {
    throw ParseError("unknown objective type: " + type);
  }

  if (j.contains("init"))
    prob.init = std::make_pair(matrix_from_json(j.at("init").at("R")),
                               vector_from_json(j.at("init").at("y")));
  prob.finalize();
  return prob;
}

ConeProblem load_problem_json(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ParseError("cannot open problem file: " + path);
  std::stringstream ss;
  ss << in.rdbuf();
  return problem_from_json(ss.str());
}

void save_problem_json(const ConeProblem& prob, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw ParseError("cannot write problem file: " + path);
  out << problem_to_json(prob);
}

ConeProblem load_sdpa_sparse(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ParseError("cannot open SDPA file: " + path);
  std::string line;
  int lineno = 0;
  auto next_data_line = [&]() -> std::string {
    while (std::getline(in, line)) {
      ++lineno;
      const auto pos = line.find_first_not_of(" \t\r\n");
      if (pos == std::string::npos) continue;
      if (line[pos] == '"' || line[pos] == '*') continue;  // comment
      return line;
    }
    throw ParseError("unexpected end of SDPA file at line " + std::to_string(lineno));
  };
  auto strip_punct = [](std::string s) {
    for (char& c : s)
      if (c == ',' || c == '(' || c == ')' || c == '{' || c == '}') c = ' ';
    return s;
  };

  int m = 0, nblocks = 0;
  {
    std::istringstream ss(next_data_line());
    ss >> m;
  }
  {
    std::istringstream ss(next_data_line());
    ss >> nblocks;
  }
  std::vector<int> bsize(nblocks);
  {
    std::istringstream ss(strip_punct(next_data_line()));
    for (int i = 0; i < nblocks; ++i)
      if (!(ss >> bsize[i])) throw ParseError("bad block sizes in SDPA file");
  }
  std::vector<int> offset(nblocks, 0);
  int n = 0;
  for (int i = 0; i < nblocks; ++i) {
    offset[i] = n;
    n += std::abs(bsize[i]);
  }

  Vector c(m);
  {
    int got = 0;
    while (got < m) {
      std::istringstream ss(strip_punct(next_data_line()));
      double v;
      while (got < m && ss >> v) c[got++] = v;
    }
  }

  std::vector<std::vector<Triplet>> mats(m + 1);
  {
    int mat, blk, i, jj;
    double v;
    while (in >> mat >> blk >> i >> jj >> v) {
      if (mat < 0 || mat > m || blk < 1 || blk > nblocks)
        throw ParseError("bad SDPA entry indices");
      if (bsize[blk - 1] < 0 && i != jj)
        throw ParseError("off-diagonal entry in a diagonal SDPA block");
      int a = offset[blk - 1] + i - 1;
      int b = offset[blk - 1] + jj - 1;
      if (a > b) std::swap(a, b);
      mats[mat].emplace_back(a, b, v);
    }
  }

  ConeProblem prob;
  prob.n = n;
  prob.k = 0;
  prob.p = 0;
  prob.m = m;
  prob.family = "sdpa";
  prob.A.n = n;
  for (int i = 1; i <= m; ++i) {
    SymOp op;
    op.n = n;
    op.upper = mats[i];
    op.finalize();
    prob.A.ops.push_back(std::move(op));
  }
  prob.B.resize(m, 0);
  prob.b = c;
  LinearObjective obj;
  obj.C.n = n;
  obj.C.upper = mats[0];
  obj.C.finalize();
  obj.c = Vector::Zero(0);
  prob.objective = std::move(obj);
  prob.finalize();
  return prob;
}

std::string hash_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ParseError("cannot open file for hashing: " + path);
  uint64_t h = 1469598103934665603ULL;
  char buf[4096];
  while (in.read(buf, sizeof(buf)) || in.gcount() > 0) {
    for (std::streamsize i = 0; i < in.gcount(); ++i) {
      h ^= static_cast<unsigned char>(buf[i]);
      h *= 1099511628211ULL;
    }
    if (!in) break;
  }
  char out[17];
  std::snprintf(out, sizeof(out), "%016llx", static_cast<unsigned long long>(h));
  return std::string(out);
}

std::string report_to_json(const ReportFile& rf) {
  const SolveReport& r = rf.report;
  json j;
  j["format"] = "sdpf-report";
  j["version"] = 1;
  j["problem_hash"] = rf.problem_hash;
  j["status"] = to_string(r.status);
  j["objective"] = r.objective;
  j["residues"] = {{"Rp", r.rp}, {"Rd", r.rd}, {"Rc", r.rc}};
  j["counters"] = {{"T_alg", r.t_alg}, {"T_cg", r.t_cg}, {"T_lin", r.t_lin}, {"T_ch", r.t_ch}};
  j["grad_norm"] = r.grad_norm;
  j["xi"] = r.xi;
  j["rank"] = rf.point.rank();
  int supp = 0;
  for (auto s : rf.point.support) supp += s != 0;
  j["support_size"] = supp;
  j["rank_history"] = r.rank_history;
  j["support_history"] = r.support_history;
  j["objective_trajectory"] = r.objective_trajectory;
  j["perturbation"] = {{"count", r.perturbation_count}, {"norm", r.perturbation_norm}};
  j["last_refresh_iter"] = r.last_refresh_iter;
  json escs = json::array();
  for (const auto& e : r.escape_events)
    escs.push_back({{"iter", e.iter},
                    {"xi", e.xi},
                    {"t", e.t},
                    {"f_before", e.f_before},
                    {"f_after", e.f_after},
                    {"matrix_kind", e.matrix_kind},
                    {"revived", e.revived}});
  j["escape_events"] = std::move(escs);
  json reds = json::array();
  for (const auto& e : r.reduction_events)
    reds.push_back({{"iter", e.iter},
                    {"r_before", e.r_before},
                    {"r_after", e.r_after},
                    {"support_dropped", e.support_dropped}});
  j["reduction_events"] = std::move(reds);
  j["retraction_failures"] = r.retraction_failures;
  j["line_search_failures"] = r.line_search_failures;
  j["refined"] = r.refined;
  j["rd_before_refine"] = r.rd_before_refine;
  j["rd_path"] = rf.rd_path;
  j["rd_is_upper_bound"] = rf.rd_is_upper_bound;
  j["lambda"] = vector_to_json(rf.lambda);
  j["Lambda"] = matrix_to_json(rf.Lambda);
  j["k"] = rf.point.k;
  j["R"] = matrix_to_json(rf.point.R);
  j["y"] = vector_to_json(rf.point.y);
  j["seed"] = rf.seed;
  j["threads"] = rf.threads;
  return j.dump(1);
}

ReportFile report_from_json(const std::string& text) {
  json j = json::parse(text);
  if (j.value("format", "") != "sdpf-report") throw ParseError("not an sdpf-report file");
  ReportFile rf;
  rf.problem_hash = j.value("problem_hash", "");
  rf.seed = j.value("seed", 0ULL);
  rf.threads = j.value("threads", 1);
  SolveReport& r = rf.report;
  const std::string st = j.value("status", "max_iter");
  if (st == "stationary") r.status = SolveStatus::Stationary;
  else if (st == "timeout") r.status = SolveStatus::TimeOut;
  else if (st == "line_search_failed") r.status = SolveStatus::LineSearchFailed;
  else r.status = SolveStatus::MaxIter;
  r.objective = j.value("objective", 0.0);
  r.rp = j.at("residues").value("Rp", 0.0);
  r.rd = j.at("residues").value("Rd", 0.0);
  r.rc = j.at("residues").value("Rc", 0.0);
  r.t_alg = j.at("counters").value("T_alg", 0L);
  r.t_cg = j.at("counters").value("T_cg", 0L);
  r.t_lin = j.at("counters").value("T_lin", 0L);
  r.t_ch = j.at("counters").value("T_ch", 0L);
  r.grad_norm = j.value("grad_norm", 0.0);
  r.xi = j.value("xi", 0.0);
  rf.rd_path = j.value("rd_path", "");
  rf.rd_is_upper_bound = j.value("rd_is_upper_bound", false);
  rf.lambda = vector_from_json(j.at("lambda"));
  rf.Lambda = matrix_from_json(j.at("Lambda"));
  rf.point.k = j.value("k", 0);
  rf.point.R = matrix_from_json(j.at("R"));
  rf.point.y = vector_from_json(j.at("y"));
  rf.point.refresh_support();
  return rf;
}

void save_report(const ReportFile& rf, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw ParseError("cannot write report file: " + path);
  out << report_to_json(rf);
}

ReportFile load_report(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ParseError("cannot open report file: " + path);
  std::stringstream ss;
  ss << in.rdbuf();
  return report_from_json(ss.str());
}

}  // namespace sdpf
