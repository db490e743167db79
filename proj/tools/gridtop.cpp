// gridtop: command-line front end for power flow, sampling, covariance,
// conditional-independence tests, topology learning and experiment sweeps.

#include <cstdio>
#include <exception>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "gridtop/citest.hpp"
#include "gridtop/covariance.hpp"
#include "gridtop/experiment.hpp"
#include "gridtop/learner.hpp"
#include "gridtop/network.hpp"
#include "gridtop/powerflow.hpp"
#include "gridtop/sampling.hpp"

namespace {

using json = nlohmann::json;
using namespace gridtop;

constexpr int kExitFailedCells = 1;
constexpr int kExitError = 2;

void write_text(const std::string& path, const std::string& text) {
  if (path.empty() || path == "-") {
    std::cout << text;
    if (!text.empty() && text.back() != '\n') std::cout << '\n';
    return;
  }
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path);
  out << text;
}

std::optional<CovarianceSpec> spec_override(const std::string& text) {
  if (text.empty()) return std::nullopt;
  return parse_covariance_spec(text);
}

json voltages_json(const GridNetwork& grid, const VoltageSolution& sol) {
  json buses = json::array();
  for (BusId b = 0; b < grid.n_bus(); ++b) {
    json mag = json::array(), ang = json::array();
    for (int p = 0; p < sol.phases; ++p) {
      mag.push_back(sol.v(b, p));
      ang.push_back(sol.theta(b, p));
    }
    buses.push_back({{"bus", b}, {"v", mag}, {"theta", ang}});
  }
  return {{"buses", buses}, {"iterations", sol.iterations}, {"mismatch", sol.mismatch}};
}

// --- pf -------------------------------------------------------------------------
struct PfArgs {
  std::string case_path, inj_path, load_path, solver = "lc", out;
  int draw = -1;
  std::uint64_t seed = 0;
  AcOptions ac;
};

int run_pf(const PfArgs& a) {
  const GridNetwork grid = load_case(a.case_path);
  const SolverKind kind = parse_solver(a.solver);
  check_solver(grid, kind);
  InjectionProfile inj = InjectionProfile::zeros(grid);
  if (!a.inj_path.empty()) {
    inj = load_injections(grid, a.inj_path);
  } else if (!a.load_path.empty()) {
    const LoadModel model = load_load_model(grid, a.load_path);
    inj = a.draw < 0 ? mean_injection(model) : draw_injection(model, a.seed, static_cast<std::uint64_t>(a.draw));
  } else {
    throw std::invalid_argument("pf needs --inj or --load");
  }
  const VoltageSolution sol = kind == SolverKind::AC ? acpf_solve(grid, inj, a.ac) : solve(grid, inj, kind);
  json doc = voltages_json(grid, sol);
  doc["solver"] = to_string(kind);
  write_text(a.out, doc.dump(1));
  return 0;
}

// --- generate -------------------------------------------------------------------
struct GenerateArgs {
  std::string case_path, load_path, solver = "lc", out, covariance;
  std::size_t n = 1000;
  std::uint64_t seed = 0;
  unsigned workers = 1;
};

int run_generate(const GenerateArgs& a) {
  const GridNetwork grid = load_case(a.case_path);
  const LoadModel model = load_load_model(grid, a.load_path, spec_override(a.covariance));
  const SampleSet set = generate_samples(grid, model, a.n, parse_solver(a.solver), a.seed, a.workers);
  if (a.out.empty() || a.out == "-") {
    write_samples_csv(set.samples, std::cout);
  } else {
    std::ofstream out(a.out);
    if (!out) throw std::runtime_error("cannot write " + a.out);
    write_samples_csv(set.samples, out);
  }
  return 0;
}

// --- cov ------------------------------------------------------------------------
struct CovArgs {
  std::string samples, case_path, load_path, covariance, out;
};

int run_cov(const CovArgs& a) {
  Covariance cov;
  if (!a.samples.empty()) {
    std::ifstream in(a.samples);
    if (!in) throw std::runtime_error("cannot read " + a.samples);
    cov = empirical_covariance(read_samples_csv(in));
  } else {
    if (a.case_path.empty() || a.load_path.empty())
      throw std::invalid_argument("cov needs --samples or both --case and --load");
    const GridNetwork grid = load_case(a.case_path);
    cov = analytic_covariance(grid, load_load_model(grid, a.load_path, spec_override(a.covariance)));
  }
  write_text(a.out, serialize_covariance(cov));
  return 0;
}

// --- citest ---------------------------------------------------------------------
struct CiArgs {
  std::string cov_path, test = "mod";
  std::vector<int> quartet;
  std::optional<double> tau;
  double ridge = 1e-12;
  int phase = 0;
};

int run_citest(const CiArgs& a) {
  const Covariance cov = load_covariance(a.cov_path);
  TestConfig cfg = TestConfig::defaults(parse_test(a.test));
  if (a.tau) cfg.tau = *a.tau;
  cfg.ridge = a.ridge;
  cfg.check();
  const auto& q = a.quartet;
  const QuartetStat stat = quartet(cov, q[0], q[1], q[2], q[3], a.phase, cfg.ridge);
  const CiResult r = ci_test(stat, cfg);
  json doc = {{"k", q[0]}, {"l", q[1]}, {"i", q[2]}, {"j", q[3]}, {"test", to_string(cfg.test)},
              {"tau", cfg.tau}, {"independent", r.independent}, {"indeterminate", r.indeterminate},
              {"inverse_12", stat.pair.value}, {"condition", stat.pair.condition}, {"ridged", stat.pair.ridged}};
  doc["statistic"] = r.indeterminate ? json(nullptr) : json(r.statistic);
  write_text("-", doc.dump(1));
  return 0;
}

// --- learn ----------------------------------------------------------------------
struct LearnArgs {
  std::string cov_path, case_path, efull = "case", test = "mod", out;
  std::optional<double> tau;
  bool strict = false, score = false;
  unsigned workers = 1;
  int phase = 0;
};

int run_learn(const LearnArgs& a) {
  const Covariance cov = load_covariance(a.cov_path);
  LearnerConfig cfg;
  cfg.test = TestConfig::defaults(parse_test(a.test));
  if (a.tau) cfg.test.tau = *a.tau;
  cfg.strict_stage2 = a.strict;
  cfg.workers = a.workers;
  cfg.phase = a.phase;
  std::optional<GridNetwork> grid;
  if (!a.case_path.empty()) grid.emplace(load_case(a.case_path));
  std::optional<std::vector<Edge>> e_full;
  if (a.efull == "case") {
    if (!grid) throw std::invalid_argument("--efull case needs --case");
    e_full = grid->permissible_edges();
  }
  const LearnedTopology topo = learn(cov, e_full, cfg);
  json doc = json::parse(serialize_topology(topo));
  if (a.score) {
    if (!grid) throw std::invalid_argument("--score needs --case");
    doc["edge_error"] = edge_error(topo, *grid);
  }
  write_text(a.out, doc.dump(1));
  return 0;
}

// --- eval -----------------------------------------------------------------------
struct EvalArgs {
  std::string plan, out;
  std::optional<unsigned> workers;
};

int run_eval(const EvalArgs& a) {
  ExperimentPlan plan = load_plan(a.plan);
  if (a.workers) plan.workers = *a.workers;
  const ExperimentResult result = run_experiment(plan);
  write_experiment(result, a.out);
  for (const auto& row : best_tau(result)) {
    std::fprintf(stderr, "%-3s n=%-7zu %-9s best tau=%-10.3g error=%.4f +- %.4f\n", to_string(row.key.solver).c_str(),
                 row.key.n_samples, to_string(row.key.test).c_str(), row.key.tau, row.mean_error, row.stderr_error);
  }
  if (result.any_failed()) {
    std::fprintf(stderr, "some cells failed; see results.json\n");
    return kExitFailedCells;
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Radial distribution grid topology learning from voltage samples"};
  app.require_subcommand(1);

  PfArgs pf;
  auto* pf_cmd = app.add_subcommand("pf", "Solve one power flow and print bus voltages as JSON");
  pf_cmd->add_option("--case", pf.case_path, "Case file")->required()->check(CLI::ExistingFile);
  auto* pf_inj = pf_cmd->add_option("--inj", pf.inj_path, "Injection file")->check(CLI::ExistingFile);
  pf_cmd->add_option("--load", pf.load_path, "Load file (solves the mean load or --draw)")
      ->check(CLI::ExistingFile)
      ->excludes(pf_inj);
  pf_cmd->add_option("--model,--solver", pf.solver, "lc, lc3 or ac")->capture_default_str();
  pf_cmd->add_option("--tol", pf.ac.tol, "AC power mismatch tolerance")->capture_default_str();
  pf_cmd->add_option("--max-iter", pf.ac.max_iter, "AC sweep limit")->capture_default_str();
  pf_cmd->add_option("--draw", pf.draw, "Solve the random draw with this index instead of the mean load");
  pf_cmd->add_option("--seed", pf.seed, "Seed for --draw")->capture_default_str();
  pf_cmd->add_option("-o,--out", pf.out, "Output file (default stdout)");

  GenerateArgs gen;
  auto* gen_cmd = app.add_subcommand("generate", "Draw injections and write voltage samples as CSV");
  gen_cmd->add_option("--case", gen.case_path, "Case file")->required()->check(CLI::ExistingFile);
  gen_cmd->add_option("--load", gen.load_path, "Load file")->required()->check(CLI::ExistingFile);
  gen_cmd->add_option("--model,--solver", gen.solver, "lc, lc3 or ac")->capture_default_str();
  gen_cmd->add_option("-n,--n,--samples", gen.n, "Number of samples")->capture_default_str();
  gen_cmd->add_option("--seed", gen.seed, "Seed")->capture_default_str();
  gen_cmd->add_option("--workers", gen.workers, "Threads (0 = all cores)")->capture_default_str();
  gen_cmd->add_option("--covariance", gen.covariance, "JSON covariance block overriding the load file");
  gen_cmd->add_option("-o,--out", gen.out, "Output CSV (default stdout)");

  CovArgs cov;
  auto* cov_cmd = app.add_subcommand("cov", "Empirical covariance of a sample CSV, or the analytic one of a case");
  cov_cmd->add_option("--samples", cov.samples, "Sample CSV")->check(CLI::ExistingFile);
  cov_cmd->add_option("--case", cov.case_path, "Case file for the analytic covariance")->check(CLI::ExistingFile);
  cov_cmd->add_option("--load", cov.load_path, "Load file for the analytic covariance")->check(CLI::ExistingFile);
  cov_cmd->add_option("--covariance", cov.covariance, "JSON covariance block overriding the load file");
  cov_cmd->add_option("-o,--out", cov.out, "Output JSON (default stdout)");

  CiArgs ci;
  auto* ci_cmd = app.add_subcommand("citest", "Run one quartet test k, l | i, j");
  ci_cmd->add_option("--cov", ci.cov_path, "Covariance JSON")->required()->check(CLI::ExistingFile);
  ci_cmd->add_option("--quartet", ci.quartet, "k l i j")->required()->expected(4);
  ci_cmd->add_option("--test", ci.test, "abs, rel or mod")->capture_default_str();
  ci_cmd->add_option("--tau", ci.tau, "Threshold (default per test)");
  ci_cmd->add_option("--ridge", ci.ridge, "Ridge multiple of trace/dim")->capture_default_str();
  ci_cmd->add_option("--phase", ci.phase, "Phase of k and l magnitudes (three phase)")->capture_default_str();

  LearnArgs ln;
  auto* learn_cmd = app.add_subcommand("learn", "Learn the operational tree from a covariance");
  learn_cmd->add_option("--cov", ln.cov_path, "Covariance JSON")->required()->check(CLI::ExistingFile);
  learn_cmd->add_option("--case", ln.case_path, "Case file supplying permissible edges")->check(CLI::ExistingFile);
  learn_cmd->add_option("--efull", ln.efull, "Candidate edges: the case's permissible set or all pairs")
      ->check(CLI::IsMember({"case", "all"}))
      ->capture_default_str();
  learn_cmd->add_option("--test", ln.test, "abs, rel or mod")->capture_default_str();
  learn_cmd->add_option("--tau", ln.tau, "Threshold (default per test)");
  learn_cmd->add_flag("--strict-stage2", ln.strict, "Require every witness in degree-1 leaf attachment");
  learn_cmd->add_option("--workers", ln.workers, "Threads (0 = all cores)")->capture_default_str();
  learn_cmd->add_option("--phase", ln.phase, "Phase of k and l magnitudes (three phase)")->capture_default_str();
  learn_cmd->add_flag("--score", ln.score, "Report edge error against the case topology");
  learn_cmd->add_option("-o,--out", ln.out, "Output JSON (default stdout)");

  EvalArgs ev;
  auto* eval_cmd = app.add_subcommand("eval", "Run an experiment plan; exit 1 if any cell failed");
  eval_cmd->add_option("--plan", ev.plan, "Plan JSON")->required()->check(CLI::ExistingFile);
  eval_cmd->add_option("--out", ev.out, "Output directory")->required();
  eval_cmd->add_option("--workers", ev.workers, "Override the plan's worker count");

  CLI11_PARSE(app, argc, argv);

  try {
    if (*pf_cmd) return run_pf(pf);
    if (*gen_cmd) return run_generate(gen);
    if (*cov_cmd) return run_cov(cov);
    if (*ci_cmd) return run_citest(ci);
    if (*learn_cmd) return run_learn(ln);
    if (*eval_cmd) return run_eval(ev);
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return kExitError;
  }
  return kExitError;
}
