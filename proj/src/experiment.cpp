#include "gridtop/experiment.hpp"

#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>
#include <stdexcept>

#include <json.hpp>

#include "gridtop/covariance.hpp"
#include "gridtop/parallel.hpp"
#include "gridtop/rng.hpp"

namespace gridtop {

using nlohmann::json;

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) { return std::chrono::duration<double>(Clock::now() - t0).count(); }

std::string hex(std::uint64_t v) {
  char buf[19];
  std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(v));
  return buf;
}

std::string format_double(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

/// Streams `n` draws through the solver into a covariance; the hash covers every draw.
Covariance sampled_covariance(const GridNetwork& grid, const LoadModel& model, std::size_t n, SolverKind solver,
                              std::uint64_t seed, std::uint64_t& hash) {
  const VariableLayout layout = VariableLayout::for_grid(grid);
  CovarianceAccumulator acc(layout.size());
  constexpr std::size_t kBatch = 4096;
  Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor> batch(kBatch, layout.size());
  hash = kInjectionHashSeed;
  std::size_t fill = 0;
  for (std::size_t k = 0; k < n; ++k) {
    const InjectionProfile inj = draw_injection(model, seed, k);
    hash = injection_hash(inj, hash);
    VoltageSolution sol;
    try {
      sol = solve(grid, inj, solver);
    } catch (const ConvergenceError& e) {
      throw DrawError("draw " + std::to_string(k) + ": " + e.what(), k);
    }
    observe(layout, sol, std::span<double>(batch.row(static_cast<Eigen::Index>(fill)).data(), layout.size()));
    if (++fill == kBatch) {
      acc.add_rows(batch);
      fill = 0;
    }
  }
  if (fill > 0) acc.add_rows(batch.topRows(static_cast<Eigen::Index>(fill)));
  Covariance cov;
  cov.layout = layout;
  cov.mean = acc.mean();
  cov.matrix = acc.covariance();
  cov.n_samples = n;
  return cov;
}

void finalize(CellResult& cell) {
  const auto m = cell.errors.size();
  if (m == 0) return;
  double sum = 0.0, tests = 0.0;
  for (std::size_t t = 0; t < m; ++t) {
    sum += cell.errors[t];
    tests += static_cast<double>(cell.test_counts[t]);
  }
  cell.mean_error = sum / static_cast<double>(m);
  cell.mean_tests = tests / static_cast<double>(m);
  if (m > 1) {
    double ss = 0.0;
    for (const double e : cell.errors) ss += (e - cell.mean_error) * (e - cell.mean_error);
    cell.stderr_error = std::sqrt(ss / static_cast<double>(m - 1)) / std::sqrt(static_cast<double>(m));
  }
}

}  // namespace

void ExperimentPlan::check() const {
  if (solvers.empty()) throw std::invalid_argument("plan: solver list is empty");
  if (sample_sizes.empty()) throw std::invalid_argument("plan: sample-size grid is empty");
  if (tests.empty()) throw std::invalid_argument("plan: test grid is empty");
  if (trials < 1) throw std::invalid_argument("plan: trials must be at least 1");
  for (const auto n : sample_sizes) {
    if (n == 1) throw std::invalid_argument("plan: a sample size of 1 cannot give a covariance");
  }
  for (const auto& g : tests) {
    if (g.taus.empty()) throw std::invalid_argument("plan: test " + to_string(g.test) + " has no thresholds");
    for (const double tau : g.taus) {
      if (!(std::isfinite(tau) && tau > 0.0)) throw std::invalid_argument("plan: thresholds must be finite and positive");
    }
  }
}

ExperimentPlan parse_plan(const std::string& json_text, const std::filesystem::path& base_dir) {
  json doc;
  try {
    doc = json::parse(json_text);
  } catch (const json::parse_error& e) {
    throw std::invalid_argument(std::string("malformed plan JSON: ") + e.what());
  }
  ExperimentPlan plan;
  try {
    auto resolve = [&](const std::string& p) {
      std::filesystem::path path(p);
      return path.is_absolute() || base_dir.empty() ? path : base_dir / path;
    };
    plan.case_path = resolve(doc.at("case").get<std::string>());
    plan.load_path = resolve(doc.at("load").get<std::string>());
    for (const auto& s : doc.at("solvers")) plan.solvers.push_back(parse_solver(s.get<std::string>()));
    plan.sample_sizes = doc.at("n_samples").get<std::vector<std::size_t>>();
    for (const auto& t : doc.at("tests")) {
      plan.tests.push_back({parse_test(t.at("test").get<std::string>()), t.at("taus").get<std::vector<double>>()});
    }
    plan.trials = doc.value("trials", plan.trials);
    plan.seed = doc.value("seed", plan.seed);
    const std::string efull = doc.value("efull", std::string("case"));
    if (efull != "case" && efull != "all") throw std::invalid_argument("plan: efull must be \"case\" or \"all\"");
    plan.all_pairs = efull == "all";
    plan.strict_stage2 = doc.value("strict_stage2", false);
    plan.workers = doc.value("workers", 1u);
    if (doc.contains("covariance")) plan.covariance = parse_covariance_spec(doc["covariance"].dump());
  } catch (const json::exception& e) {
    throw std::invalid_argument(std::string("plan: ") + e.what());
  }
  plan.check();
  return plan;
}

ExperimentPlan load_plan(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open plan " + path.string());
  std::stringstream buf;
  buf << in.rdbuf();
  return parse_plan(buf.str(), path.parent_path());
}

bool ExperimentResult::any_failed() const {
  for (const auto& c : cells) {
    if (c.failed) return true;
  }
  return false;
}

std::uint64_t trial_seed(std::uint64_t plan_seed, std::size_t n_samples, int trial) {
  return derive_seed(plan_seed, n_samples, static_cast<std::uint64_t>(trial));
}

ExperimentResult run_experiment(const ExperimentPlan& plan) {
  const GridNetwork grid = load_case(plan.case_path);
  const LoadModel model = load_load_model(grid, plan.load_path, plan.covariance);
  return run_experiment(plan, grid, model);
}

ExperimentResult run_experiment(const ExperimentPlan& plan, const GridNetwork& grid, const LoadModel& model) {
  plan.check();
  for (const auto s : plan.solvers) check_solver(grid, s);

  const std::optional<std::vector<Edge>> e_full =
      plan.all_pairs ? std::nullopt : std::optional<std::vector<Edge>>(grid.permissible_edges());
  const auto n_solver = plan.solvers.size();

  // Cell layout: solver, sample size, test, tau (outermost first).
  std::vector<std::size_t> tau_offset;
  std::size_t per_block = 0;
  for (const auto& g : plan.tests) {
    tau_offset.push_back(per_block);
    per_block += g.taus.size();
  }
  auto cell_index = [&](std::size_t s, std::size_t n_idx, std::size_t t, std::size_t tau) {
    return (s * plan.sample_sizes.size() + n_idx) * per_block + tau_offset[t] + tau;
  };

  ExperimentResult result;
  result.cells.resize(n_solver * plan.sample_sizes.size() * per_block);
  for (std::size_t s = 0; s < n_solver; ++s) {
    for (std::size_t n_idx = 0; n_idx < plan.sample_sizes.size(); ++n_idx) {
      for (std::size_t t = 0; t < plan.tests.size(); ++t) {
        for (std::size_t u = 0; u < plan.tests[t].taus.size(); ++u) {
          result.cells[cell_index(s, n_idx, t, u)].key = {plan.solvers[s], plan.sample_sizes[n_idx],
                                                          plan.tests[t].test, plan.tests[t].taus[u]};
        }
      }
    }
  }

  struct Job {
    std::size_t n_idx;
    int trial;
  };
  std::vector<Job> jobs;
  for (std::size_t n_idx = 0; n_idx < plan.sample_sizes.size(); ++n_idx) {
    // The exact covariance does not depend on the seed, so one trial covers it.
    const int trials = plan.sample_sizes[n_idx] == 0 ? 1 : plan.trials;
    for (int t = 0; t < trials; ++t) jobs.push_back({n_idx, t});
  }

  struct LearnOutcome {
    double error = 0.0;
    std::size_t tests = 0;
    double seconds = 0.0;
  };
  struct JobOutput {
    std::vector<TrialRecord> records;
    /// [solver][cell-in-block]
    std::vector<std::vector<LearnOutcome>> learned;
  };
  std::vector<JobOutput> outputs(jobs.size());

  parallel_for(jobs.size(), plan.workers, [&](std::size_t idx) {
    const Job job = jobs[idx];
    const std::size_t n = plan.sample_sizes[job.n_idx];
    JobOutput& out = outputs[idx];
    out.learned.resize(n_solver);
    for (std::size_t s = 0; s < n_solver; ++s) {
      TrialRecord rec;
      rec.solver = plan.solvers[s];
      rec.n_samples = n;
      rec.trial = job.trial;
      rec.seed = trial_seed(plan.seed, n, job.trial);
      const auto t0 = Clock::now();
      Covariance cov;
      try {
        if (n == 0) {
          cov = analytic_covariance(grid, model);
        } else {
          cov = sampled_covariance(grid, model, n, rec.solver, rec.seed, rec.injection_hash);
        }
      } catch (const std::exception& e) {
        rec.failed = true;
        rec.failure = e.what();
      }
      rec.wall_seconds = seconds_since(t0);
      out.records.push_back(rec);
      if (rec.failed) continue;

      for (std::size_t t = 0; t < plan.tests.size(); ++t) {
        for (const double tau : plan.tests[t].taus) {
          LearnerConfig cfg;
          cfg.test.test = plan.tests[t].test;
          cfg.test.tau = tau;
          cfg.strict_stage2 = plan.strict_stage2;
          const auto t1 = Clock::now();
          const LearnedTopology topo = learn(cov, e_full, cfg);
          out.learned[s].push_back({edge_error(topo, grid), topo.test_count, seconds_since(t1)});
        }
      }
    }
  });

  for (std::size_t idx = 0; idx < jobs.size(); ++idx) {
    const Job job = jobs[idx];
    const JobOutput& out = outputs[idx];
    for (std::size_t s = 0; s < n_solver; ++s) {
      const TrialRecord& rec = out.records[s];
      result.trials.push_back(rec);
      for (std::size_t t = 0; t < plan.tests.size(); ++t) {
        for (std::size_t u = 0; u < plan.tests[t].taus.size(); ++u) {
          CellResult& cell = result.cells[cell_index(s, job.n_idx, t, u)];
          if (rec.failed) {
            if (!cell.failed) cell.failure = "trial " + std::to_string(job.trial) + ": " + rec.failure;
            cell.failed = true;
            continue;
          }
          const LearnOutcome& lo = out.learned[s][tau_offset[t] + u];
          cell.errors.push_back(lo.error);
          cell.test_counts.push_back(lo.tests);
          cell.wall_seconds += lo.seconds;
        }
      }
    }
  }
  for (auto& cell : result.cells) finalize(cell);
  return result;
}

std::string emit_plotdata(const ExperimentResult& result) {
  std::string out = "n_samples,solver,test,tau,mean_err,stderr\n";
  for (const auto& c : result.cells) {
    out += std::to_string(c.key.n_samples) + ',' + to_string(c.key.solver) + ',' + to_string(c.key.test) + ',' +
           format_double(c.key.tau) + ',' + format_double(c.mean_error) + ',' + format_double(c.stderr_error) + '\n';
  }
  return out;
}

std::vector<PlotRow> parse_plotdata(const std::string& csv) {
  std::istringstream in(csv);
  std::string line;
  if (!std::getline(in, line) || line != "n_samples,solver,test,tau,mean_err,stderr") {
    throw std::invalid_argument("plotdata: unexpected header");
  }
  std::vector<PlotRow> rows;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::vector<std::string> f;
    std::stringstream ss(line);
    std::string cell;
    while (std::getline(ss, cell, ',')) f.push_back(cell);
    if (f.size() != 6) throw std::invalid_argument("plotdata: row with " + std::to_string(f.size()) + " fields");
    PlotRow r;
    r.n_samples = std::stoull(f[0]);
    r.solver = f[1];
    r.test = f[2];
    r.tau = std::strtod(f[3].c_str(), nullptr);
    r.mean_error = std::strtod(f[4].c_str(), nullptr);
    r.stderr_error = std::strtod(f[5].c_str(), nullptr);
    rows.push_back(r);
  }
  return rows;
}

std::vector<CellResult> best_tau(const ExperimentResult& result) {
  std::vector<CellResult> out;
  for (const auto& c : result.cells) {
    auto it = std::find_if(out.begin(), out.end(), [&](const CellResult& b) {
      return b.key.solver == c.key.solver && b.key.n_samples == c.key.n_samples && b.key.test == c.key.test;
    });
    if (it == out.end()) {
      out.push_back(c);
    } else if (!c.failed && (it->failed || c.mean_error < it->mean_error)) {
      *it = c;
    }
  }
  return out;
}

std::string serialize_result(const ExperimentResult& result) {
  json cells = json::array();
  for (const auto& c : result.cells) {
    cells.push_back({{"solver", to_string(c.key.solver)},
                     {"n_samples", c.key.n_samples},
                     {"test", to_string(c.key.test)},
                     {"tau", c.key.tau},
                     {"errors", c.errors},
                     {"test_counts", c.test_counts},
                     {"mean_error", c.mean_error},
                     {"stderr", c.stderr_error},
                     {"mean_tests", c.mean_tests},
                     {"failed", c.failed},
                     {"failure", c.failure}});
  }
  json trials = json::array();
  for (const auto& t : result.trials) {
    trials.push_back({{"solver", to_string(t.solver)},
                      {"n_samples", t.n_samples},
                      {"trial", t.trial},
                      {"seed", hex(t.seed)},
                      {"injection_hash", hex(t.injection_hash)},
                      {"failed", t.failed},
                      {"failure", t.failure}});
  }
  json best = json::array();
  for (const auto& c : best_tau(result)) {
    best.push_back({{"solver", to_string(c.key.solver)},
                    {"n_samples", c.key.n_samples},
                    {"test", to_string(c.key.test)},
                    {"tau", c.key.tau},
                    {"mean_error", c.mean_error},
                    {"stderr", c.stderr_error}});
  }
  json doc = {{"cells", cells}, {"trials", trials}, {"best_tau", best}, {"failed", result.any_failed()}};
  return doc.dump(1);
}

std::string serialize_timing(const ExperimentResult& result) {
  json cells = json::array();
  for (const auto& c : result.cells) {
    cells.push_back({{"solver", to_string(c.key.solver)},
                     {"n_samples", c.key.n_samples},
                     {"test", to_string(c.key.test)},
                     {"tau", c.key.tau},
                     {"learn_seconds", c.wall_seconds}});
  }
  json trials = json::array();
  for (const auto& t : result.trials) {
    trials.push_back({{"solver", to_string(t.solver)},
                      {"n_samples", t.n_samples},
                      {"trial", t.trial},
                      {"sampling_seconds", t.wall_seconds}});
  }
  return json{{"cells", cells}, {"trials", trials}}.dump(1);
}

void write_experiment(const ExperimentResult& result, const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  auto write = [&](const std::string& name, const std::string& text) {
    std::ofstream out(dir / name, std::ios::binary);
    if (!out) throw std::runtime_error("cannot write " + (dir / name).string());
    out << text;
  };
  write("results.json", serialize_result(result) + "\n");
  write("plotdata.csv", emit_plotdata(result));
  ExperimentResult best;
  best.cells = best_tau(result);
  write("best_tau.csv", emit_plotdata(best));
  write("timing.json", serialize_timing(result) + "\n");
}

}  // namespace gridtop
