#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "gridtop/citest.hpp"
#include "gridtop/learner.hpp"
#include "gridtop/network.hpp"
#include "gridtop/sampling.hpp"

namespace gridtop {

struct TestGrid {
  CiTest test = CiTest::Mod;
  std::vector<double> taus;
};

/// plan.json:
///   { "case": "bus20.json", "load": "bus20.load.json",   (relative to the plan file)
///     "solvers": ["lc", "ac"], "n_samples": [1000, 10000, 100000],   (0 = exact covariance)
///     "tests": [{"test": "mod", "taus": [0.05, 0.1]}, ...],
///     "trials": 10, "seed": 1, "efull": "case" | "all",
///     "strict_stage2": false, "workers": 1,
///     "covariance": {"kind": "relative", "fraction": 0.1} (optional override) }
struct ExperimentPlan {
  std::filesystem::path case_path;
  std::filesystem::path load_path;
  std::vector<SolverKind> solvers;
  std::vector<std::size_t> sample_sizes;
  std::vector<TestGrid> tests;
  int trials = 10;
  std::uint64_t seed = 0;
  bool all_pairs = false;
  bool strict_stage2 = false;
  unsigned workers = 1;
  std::optional<CovarianceSpec> covariance;

  /// Throws std::invalid_argument on empty grids, non-positive trials or bad taus.
  void check() const;
};

ExperimentPlan parse_plan(const std::string& json_text, const std::filesystem::path& base_dir = {});
ExperimentPlan load_plan(const std::filesystem::path& path);

struct CellKey {
  SolverKind solver = SolverKind::LC;
  std::size_t n_samples = 0;
  CiTest test = CiTest::Mod;
  double tau = 0.0;
};

struct CellResult {
  CellKey key;
  /// Relative edge error per completed trial, in trial order.
  std::vector<double> errors;
  std::vector<std::size_t> test_counts;
  double mean_error = 0.0;
  double stderr_error = 0.0;
  double mean_tests = 0.0;
  bool failed = false;
  std::string failure;
  /// Learner time summed over trials (not part of the deterministic output).
  double wall_seconds = 0.0;
};

/// One (solver, sample size, trial) sampling run.
struct TrialRecord {
  SolverKind solver = SolverKind::LC;
  std::size_t n_samples = 0;
  int trial = 0;
  std::uint64_t seed = 0;
  /// Hash of the injections consumed; equal across solvers within a trial.
  std::uint64_t injection_hash = 0;
  bool failed = false;
  std::string failure;
  double wall_seconds = 0.0;
};

struct ExperimentResult {
  std::vector<CellResult> cells;
  std::vector<TrialRecord> trials;

  bool any_failed() const;
};

/// Seed of a trial; shared by every solver so they see the same injections.
std::uint64_t trial_seed(std::uint64_t plan_seed, std::size_t n_samples, int trial);

ExperimentResult run_experiment(const ExperimentPlan& plan);
/// Same, with the grid and load model supplied directly (plan paths are ignored).
ExperimentResult run_experiment(const ExperimentPlan& plan, const GridNetwork& grid, const LoadModel& model);

struct PlotRow {
  std::size_t n_samples = 0;
  std::string solver;
  std::string test;
  double tau = 0.0;
  double mean_error = 0.0;
  double stderr_error = 0.0;

  bool operator==(const PlotRow&) const = default;
};

/// CSV "n_samples,solver,test,tau,mean_err,stderr", one row per cell, 17 significant digits.
std::string emit_plotdata(const ExperimentResult& result);
std::vector<PlotRow> parse_plotdata(const std::string& csv);

/// Per (solver, n, test): the cell with the lowest mean error (first tau on ties).
std::vector<CellResult> best_tau(const ExperimentResult& result);

/// Deterministic results document (no wall times).
std::string serialize_result(const ExperimentResult& result);
/// Wall times only.
std::string serialize_timing(const ExperimentResult& result);

/// Writes results.json, plotdata.csv, best_tau.csv and timing.json into `dir`.
void write_experiment(const ExperimentResult& result, const std::filesystem::path& dir);

}  // namespace gridtop
