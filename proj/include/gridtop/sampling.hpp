#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "gridtop/layout.hpp"
#include "gridtop/network.hpp"
#include "gridtop/powerflow.hpp"

namespace gridtop {

class ModelError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Gaussian injection model, independent across buses.
///
/// Each non-reference bus carries a mean and covariance over the real vector
/// [p_a, q_a, p_b, q_b, p_c, q_c] (only the first two entries in single-phase mode).
/// Cross-bus covariance has no representation, so independence across buses holds
/// by construction. Within a bus, p and q (and phases) may be correlated.
class LoadModel {
 public:
  LoadModel(const GridNetwork& grid);

  PhaseMode phase_mode() const { return mode_; }
  int n_bus() const { return n_bus_; }
  int block_size() const { return 2 * phase_count(mode_); }
  BusId reference() const { return reference_; }

  /// Throws ModelError unless `cov` is symmetric positive semidefinite with matching shape.
  void set(BusId bus, const Eigen::VectorXd& mean, const Eigen::MatrixXd& cov);

  const Eigen::VectorXd& mean(BusId bus) const { return mean_.at(bus); }
  const Eigen::MatrixXd& covariance(BusId bus) const { return cov_.at(bus); }
  /// Lower-triangular L with L L^T = covariance(bus).
  const Eigen::MatrixXd& factor(BusId bus) const { return factor_.at(bus); }

  /// Buses with a load entry, ascending (every non-reference bus).
  const std::vector<BusId>& buses() const { return buses_; }

 private:
  PhaseMode mode_;
  int n_bus_;
  BusId reference_;
  std::vector<BusId> buses_;
  std::vector<Eigen::VectorXd> mean_;
  std::vector<Eigen::MatrixXd> cov_;
  std::vector<Eigen::MatrixXd> factor_;
};

/// Cholesky factor of a symmetric positive semidefinite matrix. Zero pivots give zero
/// columns; throws ModelError when the matrix is asymmetric or indefinite.
Eigen::MatrixXd semidefinite_cholesky(const Eigen::MatrixXd& cov);

/// Covariance defaults applied to every bus of a load file.
struct CovarianceSpec {
  enum class Kind { Relative, Absolute };
  Kind kind = Kind::Relative;
  /// Relative mode: sigma = fraction * |mean| per component.
  double fraction = 0.1;
  /// Absolute mode: variance of every p and q component.
  double variance = 1e-4;
  /// Correlation between p and q of the same phase.
  double pq_correlation = 0.0;
};

/// Parses a "covariance" block of the load-file schema below.
CovarianceSpec parse_covariance_spec(const std::string& json_text);

/// Builds a model from per-bus means (ordered as LoadModel) and a covariance spec.
LoadModel make_load_model(const GridNetwork& grid, const std::vector<Eigen::VectorXd>& means_by_bus,
                          const CovarianceSpec& spec);

/// Load file (JSON):
///   { "phase_mode": "single"|"three",
///     "loads": [ {"bus": 1, "mean": [p, q] | [[p,q],[p,q],[p,q]], "cov": optional full matrix}, ... ],
///     "covariance": {"kind": "relative", "fraction": 0.1, "pq_correlation": 0.0}
///                 | {"kind": "absolute", "variance": 1e-4, "pq_correlation": 0.0} }
/// Buses not listed have zero mean. `override_spec` replaces the file's "covariance" block.
LoadModel load_load_model(const GridNetwork& grid, const std::filesystem::path& path,
                          const std::optional<CovarianceSpec>& override_spec = std::nullopt);
LoadModel parse_load_model(const GridNetwork& grid, const std::string& json_text,
                           const std::optional<CovarianceSpec>& override_spec = std::nullopt);

/// Injection file: a JSON array with one entry per bus id (the reference entry is
/// ignored), each [p, q] in single phase or [[p, q] x 3] in three phase.
InjectionProfile parse_injections(const GridNetwork& grid, const std::string& json_text);
InjectionProfile load_injections(const GridNetwork& grid, const std::filesystem::path& path);

/// Mean injection profile of the model.
InjectionProfile mean_injection(const LoadModel& model);

/// One draw, fully determined by (seed, index).
InjectionProfile draw_injection(const LoadModel& model, std::uint64_t seed, std::uint64_t index);

/// `n` i.i.d. draws with indices first, first+1, ...
std::vector<InjectionProfile> draw_injections(const LoadModel& model, std::size_t n, std::uint64_t seed,
                                              std::uint64_t first = 0);

/// FNV-1a hash of the raw injection values, in order. The single-profile overload
/// continues from `state`, so hashing draws one at a time matches the span form.
inline constexpr std::uint64_t kInjectionHashSeed = 0xcbf29ce484222325ULL;
std::uint64_t injection_hash(std::span<const InjectionProfile> draws);
std::uint64_t injection_hash(const InjectionProfile& draw, std::uint64_t state = kInjectionHashSeed);

enum class SolverKind { LC, LC3, AC };

std::string to_string(SolverKind kind);
SolverKind parse_solver(const std::string& name);
/// Throws std::invalid_argument when the solver does not apply to the grid's phase mode.
void check_solver(const GridNetwork& grid, SolverKind kind);

/// Runs the requested solver. AC uses default AcOptions.
VoltageSolution solve(const GridNetwork& grid, const InjectionProfile& inj, SolverKind kind);

/// Writes the observables of `sol` in layout order.
void observe(const VariableLayout& layout, const VoltageSolution& sol, std::span<double> row);

/// AC non-convergence on a particular draw.
class DrawError : public std::runtime_error {
 public:
  DrawError(const std::string& what, std::size_t index) : std::runtime_error(what), index_(index) {}
  std::size_t index() const { return index_; }

 private:
  std::size_t index_;
};

struct SampleSet {
  std::uint64_t grid_fingerprint = 0;
  SolverKind solver = SolverKind::LC;
  std::uint64_t seed = 0;
  std::size_t n_samples = 0;
  SampleMatrix samples;
};

/// Row k holds the observables of solving draw k. The result is identical for any
/// `workers` count.
SampleSet generate_samples(const GridNetwork& grid, const LoadModel& model, std::size_t n, SolverKind solver,
                           std::uint64_t seed, unsigned workers = 1);

/// CSV with header `v_<bus>_<phase>,th_<bus>_<phase>,...`; 17 significant digits.
void write_samples_csv(const SampleMatrix& samples, std::ostream& out);
SampleMatrix read_samples_csv(std::istream& in);

}  // namespace gridtop
