#pragma once

#include <cstddef>
#include <filesystem>
#include <limits>
#include <string>

#include <Eigen/Dense>

#include "gridtop/layout.hpp"
#include "gridtop/network.hpp"
#include "gridtop/sampling.hpp"

namespace gridtop {

/// Streaming mean and centered co-moment. Batches are merged with the pairwise
/// update of Chan et al., so accumulating shards in any grouping gives the same
/// covariance up to rounding.
class CovarianceAccumulator {
 public:
  explicit CovarianceAccumulator(int dim = 0);

  int dim() const { return static_cast<int>(mean_.size()); }
  std::size_t count() const { return n_; }

  void add(const Eigen::Ref<const Eigen::VectorXd>& row);
  /// Adds every row of `rows` as one batch.
  void add_rows(const Eigen::Ref<const Eigen::MatrixXd>& rows);
  void merge(const CovarianceAccumulator& other);

  const Eigen::VectorXd& mean() const { return mean_; }
  const Eigen::MatrixXd& comoment() const { return m2_; }
  /// Unbiased (n - 1) covariance. Throws std::invalid_argument when n < 2.
  Eigen::MatrixXd covariance() const;

 private:
  std::size_t n_ = 0;
  Eigen::VectorXd mean_;
  Eigen::MatrixXd m2_;
};

/// Covariance over a labelled set of observables. n_samples = 0 marks an exact
/// (analytic) covariance.
struct Covariance {
  VariableLayout layout;
  Eigen::VectorXd mean;
  Eigen::MatrixXd matrix;
  std::size_t n_samples = 0;

  bool exact() const { return n_samples == 0; }
  double at(const VariableKey& a, const VariableKey& b) const {
    return matrix(layout.column(a.bus, a.phase, a.obs), layout.column(b.bus, b.phase, b.obs));
  }
};

Covariance empirical_covariance(const SampleMatrix& samples);

/// Real Jacobian of the linear model: observables (layout order) by injections
/// (bus ascending, then [p_a, q_a, p_b, q_b, p_c, q_c]). Exact because the model is affine.
Eigen::MatrixXd linear_sensitivity(const GridNetwork& grid);

/// Population covariance and mean of the observables under the linear model
/// (LC-PF or LC-PF3, picked by phase mode).
Covariance analytic_covariance(const GridNetwork& grid, const LoadModel& model);

/// Single phase only: E[dV dV^H] for dV = V1 - E[V1], from A (Omega_p + Omega_q) A^H with
/// A = M^-1 [Z*] M^-T. Rows follow non_reference_buses(). Throws ModelError when any bus
/// has p-q covariance, since the shortcut drops it.
Eigen::MatrixXcd analytic_complex_covariance_lcpf(const GridNetwork& grid, const LoadModel& model);

/// Zero pattern of the analytic precision matrix, split by hop distance in the grid
/// with the reference bus removed. Block norms are Frobenius norms of the per-bus
/// blocks of the inverse.
struct PatternReport {
  double far_max = 0.0;
  double near_min = std::numeric_limits<double>::infinity();
  double edge_min = std::numeric_limits<double>::infinity();
  double two_hop_min = std::numeric_limits<double>::infinity();
  int far_pairs = 0;
  int edge_pairs = 0;
  int two_hop_pairs = 0;

  /// far_max < rel * near_min and every near block is nonzero.
  bool holds(double rel = 1e-6) const { return near_min > 0.0 && far_max < rel * near_min; }
};

/// Throws ModelError when the covariance is singular (some bus has no load variance).
PatternReport inverse_pattern_check(const GridNetwork& grid, const LoadModel& model);
PatternReport inverse_pattern_check(const GridNetwork& grid, const Covariance& cov);

/// cov.json: {"columns": [...], "n_samples": n, "mean": [...], "matrix": [row-major]}.
std::string serialize_covariance(const Covariance& cov);
Covariance parse_covariance(const std::string& json_text);
void save_covariance(const Covariance& cov, const std::filesystem::path& path);
Covariance load_covariance(const std::filesystem::path& path);

}  // namespace gridtop
