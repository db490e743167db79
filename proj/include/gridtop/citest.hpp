#pragma once

#include <string>

#include <Eigen/Dense>

#include "gridtop/covariance.hpp"

namespace gridtop {

enum class CiTest { Abs, Rel, Mod };

std::string to_string(CiTest test);
/// Accepts "abs", "rel", "mod" with or without a "cond_" prefix.
CiTest parse_test(const std::string& name);

struct TestConfig {
  CiTest test = CiTest::Mod;
  double tau = 0.1;
  /// Ridge added when cond(Sigma) > 1e12, as a multiple of trace(Sigma)/dim.
  double ridge = 1e-12;

  /// tau_abs = 10, tau_rel = tau_mod = 0.1.
  static TestConfig defaults(CiTest test);
  /// Throws std::invalid_argument unless tau is finite and positive and ridge >= 0.
  void check() const;
};

/// (1,2) entry of the inverse of a small covariance block.
struct InverseEntry {
  double value = 0.0;
  /// Condition number of the matrix actually inverted.
  double condition = 0.0;
  bool ridged = false;
  /// Still singular, indefinite or non-finite after the ridge.
  bool indeterminate = false;
};

/// Condition numbers above this trigger the ridge.
inline constexpr double kRidgeCondition = 1e12;
/// Condition numbers above this after the ridge make the entry indeterminate.
inline constexpr double kIndeterminateCondition = 1e14;

InverseEntry inverse_entry_12(const Eigen::MatrixXd& sigma, double ridge);

/// Quartet (k, l | i, j). Single phase: Sigma is over [v_k, v_l, v_i, th_i, v_j, th_j].
/// Three phase: [v_k, v_l, Re V+_i (a,b,c), Im V+_i, Re V+_j, Im V+_j] where V+ is the
/// rotated deviation exp(-i theta_ref)((v - 1) - i (theta - theta_ref)) and k, l use `phase`.
/// The single-conditioned matrices drop the j (resp. i) block.
struct QuartetStat {
  BusId k = 0, l = 0, i = 0, j = 0;
  int phase = 0;
  Eigen::MatrixXd sigma;
  Eigen::MatrixXd sigma_i;
  Eigen::MatrixXd sigma_j;
  InverseEntry pair;
  InverseEntry given_i;
  InverseEntry given_j;
};

/// Throws std::invalid_argument when the buses are not distinct or not in the layout.
QuartetStat quartet(const Covariance& cov, BusId k, BusId l, BusId i, BusId j, int phase = 0, double ridge = 1e-12);

struct CiResult {
  bool independent = false;
  /// A denominator vanished or an inverse was not determined; counted as dependent.
  bool indeterminate = false;
  /// The quantity compared with tau (NaN when indeterminate).
  double statistic = 0.0;
};

CiResult ci_test(const QuartetStat& stat, const TestConfig& cfg);

/// quartet + ci_test in one call.
CiResult ci_test(const Covariance& cov, BusId k, BusId l, BusId i, BusId j, const TestConfig& cfg, int phase = 0);

}  // namespace gridtop
