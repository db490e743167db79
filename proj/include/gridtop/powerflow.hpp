#pragma once

#include <numbers>
#include <stdexcept>
#include <vector>

#include <Eigen/Dense>

#include "gridtop/network.hpp"

namespace gridtop {

/// Reference phase angles for phases (a, b, c).
inline constexpr double kReferenceAngle[3] = {0.0, 2.0 * std::numbers::pi / 3.0,
                                              -2.0 * std::numbers::pi / 3.0};

/// Complex power injection per bus and phase, p + i q in per-unit.
/// Indexed by bus id; the reference bus entry is ignored by every solver.
class InjectionProfile {
 public:
  InjectionProfile(int n_bus, int phases);
  static InjectionProfile zeros(const GridNetwork& grid);

  int n_bus() const { return n_bus_; }
  int phases() const { return phases_; }

  Complex& at(BusId bus, int phase = 0) { return values_[bus * phases_ + phase]; }
  Complex at(BusId bus, int phase = 0) const { return values_[bus * phases_ + phase]; }
  const std::vector<Complex>& values() const { return values_; }

  /// Throws std::invalid_argument when dimensions disagree with the grid or values are not finite.
  void check(const GridNetwork& grid) const;

 private:
  int n_bus_;
  int phases_;
  std::vector<Complex> values_;
};

/// Bus voltages: magnitude (p.u.) and absolute angle (rad), per bus and phase.
struct VoltageSolution {
  int n_bus = 0;
  int phases = 1;
  std::vector<double> magnitude;
  std::vector<double> angle;
  /// Sweeps performed (AC solver only; 0 for the linear models).
  int iterations = 0;
  /// Final max complex power mismatch (AC solver only).
  double mismatch = 0.0;

  double v(BusId bus, int phase = 0) const { return magnitude[bus * phases + phase]; }
  double theta(BusId bus, int phase = 0) const { return angle[bus * phases + phase]; }
  Complex phasor(BusId bus, int phase = 0) const { return std::polar(v(bus, phase), theta(bus, phase)); }
};

/// Lossless linear single-phase model. Tree forward/backward substitution, O(n).
VoltageSolution lcpf_solve(const GridNetwork& grid, const InjectionProfile& inj);

/// Lossless linear coupled three-phase model.
VoltageSolution lcpf3_solve(const GridNetwork& grid, const InjectionProfile& inj);

/// Dispatches to lcpf_solve or lcpf3_solve by phase mode.
VoltageSolution linear_solve(const GridNetwork& grid, const InjectionProfile& inj);

class ConvergenceError : public std::runtime_error {
 public:
  ConvergenceError(const std::string& what, double last_mismatch, int iterations)
      : std::runtime_error(what), last_mismatch_(last_mismatch), iterations_(iterations) {}
  double last_mismatch() const { return last_mismatch_; }
  int iterations() const { return iterations_; }

 private:
  double last_mismatch_;
  int iterations_;
};

struct AcOptions {
  double tol = 1e-10;
  int max_iter = 100;
};

/// Backward/forward sweep for constant-PQ loads on a radial grid (single- or three-phase).
/// Stops when the infinity norm of the complex power mismatch is at most `tol`.
VoltageSolution acpf_solve(const GridNetwork& grid, const InjectionProfile& inj, AcOptions options = {});

/// Infinity norm of S_i - V_i conj(I_i) over non-reference buses and phases.
double ac_power_mismatch(const GridNetwork& grid, const InjectionProfile& inj, const VoltageSolution& sol);

/// Global block admittance of a three-phase grid together with its claimed inverse.
struct BlockAdmittance {
  /// 3|E| x 3|E|; block (alpha, beta) is diag over lines of (Z_e^H)^{-1}(alpha, beta).
  Eigen::MatrixXcd y_dagger;
  /// Same layout built from Z_e^H directly.
  Eigen::MatrixXcd z_dagger_h;
  /// exp(i (theta_ref^alpha - theta_ref^beta)).
  Eigen::Matrix3cd rotation;
  /// Infinity norm of y_dagger * z_dagger_h - I.
  double deviation = 0.0;
};

/// Assembles the block admittance and verifies that per-line inversion yields its inverse.
/// Throws std::logic_error when the deviation exceeds `tolerance`.
BlockAdmittance block_impedance(const GridNetwork& grid, double tolerance = 1e-10);

namespace detail {

/// Linear model in reduced complex coordinates. Single phase: V1 = v - i theta over
/// non-reference buses. Three phase: phase-major stacking [a; b; c] of
/// exp(-i theta_ref) ((v - 1) - i (theta - theta_ref)), injections rotated the same way.
Eigen::VectorXcd reduced_injection(const GridNetwork& grid, const InjectionProfile& inj);
Eigen::VectorXcd reduced_voltage(const GridNetwork& grid, const VoltageSolution& sol);
Eigen::VectorXcd linear_reduced_solve(const GridNetwork& grid, const Eigen::VectorXcd& reduced_injection);

/// Per-bus injections (reference included) implied by a voltage state under the
/// lossless linear equations, in unrotated per-phase form.
InjectionProfile linear_injections(const GridNetwork& grid, const VoltageSolution& sol);

}  // namespace detail

}  // namespace gridtop
