#include <cmath>
#include <sstream>

#include "gridtop/powerflow.hpp"

namespace gridtop {

namespace {

// Line admittance Z^{-1} restricted to the active phases.
Eigen::Matrix3cd line_admittance(const Line& line, int phases) {
  Eigen::Matrix3cd y = Eigen::Matrix3cd::Zero();
  if (phases == 1) {
    y(0, 0) = 1.0 / line.z.scalar();
  } else {
    y = line.z.matrix().inverse();
  }
  return y;
}

double mismatch_of(const GridNetwork& grid, const InjectionProfile& inj, const std::vector<Eigen::Vector3cd>& v,
                   const std::vector<Eigen::Matrix3cd>& admittance) {
  const int ph = grid.phases();
  std::vector<Eigen::Vector3cd> current(grid.n_bus(), Eigen::Vector3cd::Zero());
  for (std::size_t idx = 0; idx < grid.lines().size(); ++idx) {
    const Edge& e = grid.lines()[idx].edge;
    const Eigen::Vector3cd flow = admittance[idx] * (v[e.a] - v[e.b]);
    current[e.a] += flow;
    current[e.b] -= flow;
  }
  double worst = 0.0;
  for (const BusId b : grid.non_reference_buses()) {
    for (int a = 0; a < ph; ++a) {
      const Complex s = v[b](a) * std::conj(current[b](a));
      worst = std::max(worst, std::abs(s - inj.at(b, a)));
    }
  }
  return worst;
}

VoltageSolution to_solution(const GridNetwork& grid, const std::vector<Eigen::Vector3cd>& v) {
  const int ph = grid.phases();
  VoltageSolution sol;
  sol.n_bus = grid.n_bus();
  sol.phases = ph;
  sol.magnitude.resize(static_cast<std::size_t>(grid.n_bus() * ph));
  sol.angle.resize(sol.magnitude.size());
  for (BusId b = 0; b < grid.n_bus(); ++b) {
    for (int a = 0; a < ph; ++a) {
      sol.magnitude[b * ph + a] = std::abs(v[b](a));
      // Keep angles within pi of the phase's reference offset.
      double ang = std::arg(v[b](a) * std::polar(1.0, -kReferenceAngle[a]));
      sol.angle[b * ph + a] = kReferenceAngle[a] + ang;
    }
  }
  return sol;
}

}  // namespace

double ac_power_mismatch(const GridNetwork& grid, const InjectionProfile& inj, const VoltageSolution& sol) {
  const int ph = grid.phases();
  std::vector<Eigen::Vector3cd> v(grid.n_bus(), Eigen::Vector3cd::Zero());
  for (BusId b = 0; b < grid.n_bus(); ++b) {
    for (int a = 0; a < ph; ++a) v[b](a) = sol.phasor(b, a);
  }
  std::vector<Eigen::Matrix3cd> admittance;
  for (const auto& line : grid.lines()) admittance.push_back(line_admittance(line, ph));
  return mismatch_of(grid, inj, v, admittance);
}

VoltageSolution acpf_solve(const GridNetwork& grid, const InjectionProfile& inj, AcOptions options) {
  inj.check(grid);
  const int ph = grid.phases();
  const int n = grid.n_bus();

  std::vector<Eigen::Matrix3cd> admittance;
  admittance.reserve(grid.lines().size());
  for (const auto& line : grid.lines()) admittance.push_back(line_admittance(line, ph));

  Eigen::Vector3cd flat = Eigen::Vector3cd::Zero();
  for (int a = 0; a < ph; ++a) flat(a) = std::polar(1.0, kReferenceAngle[a]);
  std::vector<Eigen::Vector3cd> v(n, flat);
  std::vector<Eigen::Vector3cd> branch(n, Eigen::Vector3cd::Zero());
  const auto& order = grid.bfs_order();

  double mismatch = 0.0;
  for (int iter = 1; iter <= options.max_iter; ++iter) {
    // Backward: current leaving each bus toward its parent.
    for (const BusId b : grid.non_reference_buses()) {
      branch[b].setZero();
      for (int a = 0; a < ph; ++a) branch[b](a) = std::conj(inj.at(b, a) / v[b](a));
    }
    for (auto it = order.rbegin(); it != order.rend(); ++it) {
      const BusId b = *it;
      if (b == grid.reference()) continue;
      const BusId p = grid.parent(b);
      if (p != grid.reference()) branch[p] += branch[b];
    }
    // Forward: V_child = V_parent + Z I_{child->parent}.
    for (const BusId b : order) {
      if (b == grid.reference()) continue;
      const auto& z = grid.lines()[grid.parent_line(b)].z.matrix();
      v[b] = v[grid.parent(b)] + z * branch[b];
    }

    mismatch = mismatch_of(grid, inj, v, admittance);
    if (!std::isfinite(mismatch)) {
      throw ConvergenceError("backward/forward sweep diverged", mismatch, iter);
    }
    if (mismatch <= options.tol) {
      VoltageSolution sol = to_solution(grid, v);
      sol.iterations = iter;
      sol.mismatch = mismatch;
      return sol;
    }
  }
  std::ostringstream os;
  os << "backward/forward sweep did not converge in " << options.max_iter << " iterations (mismatch " << mismatch
     << ")";
  throw ConvergenceError(os.str(), mismatch, options.max_iter);
}

}  // namespace gridtop
