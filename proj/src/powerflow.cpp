#include "gridtop/powerflow.hpp"

#include <cmath>
#include <sstream>

namespace gridtop {

namespace {

Complex rotation(int phase) { return std::polar(1.0, -kReferenceAngle[phase]); }

// Tree substitution for V = M^{-1} Z^H M^{-T} P on per-bus 3-vectors (inactive phases zero).
// With M the reduced incidence of a tree, M^{-T} P is the subtree sum below each line and
// M^{-1} accumulates drops from the reference outwards.
std::vector<Eigen::Vector3cd> tree_substitution(const GridNetwork& grid, const std::vector<Eigen::Vector3cd>& p) {
  const int n = grid.n_bus();
  std::vector<Eigen::Vector3cd> subtree(p);
  const auto& order = grid.bfs_order();
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    const BusId b = *it;
    if (b == grid.reference()) continue;
    subtree[grid.parent(b)] += subtree[b];
  }
  std::vector<Eigen::Vector3cd> v(n, Eigen::Vector3cd::Zero());
  for (const BusId b : order) {
    if (b == grid.reference()) continue;
    const auto& z = grid.lines()[grid.parent_line(b)].z.matrix();
    v[b] = v[grid.parent(b)] + z.adjoint() * subtree[b];
  }
  return v;
}

std::vector<Eigen::Vector3cd> rotated_injections(const GridNetwork& grid, const InjectionProfile& inj) {
  const int ph = grid.phases();
  std::vector<Eigen::Vector3cd> p(grid.n_bus(), Eigen::Vector3cd::Zero());
  for (const BusId b : grid.non_reference_buses()) {
    for (int a = 0; a < ph; ++a) p[b](a) = rotation(a) * inj.at(b, a);
  }
  return p;
}

VoltageSolution from_rotated(const GridNetwork& grid, const std::vector<Eigen::Vector3cd>& w) {
  const int ph = grid.phases();
  VoltageSolution sol;
  sol.n_bus = grid.n_bus();
  sol.phases = ph;
  sol.magnitude.assign(static_cast<std::size_t>(grid.n_bus() * ph), 1.0);
  sol.angle.assign(static_cast<std::size_t>(grid.n_bus() * ph), 0.0);
  for (BusId b = 0; b < grid.n_bus(); ++b) {
    for (int a = 0; a < ph; ++a) {
      // w = exp(-i theta_ref) ((v - 1) - i (theta - theta_ref))
      const Complex dev = std::conj(rotation(a)) * w[b](a);
      sol.magnitude[b * ph + a] = 1.0 + dev.real();
      sol.angle[b * ph + a] = kReferenceAngle[a] - dev.imag();
    }
  }
  return sol;
}

}  // namespace

InjectionProfile::InjectionProfile(int n_bus, int phases)
    : n_bus_(n_bus), phases_(phases), values_(static_cast<std::size_t>(n_bus * phases)) {}

InjectionProfile InjectionProfile::zeros(const GridNetwork& grid) {
  return InjectionProfile(grid.n_bus(), grid.phases());
}

void InjectionProfile::check(const GridNetwork& grid) const {
  if (n_bus_ != grid.n_bus() || phases_ != grid.phases()) {
    std::ostringstream os;
    os << "injection profile has " << n_bus_ << " buses x " << phases_ << " phases, grid expects "
       << grid.n_bus() << " x " << grid.phases();
    throw std::invalid_argument(os.str());
  }
  for (const auto& s : values_) {
    if (!std::isfinite(s.real()) || !std::isfinite(s.imag())) {
      throw std::invalid_argument("injection profile contains non-finite values");
    }
  }
}

VoltageSolution lcpf_solve(const GridNetwork& grid, const InjectionProfile& inj) {
  if (grid.phase_mode() != PhaseMode::Single) throw std::invalid_argument("lcpf_solve requires a single-phase grid");
  inj.check(grid);
  return from_rotated(grid, tree_substitution(grid, rotated_injections(grid, inj)));
}

VoltageSolution lcpf3_solve(const GridNetwork& grid, const InjectionProfile& inj) {
  if (grid.phase_mode() != PhaseMode::Three) throw std::invalid_argument("lcpf3_solve requires a three-phase grid");
  inj.check(grid);
  return from_rotated(grid, tree_substitution(grid, rotated_injections(grid, inj)));
}

VoltageSolution linear_solve(const GridNetwork& grid, const InjectionProfile& inj) {
  return grid.phase_mode() == PhaseMode::Single ? lcpf_solve(grid, inj) : lcpf3_solve(grid, inj);
}

BlockAdmittance block_impedance(const GridNetwork& grid, double tolerance) {
  if (grid.phase_mode() != PhaseMode::Three) throw std::invalid_argument("block_impedance requires a three-phase grid");
  const auto ne = static_cast<Eigen::Index>(grid.lines().size());
  BlockAdmittance out;
  out.y_dagger = Eigen::MatrixXcd::Zero(3 * ne, 3 * ne);
  out.z_dagger_h = Eigen::MatrixXcd::Zero(3 * ne, 3 * ne);
  for (Eigen::Index e = 0; e < ne; ++e) {
    const Eigen::Matrix3cd zh = grid.lines()[e].z.matrix().adjoint();
    const Eigen::Matrix3cd y = zh.inverse();
    for (int a = 0; a < 3; ++a) {
      for (int b = 0; b < 3; ++b) {
        out.y_dagger(a * ne + e, b * ne + e) = y(a, b);
        out.z_dagger_h(a * ne + e, b * ne + e) = zh(a, b);
      }
    }
  }
  for (int a = 0; a < 3; ++a) {
    for (int b = 0; b < 3; ++b) out.rotation(a, b) = std::polar(1.0, kReferenceAngle[a] - kReferenceAngle[b]);
  }
  const Eigen::MatrixXcd residual = out.y_dagger * out.z_dagger_h - Eigen::MatrixXcd::Identity(3 * ne, 3 * ne);
  out.deviation = residual.cwiseAbs().rowwise().sum().maxCoeff();
  if (!(out.deviation <= tolerance)) {
    throw std::logic_error("block admittance inverse check failed: deviation " + std::to_string(out.deviation));
  }
  return out;
}

namespace detail {

Eigen::VectorXcd reduced_injection(const GridNetwork& grid, const InjectionProfile& inj) {
  const auto& buses = grid.non_reference_buses();
  const auto n = static_cast<Eigen::Index>(buses.size());
  const int ph = grid.phases();
  Eigen::VectorXcd out(n * ph);
  for (int a = 0; a < ph; ++a) {
    for (Eigen::Index k = 0; k < n; ++k) out(a * n + k) = rotation(a) * inj.at(buses[k], a);
  }
  return out;
}

Eigen::VectorXcd reduced_voltage(const GridNetwork& grid, const VoltageSolution& sol) {
  const auto& buses = grid.non_reference_buses();
  const auto n = static_cast<Eigen::Index>(buses.size());
  const int ph = grid.phases();
  Eigen::VectorXcd out(n * ph);
  for (int a = 0; a < ph; ++a) {
    for (Eigen::Index k = 0; k < n; ++k) {
      const Complex dev(sol.v(buses[k], a) - 1.0, -(sol.theta(buses[k], a) - kReferenceAngle[a]));
      out(a * n + k) = rotation(a) * dev;
    }
  }
  return out;
}

Eigen::VectorXcd linear_reduced_solve(const GridNetwork& grid, const Eigen::VectorXcd& reduced_inj) {
  const auto& buses = grid.non_reference_buses();
  const auto n = static_cast<Eigen::Index>(buses.size());
  const int ph = grid.phases();
  if (reduced_inj.size() != n * ph) throw std::invalid_argument("reduced injection has wrong length");
  std::vector<Eigen::Vector3cd> p(grid.n_bus(), Eigen::Vector3cd::Zero());
  for (int a = 0; a < ph; ++a) {
    for (Eigen::Index k = 0; k < n; ++k) p[buses[k]](a) = reduced_inj(a * n + k);
  }
  const auto v = tree_substitution(grid, p);
  Eigen::VectorXcd out(n * ph);
  for (int a = 0; a < ph; ++a) {
    for (Eigen::Index k = 0; k < n; ++k) out(a * n + k) = v[buses[k]](a);
  }
  return out;
}

InjectionProfile linear_injections(const GridNetwork& grid, const VoltageSolution& sol) {
  const int ph = grid.phases();
  InjectionProfile out(grid.n_bus(), ph);
  auto deviation = [&](BusId b) {
    Eigen::Vector3cd d = Eigen::Vector3cd::Zero();
    for (int a = 0; a < ph; ++a) d(a) = Complex(sol.v(b, a) - 1.0, -(sol.theta(b, a) - kReferenceAngle[a]));
    return d;
  };
  for (const auto& line : grid.lines()) {
    Eigen::Matrix3cd y = Eigen::Matrix3cd::Zero();
    if (ph == 1) {
      y(0, 0) = 1.0 / std::conj(line.z.scalar());
    } else {
      y = line.z.matrix().adjoint().inverse();
    }
    const Eigen::Vector3cd diff = deviation(line.edge.a) - deviation(line.edge.b);
    for (int a = 0; a < ph; ++a) {
      Complex flow = 0.0;
      for (int b = 0; b < ph; ++b) flow += std::polar(1.0, kReferenceAngle[a] - kReferenceAngle[b]) * y(a, b) * diff(b);
      out.at(line.edge.a, a) += flow;
      out.at(line.edge.b, a) -= flow;
    }
  }
  return out;
}

}  // namespace detail

}  // namespace gridtop
