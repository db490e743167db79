#include <doctest.h>

#include <random>

#include "fixtures.hpp"
#include "gridtop/network.hpp"
#include "gridtop/powerflow.hpp"
#include "gridtop/sampling.hpp"

using namespace gridtop;

namespace {

// Dense single-phase oracle: V1 = M^{-1} diag(conj z) M^{-T} P over non-reference buses.
Eigen::VectorXcd dense_lcpf(const GridNetwork& g, const InjectionProfile& inj) {
  const auto inc = incidence(g);
  const Eigen::MatrixXcd m = inc.matrix.cast<Complex>();
  Eigen::VectorXcd zc(inc.edge_order.size());
  for (std::size_t e = 0; e < inc.edge_order.size(); ++e) {
    for (const auto& l : g.lines()) {
      if (l.edge == inc.edge_order[e]) zc(e) = std::conj(l.z.scalar());
    }
  }
  Eigen::VectorXcd p(inc.columns.size());
  for (std::size_t k = 0; k < inc.columns.size(); ++k) p(k) = inj.at(inc.columns[k]);
  const Eigen::MatrixXcd minv = m.inverse();
  return minv * zc.asDiagonal() * minv.transpose() * p;
}

Eigen::VectorXcd v1_of(const GridNetwork& g, const VoltageSolution& sol) {
  const auto& buses = g.non_reference_buses();
  Eigen::VectorXcd out(buses.size());
  for (std::size_t k = 0; k < buses.size(); ++k) out(k) = Complex(sol.v(buses[k]) - 1.0, -sol.theta(buses[k]));
  return out;
}

// Dense three-phase oracle in rotated coordinates: P = (I3 x M)^T Y (I3 x M) V.
Eigen::VectorXcd dense_lcpf3(const GridNetwork& g, const Eigen::VectorXcd& p_rot) {
  const auto inc = incidence(g);
  const auto ne = static_cast<Eigen::Index>(inc.edge_order.size());
  const auto n = static_cast<Eigen::Index>(inc.columns.size());
  Eigen::MatrixXcd mm = Eigen::MatrixXcd::Zero(3 * ne, 3 * n);
  Eigen::MatrixXcd y = Eigen::MatrixXcd::Zero(3 * ne, 3 * ne);
  for (Eigen::Index e = 0; e < ne; ++e) {
    Eigen::Matrix3cd z;
    for (const auto& l : g.lines()) {
      if (l.edge == inc.edge_order[e]) z = l.z.matrix();
    }
    const Eigen::Matrix3cd ye = z.adjoint().inverse();
    for (int a = 0; a < 3; ++a) {
      for (Eigen::Index k = 0; k < n; ++k) mm(a * ne + e, a * n + k) = inc.matrix(e, k);
      for (int b = 0; b < 3; ++b) y(a * ne + e, b * ne + e) = ye(a, b);
    }
  }
  const Eigen::MatrixXcd lap = mm.transpose() * y * mm;
  return lap.fullPivLu().solve(p_rot);
}

InjectionProfile random_injection(std::mt19937_64& rng, const GridNetwork& g, double scale = 0.05) {
  std::uniform_real_distribution<double> u(-scale, scale);
  InjectionProfile inj = InjectionProfile::zeros(g);
  for (const BusId b : g.non_reference_buses()) {
    for (int a = 0; a < g.phases(); ++a) inj.at(b, a) = Complex(u(rng), u(rng));
  }
  return inj;
}

// Complex power S_i = V_i conj(I_i) with line currents from Z^{-1} voltage drops.
std::vector<Complex> ac_power(const GridNetwork& g, const VoltageSolution& sol) {
  const int ph = g.phases();
  std::vector<Eigen::Vector3cd> cur(g.n_bus(), Eigen::Vector3cd::Zero());
  for (const auto& l : g.lines()) {
    Eigen::Vector3cd drop = Eigen::Vector3cd::Zero();
    Eigen::Matrix3cd y = Eigen::Matrix3cd::Zero();
    if (ph == 1) {
      y(0, 0) = 1.0 / l.z.scalar();
    } else {
      y = l.z.matrix().inverse();
    }
    for (int a = 0; a < ph; ++a) drop(a) = sol.phasor(l.edge.a, a) - sol.phasor(l.edge.b, a);
    const Eigen::Vector3cd i = y * drop;
    cur[l.edge.a] += i;
    cur[l.edge.b] -= i;
  }
  std::vector<Complex> s;
  for (BusId b = 0; b < g.n_bus(); ++b) {
    for (int a = 0; a < ph; ++a) s.push_back(sol.phasor(b, a) * std::conj(cur[b](a)));
  }
  return s;
}

GridData three_phase_path(int n, const Eigen::Matrix3cd& z) {
  GridData d = fixtures::path_data(n);
  d.phase_mode = PhaseMode::Three;
  for (auto& l : d.lines) l.z = LineImpedance::three(z);
  return d;
}

}  // namespace

TEST_CASE("lcpf two-bus: reduced voltage equals conj(Z) P") {
  GridData d = fixtures::path_data(1, Complex(0.01, 0.02));
  const GridNetwork g(d);
  InjectionProfile inj = InjectionProfile::zeros(g);
  inj.at(1) = Complex(1.0, 0.0);
  const auto sol = lcpf_solve(g, inj);
  CHECK(sol.v(1) - 1.0 == doctest::Approx(0.01).epsilon(1e-14));
  CHECK(sol.theta(1) == doctest::Approx(0.02).epsilon(1e-14));
  CHECK(sol.v(0) == 1.0);
  CHECK(sol.theta(0) == 0.0);
}

TEST_CASE("linear solvers return the flat profile for zero injection") {
  std::mt19937_64 rng(1);
  for (const auto mode : {PhaseMode::Single, PhaseMode::Three}) {
    fixtures::TreeOptions o;
    o.mode = mode;
    const GridNetwork g = fixtures::random_tree(rng, o);
    const auto sol = linear_solve(g, InjectionProfile::zeros(g));
    for (BusId b = 0; b < g.n_bus(); ++b) {
      for (int a = 0; a < g.phases(); ++a) {
        CHECK(sol.v(b, a) == 1.0);
        CHECK(sol.theta(b, a) == doctest::Approx(kReferenceAngle[a]).epsilon(1e-15));
      }
    }
  }
}

TEST_CASE("lcpf matches the dense inverse oracle") {
  GridData d = fixtures::path_data(2, Complex(0.01, 0.02));
  const GridNetwork g(d);
  InjectionProfile inj = InjectionProfile::zeros(g);
  inj.at(1) = Complex(0.1, 0.05);
  inj.at(2) = Complex(0.2, 0.1);
  CHECK((v1_of(g, lcpf_solve(g, inj)) - dense_lcpf(g, inj)).cwiseAbs().maxCoeff() <= 1e-12);

  std::mt19937_64 rng(2);
  for (int t = 0; t < 20; ++t) {
    fixtures::TreeOptions o;
    o.n_nonsub = 3 + t % 9;
    o.require_assumption2 = false;
    const GridNetwork rg = fixtures::random_tree(rng, o);
    const auto rinj = random_injection(rng, rg);
    CHECK((v1_of(rg, lcpf_solve(rg, rinj)) - dense_lcpf(rg, rinj)).cwiseAbs().maxCoeff() <= 1e-12);
  }
}

TEST_CASE("lcpf3 matches the dense block oracle") {
  std::mt19937_64 rng(3);
  for (int t = 0; t < 20; ++t) {
    fixtures::TreeOptions o;
    o.mode = PhaseMode::Three;
    o.n_nonsub = 3 + t % 6;
    o.require_assumption2 = false;
    const GridNetwork g = fixtures::random_tree(rng, o);
    const auto inj = random_injection(rng, g);
    const Eigen::VectorXcd p = detail::reduced_injection(g, inj);
    const Eigen::VectorXcd v = detail::reduced_voltage(g, lcpf3_solve(g, inj));
    CHECK((v - dense_lcpf3(g, p)).cwiseAbs().maxCoeff() <= 1e-10);
  }
}

TEST_CASE("lcpf3 with decoupled identical phases reduces to lcpf per phase") {
  std::mt19937_64 rng(4);
  for (int t = 0; t < 20; ++t) {
    fixtures::TreeOptions o;
    o.n_nonsub = 3 + t % 6;
    o.require_assumption2 = false;
    const GridData single = fixtures::random_tree_data(rng, o);
    GridData three = single;
    three.phase_mode = PhaseMode::Three;
    for (auto& l : three.lines) l.z = LineImpedance::three(Eigen::Matrix3cd::Identity() * l.z.scalar());
    const GridNetwork g1(single), g3(three);
    const auto inj3 = random_injection(rng, g3);
    const auto sol3 = lcpf3_solve(g3, inj3);
    for (int a = 0; a < 3; ++a) {
      InjectionProfile inj1 = InjectionProfile::zeros(g1);
      for (const BusId b : g1.non_reference_buses()) inj1.at(b) = inj3.at(b, a);
      const auto sol1 = lcpf_solve(g1, inj1);
      for (const BusId b : g1.non_reference_buses()) {
        CHECK(std::abs(sol3.v(b, a) - sol1.v(b)) <= 1e-12);
        CHECK(std::abs((sol3.theta(b, a) - kReferenceAngle[a]) - sol1.theta(b)) <= 1e-12);
      }
    }
  }
}

TEST_CASE("linear models are linear and lossless") {
  std::mt19937_64 rng(5);
  for (const auto mode : {PhaseMode::Single, PhaseMode::Three}) {
    for (int t = 0; t < 10; ++t) {
      fixtures::TreeOptions o;
      o.mode = mode;
      o.n_nonsub = 4 + t;
      o.require_assumption2 = false;
      const GridNetwork g = fixtures::random_tree(rng, o);
      const auto p1 = random_injection(rng, g), p2 = random_injection(rng, g);
      const double a = 0.7, b = -1.3;
      InjectionProfile mix = InjectionProfile::zeros(g);
      for (const BusId bus : g.non_reference_buses()) {
        for (int ph = 0; ph < g.phases(); ++ph) mix.at(bus, ph) = a * p1.at(bus, ph) + b * p2.at(bus, ph);
      }
      const auto v1 = detail::reduced_voltage(g, linear_solve(g, p1));
      const auto v2 = detail::reduced_voltage(g, linear_solve(g, p2));
      const auto vm = detail::reduced_voltage(g, linear_solve(g, mix));
      CHECK((vm - (a * v1 + b * v2)).cwiseAbs().maxCoeff() <= 1e-12);

      // Implied reference injection is minus the sum of the others, per phase.
      const auto implied = detail::linear_injections(g, linear_solve(g, p1));
      for (int ph = 0; ph < g.phases(); ++ph) {
        Complex total = 0.0;
        for (const BusId bus : g.non_reference_buses()) {
          CHECK(std::abs(implied.at(bus, ph) - p1.at(bus, ph)) <= 1e-12);
          total += p1.at(bus, ph);
        }
        CHECK(std::abs(implied.at(g.reference(), ph) + total) <= 1e-12);
      }
    }
  }
}

TEST_CASE("block admittance is the inverse of the block impedance") {
  GridData d = three_phase_path(1, Eigen::Matrix3cd::Identity() * Complex(0.01, 0.0));
  const auto one = block_impedance(GridNetwork(d));
  CHECK(one.deviation == 0.0);
  CHECK(one.y_dagger(0, 0) == Complex(100.0, 0.0));

  std::mt19937_64 rng(6);
  for (int t = 0; t < 10; ++t) {
    fixtures::TreeOptions o;
    o.mode = PhaseMode::Three;
    o.n_nonsub = 1 + t % 3;
    o.require_assumption2 = false;
    const auto blk = block_impedance(fixtures::random_tree(rng, o));
    CHECK(blk.deviation <= 1e-10);
    // Independent check with a dense inverse.
    const Eigen::MatrixXcd inv = blk.z_dagger_h.inverse();
    CHECK((inv - blk.y_dagger).cwiseAbs().maxCoeff() <= 1e-8 * inv.cwiseAbs().maxCoeff());
  }
  CHECK_THROWS_AS(block_impedance(GridNetwork(fixtures::path_data(2))), std::invalid_argument);
}

TEST_CASE("acpf: flat start for zero injection and power balance at the solution") {
  const GridNetwork g(fixtures::path_data(1, Complex(0.01, 0.02)));
  const auto flat = acpf_solve(g, InjectionProfile::zeros(g));
  CHECK(flat.iterations <= 1);
  CHECK(flat.v(1) == 1.0);

  InjectionProfile inj = InjectionProfile::zeros(g);
  inj.at(1) = Complex(0.1, 0.05);
  const auto sol = acpf_solve(g, inj);
  const auto s = ac_power(g, sol);
  CHECK(std::abs(s[1] - inj.at(1)) <= 1e-10);
  CHECK(sol.mismatch <= 1e-10);
}

TEST_CASE("acpf satisfies power balance on random single- and three-phase trees") {
  std::mt19937_64 rng(8);
  for (const auto mode : {PhaseMode::Single, PhaseMode::Three}) {
    for (int t = 0; t < 10; ++t) {
      fixtures::TreeOptions o;
      o.mode = mode;
      o.n_nonsub = 5 + t;
      const GridNetwork g = fixtures::random_tree(rng, o);
      const auto inj = random_injection(rng, g, 0.05);
      const auto sol = acpf_solve(g, inj);
      const auto s = ac_power(g, sol);
      for (const BusId b : g.non_reference_buses()) {
        for (int a = 0; a < g.phases(); ++a) CHECK(std::abs(s[b * g.phases() + a] - inj.at(b, a)) <= 1e-9);
      }
      CHECK(ac_power_mismatch(g, inj, sol) <= 1e-10);
    }
  }
}

TEST_CASE("acpf reports non-convergence") {
  const GridNetwork g(fixtures::path_data(3, Complex(0.3, 0.6)));
  InjectionProfile inj = InjectionProfile::zeros(g);
  for (int b = 1; b <= 3; ++b) inj.at(b) = Complex(-3.0, -2.0);
  CHECK_THROWS_AS(acpf_solve(g, inj, AcOptions{1e-10, 20}), ConvergenceError);
}

TEST_CASE("AC and LC discrepancy shrinks at least linearly with load scale") {
  std::mt19937_64 rng(9);
  for (const auto mode : {PhaseMode::Single, PhaseMode::Three}) {
    fixtures::TreeOptions o;
    o.mode = mode;
    o.n_nonsub = 8;
    const GridNetwork g = fixtures::random_tree(rng, o);
    const auto base = random_injection(rng, g, 0.1);
    double prev = -1.0;
    for (const double scale : {1.0, 0.5, 0.25, 0.125}) {
      InjectionProfile inj = InjectionProfile::zeros(g);
      for (const BusId b : g.non_reference_buses()) {
        for (int a = 0; a < g.phases(); ++a) inj.at(b, a) = scale * base.at(b, a);
      }
      const auto lc = linear_solve(g, inj), ac = acpf_solve(g, inj);
      double err = 0.0;
      for (const BusId b : g.non_reference_buses()) {
        for (int a = 0; a < g.phases(); ++a) err = std::max(err, std::abs(lc.phasor(b, a) - ac.phasor(b, a)));
      }
      if (prev > 0.0) CHECK(err <= 0.5 * prev * (1.0 + 1e-6));
      prev = err;
    }
  }
}

TEST_CASE("bundled three-phase cases: LC3 within one percent of AC at base load") {
  for (const char* name : {"bus10_3ph", "bus35_3ph"}) {
    const GridNetwork g = load_case(fixtures::case_path(std::string(name) + ".json"));
    const LoadModel m = load_load_model(g, fixtures::case_path(std::string(name) + ".load.json"));
    const auto inj = mean_injection(m);
    const auto lc = lcpf3_solve(g, inj), ac = acpf_solve(g, inj);
    double worst = 0.0;
    for (const BusId b : g.non_reference_buses()) {
      for (int a = 0; a < 3; ++a) worst = std::max(worst, std::abs(lc.v(b, a) - ac.v(b, a)) / ac.v(b, a));
    }
    CAPTURE(name);
    CHECK(worst < 0.01);
  }
}

TEST_CASE("solvers reject mismatched phase modes and profiles") {
  const GridNetwork single(fixtures::path_data(2));
  CHECK_THROWS_AS(lcpf3_solve(single, InjectionProfile::zeros(single)), std::invalid_argument);
  CHECK_THROWS_AS(lcpf_solve(single, InjectionProfile(3, 3)), std::invalid_argument);
  InjectionProfile bad = InjectionProfile::zeros(single);
  bad.at(1) = Complex(std::nan(""), 0.0);
  CHECK_THROWS_AS(lcpf_solve(single, bad), std::invalid_argument);
}
