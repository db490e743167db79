#include <doctest.h>

#include <random>
#include <set>

#include "fixtures.hpp"
#include "gridtop/citest.hpp"
#include "gridtop/covariance.hpp"
#include "gridtop/sampling.hpp"

using namespace gridtop;

namespace {

SampleMatrix two_column(const std::vector<std::pair<double, double>>& rows) {
  SampleMatrix s;
  s.layout = VariableLayout({{1, 0, Observable::Magnitude}, {1, 0, Observable::Angle}});
  s.data.resize(static_cast<Eigen::Index>(rows.size()), 2);
  for (std::size_t r = 0; r < rows.size(); ++r) {
    s.data(r, 0) = rows[r].first;
    s.data(r, 1) = rows[r].second;
  }
  return s;
}

// Covariance with `matrix` over the layout of a single-phase grid.
Covariance with_matrix(const GridNetwork& g, const Eigen::MatrixXd& m) {
  Covariance c;
  c.layout = VariableLayout::for_grid(g);
  c.mean = Eigen::VectorXd::Zero(m.rows());
  c.matrix = m;
  return c;
}

// Independent oracle for the inverse (1,2) entry relative to its diagonal.
double partial_corr(const Covariance& cov, BusId k, BusId l, BusId i, BusId j) {
  std::vector<int> cols = {cov.layout.column(k, 0, Observable::Magnitude), cov.layout.column(l, 0, Observable::Magnitude)};
  for (const BusId b : {i, j}) {
    cols.push_back(cov.layout.column(b, 0, Observable::Magnitude));
    cols.push_back(cov.layout.column(b, 0, Observable::Angle));
  }
  Eigen::MatrixXd s(6, 6);
  for (int r = 0; r < 6; ++r) {
    for (int c = 0; c < 6; ++c) s(r, c) = cov.matrix(cols[r], cols[c]);
  }
  const Eigen::MatrixXd inv = s.fullPivLu().inverse();
  return inv(0, 1) / std::sqrt(inv(0, 0) * inv(1, 1));
}

}  // namespace

TEST_CASE("empirical covariance hand examples") {
  const auto same = empirical_covariance(two_column({{1.0, 2.0}, {1.0, 2.0}}));
  CHECK(same.matrix.isZero());
  CHECK(same.n_samples == 2);
  const auto c = empirical_covariance(two_column({{0.0, 0.0}, {1.0, 1.0}}));
  CHECK(c.matrix == Eigen::MatrixXd::Constant(2, 2, 0.5));
  CHECK(c.matrix(0, 1) == c.matrix(1, 0));
  CHECK_THROWS_AS(empirical_covariance(two_column({{1.0, 2.0}})), std::invalid_argument);
}

TEST_CASE("empirical covariance of 1e5 Gaussian draws within 5 percent") {
  Eigen::Matrix3d a;
  a << 1.0, 0.0, 0.0, 0.5, 1.0, 0.0, -0.3, 0.2, 0.7;
  const Eigen::Matrix3d sigma = a * a.transpose();
  std::mt19937_64 rng(1);
  std::normal_distribution<double> z;
  SampleMatrix s;
  s.layout = VariableLayout({{1, 0, Observable::Magnitude}, {1, 0, Observable::Angle}, {2, 0, Observable::Magnitude}});
  s.data.resize(100000, 3);
  for (int r = 0; r < 100000; ++r) {
    const Eigen::Vector3d x = a * Eigen::Vector3d(z(rng), z(rng), z(rng));
    s.data.row(r) = x.transpose();
  }
  const auto c = empirical_covariance(s);
  for (int r = 0; r < 3; ++r) {
    for (int q = 0; q < 3; ++q) CHECK(std::abs(c.matrix(r, q) - sigma(r, q)) < 0.05 * std::abs(sigma(r, q)) + 1e-2);
  }
}

TEST_CASE("accumulator: batching and merge order agree") {
  std::mt19937_64 rng(2);
  std::normal_distribution<double> z(3.0, 2.0);
  Eigen::MatrixXd rows(3000, 4);
  for (int r = 0; r < rows.rows(); ++r) {
    for (int c = 0; c < 4; ++c) rows(r, c) = z(rng) * (c + 1);
  }
  CovarianceAccumulator one(4);
  for (int r = 0; r < rows.rows(); ++r) one.add(rows.row(r).transpose());
  CovarianceAccumulator a(4), b(4), c(4);
  a.add_rows(rows.topRows(1000));
  b.add_rows(rows.middleRows(1000, 700));
  c.add_rows(rows.bottomRows(1300));
  CovarianceAccumulator left = a, right = b;
  left.merge(b);
  left.merge(c);
  right.merge(c);
  CovarianceAccumulator right_all = a;
  right_all.merge(right);
  const Eigen::MatrixXd l = left.covariance(), r = right_all.covariance(), s = one.covariance();
  const double scale = s.cwiseAbs().maxCoeff();
  CHECK((l - r).cwiseAbs().maxCoeff() <= 1e-12 * scale);
  CHECK((l - s).cwiseAbs().maxCoeff() <= 1e-12 * scale);
  CHECK(left.count() == 3000);
  // Direct two-pass formula.
  const Eigen::RowVectorXd mean = rows.colwise().mean();
  const Eigen::MatrixXd centered = rows.rowwise() - mean;
  const Eigen::MatrixXd direct = centered.transpose() * centered / 2999.0;
  CHECK((l - direct).cwiseAbs().maxCoeff() <= 1e-12 * scale);
  CovarianceAccumulator empty(4);
  CHECK_THROWS_AS(empty.covariance(), std::invalid_argument);
}

TEST_CASE("analytic covariance: zero load covariance and the two-bus hand values") {
  const GridNetwork g(fixtures::path_data(1, Complex(0.01, 0.03)));
  LoadModel zero(g);
  zero.set(1, Eigen::Vector2d(-0.02, -0.01), Eigen::Matrix2d::Zero());
  CHECK(analytic_covariance(g, zero).matrix.isZero());
  CHECK(analytic_covariance(g, zero).exact());

  LoadModel m(g);
  const double s2 = 1e-4, r = 0.01, x = 0.03;
  Eigen::Matrix2d cov = Eigen::Matrix2d::Zero();
  cov(0, 0) = s2;
  m.set(1, Eigen::Vector2d(-0.02, -0.01), cov);
  const auto c = analytic_covariance(g, m);
  const VariableKey v{1, 0, Observable::Magnitude}, th{1, 0, Observable::Angle};
  CHECK(c.at(v, v) == doctest::Approx(r * r * s2).epsilon(1e-12));
  CHECK(c.at(th, th) == doctest::Approx(x * x * s2).epsilon(1e-12));
  CHECK(c.at(v, th) == doctest::Approx(r * x * s2).epsilon(1e-12));
}

TEST_CASE("analytic covariance agrees with the complex-form Laplacian expression") {
  std::mt19937_64 rng(3);
  for (int t = 0; t < 10; ++t) {
    fixtures::TreeOptions o;
    o.n_nonsub = 5 + t;
    const GridNetwork g = fixtures::random_tree(rng, o);
    const LoadModel m = fixtures::random_load_model(rng, g);
    const Covariance c = analytic_covariance(g, m);
    const Eigen::MatrixXcd cc = analytic_complex_covariance_lcpf(g, m);
    const auto& buses = g.non_reference_buses();
    double worst = 0.0;
    for (std::size_t a = 0; a < buses.size(); ++a) {
      for (std::size_t b = 0; b < buses.size(); ++b) {
        const VariableKey va{buses[a], 0, Observable::Magnitude}, ta{buses[a], 0, Observable::Angle};
        const VariableKey vb{buses[b], 0, Observable::Magnitude}, tb{buses[b], 0, Observable::Angle};
        // Cov(v_a - i th_a, v_b - i th_b)
        const Complex expect(c.at(va, vb) + c.at(ta, tb), c.at(va, tb) - c.at(ta, vb));
        worst = std::max(worst, std::abs(expect - cc(a, b)));
      }
    }
    CHECK(worst <= 1e-12 * cc.cwiseAbs().maxCoeff());
  }
}

TEST_CASE("analytic covariance matches 1e6 LC samples within 2 percent") {
  std::mt19937_64 rng(4);
  fixtures::TreeOptions o;
  o.n_nonsub = 6;
  const GridNetwork g = fixtures::random_tree(rng, o);
  const LoadModel m = fixtures::random_load_model(rng, g);
  const Covariance exact = analytic_covariance(g, m);
  const auto set = generate_samples(g, m, 1000000, SolverKind::LC, 77);
  const Covariance emp = empirical_covariance(set.samples);
  CHECK((emp.matrix - exact.matrix).cwiseAbs().maxCoeff() < 0.02 * exact.matrix.cwiseAbs().maxCoeff());
}

TEST_CASE("analytic three-phase covariance matches LC3 samples") {
  const GridNetwork g = load_case(fixtures::case_path("bus10_3ph.json"));
  const LoadModel m = load_load_model(g, fixtures::case_path("bus10_3ph.load.json"));
  const Covariance exact = analytic_covariance(g, m);
  const Covariance emp = empirical_covariance(generate_samples(g, m, 200000, SolverKind::LC3, 5).samples);
  CHECK(emp.layout == exact.layout);
  CHECK((emp.matrix - exact.matrix).cwiseAbs().maxCoeff() < 0.05 * exact.matrix.cwiseAbs().maxCoeff());
}

TEST_CASE("inverse pattern: 5-path, star and random trees") {
  std::mt19937_64 rng(5);
  const GridNetwork path(fixtures::path_data(5));
  const LoadModel pm = fixtures::random_load_model(rng, path);
  const auto pr = inverse_pattern_check(path, pm);
  CHECK(pr.far_pairs == 3);  // (1,4), (1,5), (2,5)
  CHECK(pr.far_max <= 1e-9 * pr.near_min);
  CHECK(pr.holds());

  GridData star;
  star.n_bus = 5;
  for (const Edge e : {Edge(0, 1), Edge(1, 2), Edge(1, 3), Edge(1, 4)}) {
    star.lines.push_back({e, LineImpedance::single({0.01, 0.02})});
    star.permissible_edges.push_back(e);
  }
  const GridNetwork sg(star);
  const auto sr = inverse_pattern_check(sg, fixtures::random_load_model(rng, sg));
  CHECK(sr.far_pairs == 0);
  CHECK(sr.near_min > 0.0);

  for (int t = 0; t < 20; ++t) {
    fixtures::TreeOptions o;
    o.n_nonsub = 8;
    const GridNetwork g = fixtures::random_tree(rng, o);
    const auto lm = fixtures::random_load_model(rng, g);
    const auto rep = inverse_pattern_check(g, lm);
    CHECK(rep.far_max < 1e-6 * rep.near_min);

    // Oracle: dense inverse, block norms by hop distance.
    const Covariance c = analytic_covariance(g, lm);
    const Eigen::MatrixXd inv = c.matrix.inverse();
    const auto hops = fixtures::all_hops(g.n_bus(), g.non_reference_edges());
    double far = 0.0, near = std::numeric_limits<double>::infinity();
    const auto& buses = g.non_reference_buses();
    for (std::size_t a = 0; a < buses.size(); ++a) {
      for (std::size_t b = a + 1; b < buses.size(); ++b) {
        const double nrm = inv.block(2 * a, 2 * b, 2, 2).norm();
        if (hops[buses[a]][buses[b]] >= 3) far = std::max(far, nrm);
        else near = std::min(near, nrm);
      }
    }
    CHECK(far < 1e-6 * near);
  }
  LoadModel singular(path);
  CHECK_THROWS_AS(inverse_pattern_check(path, singular), ModelError);
}

TEST_CASE("covariance JSON round-trips") {
  std::mt19937_64 rng(6);
  const GridNetwork g = fixtures::random_tree(rng, {});
  const Covariance c = analytic_covariance(g, fixtures::random_load_model(rng, g));
  const Covariance back = parse_covariance(serialize_covariance(c));
  CHECK(back.layout == c.layout);
  CHECK(back.matrix == c.matrix);
  CHECK(back.mean == c.mean);
  CHECK(back.n_samples == c.n_samples);
}

TEST_CASE("quartet on the identity has a zero inverse entry") {
  const GridNetwork g(fixtures::path_data(5));
  const Covariance id = with_matrix(g, Eigen::MatrixXd::Identity(10, 10));
  const auto q = quartet(id, 1, 4, 2, 3);
  CHECK(q.sigma.rows() == 6);
  CHECK(q.sigma_i.rows() == 4);
  CHECK(q.pair.value == 0.0);
  // cond_rel divides by Sigma_12 = 0.
  const auto rel = ci_test(q, TestConfig::defaults(CiTest::Rel));
  CHECK(rel.indeterminate);
  CHECK_FALSE(rel.independent);
  CHECK_THROWS_AS(quartet(id, 1, 1, 2, 3), std::invalid_argument);
}

TEST_CASE("quartets on the exact 5-path covariance") {
  std::mt19937_64 rng(7);
  const GridNetwork g(fixtures::path_data(5));
  const Covariance c = analytic_covariance(g, fixtures::random_load_model(rng, g));
  // 1 and 4 are separated by {2, 3}.
  const auto q = quartet(c, 1, 4, 2, 3);
  CHECK(std::abs(q.pair.value) <= 1e-9 * std::sqrt(std::abs(q.sigma.inverse()(0, 0) * q.sigma.inverse()(1, 1))));
  // {2, 4} does not separate 1 from 5 once two-hop links are added (1-3-5).
  const auto graph = fixtures::two_hop_graph(g);
  CHECK_FALSE(fixtures::separated(graph, 1, 5, {2, 4}));
  CHECK(std::abs(partial_corr(c, 1, 5, 2, 4)) > 1e-3);
  TestConfig cfg = TestConfig::defaults(CiTest::Mod);
  cfg.tau = 1e-6;
  CHECK_FALSE(ci_test(c, 1, 5, 2, 4, cfg).independent);
  CHECK(ci_test(c, 1, 4, 2, 3, cfg).independent);
}

TEST_CASE("exact-oracle tests agree with two-hop graph separation") {
  std::mt19937_64 rng(8);
  TestConfig cfg = TestConfig::defaults(CiTest::Mod);
  cfg.tau = 1e-6;
  for (int t = 0; t < 15; ++t) {
    fixtures::TreeOptions o;
    o.n_nonsub = 5 + t % 8;
    const GridNetwork g = fixtures::random_tree(rng, o);
    const Covariance c = analytic_covariance(g, fixtures::random_load_model(rng, g));
    const auto graph = fixtures::two_hop_graph(g);
    const auto& b = g.non_reference_buses();
    int mismatches = 0;
    for (const BusId k : b) {
      for (const BusId l : b) {
        if (l <= k) continue;
        for (const BusId i : b) {
          for (const BusId j : b) {
            if (j <= i || i == k || i == l || j == k || j == l) continue;
            const bool sep = fixtures::separated(graph, k, l, {i, j});
            if (ci_test(c, k, l, i, j, cfg).independent != sep) ++mismatches;
          }
        }
      }
    }
    CHECK(mismatches == 0);
  }
}

TEST_CASE("exchange symmetry and scaling") {
  std::mt19937_64 rng(9);
  const GridNetwork g = fixtures::random_tree(rng, {});
  const Covariance c = empirical_covariance(
      generate_samples(g, fixtures::random_load_model(rng, g), 2000, SolverKind::LC, 3).samples);
  const auto& b = g.non_reference_buses();
  const BusId k = b[0], l = b[1], i = b[2], j = b[3];
  CHECK(std::abs(quartet(c, k, l, i, j).pair.value) ==
        doctest::Approx(std::abs(quartet(c, l, k, i, j).pair.value)).epsilon(1e-9));
  for (const auto test : {CiTest::Abs, CiTest::Rel, CiTest::Mod}) {
    TestConfig cfg = TestConfig::defaults(test);
    const auto a = ci_test(c, k, l, i, j, cfg), s = ci_test(c, k, l, j, i, cfg);
    CHECK(a.independent == s.independent);
    CHECK(a.statistic == doctest::Approx(s.statistic).epsilon(1e-9));
  }
  // cond_mod is a ratio of inverse entries: unchanged by rescaling the samples.
  // cond_rel divides an inverse entry by a covariance entry and scales as c^-4.
  TestConfig mod = TestConfig::defaults(CiTest::Mod), rel = TestConfig::defaults(CiTest::Rel);
  const double base_mod = ci_test(c, k, l, i, j, mod).statistic;
  const double base_rel = ci_test(c, k, l, i, j, rel).statistic;
  for (const double s : {1e-3, 1.0, 1e3}) {
    Covariance scaled = c;
    scaled.matrix *= s * s;
    CHECK(ci_test(scaled, k, l, i, j, mod).statistic == doctest::Approx(base_mod).epsilon(1e-8));
    CHECK(ci_test(scaled, k, l, i, j, rel).statistic == doctest::Approx(base_rel / std::pow(s, 4)).epsilon(1e-8));
  }
}

TEST_CASE("ridge and indeterminate inverses") {
  Eigen::MatrixXd m = Eigen::MatrixXd::Identity(6, 6);
  m(5, 5) = 1e-13;  // condition 1e13 triggers the ridge
  const auto e = inverse_entry_12(m, 1e-12);
  CHECK(e.ridged);
  CHECK_FALSE(e.indeterminate);
  CHECK(e.condition < kIndeterminateCondition);

  const auto zero = inverse_entry_12(Eigen::MatrixXd::Zero(6, 6), 1e-12);
  CHECK(zero.indeterminate);
  Eigen::MatrixXd bad = Eigen::MatrixXd::Identity(6, 6);
  bad(2, 3) = bad(3, 2) = std::nan("");
  CHECK(inverse_entry_12(bad, 1e-12).indeterminate);
  // Without a ridge a singular matrix stays indeterminate.
  Eigen::MatrixXd sing = Eigen::MatrixXd::Identity(6, 6);
  sing(5, 5) = 0.0;
  CHECK(inverse_entry_12(sing, 0.0).indeterminate);

  const Eigen::MatrixXd spd = [] {
    Eigen::MatrixXd a = Eigen::MatrixXd::Random(6, 6);
    return Eigen::MatrixXd(a * a.transpose() + Eigen::MatrixXd::Identity(6, 6));
  }();
  CHECK(inverse_entry_12(spd, 1e-12).value == doctest::Approx(spd.inverse()(0, 1)).epsilon(1e-10));
}

TEST_CASE("test configuration") {
  CHECK(TestConfig::defaults(CiTest::Abs).tau == 10.0);
  CHECK(TestConfig::defaults(CiTest::Rel).tau == 0.1);
  CHECK(parse_test("cond_mod") == CiTest::Mod);
  CHECK(parse_test("rel") == CiTest::Rel);
  CHECK(to_string(CiTest::Abs) == "cond_abs");
  CHECK_THROWS(parse_test("kernel"));
  TestConfig bad;
  bad.tau = 0.0;
  CHECK_THROWS_AS(bad.check(), std::invalid_argument);
  bad.tau = std::numeric_limits<double>::infinity();
  CHECK_THROWS_AS(bad.check(), std::invalid_argument);
}

TEST_CASE("three-phase quartets are 14 by 14 and separate on the exact covariance") {
  const GridNetwork g = load_case(fixtures::case_path("bus10_3ph.json"));
  const Covariance c = analytic_covariance(g, load_load_model(g, fixtures::case_path("bus10_3ph.load.json")));
  // bus10_3ph: 0-1, 1-2, 1-3, 3-4, 1-5, 5-6, 5-7, 7-8, 5-9. In the two-hop graph every path from 4 to 8 runs through bus 3 or bus 1.
  const auto q = quartet(c, 4, 8, 3, 1);
  CHECK(q.sigma.rows() == 14);
  CHECK(q.sigma_i.rows() == 8);
  TestConfig cfg = TestConfig::defaults(CiTest::Mod);
  cfg.tau = 1e-6;
  CHECK(ci_test(q, cfg).independent);
  for (int phase = 0; phase < 3; ++phase) CHECK(ci_test(c, 4, 8, 3, 1, cfg, phase).independent);
  CHECK_FALSE(ci_test(c, 4, 8, 3, 5, cfg).independent);
  CHECK_THROWS_AS(quartet(c, 4, 8, 3, 1, 3), std::invalid_argument);
}
