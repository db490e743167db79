#include "gridtop/citest.hpp"

#include <cmath>
#include <limits>
#include <stdexcept>

#include "gridtop/powerflow.hpp"

namespace gridtop {

namespace {

constexpr double kTinyDenominator = 1e-300;

double nan() { return std::numeric_limits<double>::quiet_NaN(); }

double condition_of(const Eigen::MatrixXd& m) {
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(m, Eigen::EigenvaluesOnly);
  const auto& ev = eig.eigenvalues();
  if (eig.info() != Eigen::Success || !ev.allFinite()) return std::numeric_limits<double>::infinity();
  if (ev(0) <= 0.0) return std::numeric_limits<double>::infinity();
  return ev(ev.size() - 1) / ev(0);
}

Eigen::MatrixXd submatrix(const Eigen::MatrixXd& m, int dim) { return m.topLeftCorner(dim, dim); }

}  // namespace

std::string to_string(CiTest test) {
  switch (test) {
    case CiTest::Abs: return "cond_abs";
    case CiTest::Rel: return "cond_rel";
    case CiTest::Mod: return "cond_mod";
  }
  return "?";
}

CiTest parse_test(const std::string& name) {
  std::string s = name;
  if (s.rfind("cond_", 0) == 0) s = s.substr(5);
  if (s == "abs") return CiTest::Abs;
  if (s == "rel") return CiTest::Rel;
  if (s == "mod") return CiTest::Mod;
  throw std::invalid_argument("unknown test '" + name + "' (expected abs, rel or mod)");
}

TestConfig TestConfig::defaults(CiTest test) {
  TestConfig cfg;
  cfg.test = test;
  cfg.tau = test == CiTest::Abs ? 10.0 : 0.1;
  return cfg;
}

void TestConfig::check() const {
  if (!(std::isfinite(tau) && tau > 0.0)) throw std::invalid_argument("tau must be finite and positive");
  if (!(ridge >= 0.0 && std::isfinite(ridge))) throw std::invalid_argument("ridge must be finite and non-negative");
}

InverseEntry inverse_entry_12(const Eigen::MatrixXd& sigma, double ridge) {
  InverseEntry out;
  if (!sigma.allFinite()) {
    out.indeterminate = true;
    out.value = nan();
    out.condition = std::numeric_limits<double>::infinity();
    return out;
  }
  Eigen::MatrixXd m = sigma;
  out.condition = condition_of(m);
  if (out.condition > kRidgeCondition) {
    const double eps = ridge * m.trace() / static_cast<double>(m.rows());
    if (eps > 0.0) {
      m.diagonal().array() += eps;
      out.ridged = true;
      out.condition = condition_of(m);
    }
  }
  if (!(out.condition <= kIndeterminateCondition)) {
    out.indeterminate = true;
    out.value = nan();
    return out;
  }
  Eigen::LDLT<Eigen::MatrixXd> ldlt(m);
  const Eigen::VectorXd col = ldlt.solve(Eigen::VectorXd::Unit(m.rows(), 1));
  out.value = col(0);
  if (ldlt.info() != Eigen::Success || !std::isfinite(out.value)) {
    out.indeterminate = true;
    out.value = nan();
  }
  return out;
}

QuartetStat quartet(const Covariance& cov, BusId k, BusId l, BusId i, BusId j, int phase, double ridge) {
  if (k == l || k == i || k == j || l == i || l == j || i == j) {
    throw std::invalid_argument("quartet buses must be distinct");
  }
  const int phases = cov.layout.phases();
  if (phase < 0 || phase >= phases) throw std::invalid_argument("quartet phase out of range");

  QuartetStat st;
  st.k = k;
  st.l = l;
  st.i = i;
  st.j = j;
  st.phase = phase;

  std::vector<int> cols = {cov.layout.column(k, phase, Observable::Magnitude),
                           cov.layout.column(l, phase, Observable::Magnitude)};
  for (const BusId b : {i, j}) {
    for (int a = 0; a < phases; ++a) {
      cols.push_back(cov.layout.column(b, a, Observable::Magnitude));
      cols.push_back(cov.layout.column(b, a, Observable::Angle));
    }
  }
  const int dim = static_cast<int>(cols.size());
  Eigen::MatrixXd raw(dim, dim);
  for (int r = 0; r < dim; ++r) {
    for (int c = 0; c < dim; ++c) raw(r, c) = cov.matrix(cols[r], cols[c]);
  }

  if (phases == 1) {
    st.sigma = raw;
  } else {
    // Rotate each conditioning bus from (v, th) pairs to [Re V+ (a,b,c), Im V+ (a,b,c)].
    Eigen::MatrixXd t = Eigen::MatrixXd::Zero(dim, dim);
    t(0, 0) = t(1, 1) = 1.0;
    for (int blk = 0; blk < 2; ++blk) {
      const int off = 2 + 6 * blk;
      for (int a = 0; a < 3; ++a) {
        const double c = std::cos(kReferenceAngle[a]);
        const double s = std::sin(kReferenceAngle[a]);
        t(off + a, off + 2 * a) = c;
        t(off + a, off + 2 * a + 1) = -s;
        t(off + 3 + a, off + 2 * a) = -s;
        t(off + 3 + a, off + 2 * a + 1) = -c;
      }
    }
    st.sigma = t * raw * t.transpose();
    st.sigma = 0.5 * (st.sigma + st.sigma.transpose());
  }

  const int half = (dim - 2) / 2;
  st.sigma_i = submatrix(st.sigma, 2 + half);
  // Keep rows/cols {k, l} and the j block.
  st.sigma_j.resize(2 + half, 2 + half);
  std::vector<int> keep = {0, 1};
  for (int r = 0; r < half; ++r) keep.push_back(2 + half + r);
  for (int r = 0; r < 2 + half; ++r) {
    for (int c = 0; c < 2 + half; ++c) st.sigma_j(r, c) = st.sigma(keep[r], keep[c]);
  }

  st.pair = inverse_entry_12(st.sigma, ridge);
  st.given_i = inverse_entry_12(st.sigma_i, ridge);
  st.given_j = inverse_entry_12(st.sigma_j, ridge);
  return st;
}

CiResult ci_test(const QuartetStat& stat, const TestConfig& cfg) {
  cfg.check();
  CiResult out;
  auto indeterminate = [&]() {
    out.indeterminate = true;
    out.independent = false;
    out.statistic = nan();
    return out;
  };
  if (stat.pair.indeterminate) return indeterminate();
  const double num = std::abs(stat.pair.value);
  switch (cfg.test) {
    case CiTest::Abs:
      out.statistic = num;
      break;
    case CiTest::Rel: {
      const double den = std::abs(stat.sigma(0, 1));
      if (den < kTinyDenominator) return indeterminate();
      out.statistic = num / den;
      break;
    }
    case CiTest::Mod: {
      if (stat.given_i.indeterminate || stat.given_j.indeterminate) return indeterminate();
      const double di = std::abs(stat.given_i.value);
      const double dj = std::abs(stat.given_j.value);
      if (di < kTinyDenominator || dj < kTinyDenominator) return indeterminate();
      out.statistic = std::min(num / di, num / dj);
      break;
    }
  }
  out.independent = out.statistic < cfg.tau;
  return out;
}

CiResult ci_test(const Covariance& cov, BusId k, BusId l, BusId i, BusId j, const TestConfig& cfg, int phase) {
  return ci_test(quartet(cov, k, l, i, j, phase, cfg.ridge), cfg);
}

}  // namespace gridtop
