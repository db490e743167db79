#include "gridtop/covariance.hpp"

#include <fstream>
#include <queue>
#include <sstream>
#include <stdexcept>

#include <json.hpp>

namespace gridtop {

using nlohmann::json;

CovarianceAccumulator::CovarianceAccumulator(int dim)
    : mean_(Eigen::VectorXd::Zero(dim)), m2_(Eigen::MatrixXd::Zero(dim, dim)) {}

void CovarianceAccumulator::add(const Eigen::Ref<const Eigen::VectorXd>& row) {
  if (row.size() != dim()) throw std::invalid_argument("accumulator: row has wrong dimension");
  ++n_;
  const Eigen::VectorXd delta = row - mean_;
  mean_ += delta / static_cast<double>(n_);
  m2_.noalias() += delta * (row - mean_).transpose();
}

void CovarianceAccumulator::add_rows(const Eigen::Ref<const Eigen::MatrixXd>& rows) {
  if (rows.rows() == 0) return;
  if (rows.cols() != dim()) throw std::invalid_argument("accumulator: rows have wrong dimension");
  CovarianceAccumulator batch(dim());
  batch.n_ = static_cast<std::size_t>(rows.rows());
  batch.mean_ = rows.colwise().mean().transpose();
  const Eigen::MatrixXd centered = rows.rowwise() - batch.mean_.transpose();
  batch.m2_.noalias() = centered.transpose() * centered;
  merge(batch);
}

void CovarianceAccumulator::merge(const CovarianceAccumulator& other) {
  if (other.dim() != dim()) throw std::invalid_argument("accumulator: merge of different dimensions");
  if (other.n_ == 0) return;
  if (n_ == 0) {
    *this = other;
    return;
  }
  const double na = static_cast<double>(n_);
  const double nb = static_cast<double>(other.n_);
  const double n = na + nb;
  const Eigen::VectorXd delta = other.mean_ - mean_;
  mean_ += delta * (nb / n);
  m2_ += other.m2_ + (delta * delta.transpose()) * (na * nb / n);
  n_ += other.n_;
}

Eigen::MatrixXd CovarianceAccumulator::covariance() const {
  if (n_ < 2) throw std::invalid_argument("covariance needs at least two samples");
  const Eigen::MatrixXd c = m2_ / static_cast<double>(n_ - 1);
  return 0.5 * (c + c.transpose());
}

Covariance empirical_covariance(const SampleMatrix& samples) {
  samples.check();
  CovarianceAccumulator acc(samples.layout.size());
  acc.add_rows(samples.data);
  Covariance out;
  out.layout = samples.layout;
  out.matrix = acc.covariance();
  out.mean = acc.mean();
  out.n_samples = acc.count();
  return out;
}

namespace {

Eigen::VectorXd observe_vector(const VariableLayout& layout, const VoltageSolution& sol) {
  Eigen::VectorXd out(layout.size());
  observe(layout, sol, std::span<double>(out.data(), static_cast<std::size_t>(out.size())));
  return out;
}

/// Injection covariance in the column order of linear_sensitivity.
Eigen::MatrixXd injection_covariance(const GridNetwork& grid, const LoadModel& model) {
  const int block = model.block_size();
  const auto& buses = grid.non_reference_buses();
  Eigen::MatrixXd out = Eigen::MatrixXd::Zero(block * buses.size(), block * buses.size());
  for (std::size_t r = 0; r < buses.size(); ++r) {
    out.block(block * r, block * r, block, block) = model.covariance(buses[r]);
  }
  return out;
}

void check_model(const GridNetwork& grid, const LoadModel& model) {
  if (model.n_bus() != grid.n_bus() || model.phase_mode() != grid.phase_mode() ||
      model.reference() != grid.reference()) {
    throw ModelError("load model does not match the grid");
  }
}

/// Hop distances from `src` with the reference bus removed; -1 when unreachable.
std::vector<int> hops_without_reference(const GridNetwork& grid, BusId src) {
  std::vector<int> dist(grid.n_bus(), -1);
  std::queue<BusId> q;
  dist[src] = 0;
  q.push(src);
  while (!q.empty()) {
    const BusId u = q.front();
    q.pop();
    for (const BusId w : grid.neighbors(u)) {
      if (w == grid.reference() || dist[w] >= 0) continue;
      dist[w] = dist[u] + 1;
      q.push(w);
    }
  }
  return dist;
}

}  // namespace

Eigen::MatrixXd linear_sensitivity(const GridNetwork& grid) {
  const VariableLayout layout = VariableLayout::for_grid(grid);
  const int phases = grid.phases();
  const auto& buses = grid.non_reference_buses();
  InjectionProfile inj = InjectionProfile::zeros(grid);
  const Eigen::VectorXd base = observe_vector(layout, linear_solve(grid, inj));
  Eigen::MatrixXd g(layout.size(), 2 * phases * static_cast<int>(buses.size()));
  int col = 0;
  for (const BusId b : buses) {
    for (int a = 0; a < phases; ++a) {
      for (const Complex unit : {Complex(1.0, 0.0), Complex(0.0, 1.0)}) {
        inj.at(b, a) = unit;
        g.col(col++) = observe_vector(layout, linear_solve(grid, inj)) - base;
        inj.at(b, a) = 0.0;
      }
    }
  }
  return g;
}

Covariance analytic_covariance(const GridNetwork& grid, const LoadModel& model) {
  check_model(grid, model);
  Covariance out;
  out.layout = VariableLayout::for_grid(grid);
  const Eigen::MatrixXd g = linear_sensitivity(grid);
  const Eigen::MatrixXd c = g * injection_covariance(grid, model) * g.transpose();
  out.matrix = 0.5 * (c + c.transpose());
  out.mean = observe_vector(out.layout, linear_solve(grid, mean_injection(model)));
  out.n_samples = 0;
  return out;
}

Eigen::MatrixXcd analytic_complex_covariance_lcpf(const GridNetwork& grid, const LoadModel& model) {
  check_model(grid, model);
  if (grid.phase_mode() != PhaseMode::Single) throw ModelError("complex LC-PF covariance needs a single-phase grid");
  const auto& buses = grid.non_reference_buses();
  const auto n = static_cast<Eigen::Index>(buses.size());
  Eigen::MatrixXcd a(n, n);
  for (Eigen::Index k = 0; k < n; ++k) {
    a.col(k) = detail::linear_reduced_solve(grid, Eigen::VectorXcd::Unit(n, k));
  }
  Eigen::VectorXd diag(n);
  for (Eigen::Index k = 0; k < n; ++k) {
    const auto& c = model.covariance(buses[k]);
    if (c(0, 1) != 0.0) throw ModelError("p-q covariance at bus " + std::to_string(buses[k]) + " is not supported here");
    diag(k) = c(0, 0) + c(1, 1);
  }
  return a * diag.asDiagonal() * a.adjoint();
}

PatternReport inverse_pattern_check(const GridNetwork& grid, const Covariance& cov) {
  const auto& buses = grid.non_reference_buses();
  const int block = 2 * grid.phases();
  if (cov.layout.size() != block * static_cast<int>(buses.size())) {
    throw std::invalid_argument("covariance layout does not cover the grid");
  }
  Eigen::LDLT<Eigen::MatrixXd> ldlt(cov.matrix);
  const double scale = cov.matrix.diagonal().maxCoeff();
  if (ldlt.info() != Eigen::Success || !(scale > 0.0) ||
      ldlt.vectorD().minCoeff() <= 1e-14 * scale) {
    throw ModelError("covariance is singular; every bus needs nonzero load variance");
  }
  const Eigen::MatrixXd precision = ldlt.solve(Eigen::MatrixXd::Identity(cov.matrix.rows(), cov.matrix.cols()));

  // Per-bus column lists, so the check does not depend on layout order.
  std::vector<std::vector<int>> cols(buses.size());
  for (std::size_t r = 0; r < buses.size(); ++r) {
    for (int a = 0; a < grid.phases(); ++a) {
      cols[r].push_back(cov.layout.column(buses[r], a, Observable::Magnitude));
      cols[r].push_back(cov.layout.column(buses[r], a, Observable::Angle));
    }
  }

  PatternReport rep;
  for (std::size_t r = 0; r < buses.size(); ++r) {
    const auto dist = hops_without_reference(grid, buses[r]);
    for (std::size_t s = r + 1; s < buses.size(); ++s) {
      double sq = 0.0;
      for (const int i : cols[r]) {
        for (const int j : cols[s]) sq += precision(i, j) * precision(i, j);
      }
      const double norm = std::sqrt(sq);
      const int d = dist[buses[s]];
      if (d == 1) {
        ++rep.edge_pairs;
        rep.edge_min = std::min(rep.edge_min, norm);
      } else if (d == 2) {
        ++rep.two_hop_pairs;
        rep.two_hop_min = std::min(rep.two_hop_min, norm);
      } else {
        ++rep.far_pairs;
        rep.far_max = std::max(rep.far_max, norm);
      }
    }
  }
  rep.near_min = std::min(rep.edge_min, rep.two_hop_min);
  return rep;
}

PatternReport inverse_pattern_check(const GridNetwork& grid, const LoadModel& model) {
  return inverse_pattern_check(grid, analytic_covariance(grid, model));
}

std::string serialize_covariance(const Covariance& cov) {
  json doc;
  json columns = json::array();
  for (const auto& k : cov.layout.keys()) columns.push_back(column_name(k));
  doc["columns"] = columns;
  doc["n_samples"] = cov.n_samples;
  doc["mean"] = std::vector<double>(cov.mean.data(), cov.mean.data() + cov.mean.size());
  std::vector<double> flat;
  flat.reserve(cov.matrix.size());
  for (Eigen::Index r = 0; r < cov.matrix.rows(); ++r) {
    for (Eigen::Index c = 0; c < cov.matrix.cols(); ++c) flat.push_back(cov.matrix(r, c));
  }
  doc["matrix"] = flat;
  return doc.dump(1);
}

Covariance parse_covariance(const std::string& json_text) {
  json doc;
  try {
    doc = json::parse(json_text);
  } catch (const json::parse_error& e) {
    throw std::invalid_argument(std::string("malformed covariance JSON: ") + e.what());
  }
  Covariance cov;
  std::vector<VariableKey> keys;
  for (const auto& name : doc.at("columns")) keys.push_back(parse_column_name(name.get<std::string>()));
  cov.layout = VariableLayout(std::move(keys));
  const auto dim = cov.layout.size();
  cov.n_samples = doc.value("n_samples", std::size_t{0});
  const auto mean = doc.at("mean").get<std::vector<double>>();
  const auto flat = doc.at("matrix").get<std::vector<double>>();
  if (static_cast<int>(mean.size()) != dim || flat.size() != static_cast<std::size_t>(dim) * dim) {
    throw std::invalid_argument("covariance JSON: sizes do not match the column list");
  }
  cov.mean = Eigen::Map<const Eigen::VectorXd>(mean.data(), dim);
  cov.matrix = Eigen::Map<const Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>(flat.data(), dim, dim);
  if (!cov.matrix.allFinite()) throw std::invalid_argument("covariance JSON: non-finite entries");
  return cov;
}

void save_covariance(const Covariance& cov, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << serialize_covariance(cov) << '\n';
}

Covariance load_covariance(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open " + path.string());
  std::stringstream buf;
  buf << in.rdbuf();
  return parse_covariance(buf.str());
}

}  // namespace gridtop
