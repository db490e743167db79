#include "gridtop/sampling.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <istream>
#include <ostream>
#include <sstream>

#include <json.hpp>

#include "gridtop/parallel.hpp"
#include "gridtop/rng.hpp"

namespace gridtop {

using nlohmann::json;

Eigen::MatrixXd semidefinite_cholesky(const Eigen::MatrixXd& cov) {
  const auto n = cov.rows();
  if (cov.cols() != n) throw ModelError("covariance must be square");
  if (!cov.allFinite()) throw ModelError("covariance contains non-finite entries");
  const double scale = std::max(cov.diagonal().cwiseAbs().maxCoeff(), 0.0);
  if ((cov - cov.transpose()).cwiseAbs().maxCoeff() > 1e-12 * std::max(scale, 1e-300)) {
    throw ModelError("covariance is not symmetric");
  }
  const double tol = 1e-12 * scale;
  Eigen::MatrixXd l = Eigen::MatrixXd::Zero(n, n);
  for (Eigen::Index j = 0; j < n; ++j) {
    double d = cov(j, j) - l.row(j).head(j).squaredNorm();
    if (d < -tol) throw ModelError("covariance is not positive semidefinite");
    if (d <= tol) {
      // Zero pivot: the remaining column must vanish for a PSD matrix.
      for (Eigen::Index i = j + 1; i < n; ++i) {
        const double off = cov(i, j) - l.row(i).head(j).dot(l.row(j).head(j));
        if (std::abs(off) > std::sqrt(tol * std::max(scale, 1e-300)) + tol) {
          throw ModelError("covariance is not positive semidefinite");
        }
      }
      continue;
    }
    const double root = std::sqrt(d);
    l(j, j) = root;
    for (Eigen::Index i = j + 1; i < n; ++i) {
      l(i, j) = (cov(i, j) - l.row(i).head(j).dot(l.row(j).head(j))) / root;
    }
  }
  return l;
}

LoadModel::LoadModel(const GridNetwork& grid)
    : mode_(grid.phase_mode()), n_bus_(grid.n_bus()), reference_(grid.reference()), buses_(grid.non_reference_buses()) {
  const int dim = block_size();
  mean_.assign(n_bus_, Eigen::VectorXd::Zero(dim));
  cov_.assign(n_bus_, Eigen::MatrixXd::Zero(dim, dim));
  factor_.assign(n_bus_, Eigen::MatrixXd::Zero(dim, dim));
}

void LoadModel::set(BusId bus, const Eigen::VectorXd& mean, const Eigen::MatrixXd& cov) {
  if (bus < 0 || bus >= n_bus_ || bus == reference_) {
    throw ModelError("load model: bus " + std::to_string(bus) + " is not a non-reference bus");
  }
  const int dim = block_size();
  if (mean.size() != dim || cov.rows() != dim || cov.cols() != dim) {
    throw ModelError("load model: bus " + std::to_string(bus) + " expects a " + std::to_string(dim) + "-dimensional block");
  }
  if (!mean.allFinite()) throw ModelError("load model: non-finite mean at bus " + std::to_string(bus));
  try {
    factor_[bus] = semidefinite_cholesky(cov);
  } catch (const ModelError& e) {
    throw ModelError("load model: bus " + std::to_string(bus) + ": " + e.what());
  }
  mean_[bus] = mean;
  cov_[bus] = 0.5 * (cov + cov.transpose());
}

namespace {

Eigen::MatrixXd spec_covariance(const Eigen::VectorXd& mean, const CovarianceSpec& spec) {
  const auto dim = mean.size();
  Eigen::MatrixXd cov = Eigen::MatrixXd::Zero(dim, dim);
  for (Eigen::Index ph = 0; ph < dim / 2; ++ph) {
    double sp = 0.0, sq = 0.0;
    if (spec.kind == CovarianceSpec::Kind::Relative) {
      sp = spec.fraction * std::abs(mean(2 * ph));
      sq = spec.fraction * std::abs(mean(2 * ph + 1));
    } else {
      sp = sq = std::sqrt(spec.variance);
    }
    cov(2 * ph, 2 * ph) = sp * sp;
    cov(2 * ph + 1, 2 * ph + 1) = sq * sq;
    cov(2 * ph, 2 * ph + 1) = cov(2 * ph + 1, 2 * ph) = spec.pq_correlation * sp * sq;
  }
  return cov;
}

CovarianceSpec parse_spec(const json& j) {
  CovarianceSpec spec;
  const std::string kind = j.value("kind", std::string("relative"));
  if (kind == "relative") {
    spec.kind = CovarianceSpec::Kind::Relative;
    spec.fraction = j.value("fraction", spec.fraction);
  } else if (kind == "absolute") {
    spec.kind = CovarianceSpec::Kind::Absolute;
    spec.variance = j.value("variance", spec.variance);
  } else {
    throw ModelError("covariance kind must be \"relative\" or \"absolute\"");
  }
  spec.pq_correlation = j.value("pq_correlation", 0.0);
  if (!(std::abs(spec.pq_correlation) <= 1.0)) throw ModelError("pq_correlation must lie in [-1, 1]");
  if (!(spec.fraction >= 0.0) || !(spec.variance >= 0.0)) throw ModelError("covariance scale must be non-negative");
  return spec;
}

}  // namespace

CovarianceSpec parse_covariance_spec(const std::string& json_text) {
  try {
    return parse_spec(json::parse(json_text));
  } catch (const json::exception& e) {
    throw ModelError(std::string("malformed covariance block: ") + e.what());
  }
}

LoadModel make_load_model(const GridNetwork& grid, const std::vector<Eigen::VectorXd>& means_by_bus,
                          const CovarianceSpec& spec) {
  LoadModel model(grid);
  for (const BusId b : grid.non_reference_buses()) {
    const Eigen::VectorXd& mean = means_by_bus.at(b);
    model.set(b, mean, spec_covariance(mean, spec));
  }
  return model;
}

LoadModel parse_load_model(const GridNetwork& grid, const std::string& json_text,
                           const std::optional<CovarianceSpec>& override_spec) {
  json doc;
  try {
    doc = json::parse(json_text);
  } catch (const json::parse_error& e) {
    throw ModelError(std::string("malformed load JSON: ") + e.what());
  }
  const std::string mode = doc.value("phase_mode", std::string());
  if ((mode == "single") != (grid.phase_mode() == PhaseMode::Single) || (mode != "single" && mode != "three")) {
    throw ModelError("load file phase_mode does not match the grid");
  }
  const CovarianceSpec spec = override_spec ? *override_spec : parse_spec(doc.value("covariance", json::object()));
  const int phases = grid.phases();
  const int dim = 2 * phases;

  std::vector<Eigen::VectorXd> means(grid.n_bus(), Eigen::VectorXd::Zero(dim));
  std::vector<std::optional<Eigen::MatrixXd>> explicit_cov(grid.n_bus());
  for (const auto& jl : doc.value("loads", json::array())) {
    const int bus = jl.at("bus").get<int>();
    if (bus < 0 || bus >= grid.n_bus() || bus == grid.reference()) {
      throw ModelError("load entry for invalid bus " + std::to_string(bus));
    }
    const auto& jm = jl.at("mean");
    Eigen::VectorXd m(dim);
    if (phases == 1) {
      m << jm.at(0).get<double>(), jm.at(1).get<double>();
    } else {
      if (jm.size() != 3) throw ModelError("three-phase mean must be [[p,q] x 3]");
      for (int a = 0; a < 3; ++a) {
        m(2 * a) = jm.at(a).at(0).get<double>();
        m(2 * a + 1) = jm.at(a).at(1).get<double>();
      }
    }
    means[bus] = m;
    if (jl.contains("cov")) {
      Eigen::MatrixXd c(dim, dim);
      const auto& jc = jl["cov"];
      if (jc.size() != static_cast<std::size_t>(dim)) throw ModelError("explicit cov has wrong shape");
      for (int r = 0; r < dim; ++r) {
        if (jc[r].size() != static_cast<std::size_t>(dim)) throw ModelError("explicit cov has wrong shape");
        for (int c2 = 0; c2 < dim; ++c2) c(r, c2) = jc[r][c2].get<double>();
      }
      explicit_cov[bus] = c;
    }
  }

  LoadModel model(grid);
  for (const BusId b : grid.non_reference_buses()) {
    model.set(b, means[b], explicit_cov[b] ? *explicit_cov[b] : spec_covariance(means[b], spec));
  }
  return model;
}

LoadModel load_load_model(const GridNetwork& grid, const std::filesystem::path& path,
                          const std::optional<CovarianceSpec>& override_spec) {
  std::ifstream in(path);
  if (!in) throw ModelError("cannot open load file " + path.string());
  std::stringstream buf;
  buf << in.rdbuf();
  return parse_load_model(grid, buf.str(), override_spec);
}

InjectionProfile parse_injections(const GridNetwork& grid, const std::string& json_text) {
  json doc;
  try {
    doc = json::parse(json_text);
  } catch (const json::parse_error& e) {
    throw ModelError(std::string("malformed injection JSON: ") + e.what());
  }
  if (!doc.is_array() || doc.size() != static_cast<std::size_t>(grid.n_bus())) {
    throw ModelError("injection file must list one entry per bus");
  }
  InjectionProfile inj = InjectionProfile::zeros(grid);
  try {
    for (BusId b = 0; b < grid.n_bus(); ++b) {
      if (b == grid.reference()) continue;
      const auto& e = doc[b];
      if (grid.phases() == 1) {
        inj.at(b) = Complex(e.at(0).get<double>(), e.at(1).get<double>());
      } else {
        if (e.size() != 3) throw ModelError("three-phase injection must be [[p,q] x 3]");
        for (int a = 0; a < 3; ++a) inj.at(b, a) = Complex(e.at(a).at(0).get<double>(), e.at(a).at(1).get<double>());
      }
    }
  } catch (const json::exception& e) {
    throw ModelError(std::string("bad injection entry: ") + e.what());
  }
  inj.check(grid);
  return inj;
}

InjectionProfile load_injections(const GridNetwork& grid, const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ModelError("cannot open injection file " + path.string());
  std::stringstream buf;
  buf << in.rdbuf();
  return parse_injections(grid, buf.str());
}

InjectionProfile mean_injection(const LoadModel& model) {
  const int phases = model.block_size() / 2;
  InjectionProfile inj(model.n_bus(), phases);
  for (const BusId b : model.buses()) {
    const auto& m = model.mean(b);
    for (int a = 0; a < phases; ++a) inj.at(b, a) = Complex(m(2 * a), m(2 * a + 1));
  }
  return inj;
}

InjectionProfile draw_injection(const LoadModel& model, std::uint64_t seed, std::uint64_t index) {
  const int dim = model.block_size();
  const int phases = dim / 2;
  RandomStream rng(seed, index);
  InjectionProfile inj(model.n_bus(), phases);
  Eigen::VectorXd z(dim);
  for (const BusId b : model.buses()) {
    for (int k = 0; k < dim; ++k) z(k) = rng.normal();
    const Eigen::VectorXd x = model.mean(b) + model.factor(b) * z;
    for (int a = 0; a < phases; ++a) inj.at(b, a) = Complex(x(2 * a), x(2 * a + 1));
  }
  return inj;
}

std::vector<InjectionProfile> draw_injections(const LoadModel& model, std::size_t n, std::uint64_t seed,
                                              std::uint64_t first) {
  std::vector<InjectionProfile> out;
  out.reserve(n);
  for (std::size_t k = 0; k < n; ++k) out.push_back(draw_injection(model, seed, first + k));
  return out;
}

std::uint64_t injection_hash(const InjectionProfile& draw, std::uint64_t state) {
  for (const auto& s : draw.values()) {
    const double parts[2] = {s.real(), s.imag()};
    const auto* bytes = reinterpret_cast<const unsigned char*>(parts);
    for (std::size_t i = 0; i < sizeof(parts); ++i) {
      state ^= bytes[i];
      state *= 0x100000001b3ULL;
    }
  }
  return state;
}

std::uint64_t injection_hash(std::span<const InjectionProfile> draws) {
  std::uint64_t h = kInjectionHashSeed;
  for (const auto& inj : draws) h = injection_hash(inj, h);
  return h;
}

std::string to_string(SolverKind kind) {
  switch (kind) {
    case SolverKind::LC: return "lc";
    case SolverKind::LC3: return "lc3";
    case SolverKind::AC: return "ac";
  }
  return "?";
}

SolverKind parse_solver(const std::string& name) {
  if (name == "lc" || name == "LC") return SolverKind::LC;
  if (name == "lc3" || name == "LC3") return SolverKind::LC3;
  if (name == "ac" || name == "AC") return SolverKind::AC;
  throw std::invalid_argument("unknown solver '" + name + "' (expected lc, lc3 or ac)");
}

void check_solver(const GridNetwork& grid, SolverKind kind) {
  if (kind == SolverKind::LC && grid.phase_mode() != PhaseMode::Single) {
    throw std::invalid_argument("solver lc requires a single-phase grid");
  }
  if (kind == SolverKind::LC3 && grid.phase_mode() != PhaseMode::Three) {
    throw std::invalid_argument("solver lc3 requires a three-phase grid");
  }
}

VoltageSolution solve(const GridNetwork& grid, const InjectionProfile& inj, SolverKind kind) {
  switch (kind) {
    case SolverKind::LC: return lcpf_solve(grid, inj);
    case SolverKind::LC3: return lcpf3_solve(grid, inj);
    case SolverKind::AC: return acpf_solve(grid, inj);
  }
  throw std::invalid_argument("unknown solver");
}

void observe(const VariableLayout& layout, const VoltageSolution& sol, std::span<double> row) {
  for (int c = 0; c < layout.size(); ++c) {
    const auto& k = layout.key(c);
    row[c] = k.obs == Observable::Magnitude ? sol.v(k.bus, k.phase) : sol.theta(k.bus, k.phase);
  }
}

SampleSet generate_samples(const GridNetwork& grid, const LoadModel& model, std::size_t n, SolverKind solver,
                           std::uint64_t seed, unsigned workers) {
  check_solver(grid, solver);
  if (model.n_bus() != grid.n_bus() || model.phase_mode() != grid.phase_mode()) {
    throw ModelError("load model does not match the grid");
  }
  SampleSet set;
  set.grid_fingerprint = grid.fingerprint();
  set.solver = solver;
  set.seed = seed;
  set.n_samples = n;
  set.samples.layout = VariableLayout::for_grid(grid);
  const auto cols = set.samples.layout.size();
  // Row-major staging so each worker writes a contiguous row.
  std::vector<double> staging(n * static_cast<std::size_t>(cols));
  parallel_for(n, workers, [&](std::size_t k) {
    const InjectionProfile inj = draw_injection(model, seed, k);
    VoltageSolution sol;
    try {
      sol = solve(grid, inj, solver);
    } catch (const ConvergenceError& e) {
      throw DrawError("draw " + std::to_string(k) + ": " + e.what(), k);
    }
    observe(set.samples.layout, sol, std::span<double>(staging.data() + k * cols, cols));
  });
  set.samples.data = Eigen::Map<Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>(
      staging.data(), static_cast<Eigen::Index>(n), cols);
  return set;
}

void write_samples_csv(const SampleMatrix& samples, std::ostream& out) {
  for (int c = 0; c < samples.layout.size(); ++c) out << (c ? "," : "") << column_name(samples.layout.key(c));
  out << '\n';
  char buf[32];
  for (Eigen::Index r = 0; r < samples.data.rows(); ++r) {
    for (Eigen::Index c = 0; c < samples.data.cols(); ++c) {
      std::snprintf(buf, sizeof(buf), "%.17g", samples.data(r, c));
      if (c) out << ',';
      out << buf;
    }
    out << '\n';
  }
}

SampleMatrix read_samples_csv(std::istream& in) {
  std::string line;
  if (!std::getline(in, line)) throw std::invalid_argument("empty samples CSV");
  std::vector<VariableKey> keys;
  {
    std::stringstream ss(line);
    std::string cell;
    while (std::getline(ss, cell, ',')) {
      if (!cell.empty() && cell.back() == '\r') cell.pop_back();
      keys.push_back(parse_column_name(cell));
    }
  }
  SampleMatrix out;
  out.layout = VariableLayout(std::move(keys));
  const auto cols = static_cast<std::size_t>(out.layout.size());
  std::vector<double> values;
  std::size_t rows = 0;
  while (std::getline(in, line)) {
    if (line.empty() || line == "\r") continue;
    std::size_t count = 0;
    const char* p = line.c_str();
    while (*p) {
      char* end = nullptr;
      const double v = std::strtod(p, &end);
      if (end == p) throw std::invalid_argument("bad number in samples CSV at row " + std::to_string(rows + 1));
      values.push_back(v);
      ++count;
      p = end;
      if (*p == ',') ++p;
      else if (*p == '\r') ++p;
    }
    if (count != cols) throw std::invalid_argument("row " + std::to_string(rows + 1) + " has wrong column count");
    ++rows;
  }
  out.data = Eigen::Map<Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>(
      values.data(), static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(cols));
  out.check();
  return out;
}

}  // namespace gridtop
