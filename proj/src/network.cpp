#include "gridtop/network.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <queue>
#include <set>
#include <sstream>

namespace gridtop {

std::string to_string(const Edge& e) {
  return "(" + std::to_string(e.a) + "," + std::to_string(e.b) + ")";
}

LineImpedance LineImpedance::single(Complex z) {
  Eigen::Matrix3cd m = Eigen::Matrix3cd::Zero();
  m(0, 0) = z;
  return LineImpedance(PhaseMode::Single, m);
}

LineImpedance LineImpedance::three(const Eigen::Matrix3cd& z) {
  return LineImpedance(PhaseMode::Three, z);
}

std::string RadialReport::summary() const {
  if (ok) return "ok";
  std::ostringstream os;
  bool first = true;
  auto sep = [&]() {
    if (!first) os << "; ";
    first = false;
  };
  for (const auto& p : problems) {
    sep();
    os << p;
  }
  for (const auto& cycle : cycles) {
    sep();
    os << "not radial: cycle {";
    for (std::size_t i = 0; i < cycle.size(); ++i) os << (i ? "," : "") << cycle[i];
    os << "}";
  }
  if (!disconnected.empty()) {
    sep();
    os << "disconnected buses {";
    for (std::size_t i = 0; i < disconnected.size(); ++i) os << (i ? "," : "") << disconnected[i];
    os << "}";
  }
  return os.str();
}

namespace {

// Path between two vertices of a forest given by adjacency lists; empty if none.
std::vector<BusId> forest_path(const std::vector<std::vector<BusId>>& adj, BusId from, BusId to) {
  std::vector<BusId> prev(adj.size(), -1);
  std::vector<char> seen(adj.size(), 0);
  std::queue<BusId> q;
  q.push(from);
  seen[from] = 1;
  while (!q.empty()) {
    BusId u = q.front();
    q.pop();
    if (u == to) break;
    for (BusId w : adj[u]) {
      if (!seen[w]) {
        seen[w] = 1;
        prev[w] = u;
        q.push(w);
      }
    }
  }
  if (!seen[to]) return {};
  std::vector<BusId> path;
  for (BusId v = to; v != -1; v = prev[v]) path.push_back(v);
  std::reverse(path.begin(), path.end());
  return path;
}

std::vector<int> bfs_distances(const std::vector<std::vector<BusId>>& adj, BusId source) {
  std::vector<int> dist(adj.size(), -1);
  std::queue<BusId> q;
  dist[source] = 0;
  q.push(source);
  while (!q.empty()) {
    BusId u = q.front();
    q.pop();
    for (BusId w : adj[u]) {
      if (dist[w] < 0) {
        dist[w] = dist[u] + 1;
        q.push(w);
      }
    }
  }
  return dist;
}

void check_impedance(const Line& line, PhaseMode mode, std::vector<std::string>& problems) {
  const std::string where = "line " + to_string(line.edge);
  if (line.z.mode() != mode) {
    problems.push_back(where + ": impedance phase mode differs from grid phase_mode");
    return;
  }
  const auto& z = line.z.matrix();
  const int n = phase_count(mode);
  for (int r = 0; r < n; ++r) {
    for (int c = 0; c < n; ++c) {
      if (!std::isfinite(z(r, c).real()) || !std::isfinite(z(r, c).imag())) {
        problems.push_back(where + ": non-finite impedance");
        return;
      }
    }
  }
  for (int p = 0; p < n; ++p) {
    if (!(z(p, p).real() > 0.0)) {
      problems.push_back(where + ": diagonal resistance must be strictly positive");
      return;
    }
  }
  if (mode == PhaseMode::Three) {
    if (z != z.transpose()) {
      problems.push_back(where + ": three-phase impedance must be symmetric");
      return;
    }
    Eigen::JacobiSVD<Eigen::Matrix3cd> svd(z);
    const auto& s = svd.singularValues();
    if (!(s(2) > 0.0) || s(0) / s(2) > 1e12) {
      problems.push_back(where + ": three-phase impedance is not invertible");
    }
  }
}

}  // namespace

RadialReport validate_radial(const GridData& data) {
  RadialReport report;
  const int n = data.n_bus;
  if (n < 2) {
    report.ok = false;
    report.problems.push_back("grid needs at least two buses");
    return report;
  }
  if (data.reference < 0 || data.reference >= n) {
    report.ok = false;
    report.problems.push_back("reference bus " + std::to_string(data.reference) + " out of range");
    return report;
  }

  std::vector<std::vector<BusId>> adj(n);
  std::set<Edge> seen;
  for (const auto& line : data.lines) {
    const Edge& e = line.edge;
    if (e.a < 0 || e.b >= n) {
      report.problems.push_back("line " + to_string(e) + " references unknown bus");
      continue;
    }
    if (e.a == e.b) {
      report.problems.push_back("self-loop at bus " + std::to_string(e.a));
      continue;
    }
    if (!seen.insert(e).second) {
      report.problems.push_back("duplicate line " + to_string(e));
      continue;
    }
    auto path = forest_path(adj, e.a, e.b);
    if (!path.empty()) {
      report.cycles.push_back(std::move(path));
      continue;
    }
    adj[e.a].push_back(e.b);
    adj[e.b].push_back(e.a);
  }

  const auto dist = bfs_distances(adj, data.reference);
  for (BusId b = 0; b < n; ++b) {
    if (dist[b] < 0) report.disconnected.push_back(b);
  }
  report.ok = report.problems.empty() && report.cycles.empty() && report.disconnected.empty();
  return report;
}

GridNetwork::GridNetwork(GridData data) : data_(std::move(data)) {
  RadialReport report = validate_radial(data_);
  for (const auto& line : data_.lines) check_impedance(line, data_.phase_mode, report.problems);

  std::set<Edge> permissible;
  for (const auto& e : data_.permissible_edges) {
    if (e.a < 0 || e.b >= data_.n_bus || e.a == e.b) {
      report.problems.push_back("permissible edge " + to_string(e) + " is invalid");
    } else if (!permissible.insert(e).second) {
      report.problems.push_back("duplicate permissible edge " + to_string(e));
    }
  }
  for (const auto& line : data_.lines) {
    if (!permissible.contains(line.edge)) {
      report.problems.push_back("permissible set is missing operational edge " + to_string(line.edge));
    }
  }
  report.ok = report.ok && report.problems.empty();
  if (!report.ok) throw ValidationError(report.summary());

  const int n = data_.n_bus;
  adjacency_.assign(n, {});
  std::vector<std::vector<int>> incident(n);
  for (int idx = 0; idx < static_cast<int>(data_.lines.size()); ++idx) {
    const Edge& e = data_.lines[idx].edge;
    adjacency_[e.a].push_back(e.b);
    adjacency_[e.b].push_back(e.a);
    incident[e.a].push_back(idx);
    incident[e.b].push_back(idx);
  }
  for (auto& nb : adjacency_) std::sort(nb.begin(), nb.end());

  reduced_index_.assign(n, -1);
  for (BusId b = 0; b < n; ++b) {
    if (b == data_.reference) continue;
    reduced_index_[b] = static_cast<int>(non_ref_.size());
    non_ref_.push_back(b);
  }

  parent_.assign(n, -1);
  parent_line_.assign(n, -1);
  std::vector<char> visited(n, 0);
  std::queue<BusId> q;
  q.push(data_.reference);
  visited[data_.reference] = 1;
  while (!q.empty()) {
    BusId u = q.front();
    q.pop();
    bfs_order_.push_back(u);
    for (int idx : incident[u]) {
      BusId w = data_.lines[idx].edge.other(u);
      if (!visited[w]) {
        visited[w] = 1;
        parent_[w] = u;
        parent_line_[w] = idx;
        q.push(w);
      }
    }
  }
}

std::vector<Edge> GridNetwork::non_reference_edges() const {
  std::vector<Edge> out;
  for (const auto& line : data_.lines) {
    if (!line.edge.touches(data_.reference)) out.push_back(line.edge);
  }
  std::sort(out.begin(), out.end());
  return out;
}

std::uint64_t GridNetwork::fingerprint() const {
  const std::string text = serialize_case(data_);
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : text) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

int forest_diameter(int n, std::span<const Edge> edges) {
  std::vector<std::vector<BusId>> adj(n);
  for (const auto& e : edges) {
    adj[e.a].push_back(e.b);
    adj[e.b].push_back(e.a);
  }
  // Double sweep per component: the farthest vertex from any vertex is a diameter endpoint.
  std::vector<char> done(n, 0);
  int best = 0;
  for (BusId s = 0; s < n; ++s) {
    if (done[s]) continue;
    auto d1 = bfs_distances(adj, s);
    BusId far = s;
    for (BusId v = 0; v < n; ++v) {
      if (d1[v] >= 0) {
        done[v] = 1;
        if (d1[v] > d1[far]) far = v;
      }
    }
    auto d2 = bfs_distances(adj, far);
    best = std::max(best, *std::max_element(d2.begin(), d2.end()));
  }
  return best;
}

Assumption2Result check_assumption2(const GridNetwork& grid) {
  const auto edges = grid.non_reference_edges();
  Assumption2Result result;
  result.depth = forest_diameter(grid.n_bus(), edges);
  result.satisfied = result.depth > 3;
  return result;
}

IncidenceMatrix incidence(const GridNetwork& grid) {
  IncidenceMatrix out;
  const auto& cols = grid.non_reference_buses();
  out.columns = cols;
  out.matrix = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(grid.lines().size()),
                                     static_cast<Eigen::Index>(cols.size()));
  for (std::size_t r = 0; r < grid.lines().size(); ++r) {
    const Edge& e = grid.lines()[r].edge;
    out.edge_order.push_back(e);
    if (int c = grid.reduced_index(e.a); c >= 0) out.matrix(r, c) = 1.0;
    if (int c = grid.reduced_index(e.b); c >= 0) out.matrix(r, c) = -1.0;
  }
  return out;
}

}  // namespace gridtop
