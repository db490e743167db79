#pragma once

// Test-only helpers: random grids, load models and brute-force graph oracles.

#include <algorithm>
#include <cstdint>
#include <functional>
#include <numeric>
#include <queue>
#include <random>
#include <set>
#include <stdexcept>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "gridtop/network.hpp"
#include "gridtop/sampling.hpp"

namespace fixtures {

using gridtop::BusId;
using gridtop::Complex;
using gridtop::Edge;

inline std::string cases_dir() { return GRIDTOP_CASES_DIR; }
inline std::string case_path(const std::string& name) { return cases_dir() + "/" + name; }

/// Longest path (in edges) by exhaustive DFS from every vertex.
inline int dfs_longest_path(int n, const std::vector<Edge>& edges) {
  std::vector<std::vector<int>> adj(n);
  for (const auto& e : edges) {
    adj[e.a].push_back(e.b);
    adj[e.b].push_back(e.a);
  }
  int best = 0;
  std::vector<char> seen(n, 0);
  std::function<void(int, int)> dfs = [&](int u, int len) {
    best = std::max(best, len);
    seen[u] = 1;
    for (const int w : adj[u]) {
      if (!seen[w]) dfs(w, len + 1);
    }
    seen[u] = 0;
  };
  for (int s = 0; s < n; ++s) dfs(s, 0);
  return best;
}

/// Hop distances in an undirected graph, -1 when unreachable.
inline std::vector<std::vector<int>> all_hops(int n, const std::vector<Edge>& edges) {
  std::vector<std::vector<int>> adj(n);
  for (const auto& e : edges) {
    adj[e.a].push_back(e.b);
    adj[e.b].push_back(e.a);
  }
  std::vector<std::vector<int>> d(n, std::vector<int>(n, -1));
  for (int s = 0; s < n; ++s) {
    std::queue<int> q;
    d[s][s] = 0;
    q.push(s);
    while (!q.empty()) {
      const int u = q.front();
      q.pop();
      for (const int w : adj[u]) {
        if (d[s][w] < 0) {
          d[s][w] = d[s][u] + 1;
          q.push(w);
        }
      }
    }
  }
  return d;
}

/// True when every path from k to l in `graph` (adjacency matrix) meets a vertex of `removed`.
inline bool separated(const std::vector<std::vector<char>>& graph, int k, int l, const std::set<int>& removed) {
  const int n = static_cast<int>(graph.size());
  std::vector<char> seen(n, 0);
  std::queue<int> q;
  q.push(k);
  seen[k] = 1;
  while (!q.empty()) {
    const int u = q.front();
    q.pop();
    if (u == l) return false;
    for (int w = 0; w < n; ++w) {
      if (graph[u][w] && !seen[w] && !removed.contains(w)) {
        seen[w] = 1;
        q.push(w);
      }
    }
  }
  return true;
}

/// Graph on all buses joining pairs at hop distance 1 or 2 in the tree with the
/// reference removed.
inline std::vector<std::vector<char>> two_hop_graph(const gridtop::GridNetwork& grid) {
  const auto edges = grid.non_reference_edges();
  const auto d = all_hops(grid.n_bus(), edges);
  std::vector<std::vector<char>> g(grid.n_bus(), std::vector<char>(grid.n_bus(), 0));
  for (int a = 0; a < grid.n_bus(); ++a) {
    for (int b = 0; b < grid.n_bus(); ++b) {
      if (a != b && a != grid.reference() && b != grid.reference() && (d[a][b] == 1 || d[a][b] == 2)) g[a][b] = 1;
    }
  }
  return g;
}

struct TreeOptions {
  int n_nonsub = 8;
  gridtop::PhaseMode mode = gridtop::PhaseMode::Single;
  bool require_assumption2 = true;
  double r_min = 0.005, r_max = 0.03;
  double x_min = 0.01, x_max = 0.05;
  /// Three phase: off-diagonal entries as a fraction of the diagonal.
  double coupling = 0.35;
  bool decoupled = false;
};

inline Eigen::Matrix3cd random_three_phase(std::mt19937_64& rng, const TreeOptions& o) {
  std::uniform_real_distribution<double> ur(o.r_min, o.r_max), ux(o.x_min, o.x_max), uc(0.5, 1.0);
  Eigen::Matrix3cd z = Eigen::Matrix3cd::Zero();
  for (int a = 0; a < 3; ++a) z(a, a) = Complex(ur(rng), ux(rng));
  if (!o.decoupled) {
    for (int a = 0; a < 3; ++a) {
      for (int b = a + 1; b < 3; ++b) {
        const Complex off(o.coupling * uc(rng) * z(a, a).real(), o.coupling * uc(rng) * z(a, a).imag());
        z(a, b) = z(b, a) = off;
      }
    }
  }
  return z;
}

/// Random tree: buses 1..n form a random recursive tree with shuffled labels, and
/// the reference bus 0 hangs off one of them, so it has degree 1.
inline gridtop::GridData random_tree_data(std::mt19937_64& rng, const TreeOptions& o) {
  const int n = o.n_nonsub;
  // A path longer than three edges needs at least five buses.
  if (o.require_assumption2 && n < 5) throw std::invalid_argument("assumption 2 needs at least 5 non-reference buses");
  std::vector<Edge> nonsub;
  while (true) {
    std::vector<int> label(n);
    std::iota(label.begin(), label.end(), 1);
    std::shuffle(label.begin(), label.end(), rng);
    nonsub.clear();
    for (int v = 1; v < n; ++v) {
      std::uniform_int_distribution<int> pick(0, v - 1);
      nonsub.emplace_back(label[v], label[pick(rng)]);
    }
    if (!o.require_assumption2) break;
    if (gridtop::forest_diameter(n + 1, nonsub) > 3) break;
  }
  std::uniform_int_distribution<int> root(1, n);
  std::uniform_real_distribution<double> ur(o.r_min, o.r_max), ux(o.x_min, o.x_max);

  gridtop::GridData data;
  data.phase_mode = o.mode;
  data.n_bus = n + 1;
  data.reference = 0;
  std::vector<Edge> all = nonsub;
  all.emplace_back(0, root(rng));
  std::sort(all.begin(), all.end());
  for (const auto& e : all) {
    const auto z = o.mode == gridtop::PhaseMode::Single ? gridtop::LineImpedance::single(Complex(ur(rng), ux(rng)))
                                                        : gridtop::LineImpedance::three(random_three_phase(rng, o));
    data.lines.push_back({e, z});
  }
  data.permissible_edges = all;
  return data;
}

inline gridtop::GridNetwork random_tree(std::mt19937_64& rng, const TreeOptions& o) {
  return gridtop::GridNetwork(random_tree_data(rng, o));
}

/// Independent loads with random diagonal covariance in [0.5, 1.5] * variance.
inline gridtop::LoadModel random_load_model(std::mt19937_64& rng, const gridtop::GridNetwork& grid,
                                            double variance = 1e-4, double mean_scale = 0.02) {
  gridtop::LoadModel model(grid);
  const int dim = model.block_size();
  std::uniform_real_distribution<double> um(0.5 * mean_scale, 1.5 * mean_scale), uv(0.5, 1.5);
  for (const BusId b : grid.non_reference_buses()) {
    Eigen::VectorXd mean(dim);
    Eigen::MatrixXd cov = Eigen::MatrixXd::Zero(dim, dim);
    for (int c = 0; c < dim; ++c) {
      mean(c) = -um(rng);  // consumption
      cov(c, c) = variance * uv(rng);
    }
    model.set(b, mean, cov);
  }
  return model;
}

/// Path 0-1-2-...-n with the reference at 0, identical impedances.
inline gridtop::GridData path_data(int n_nonsub, Complex z = Complex(0.01, 0.02)) {
  gridtop::GridData data;
  data.phase_mode = gridtop::PhaseMode::Single;
  data.n_bus = n_nonsub + 1;
  data.reference = 0;
  for (int b = 1; b <= n_nonsub; ++b) data.lines.push_back({Edge(b - 1, b), gridtop::LineImpedance::single(z)});
  for (const auto& l : data.lines) data.permissible_edges.push_back(l.edge);
  return data;
}

}  // namespace fixtures
