#include "gridtop/learner.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <numeric>
#include <set>
#include <stdexcept>

#include <json.hpp>

#include "gridtop/parallel.hpp"
#include "gridtop/rng.hpp"

namespace gridtop {

namespace {

struct Counter {
  std::size_t tests = 0;
  std::size_t indeterminate = 0;
};

CiResult run_test(const Covariance& cov, BusId k, BusId l, BusId i, BusId j, const LearnerConfig& cfg, Counter& c) {
  const CiResult r = ci_test(cov, k, l, i, j, cfg.test, cfg.phase);
  ++c.tests;
  if (r.indeterminate) ++c.indeterminate;
  return r;
}

/// Adjacency restricted to stage-1 (non-leaf) edges.
std::map<BusId, std::vector<BusId>> nonleaf_adjacency(const LearnedTopology& topo) {
  std::map<BusId, std::vector<BusId>> adj;
  for (const BusId b : topo.v_nl) adj[b];
  for (const auto& e : topo.edges) {
    if (e.stage != EdgeStage::NonLeaf) continue;
    adj[e.edge.a].push_back(e.edge.b);
    adj[e.edge.b].push_back(e.edge.a);
  }
  for (auto& [b, list] : adj) std::sort(list.begin(), list.end());
  return adj;
}

/// (j, l) with (i j), (j l) stage-1 edges and l != i, sorted.
std::vector<std::pair<BusId, BusId>> witnesses(const std::map<BusId, std::vector<BusId>>& adj, BusId i) {
  std::vector<std::pair<BusId, BusId>> out;
  const auto it = adj.find(i);
  if (it == adj.end()) return out;
  for (const BusId j : it->second) {
    for (const BusId l : adj.at(j)) {
      if (l != i) out.emplace_back(j, l);
    }
  }
  return out;
}

bool contains(const std::vector<BusId>& sorted, BusId b) { return std::binary_search(sorted.begin(), sorted.end(), b); }

std::vector<BusId> unattached_nodes(const LearnedTopology& topo) {
  std::set<BusId> in_v(topo.v_nl.begin(), topo.v_nl.end());
  for (const auto& e : topo.edges) {
    in_v.insert(e.edge.a);
    in_v.insert(e.edge.b);
  }
  std::vector<BusId> out;
  for (const BusId b : topo.buses) {
    if (!in_v.contains(b)) out.push_back(b);
  }
  return out;
}

/// Parent choice among candidates that passed: smallest statistic, ties by bus id.
struct Choice {
  BusId parent = -1;
  double statistic = std::numeric_limits<double>::infinity();
  int passing = 0;

  void offer(BusId i, double stat) {
    ++passing;
    if (stat < statistic || (stat == statistic && i < parent)) {
      statistic = stat;
      parent = i;
    }
  }
};

void validate(LearnedTopology& topo) {
  topo.unattached = unattached_nodes(topo);
  const auto n = topo.buses.size();
  if (topo.edges.size() + 1 != n) {
    topo.is_tree = false;
    return;
  }
  std::map<BusId, int> index;
  for (std::size_t r = 0; r < n; ++r) index[topo.buses[r]] = static_cast<int>(r);
  std::vector<int> parent(n);
  std::iota(parent.begin(), parent.end(), 0);
  auto find = [&](int x) {
    while (parent[x] != x) x = parent[x] = parent[parent[x]];
    return x;
  };
  bool acyclic = true;
  for (const auto& e : topo.edges) {
    const int a = find(index.at(e.edge.a));
    const int b = find(index.at(e.edge.b));
    if (a == b) acyclic = false;
    parent[a] = b;
  }
  topo.is_tree = acyclic;
}

}  // namespace

std::string to_string(EdgeStage stage) {
  switch (stage) {
    case EdgeStage::NonLeaf: return "nonleaf";
    case EdgeStage::LeafDeg1: return "leaf_deg1";
    case EdgeStage::LeafDeg2Plus: return "leaf_deg2plus";
  }
  return "?";
}

std::vector<Edge> LearnedTopology::edge_set() const {
  std::vector<Edge> out;
  for (const auto& e : edges) out.push_back(e.edge);
  std::sort(out.begin(), out.end());
  return out;
}

std::vector<Edge> all_pairs(const std::vector<BusId>& buses) {
  std::vector<Edge> out;
  for (std::size_t r = 0; r < buses.size(); ++r) {
    for (std::size_t s = r + 1; s < buses.size(); ++s) out.emplace_back(buses[r], buses[s]);
  }
  std::sort(out.begin(), out.end());
  return out;
}

std::vector<Edge> restrict_candidates(const std::vector<Edge>& e_full, const std::vector<BusId>& buses,
                                      std::size_t* dropped) {
  std::vector<BusId> sorted = buses;
  std::sort(sorted.begin(), sorted.end());
  std::vector<Edge> out;
  std::size_t n_dropped = 0;
  for (const auto& e : e_full) {
    if (e.a == e.b) continue;
    if (contains(sorted, e.a) && contains(sorted, e.b)) {
      out.push_back(e);
    } else {
      ++n_dropped;
    }
  }
  std::sort(out.begin(), out.end());
  out.erase(std::unique(out.begin(), out.end()), out.end());
  if (dropped) *dropped = n_dropped;
  return out;
}

LearnedTopology detect_nonleaf_edges(const Covariance& cov, const std::vector<Edge>& e_full, const LearnerConfig& cfg) {
  cfg.test.check();
  LearnedTopology topo;
  topo.buses = cov.layout.buses();
  std::sort(topo.buses.begin(), topo.buses.end());
  const std::vector<Edge> candidates = restrict_candidates(e_full, topo.buses, &topo.dropped_candidates);
  topo.candidate_edges = candidates.size();

  struct EdgeOutcome {
    bool found = false;
    double statistic = 0.0;
    Counter counter;
  };
  std::vector<EdgeOutcome> outcomes(candidates.size());

  parallel_for(candidates.size(), cfg.workers, [&](std::size_t idx) {
    const Edge e = candidates[idx];
    std::vector<BusId> rest;
    for (const BusId b : topo.buses) {
      if (b != e.a && b != e.b) rest.push_back(b);
    }
    std::vector<std::pair<BusId, BusId>> pairs;
    for (std::size_t r = 0; r < rest.size(); ++r) {
      for (std::size_t s = r + 1; s < rest.size(); ++s) pairs.emplace_back(rest[r], rest[s]);
    }
    if (cfg.order == SearchOrder::Shuffled) {
      RandomStream rng(derive_seed(cfg.order_seed, static_cast<std::uint64_t>(e.a), static_cast<std::uint64_t>(e.b)), 0);
      std::shuffle(pairs.begin(), pairs.end(), rng);
    }
    if (cfg.max_candidates_per_edge > 0 && pairs.size() > cfg.max_candidates_per_edge) {
      pairs.resize(cfg.max_candidates_per_edge);
    }
    auto& out = outcomes[idx];
    for (const auto& [k, l] : pairs) {
      const CiResult r = run_test(cov, k, l, e.a, e.b, cfg, out.counter);
      if (r.independent) {
        out.found = true;
        out.statistic = r.statistic;
        break;
      }
    }
  });

  std::set<BusId> v_nl;
  for (std::size_t idx = 0; idx < candidates.size(); ++idx) {
    const auto& out = outcomes[idx];
    topo.stage_tests[0] += out.counter.tests;
    topo.indeterminate_count += out.counter.indeterminate;
    if (!out.found) continue;
    topo.edges.push_back({candidates[idx], EdgeStage::NonLeaf, out.statistic});
    v_nl.insert(candidates[idx].a);
    v_nl.insert(candidates[idx].b);
  }
  topo.test_count = topo.stage_tests[0];
  topo.v_nl.assign(v_nl.begin(), v_nl.end());

  const auto adj = nonleaf_adjacency(topo);
  for (const BusId b : topo.v_nl) {
    (adj.at(b).size() == 1 ? topo.v1_nl : topo.v2_nl).push_back(b);
  }
  return topo;
}

void attach_leaves_deg1(const Covariance& cov, LearnedTopology& topo, const std::vector<Edge>& e_full,
                        const LearnerConfig& cfg) {
  cfg.test.check();
  const std::vector<Edge> candidates = restrict_candidates(e_full, topo.buses);
  const auto adj = nonleaf_adjacency(topo);
  std::vector<BusId> v_nl = topo.v_nl;
  Counter counter;
  std::vector<LearnedEdge> added;

  for (const BusId k : topo.buses) {
    if (contains(topo.v_nl, k)) continue;
    Choice choice;
    for (const BusId i : topo.v1_nl) {
      if (!std::binary_search(candidates.begin(), candidates.end(), Edge(k, i))) continue;
      auto ws = witnesses(adj, i);
      if (ws.empty()) continue;
      if (!cfg.strict_stage2) ws.resize(1);
      bool pass = true;
      double stat = 0.0;
      for (const auto& [j, l] : ws) {
        const CiResult r = run_test(cov, k, l, i, j, cfg, counter);
        if (!r.independent) {
          pass = false;
          break;
        }
        stat = std::max(stat, r.statistic);
      }
      if (pass) choice.offer(i, stat);
    }
    if (choice.passing == 0) continue;
    if (choice.passing > 1) topo.ambiguous.push_back(k);
    added.push_back({Edge(k, choice.parent), EdgeStage::LeafDeg1, choice.statistic});
    v_nl.push_back(k);
  }

  topo.edges.insert(topo.edges.end(), added.begin(), added.end());
  topo.stage_tests[1] += counter.tests;
  topo.test_count += counter.tests;
  topo.indeterminate_count += counter.indeterminate;
  // Attached leaves join V_nl, which takes them out of the stage-3 loop.
  std::sort(v_nl.begin(), v_nl.end());
  topo.v_nl = v_nl;
}

void attach_leaves_deg2plus(const Covariance& cov, LearnedTopology& topo, const std::vector<Edge>& e_full,
                            const LearnerConfig& cfg) {
  cfg.test.check();
  const std::vector<Edge> candidates = restrict_candidates(e_full, topo.buses);
  const auto adj = nonleaf_adjacency(topo);
  Counter counter;
  std::vector<LearnedEdge> added;
  std::vector<BusId> leaves;

  for (const BusId k : topo.buses) {
    if (contains(topo.v_nl, k)) continue;
    Choice choice;
    for (const BusId i : topo.v2_nl) {
      if (!std::binary_search(candidates.begin(), candidates.end(), Edge(k, i))) continue;
      bool pass = true;
      double stat = 0.0;
      // An empty witness set passes: only a star-shaped stage-1 tree has one, and its
      // single centre is then the only candidate left.
      for (const auto& [j, l] : witnesses(adj, i)) {
        const CiResult r = run_test(cov, k, l, i, j, cfg, counter);
        if (!r.independent) {
          pass = false;
          break;
        }
        stat = std::max(stat, r.statistic);
      }
      if (pass) choice.offer(i, stat);
    }
    if (choice.passing == 0) continue;
    if (choice.passing > 1) topo.ambiguous.push_back(k);
    added.push_back({Edge(k, choice.parent), EdgeStage::LeafDeg2Plus, choice.statistic});
    leaves.push_back(k);
  }

  topo.edges.insert(topo.edges.end(), added.begin(), added.end());
  topo.v_nl.insert(topo.v_nl.end(), leaves.begin(), leaves.end());
  std::sort(topo.v_nl.begin(), topo.v_nl.end());
  std::sort(topo.ambiguous.begin(), topo.ambiguous.end());
  topo.stage_tests[2] += counter.tests;
  topo.test_count += counter.tests;
  topo.indeterminate_count += counter.indeterminate;
  if (cfg.validate_tree) {
    validate(topo);
  } else {
    topo.unattached = unattached_nodes(topo);
  }
}

LearnedTopology learn(const Covariance& cov, const std::optional<std::vector<Edge>>& e_full, const LearnerConfig& cfg) {
  std::vector<BusId> buses = cov.layout.buses();
  std::sort(buses.begin(), buses.end());
  const std::vector<Edge> candidates = e_full ? *e_full : all_pairs(buses);
  LearnedTopology topo = detect_nonleaf_edges(cov, candidates, cfg);
  attach_leaves_deg1(cov, topo, candidates, cfg);
  attach_leaves_deg2plus(cov, topo, candidates, cfg);
  return topo;
}

double edge_error(const std::vector<Edge>& learned, const std::vector<Edge>& truth) {
  if (truth.empty()) throw std::invalid_argument("edge_error: empty true edge set");
  std::set<Edge> l(learned.begin(), learned.end());
  std::set<Edge> t(truth.begin(), truth.end());
  std::size_t missed = 0, spurious = 0;
  for (const auto& e : t) missed += !l.contains(e);
  for (const auto& e : l) spurious += !t.contains(e);
  return static_cast<double>(missed + spurious) / static_cast<double>(t.size());
}

double edge_error(const LearnedTopology& learned, const GridNetwork& truth) {
  return edge_error(learned.edge_set(), truth.non_reference_edges());
}

std::size_t test_count_bound(std::size_t n_buses, std::size_t n_candidates) {
  return n_candidates * n_buses * n_buses + n_buses * n_candidates * n_buses;
}

std::string serialize_topology(const LearnedTopology& topo) {
  using nlohmann::json;
  json doc;
  json edges = json::array();
  for (const auto& e : topo.edges) {
    json je = {{"from", e.edge.a}, {"to", e.edge.b}, {"stage", to_string(e.stage)}};
    je["statistic"] = std::isfinite(e.statistic) ? json(e.statistic) : json(nullptr);
    edges.push_back(je);
  }
  doc["edges"] = edges;
  doc["v_nl"] = topo.v_nl;
  doc["v1_nl"] = topo.v1_nl;
  doc["v2_nl"] = topo.v2_nl;
  doc["ambiguous"] = topo.ambiguous;
  doc["unattached"] = topo.unattached;
  doc["is_tree"] = topo.is_tree;
  doc["root_attachment"] = "unknown";
  doc["diagnostics"] = {{"candidate_edges", topo.candidate_edges},
                        {"dropped_candidates", topo.dropped_candidates},
                        {"test_count", topo.test_count},
                        {"stage_tests", {topo.stage_tests[0], topo.stage_tests[1], topo.stage_tests[2]}},
                        {"indeterminate_count", topo.indeterminate_count}};
  return doc.dump(1);
}

}  // namespace gridtop
