#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "gridtop/citest.hpp"
#include "gridtop/covariance.hpp"
#include "gridtop/network.hpp"

namespace gridtop {

enum class EdgeStage { NonLeaf, LeafDeg1, LeafDeg2Plus };
std::string to_string(EdgeStage stage);

/// Order in which stage 1 visits (k, l) witness pairs for a candidate edge.
enum class SearchOrder { Lexicographic, Shuffled };

struct LearnerConfig {
  TestConfig test = TestConfig::defaults(CiTest::Mod);
  SearchOrder order = SearchOrder::Lexicographic;
  /// Seed for SearchOrder::Shuffled.
  std::uint64_t order_seed = 0;
  /// Stage-1 cap on (k, l) pairs tried per candidate edge; 0 = no cap.
  std::size_t max_candidates_per_edge = 0;
  /// Stage 2 tests every (j, l) witness and requires all to pass.
  bool strict_stage2 = false;
  /// Compute is_tree and list unattached nodes.
  bool validate_tree = true;
  /// Phase of the k, l magnitudes in three-phase quartets.
  int phase = 0;
  /// Threads for stage 1 (results do not depend on it).
  unsigned workers = 1;
};

struct LearnedEdge {
  Edge edge;
  EdgeStage stage = EdgeStage::NonLeaf;
  /// Test statistic that admitted the edge (max over witnesses in stage 3).
  double statistic = 0.0;
};

struct LearnedTopology {
  /// Buses the learner worked on (non-reference buses present in the covariance).
  std::vector<BusId> buses;
  /// Stage 1 edges in candidate order, then leaf attachments in node order.
  std::vector<LearnedEdge> edges;
  std::vector<BusId> v_nl;
  std::vector<BusId> v1_nl;
  std::vector<BusId> v2_nl;
  /// Leaves with more than one passing parent; the smallest statistic won.
  std::vector<BusId> ambiguous;
  /// Buses with no learned edge at the end.
  std::vector<BusId> unattached;
  /// Candidate edges dropped because they touch a bus outside the covariance (the reference).
  std::size_t dropped_candidates = 0;
  std::size_t candidate_edges = 0;
  std::size_t test_count = 0;
  std::size_t stage_tests[3] = {0, 0, 0};
  std::size_t indeterminate_count = 0;
  bool is_tree = false;

  /// Learned edges sorted.
  std::vector<Edge> edge_set() const;
};

/// Every unordered pair of `buses`.
std::vector<Edge> all_pairs(const std::vector<BusId>& buses);

/// Candidate list restricted to `buses`, deduplicated and sorted. Edges touching other
/// buses are counted in `dropped`.
std::vector<Edge> restrict_candidates(const std::vector<Edge>& e_full, const std::vector<BusId>& buses,
                                      std::size_t* dropped = nullptr);

/// Stage 1: edges (i, j) in the candidate list with a witness pair k, l such that
/// v_k and v_l are independent given the voltages at i and j.
LearnedTopology detect_nonleaf_edges(const Covariance& cov, const std::vector<Edge>& e_full, const LearnerConfig& cfg);

/// Stage 2: attaches leaves to degree-1 nodes of the stage-1 tree.
void attach_leaves_deg1(const Covariance& cov, LearnedTopology& topo, const std::vector<Edge>& e_full,
                        const LearnerConfig& cfg);

/// Stage 3: attaches the remaining leaves to nodes with two or more non-leaf neighbours,
/// then validates the result.
void attach_leaves_deg2plus(const Covariance& cov, LearnedTopology& topo, const std::vector<Edge>& e_full,
                            const LearnerConfig& cfg);

/// All three stages. Without `e_full` every pair of buses is a candidate.
LearnedTopology learn(const Covariance& cov, const std::optional<std::vector<Edge>>& e_full,
                      const LearnerConfig& cfg);

/// (missed + spurious) / |truth|.
double edge_error(const std::vector<Edge>& learned, const std::vector<Edge>& truth);
double edge_error(const LearnedTopology& learned, const GridNetwork& truth);

/// Upper bound on quartet tests: |E_full| N^2 + N |E_full| N.
std::size_t test_count_bound(std::size_t n_buses, std::size_t n_candidates);

std::string serialize_topology(const LearnedTopology& topo);

}  // namespace gridtop
