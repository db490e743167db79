#pragma once

#include <compare>
#include <complex>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include <Eigen/Dense>

namespace gridtop {

using BusId = int;
using Complex = std::complex<double>;

enum class PhaseMode { Single, Three };

inline int phase_count(PhaseMode mode) { return mode == PhaseMode::Single ? 1 : 3; }

/// Malformed case file (bad JSON, missing keys, wrong shapes).
class CaseError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Structurally invalid grid: not radial, bad impedance, inconsistent sets.
class ValidationError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Undirected bus pair stored as (lower, higher).
struct Edge {
  BusId a = 0;
  BusId b = 0;

  Edge() = default;
  Edge(BusId u, BusId v) : a(u < v ? u : v), b(u < v ? v : u) {}

  bool touches(BusId bus) const { return a == bus || b == bus; }
  BusId other(BusId bus) const { return bus == a ? b : a; }

  auto operator<=>(const Edge&) const = default;
};

std::string to_string(const Edge& e);

class LineImpedance {
 public:
  static LineImpedance single(Complex z);
  static LineImpedance three(const Eigen::Matrix3cd& z);

  PhaseMode mode() const { return mode_; }
  /// Single-phase impedance. For three-phase lines this is the (a, a) entry.
  Complex scalar() const { return z_(0, 0); }
  /// Three-phase impedance matrix; a single-phase line is embedded at (a, a).
  const Eigen::Matrix3cd& matrix() const { return z_; }

  bool operator==(const LineImpedance& other) const {
    return mode_ == other.mode_ && z_ == other.z_;
  }

 private:
  LineImpedance(PhaseMode mode, const Eigen::Matrix3cd& z) : mode_(mode), z_(z) {}

  PhaseMode mode_;
  Eigen::Matrix3cd z_;
};

struct Line {
  Edge edge;
  LineImpedance z;

  bool operator==(const Line&) const = default;
};

/// Unvalidated grid description, as read from a case file.
struct GridData {
  PhaseMode phase_mode = PhaseMode::Single;
  int n_bus = 0;
  BusId reference = 0;
  std::vector<Line> lines;
  std::vector<Edge> permissible_edges;
};

struct RadialReport {
  bool ok = true;
  std::vector<std::vector<BusId>> cycles;
  std::vector<BusId> disconnected;
  std::vector<std::string> problems;

  std::string summary() const;
};

/// Checks that the lines of `data` form a spanning tree containing the reference bus.
RadialReport validate_radial(const GridData& data);

/// A validated single-tree distribution grid. Immutable after construction.
class GridNetwork {
 public:
  /// Validates `data` and throws ValidationError on any violation.
  explicit GridNetwork(GridData data);

  PhaseMode phase_mode() const { return data_.phase_mode; }
  int phases() const { return phase_count(data_.phase_mode); }
  int n_bus() const { return data_.n_bus; }
  BusId reference() const { return data_.reference; }
  const std::vector<Line>& lines() const { return data_.lines; }
  const std::vector<Edge>& permissible_edges() const { return data_.permissible_edges; }
  const GridData& data() const { return data_; }

  /// Non-reference buses in ascending order; this is the reduced coordinate order.
  const std::vector<BusId>& non_reference_buses() const { return non_ref_; }
  /// Position of `bus` in non_reference_buses(), or -1 for the reference bus.
  int reduced_index(BusId bus) const { return reduced_index_[bus]; }

  // Rooted tree at the reference bus, used by the tree solvers.
  /// Buses in breadth-first order from the reference (reference first).
  const std::vector<BusId>& bfs_order() const { return bfs_order_; }
  BusId parent(BusId bus) const { return parent_[bus]; }
  /// Index into lines() of the edge joining `bus` to its parent; -1 for the reference.
  int parent_line(BusId bus) const { return parent_line_[bus]; }
  const std::vector<BusId>& neighbors(BusId bus) const { return adjacency_[bus]; }

  /// Operational edges that do not touch the reference bus.
  std::vector<Edge> non_reference_edges() const;

  /// Stable 64-bit fingerprint of the canonical case serialization.
  std::uint64_t fingerprint() const;

 private:
  GridData data_;
  std::vector<BusId> non_ref_;
  std::vector<int> reduced_index_;
  std::vector<BusId> bfs_order_;
  std::vector<BusId> parent_;
  std::vector<int> parent_line_;
  std::vector<std::vector<BusId>> adjacency_;
};

struct Assumption2Result {
  bool satisfied = false;
  /// Longest path (in edges) among non-reference buses.
  int depth = 0;
};

/// Depth of the tree with the reference bus removed; satisfied iff depth > 3.
Assumption2Result check_assumption2(const GridNetwork& grid);

/// Longest shortest-path (in edges) over an undirected forest on `n` vertices.
int forest_diameter(int n, std::span<const Edge> edges);

struct IncidenceMatrix {
  /// |lines| x (n_bus - 1); row e is e_a - e_b with the reference column dropped.
  Eigen::MatrixXd matrix;
  std::vector<Edge> edge_order;
  /// Bus for each column.
  std::vector<BusId> columns;
};

IncidenceMatrix incidence(const GridNetwork& grid);

// Case file I/O (JSON).
GridNetwork load_case(const std::filesystem::path& path);
GridNetwork parse_case(const std::string& json_text);
/// Parses without structural validation (shape and type checks only).
GridData parse_case_data(const std::string& json_text);
std::string serialize_case(const GridData& data);
void save_case(const GridNetwork& grid, const std::filesystem::path& path);

}  // namespace gridtop
