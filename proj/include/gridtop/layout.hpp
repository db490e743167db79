#pragma once

#include <map>
#include <string>
#include <tuple>
#include <vector>

#include <Eigen/Dense>

#include "gridtop/network.hpp"

namespace gridtop {

enum class Observable { Magnitude, Angle };

struct VariableKey {
  BusId bus = 0;
  int phase = 0;
  Observable obs = Observable::Magnitude;

  auto operator<=>(const VariableKey&) const = default;
};

/// Column name, e.g. "v_3_a" or "th_3_b".
std::string column_name(const VariableKey& key);
VariableKey parse_column_name(const std::string& name);

/// Bijective map between observables (bus, phase, v|theta) and matrix columns.
class VariableLayout {
 public:
  VariableLayout() = default;
  explicit VariableLayout(std::vector<VariableKey> keys);

  /// Non-reference buses ascending, phases a..c, magnitude before angle.
  static VariableLayout for_grid(const GridNetwork& grid);

  int size() const { return static_cast<int>(keys_.size()); }
  const VariableKey& key(int column) const { return keys_[column]; }
  const std::vector<VariableKey>& keys() const { return keys_; }
  /// Throws std::out_of_range when the observable is not present.
  int column(BusId bus, int phase, Observable obs) const;
  bool contains(BusId bus, int phase, Observable obs) const;

  /// Distinct buses in first-appearance order.
  std::vector<BusId> buses() const;
  /// Number of phases present (1 or 3).
  int phases() const;

  bool operator==(const VariableLayout& other) const { return keys_ == other.keys_; }

 private:
  std::vector<VariableKey> keys_;
  std::map<VariableKey, int> index_;
};

/// Rows are samples, columns follow `layout`.
struct SampleMatrix {
  VariableLayout layout;
  Eigen::MatrixXd data;

  /// Throws std::invalid_argument on NaN/Inf entries or a column count mismatch.
  void check() const;
};

}  // namespace gridtop
