#include "gridtop/layout.hpp"

#include <algorithm>
#include <stdexcept>

namespace gridtop {

namespace {
constexpr char kPhaseLetter[3] = {'a', 'b', 'c'};
}

std::string column_name(const VariableKey& key) {
  std::string out = key.obs == Observable::Magnitude ? "v_" : "th_";
  out += std::to_string(key.bus);
  out += '_';
  out += kPhaseLetter[key.phase];
  return out;
}

VariableKey parse_column_name(const std::string& name) {
  VariableKey key;
  std::string rest;
  if (name.rfind("v_", 0) == 0) {
    key.obs = Observable::Magnitude;
    rest = name.substr(2);
  } else if (name.rfind("th_", 0) == 0) {
    key.obs = Observable::Angle;
    rest = name.substr(3);
  } else {
    throw std::invalid_argument("bad column name '" + name + "'");
  }
  const auto us = rest.rfind('_');
  if (us == std::string::npos || us + 2 != rest.size()) throw std::invalid_argument("bad column name '" + name + "'");
  const char letter = rest[us + 1];
  const auto* it = std::find(std::begin(kPhaseLetter), std::end(kPhaseLetter), letter);
  if (it == std::end(kPhaseLetter)) throw std::invalid_argument("bad phase in column name '" + name + "'");
  key.phase = static_cast<int>(it - std::begin(kPhaseLetter));
  try {
    std::size_t used = 0;
    key.bus = std::stoi(rest.substr(0, us), &used);
    if (used != us) throw std::invalid_argument("");
  } catch (const std::exception&) {
    throw std::invalid_argument("bad bus id in column name '" + name + "'");
  }
  return key;
}

VariableLayout::VariableLayout(std::vector<VariableKey> keys) : keys_(std::move(keys)) {
  for (int c = 0; c < static_cast<int>(keys_.size()); ++c) {
    if (!index_.emplace(keys_[c], c).second) {
      throw std::invalid_argument("duplicate observable " + column_name(keys_[c]) + " in layout");
    }
  }
}

VariableLayout VariableLayout::for_grid(const GridNetwork& grid) {
  std::vector<VariableKey> keys;
  for (const BusId b : grid.non_reference_buses()) {
    for (int p = 0; p < grid.phases(); ++p) {
      keys.push_back({b, p, Observable::Magnitude});
      keys.push_back({b, p, Observable::Angle});
    }
  }
  return VariableLayout(std::move(keys));
}

int VariableLayout::column(BusId bus, int phase, Observable obs) const {
  auto it = index_.find({bus, phase, obs});
  if (it == index_.end()) throw std::out_of_range("observable " + column_name({bus, phase, obs}) + " not in layout");
  return it->second;
}

bool VariableLayout::contains(BusId bus, int phase, Observable obs) const {
  return index_.contains({bus, phase, obs});
}

std::vector<BusId> VariableLayout::buses() const {
  std::vector<BusId> out;
  for (const auto& k : keys_) {
    if (std::find(out.begin(), out.end(), k.bus) == out.end()) out.push_back(k.bus);
  }
  return out;
}

int VariableLayout::phases() const {
  int max_phase = 0;
  for (const auto& k : keys_) max_phase = std::max(max_phase, k.phase);
  return max_phase + 1;
}

void SampleMatrix::check() const {
  if (data.cols() != layout.size()) throw std::invalid_argument("sample matrix column count does not match layout");
  if (!data.allFinite()) throw std::invalid_argument("sample matrix contains NaN or Inf");
}

}  // namespace gridtop
