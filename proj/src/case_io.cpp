#include <fstream>
#include <sstream>

#include <json.hpp>

#include "gridtop/network.hpp"

namespace gridtop {

using nlohmann::json;

namespace {

Complex parse_complex(const json& j, const std::string& where) {
  if (!j.is_array() || j.size() != 2 || !j[0].is_number() || !j[1].is_number()) {
    throw CaseError(where + ": expected [re, im]");
  }
  return {j[0].get<double>(), j[1].get<double>()};
}

json complex_json(Complex z) { return json::array({z.real(), z.imag()}); }

int parse_int(const json& obj, const char* key) {
  if (!obj.contains(key)) throw CaseError(std::string("missing key '") + key + "'");
  const auto& v = obj.at(key);
  if (!v.is_number_integer()) throw CaseError(std::string("key '") + key + "' must be an integer");
  return v.get<int>();
}

}  // namespace

GridData parse_case_data(const std::string& json_text) {
  json doc;
  try {
    doc = json::parse(json_text);
  } catch (const json::parse_error& e) {
    throw CaseError(std::string("malformed case JSON: ") + e.what());
  }
  if (!doc.is_object()) throw CaseError("case root must be an object");

  GridData data;
  const std::string mode = doc.value("phase_mode", std::string());
  if (mode == "single") {
    data.phase_mode = PhaseMode::Single;
  } else if (mode == "three") {
    data.phase_mode = PhaseMode::Three;
  } else {
    throw CaseError("phase_mode must be \"single\" or \"three\"");
  }
  data.n_bus = parse_int(doc, "n_bus");
  if (doc.contains("reference") && doc["reference"].is_array()) {
    throw ValidationError("multiple reference buses (forest) are not supported; exactly one substation is required");
  }
  data.reference = parse_int(doc, "reference");

  if (!doc.contains("lines") || !doc["lines"].is_array()) throw CaseError("missing 'lines' array");
  for (const auto& jl : doc["lines"]) {
    if (!jl.is_object()) throw CaseError("line entries must be objects");
    const int from = parse_int(jl, "from");
    const int to = parse_int(jl, "to");
    const std::string where = "line (" + std::to_string(from) + "," + std::to_string(to) + ")";
    if (!jl.contains("z")) throw CaseError(where + ": missing 'z'");
    const auto& jz = jl["z"];
    if (data.phase_mode == PhaseMode::Single) {
      data.lines.push_back({Edge(from, to), LineImpedance::single(parse_complex(jz, where))});
    } else {
      if (!jz.is_array() || jz.size() != 3) throw CaseError(where + ": expected 3x3 impedance");
      Eigen::Matrix3cd z;
      for (int r = 0; r < 3; ++r) {
        if (!jz[r].is_array() || jz[r].size() != 3) throw CaseError(where + ": expected 3x3 impedance");
        for (int c = 0; c < 3; ++c) z(r, c) = parse_complex(jz[r][c], where);
      }
      data.lines.push_back({Edge(from, to), LineImpedance::three(z)});
    }
  }

  if (doc.contains("permissible_edges")) {
    const auto& jp = doc["permissible_edges"];
    if (!jp.is_array()) throw CaseError("'permissible_edges' must be an array");
    for (const auto& pair : jp) {
      if (!pair.is_array() || pair.size() != 2 || !pair[0].is_number_integer() || !pair[1].is_number_integer()) {
        throw CaseError("permissible edges must be [int, int] pairs");
      }
      data.permissible_edges.emplace_back(pair[0].get<int>(), pair[1].get<int>());
    }
  } else {
    for (const auto& line : data.lines) data.permissible_edges.push_back(line.edge);
  }
  return data;
}

GridNetwork parse_case(const std::string& json_text) { return GridNetwork(parse_case_data(json_text)); }

GridNetwork load_case(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw CaseError("cannot open case file " + path.string());
  std::stringstream buf;
  buf << in.rdbuf();
  return parse_case(buf.str());
}

std::string serialize_case(const GridData& data) {
  json doc;
  doc["phase_mode"] = data.phase_mode == PhaseMode::Single ? "single" : "three";
  doc["n_bus"] = data.n_bus;
  doc["reference"] = data.reference;
  json lines = json::array();
  for (const auto& line : data.lines) {
    json jl;
    jl["from"] = line.edge.a;
    jl["to"] = line.edge.b;
    if (data.phase_mode == PhaseMode::Single) {
      jl["z"] = complex_json(line.z.scalar());
    } else {
      json rows = json::array();
      for (int r = 0; r < 3; ++r) {
        json row = json::array();
        for (int c = 0; c < 3; ++c) row.push_back(complex_json(line.z.matrix()(r, c)));
        rows.push_back(row);
      }
      jl["z"] = rows;
    }
    lines.push_back(jl);
  }
  doc["lines"] = lines;
  json perm = json::array();
  for (const auto& e : data.permissible_edges) perm.push_back(json::array({e.a, e.b}));
  doc["permissible_edges"] = perm;
  return doc.dump(1);
}

void save_case(const GridNetwork& grid, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw CaseError("cannot write case file " + path.string());
  out << serialize_case(grid.data()) << '\n';
}

}  // namespace gridtop
