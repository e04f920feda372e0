#pragma once

#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "fracpq/error.hpp"
#include "fracpq/grid.hpp"

namespace fracpq {

inline nlohmann::json domain_to_json(const Domain& d) {
  return std::visit(
      [](const auto& s) -> nlohmann::json {
        using T = std::decay_t<decltype(s)>;
        if constexpr (std::is_same_v<T, Interval>) {
          return {{"type", "interval"}, {"a", s.a}, {"b", s.b}};
        } else if constexpr (std::is_same_v<T, Rectangle>) {
          return {{"type", "rectangle"}, {"x", {s.a1, s.b1}}, {"y", {s.a2, s.b2}}};
        } else {
          return {{"type", "disk"}, {"center", {s.center[0], s.center[1]}}, {"radius", s.radius}};
        }
      },
      d);
}

/// Inverse of domain_to_json. Problems are reported against `where`.
inline Domain domain_from_json(const nlohmann::json& j, const std::string& where = "domain") {
  auto fail = [&](const std::string& field, const std::string& why) { throw ConfigError(where + field, why); };
  if (!j.is_object()) fail("", "expected an object");
  if (!j.contains("type") || !j["type"].is_string()) fail(".type", "expected \"interval\", \"rectangle\" or \"disk\"");
  const std::string type = j["type"];
  auto number = [&](const char* key) {
    if (!j.contains(key) || !j[key].is_number()) fail(std::string(".") + key, "expected a number");
    return j[key].get<double>();
  };
  auto pair = [&](const char* key) {
    if (!j.contains(key) || !j[key].is_array() || j[key].size() != 2 || !j[key][0].is_number() ||
        !j[key][1].is_number()) {
      fail(std::string(".") + key, "expected two numbers");
    }
    return std::array<double, 2>{j[key][0].get<double>(), j[key][1].get<double>()};
  };
  auto only = [&](std::initializer_list<const char*> keys) {
    for (const auto& [k, v] : j.items()) {
      bool known = k == "type";
      for (const char* allowed : keys) known = known || k == allowed;
      if (!known) fail("." + k, "unknown key");
    }
  };
  Domain d;
  if (type == "interval") {
    only({"a", "b"});
    d = Interval{number("a"), number("b")};
  } else if (type == "rectangle") {
    only({"x", "y"});
    const auto x = pair("x"), y = pair("y");
    d = Rectangle{x[0], x[1], y[0], y[1]};
  } else if (type == "disk") {
    only({"center", "radius"});
    const auto c = j.contains("center") ? pair("center") : std::array<double, 2>{0.0, 0.0};
    d = Disk{{c[0], c[1]}, number("radius")};
  } else {
    fail(".type", "unknown domain type \"" + type + "\"");
  }
  try {
    validate(d);
  } catch (const DomainError& e) {
    fail("", e.what());
  }
  return d;
}

inline std::string format_double(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

/// Sidecar path next to a field CSV: solution.csv -> solution.json.
inline std::filesystem::path sidecar_path(const std::filesystem::path& csv) {
  auto p = csv;
  return p.replace_extension(".json");
}

inline nlohmann::json grid_metadata(const Grid& g) {
  return {{"domain", domain_to_json(g.domain())},
          {"resolution", g.resolution()},
          {"dim", g.dim()},
          {"h", g.spacing()},
          {"nodes", g.node_count()},
          {"interior_nodes", g.interior_count()}};
}

namespace detail {

inline std::ofstream open_out(const std::filesystem::path& path) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path);
  if (!out) throw Error("cannot write " + path.string());
  return out;
}

}  // namespace detail

/// Every grid node in storage order, header `x[,y],value`, plus the sidecar.
inline void write_field_csv(const std::filesystem::path& path, const ScalarField& u) {
  const Grid& g = u.grid();
  auto out = detail::open_out(path);
  out << (g.dim() == 1 ? "x,value\n" : "x,y,value\n");
  for (std::size_t k = 0; k < g.node_count(); ++k) {
    const auto x = g.coord(k);
    out << format_double(x[0]) << ',';
    if (g.dim() == 2) out << format_double(x[1]) << ',';
    out << format_double(u[k]) << '\n';
  }
  if (!out) throw Error("write failed: " + path.string());
  auto side = detail::open_out(sidecar_path(path));
  side << grid_metadata(g).dump(2) << '\n';
}

/// Reads a field written by write_field_csv; the grid comes from the sidecar.
inline ScalarField read_field_csv(const std::filesystem::path& path) {
  std::ifstream side(sidecar_path(path));
  if (!side) throw Error("missing sidecar " + sidecar_path(path).string());
  nlohmann::json meta;
  try {
    side >> meta;
  } catch (const nlohmann::json::exception& e) {
    throw Error("malformed sidecar: " + std::string(e.what()));
  }
  const Grid g = build_grid(domain_from_json(meta.at("domain"), "sidecar.domain"), meta.at("resolution").get<int>());
  std::ifstream in(path);
  if (!in) throw Error("cannot read " + path.string());
  std::string line;
  std::getline(in, line);  // header
  std::vector<double> values;
  values.reserve(g.node_count());
  const std::size_t cols = static_cast<std::size_t>(g.dim()) + 1;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::vector<double> row;
    const char* p = line.c_str();
    while (*p) {
      char* end = nullptr;
      row.push_back(std::strtod(p, &end));
      if (end == p) throw Error("malformed number in " + path.string());
      p = *end == ',' ? end + 1 : end;
    }
    if (row.size() != cols) throw Error("wrong column count in " + path.string());
    values.push_back(row.back());
  }
  if (values.size() != g.node_count()) throw Error("row count does not match the grid in " + path.string());
  return ScalarField(g, std::move(values));
}

/// Header `x[,y],g1[,g2]`, every grid node.
inline void write_vector_csv(std::ostream& out, const VectorField& v) {
  const Grid& g = v.grid();
  out << (g.dim() == 1 ? "x,g1\n" : "x,y,g1,g2\n");
  for (std::size_t k = 0; k < g.node_count(); ++k) {
    const auto x = g.coord(k);
    out << format_double(x[0]);
    if (g.dim() == 2) out << ',' << format_double(x[1]);
    for (int c = 0; c < g.dim(); ++c) out << ',' << format_double(v.at(k, c));
    out << '\n';
  }
}

}  // namespace fracpq
