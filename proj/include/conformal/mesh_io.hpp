#pragma once

#include "conformal/mesh.hpp"

#include <json.hpp>

#include <filesystem>
#include <fstream>
#include <iomanip>
#include <sstream>

namespace conformal {

enum class MeshFormat { Gmsh22Ascii, NativeJson };

inline MeshFormat mesh_format_from_string(std::string_view s) {
  if (s == "GMSH22_ASCII" || s == "gmsh") return MeshFormat::Gmsh22Ascii;
  if (s == "NATIVE_JSON" || s == "json") return MeshFormat::NativeJson;
  throw ConfigError("unknown mesh format '" + std::string(s) + "'");
}

/// Guesses the format from the file extension (.msh or .json).
inline MeshFormat mesh_format_from_path(const std::filesystem::path& p) {
  const auto ext = p.extension().string();
  if (ext == ".msh") return MeshFormat::Gmsh22Ascii;
  if (ext == ".json") return MeshFormat::NativeJson;
  throw ConfigError("cannot infer mesh format from '" + p.string() + "'");
}

namespace detail {

inline void reject_clockwise(const TriMesh& mesh) {
  for (Index t = 0; t < mesh.num_triangles(); ++t)
    if (!(signed_area(mesh, t) > 0.0))
      throw MeshError("triangle " + std::to_string(t) + " is clockwise or degenerate");
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Native JSON

inline nlohmann::json mesh_to_json(const TriMesh& mesh) {
  nlohmann::json j;
  j["nodes"] = nlohmann::json::array();
  for (const auto& p : mesh.nodes) j["nodes"].push_back({p.x(), p.y()});
  j["triangles"] = nlohmann::json::array();
  for (const auto& t : mesh.triangles) j["triangles"].push_back({t[0], t[1], t[2]});
  j["boundary_edges"] = nlohmann::json::array();
  for (const auto& e : mesh.boundary_edges)
    j["boundary_edges"].push_back({e.nodes[0], e.nodes[1], std::string(to_string(e.tag))});
  return j;
}

inline TriMesh mesh_from_json(const nlohmann::json& j) {
  TriMesh mesh;
  try {
    for (const auto& p : j.at("nodes")) {
      if (p.size() != 2) throw MeshError("node entry must have two coordinates");
      mesh.nodes.emplace_back(p.at(0).get<double>(), p.at(1).get<double>());
    }
    for (const auto& t : j.at("triangles")) {
      if (t.size() != 3) throw MeshError("triangle entry must have three indices");
      mesh.triangles.push_back({t.at(0).get<Index>(), t.at(1).get<Index>(), t.at(2).get<Index>()});
    }
    if (j.contains("boundary_edges"))
      for (const auto& e : j.at("boundary_edges")) {
        if (e.size() != 3) throw MeshError("boundary edge entry must be [i, j, tag]");
        mesh.boundary_edges.push_back(
            {{e.at(0).get<Index>(), e.at(1).get<Index>()}, boundary_tag_from_string(e.at(2).get<std::string>())});
      }
  } catch (const nlohmann::json::exception& ex) {
    throw MeshError(std::string("malformed mesh JSON: ") + ex.what());
  } catch (const ConfigError& ex) {
    throw MeshError(ex.what());
  }
  check_topology(mesh);
  detail::reject_clockwise(mesh);
  return mesh;
}

// ---------------------------------------------------------------------------
// GMSH 2.2 ASCII

/// Reads triangles (element type 2) and boundary lines (type 1). Line tags
/// come from $PhysicalNames when present, otherwise physical id 1 is GAMMA
/// and 2 is GAMMA_INF.
inline TriMesh read_gmsh22(std::istream& in) {
  TriMesh mesh;
  std::map<long, Index> node_index;
  std::map<long, BoundaryTag> physical;
  std::string line;
  long lineno = 0;
  auto fail = [&](const std::string& what) -> MeshError {
    return MeshError("gmsh line " + std::to_string(lineno) + ": " + what);
  };
  auto next = [&]() -> std::string& {
    if (!std::getline(in, line)) throw fail("unexpected end of file");
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    return line;
  };
  auto tag_for = [&](long phys) -> BoundaryTag {
    if (auto it = physical.find(phys); it != physical.end()) return it->second;
    if (phys == 1) return BoundaryTag::Gamma;
    if (phys == 2) return BoundaryTag::GammaInf;
    return BoundaryTag::None;
  };
  std::vector<std::pair<std::array<long, 3>, long>> raw_triangles;  // (nodes, line)
  std::vector<std::tuple<long, long, long, long>> raw_lines;          // (a, b, physical, line)
  bool saw_format = false;

  while (std::getline(in, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line == "$MeshFormat") {
      std::istringstream s(next());
      double version = 0;
      int file_type = -1;
      if (!(s >> version >> file_type)) throw fail("bad format header");
      if (version < 2.0 || version >= 3.0) throw fail("unsupported version " + std::to_string(version));
      if (file_type != 0) throw fail("binary files are not supported");
      if (next() != "$EndMeshFormat") throw fail("expected $EndMeshFormat");
      saw_format = true;
    } else if (line == "$PhysicalNames") {
      long n = 0;
      if (!(std::istringstream(next()) >> n)) throw fail("bad physical name count");
      for (long k = 0; k < n; ++k) {
        std::istringstream s(next());
        long dim = 0, id = 0;
        std::string name;
        if (!(s >> dim >> id)) throw fail("bad physical name entry");
        std::getline(s >> std::ws, name);
        if (name.size() >= 2 && name.front() == '"') name = name.substr(1, name.size() - 2);
        try {
          physical[id] = boundary_tag_from_string(name);
        } catch (const ConfigError&) {
          physical[id] = BoundaryTag::None;
        }
      }
      if (next() != "$EndPhysicalNames") throw fail("expected $EndPhysicalNames");
    } else if (line == "$Nodes") {
      long n = 0;
      if (!(std::istringstream(next()) >> n) || n < 0) throw fail("bad node count");
      for (long k = 0; k < n; ++k) {
        std::istringstream s(next());
        long id = 0;
        double x = 0, y = 0, z = 0;
        if (!(s >> id >> x >> y >> z)) throw fail("bad node entry");
        if (node_index.count(id)) throw fail("duplicate node id " + std::to_string(id));
        node_index[id] = mesh.num_nodes();
        mesh.nodes.emplace_back(x, y);
      }
      if (next() != "$EndNodes") throw fail("expected $EndNodes");
    } else if (line == "$Elements") {
      long n = 0;
      if (!(std::istringstream(next()) >> n) || n < 0) throw fail("bad element count");
      for (long k = 0; k < n; ++k) {
        std::istringstream s(next());
        long id = 0, type = 0, ntags = 0;
        if (!(s >> id >> type >> ntags) || ntags < 0) throw fail("bad element entry");
        std::vector<long> tags(ntags);
        for (auto& t : tags)
          if (!(s >> t)) throw fail("bad element tags");
        const long phys = ntags > 0 ? tags[0] : 0;
        if (type == 2) {
          std::array<long, 3> v{};
          for (auto& x : v)
            if (!(s >> x)) throw fail("bad triangle node list");
          raw_triangles.push_back({v, lineno});
        } else if (type == 1) {
          long a = 0, b = 0;
          if (!(s >> a >> b)) throw fail("bad line node list");
          raw_lines.emplace_back(a, b, phys, lineno);
        }
      }
      if (next() != "$EndElements") throw fail("expected $EndElements");
    }
  }
  if (!saw_format) throw MeshError("gmsh: missing $MeshFormat section");

  auto resolve = [&](long id, long at) -> Index {
    auto it = node_index.find(id);
    if (it == node_index.end()) {
      lineno = at;
      throw fail("unknown node id " + std::to_string(id));
    }
    return it->second;
  };
  for (const auto& [v, at] : raw_triangles)
    mesh.triangles.push_back({resolve(v[0], at), resolve(v[1], at), resolve(v[2], at)});
  for (const auto& [a, b, phys, at] : raw_lines)
    mesh.boundary_edges.push_back({{resolve(a, at), resolve(b, at)}, tag_for(phys)});

  // Drop nodes not referenced by any triangle (gmsh keeps geometry points).
  std::vector<Index> remap(mesh.nodes.size(), -1);
  for (const auto& t : mesh.triangles)
    for (Index v : t) remap[v] = 0;
  std::vector<Vec2> kept;
  for (std::size_t i = 0; i < remap.size(); ++i)
    if (remap[i] == 0) {
      remap[i] = static_cast<Index>(kept.size());
      kept.push_back(mesh.nodes[i]);
    }
  for (auto& t : mesh.triangles)
    for (auto& v : t) v = remap[v];
  for (auto& e : mesh.boundary_edges)
    for (auto& v : e.nodes) {
      if (remap[v] < 0) throw MeshError("gmsh: boundary line uses a node outside every triangle");
      v = remap[v];
    }
  mesh.nodes = std::move(kept);

  for (Index t = 0; t < mesh.num_triangles(); ++t)
    if (!(signed_area(mesh, t) > 0.0)) {
      lineno = raw_triangles[t].second;
      throw fail("triangle " + std::to_string(t) + " is clockwise or degenerate");
    }
  check_topology(mesh);
  return mesh;
}

/// Writes nodes, triangles and tagged boundary lines; physical ids follow
/// the reader's convention (1 GAMMA, 2 GAMMA_INF, 3 NONE).
inline void write_gmsh22(std::ostream& os, const TriMesh& mesh) {
  auto phys = [](BoundaryTag t) { return t == BoundaryTag::Gamma ? 1 : t == BoundaryTag::GammaInf ? 2 : 3; };
  os << "$MeshFormat\n2.2 0 8\n$EndMeshFormat\n";
  os << "$PhysicalNames\n3\n1 1 \"GAMMA\"\n1 2 \"GAMMA_INF\"\n1 3 \"NONE\"\n$EndPhysicalNames\n";
  os << "$Nodes\n" << mesh.nodes.size() << '\n' << std::setprecision(17);
  for (Index i = 0; i < mesh.num_nodes(); ++i)
    os << i + 1 << ' ' << mesh.nodes[i].x() << ' ' << mesh.nodes[i].y() << " 0\n";
  os << "$EndNodes\n$Elements\n" << mesh.boundary_edges.size() + mesh.triangles.size() << '\n';
  long id = 1;
  for (const auto& e : mesh.boundary_edges)
    os << id++ << " 1 2 " << phys(e.tag) << ' ' << phys(e.tag) << ' ' << e.nodes[0] + 1 << ' ' << e.nodes[1] + 1
       << '\n';
  for (const auto& t : mesh.triangles)
    os << id++ << " 2 2 0 0 " << t[0] + 1 << ' ' << t[1] + 1 << ' ' << t[2] + 1 << '\n';
  os << "$EndElements\n";
}

// ---------------------------------------------------------------------------
// Files

inline TriMesh load_mesh(const std::filesystem::path& path, MeshFormat format) {
  std::ifstream in(path);
  if (!in) throw MeshError("cannot open mesh file '" + path.string() + "'");
  if (format == MeshFormat::Gmsh22Ascii) return read_gmsh22(in);
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(in);
  } catch (const nlohmann::json::parse_error& ex) {
    throw MeshError("'" + path.string() + "': " + ex.what());
  }
  return mesh_from_json(j);
}

inline TriMesh load_mesh(const std::filesystem::path& path) { return load_mesh(path, mesh_format_from_path(path)); }

inline void save_mesh(const std::filesystem::path& path, const TriMesh& mesh,
                      MeshFormat format = MeshFormat::NativeJson) {
  std::ofstream out(path);
  if (!out) throw MeshError("cannot write mesh file '" + path.string() + "'");
  if (format == MeshFormat::Gmsh22Ascii) write_gmsh22(out, mesh);
  else out << mesh_to_json(mesh).dump() << '\n';
}

/// Legacy ASCII VTK unstructured grid. Optional per-cell eta and per-point
/// displacement are attached when given.
inline void write_vtk(std::ostream& os, const TriMesh& mesh, const std::vector<double>* cell_eta = nullptr,
                      const VectorField* point_field = nullptr) {
  os << "# vtk DataFile Version 3.0\nconformal mesh\nASCII\nDATASET UNSTRUCTURED_GRID\n";
  os << std::setprecision(17);
  os << "POINTS " << mesh.nodes.size() << " double\n";
  for (const auto& p : mesh.nodes) os << p.x() << ' ' << p.y() << " 0\n";
  os << "CELLS " << mesh.triangles.size() << ' ' << 4 * mesh.triangles.size() << '\n';
  for (const auto& t : mesh.triangles) os << "3 " << t[0] << ' ' << t[1] << ' ' << t[2] << '\n';
  os << "CELL_TYPES " << mesh.triangles.size() << '\n';
  for (std::size_t t = 0; t < mesh.triangles.size(); ++t) os << "5\n";
  if (cell_eta && cell_eta->size() == mesh.triangles.size()) {
    os << "CELL_DATA " << mesh.triangles.size() << "\nSCALARS eta double 1\nLOOKUP_TABLE default\n";
    for (double e : *cell_eta) os << e << '\n';
  }
  const auto tags = mesh.node_tags();
  os << "POINT_DATA " << mesh.nodes.size() << "\nSCALARS boundary_tag int 1\nLOOKUP_TABLE default\n";
  for (auto t : tags) os << static_cast<int>(t) << '\n';
  if (point_field && point_field->size() == mesh.num_nodes()) {
    os << "VECTORS displacement double\n";
    for (const auto& v : point_field->values) os << v.x() << ' ' << v.y() << " 0\n";
  }
}

inline void export_vtk(const std::filesystem::path& path, const TriMesh& mesh, const std::vector<double>* cell_eta = nullptr,
                       const VectorField* point_field = nullptr) {
  std::ofstream out(path);
  if (!out) throw MeshError("cannot write '" + path.string() + "'");
  write_vtk(out, mesh, cell_eta, point_field);
}

}  // namespace conformal
