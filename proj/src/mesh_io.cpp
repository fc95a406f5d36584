#include "touchloc/mesh_io.hpp"

#include <algorithm>
#include <cctype>
#include <cstring>
#include <fstream>
#include <json.hpp>
#include <map>
#include <sstream>

#include "touchloc/artifact.hpp"
#include "touchloc/errors.hpp"

namespace touchloc {

namespace {

using nlohmann::json;

std::string to_lower(std::string s) {
  std::transform(s.begin(), s.end(), s.begin(),
                 [](unsigned char c) { return std::tolower(c); });
  return s;
}

TriangleMesh parse_obj(std::istream& in) {
  TriangleMesh mesh;
  std::string line;
  size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    std::istringstream ls(line);
    std::string tag;
    if (!(ls >> tag)) continue;
    if (tag == "v") {
      double x, y, z;
      if (!(ls >> x >> y >> z)) {
        throw ParseError("OBJ vertex at line " + std::to_string(lineno));
      }
      mesh.vertices.emplace_back(x, y, z);
    } else if (tag == "f") {
      std::vector<int> idx;
      std::string tok;
      while (ls >> tok) {
        // Forms: "3", "3/1", "3//2", "3/1/2"; negative indices are relative.
        size_t slash = tok.find('/');
        std::string head = slash == std::string::npos ? tok : tok.substr(0, slash);
        int v;
        try {
          v = std::stoi(head);
        } catch (...) {
          throw ParseError("OBJ face token '" + tok + "' at line " +
                           std::to_string(lineno));
        }
        if (v < 0) v = static_cast<int>(mesh.vertices.size()) + v + 1;
        if (v <= 0 || static_cast<size_t>(v) > mesh.vertices.size()) {
          throw ParseError("OBJ face index out of range at line " +
                           std::to_string(lineno));
        }
        idx.push_back(v - 1);
      }
      if (idx.size() < 3) {
        throw ParseError("OBJ face with <3 vertices at line " +
                         std::to_string(lineno));
      }
      for (size_t k = 2; k < idx.size(); ++k) {  // fan-triangulate polygons
        mesh.faces.push_back({idx[0], idx[k - 1], idx[k]});
      }
    }
    // vn/vt/usemtl/o/g/s/mtllib/# ignored.
  }
  return mesh;
}

TriangleMesh parse_stl_binary(const std::vector<uint8_t>& bytes) {
  if (bytes.size() < 84) throw ParseError("binary STL truncated header");
  uint32_t n;
  std::memcpy(&n, bytes.data() + 80, 4);
  if (bytes.size() != 84 + static_cast<size_t>(n) * 50) {
    throw ParseError("binary STL size mismatch");
  }
  TriangleMesh mesh;
  mesh.vertices.reserve(static_cast<size_t>(n) * 3);
  mesh.faces.reserve(n);
  const uint8_t* p = bytes.data() + 84;
  for (uint32_t i = 0; i < n; ++i) {
    float v[12];
    std::memcpy(v, p, 48);  // normal + 3 vertices
    int base = static_cast<int>(mesh.vertices.size());
    for (int k = 0; k < 3; ++k) {
      mesh.vertices.emplace_back(v[3 + 3 * k], v[4 + 3 * k], v[5 + 3 * k]);
    }
    mesh.faces.push_back({base, base + 1, base + 2});
    p += 50;
  }
  return mesh;
}

TriangleMesh parse_stl_ascii(std::istream& in) {
  TriangleMesh mesh;
  std::string tok;
  while (in >> tok) {
    if (to_lower(tok) == "vertex") {
      double x, y, z;
      if (!(in >> x >> y >> z)) throw ParseError("ASCII STL vertex");
      mesh.vertices.emplace_back(x, y, z);
      if (mesh.vertices.size() % 3 == 0) {
        int base = static_cast<int>(mesh.vertices.size()) - 3;
        mesh.faces.push_back({base, base + 1, base + 2});
      }
    }
  }
  if (mesh.vertices.size() % 3 != 0) {
    throw ParseError("ASCII STL vertex count not a multiple of 3");
  }
  return mesh;
}

// STL files duplicate vertices per facet; weld them so symmetry validation
// and sampling see one vertex set.
void weld_vertices(TriangleMesh& mesh, double tol = 1e-9) {
  std::map<std::tuple<long long, long long, long long>, int> seen;
  std::vector<Vec3> verts;
  std::vector<int> remap(mesh.vertices.size());
  double inv = 1.0 / std::max(tol, 1e-12);
  for (size_t i = 0; i < mesh.vertices.size(); ++i) {
    const Vec3& v = mesh.vertices[i];
    auto key = std::make_tuple(static_cast<long long>(std::llround(v.x() * inv)),
                               static_cast<long long>(std::llround(v.y() * inv)),
                               static_cast<long long>(std::llround(v.z() * inv)));
    auto it = seen.find(key);
    if (it == seen.end()) {
      seen.emplace(key, static_cast<int>(verts.size()));
      remap[i] = static_cast<int>(verts.size());
      verts.push_back(v);
    } else {
      remap[i] = it->second;
    }
  }
  for (auto& f : mesh.faces) {
    for (int k = 0; k < 3; ++k) f[k] = remap[f[k]];
  }
  mesh.vertices = std::move(verts);
}

Vec3 parse_vec3(const json& j, const char* what) {
  if (!j.is_array() || j.size() != 3) {
    throw ConfigError(std::string(what) + " must be a 3-element array");
  }
  return Vec3(j[0].get<double>(), j[1].get<double>(), j[2].get<double>());
}

RigidTransform parse_transform(const json& j) {
  if (j.contains("matrix")) {
    const auto& m = j["matrix"];
    if (!m.is_array() || m.size() != 4) {
      throw ConfigError("symmetry matrix must be 4x4");
    }
    Mat4 t;
    for (int r = 0; r < 4; ++r) {
      if (!m[r].is_array() || m[r].size() != 4) {
        throw ConfigError("symmetry matrix must be 4x4");
      }
      for (int c = 0; c < 4; ++c) t(r, c) = m[r][c].get<double>();
    }
    return RigidTransform::from_matrix(t);
  }
  if (j.contains("axis") && (j.contains("angle_deg") || j.contains("angle_rad"))) {
    Vec3 axis = parse_vec3(j["axis"], "symmetry axis");
    double ang = j.contains("angle_deg") ? j["angle_deg"].get<double>() * M_PI / 180.0
                                         : j["angle_rad"].get<double>();
    Vec3 center = j.contains("center") ? parse_vec3(j["center"], "symmetry center")
                                       : Vec3::Zero();
    return RigidTransform::axis_angle(axis, ang, center);
  }
  throw ConfigError("symmetry entry needs either 'matrix' or 'axis'+'angle_deg'");
}

}  // namespace

ObjectConfig ObjectConfig::from_json_file(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open object config: " + path.string());
  json j;
  try {
    in >> j;
  } catch (const std::exception& e) {
    throw ConfigError("object config parse: " + std::string(e.what()));
  }
  ObjectConfig cfg;
  if (!j.contains("mesh")) throw ConfigError("object config missing 'mesh'");
  cfg.mesh_path = path.parent_path() / j["mesh"].get<std::string>();
  cfg.name = j.value("name", cfg.mesh_path.stem().string());
  std::string units = to_lower(j.value("units", std::string("mm")));
  if (units == "mm") {
    cfg.units = MeshUnits::Millimeters;
  } else if (units == "m") {
    cfg.units = MeshUnits::Meters;
  } else {
    throw ConfigError("units must be 'mm' or 'm', got '" + units + "'");
  }
  cfg.symmetry_tolerance_mm = j.value("symmetry_tolerance_mm", 0.1);
  if (j.contains("symmetries")) {
    for (const auto& s : j["symmetries"]) cfg.symmetries.push_back(parse_transform(s));
  }
  if (j.contains("approach_directions")) {
    for (const auto& d : j["approach_directions"]) {
      Vec3 v = parse_vec3(d, "approach direction");
      if (v.norm() < 1e-12) throw ConfigError("zero approach direction");
      cfg.approach_directions.push_back(v.normalized());
    }
  }
  if (j.contains("xy_extents")) {
    for (const auto& e : j["xy_extents"]) {
      if (!e.is_array() || e.size() != 4) {
        throw ConfigError("xy_extents entries must be [xmin,xmax,ymin,ymax]");
      }
      cfg.xy_extents.push_back({e[0].get<double>(), e[1].get<double>(),
                                e[2].get<double>(), e[3].get<double>()});
    }
  }
  return cfg;
}

std::string ObjectConfig::to_json() const {
  json j;
  j["mesh"] = mesh_path.filename().string();
  j["name"] = name;
  j["units"] = units == MeshUnits::Millimeters ? "mm" : "m";
  j["symmetry_tolerance_mm"] = symmetry_tolerance_mm;
  j["symmetries"] = json::array();
  for (const auto& s : symmetries) {
    json m = json::array();
    Mat4 t = s.matrix();
    for (int r = 0; r < 4; ++r) {
      json row = json::array();
      for (int c = 0; c < 4; ++c) row.push_back(t(r, c));
      m.push_back(row);
    }
    j["symmetries"].push_back({{"matrix", m}});
  }
  j["approach_directions"] = json::array();
  for (const auto& d : approach_directions) {
    j["approach_directions"].push_back({d.x(), d.y(), d.z()});
  }
  j["xy_extents"] = json::array();
  for (const auto& e : xy_extents) {
    j["xy_extents"].push_back({e[0], e[1], e[2], e[3]});
  }
  return j.dump(2);
}

TriangleMesh load_mesh(const std::filesystem::path& path, MeshUnits units) {
  if (!std::filesystem::exists(path)) {
    throw ParseError("mesh file does not exist: " + path.string());
  }
  std::string ext = to_lower(path.extension().string());
  TriangleMesh mesh;
  if (ext == ".obj") {
    std::ifstream in(path);
    if (!in) throw ParseError("cannot open " + path.string());
    mesh = parse_obj(in);
  } else if (ext == ".stl") {
    auto bytes = read_file_bytes(path);
    // ASCII STLs start with "solid" and contain "facet"; binary ones satisfy
    // the exact size formula.
    bool looks_ascii = bytes.size() >= 5 &&
                       std::memcmp(bytes.data(), "solid", 5) == 0;
    bool valid_binary = false;
    if (bytes.size() >= 84) {
      uint32_t n;
      std::memcpy(&n, bytes.data() + 80, 4);
      valid_binary = bytes.size() == 84 + static_cast<size_t>(n) * 50;
    }
    if (valid_binary && !looks_ascii) {
      mesh = parse_stl_binary(bytes);
    } else if (looks_ascii) {
      std::string text(bytes.begin(), bytes.end());
      std::istringstream in(text);
      mesh = parse_stl_ascii(in);
    } else if (valid_binary) {
      mesh = parse_stl_binary(bytes);
    } else {
      throw ParseError("unrecognized STL layout: " + path.string());
    }
    weld_vertices(mesh);
  } else {
    throw ParseError("unsupported mesh format '" + ext + "' (OBJ/STL only)");
  }
  if (units == MeshUnits::Meters) {
    for (auto& v : mesh.vertices) v *= 1000.0;
  }
  if (mesh.vertices.empty() || mesh.faces.empty()) {
    throw EmptyMesh("mesh has no usable geometry: " + path.string());
  }
  mesh.clean_degenerate_faces();
  if (mesh.faces.empty()) {
    throw EmptyMesh("all faces degenerate: " + path.string());
  }
  return mesh;
}

TriangleMesh load_object(const ObjectConfig& config) {
  TriangleMesh mesh = load_mesh(config.mesh_path, config.units);
  mesh.finalize_symmetries(config.symmetries, config.symmetry_tolerance_mm);
  return mesh;
}

void save_obj(const TriangleMesh& mesh, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw ConfigError("cannot write " + path.string());
  out.precision(9);
  for (const auto& v : mesh.vertices) {
    out << "v " << v.x() << " " << v.y() << " " << v.z() << "\n";
  }
  for (const auto& f : mesh.faces) {
    out << "f " << f[0] + 1 << " " << f[1] + 1 << " " << f[2] + 1 << "\n";
  }
}

}  // namespace touchloc
