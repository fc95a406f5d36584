#pragma once

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "touchloc/geometry.hpp"

namespace touchloc {

enum class MeshUnits { Millimeters, Meters };

// Object sidecar configuration (JSON next to the mesh or referenced by the
// project config): units, declared symmetries, approach directions, and
// optional per-direction grid extents.
struct ObjectConfig {
  std::filesystem::path mesh_path;
  MeshUnits units = MeshUnits::Millimeters;
  std::vector<RigidTransform> symmetries;  // declared generators
  double symmetry_tolerance_mm = 0.1;
  std::vector<Vec3> approach_directions;
  // Per-direction [xmin, xmax, ymin, ymax] in mm; empty means derive from the
  // object's projected bounding box.
  std::vector<std::array<double, 4>> xy_extents;
  std::string name;

  static ObjectConfig from_json_file(const std::filesystem::path& path);
  std::string to_json() const;
};

// Loads OBJ or STL (binary or ASCII), converts to mm, removes degenerate
// faces. Symmetries are not attached here; see load_object.
TriangleMesh load_mesh(const std::filesystem::path& path, MeshUnits units);

// Loads the mesh referenced by an object config and finalizes its declared
// symmetry group (validated against the vertex set).
TriangleMesh load_object(const ObjectConfig& config);

void save_obj(const TriangleMesh& mesh, const std::filesystem::path& path);

}  // namespace touchloc
