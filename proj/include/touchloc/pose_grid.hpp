#pragma once

#include <array>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "touchloc/contact_render.hpp"
#include "touchloc/geometry.hpp"
#include "touchloc/mesh_io.hpp"
#include "touchloc/rng.hpp"

namespace touchloc {

enum class GridVariant { Full, OneFace, BiggerMiniOneFace, MiniOneFace };

GridVariant grid_variant_from_string(const std::string& name);
std::string grid_variant_name(GridVariant v);

struct GridSpec {
  std::vector<Vec3> approach_directions;
  double xy_resolution_mm = 2.5;
  double theta_resolution_deg = 6.0;
  // Per-direction [xmin, xmax, ymin, ymax]; one entry per direction.
  std::vector<std::array<double, 4>> xy_extents;

  void validate() const;
  int theta_count() const;

  // Builds the spec for a grid variant from the object config. Missing
  // extents default to the object's projected bounding box per direction
  // (the sensor center sweeps over the object footprint).
  static GridSpec from_object(const ObjectConfig& config,
                              const TriangleMesh& mesh, GridVariant variant,
                              const RenderConfig& render);
};

struct PoseGrid {
  GridSpec spec;
  RenderConfig render_config;
  std::vector<ContactPose> poses;   // settled, object w.r.t. sensor 1
  std::vector<ContactMask> masks;   // sensor-1 contact shapes
  std::vector<ContactMask> masks2;  // sensor-2 (paired jaw) contact shapes
  std::vector<uint8_t> has_second_contact;
  std::vector<double> openings_mm;  // finger-plane separation per pose
  std::vector<RigidTransform> symmetries;  // finalized group (incl. identity)
  double symmetry_tolerance_mm = 0.1;
  bool symmetry_canonical = true;
  std::string mesh_hash;
  std::string hash;  // content hash over the serialized artifact

  size_t size() const { return poses.size(); }
  void compute_hash();
};

// Enumerates the (direction, theta, x, y) lattice in lexicographic order,
// settles every candidate, drops non-contacting ones, quotients by the
// object symmetry group (keeping the lexicographically smallest coordinates),
// renders both finger masks, and computes gripper openings.
PoseGrid build_grid(const TriangleMesh& mesh, const GridSpec& spec,
                    const RenderConfig& render, int jobs = 1);

// Index of the grid pose minimizing the symmetry-min pose error, ties to the
// lowest index. Exact (matches an exhaustive scan); moment bounds are used
// only to prune candidates that provably cannot win.
std::pair<size_t, double> nearest_grid_pose(const PoseGrid& grid,
                                            const ContactPose& pose,
                                            const PointStats& points);

// Nearest grid element measured in grid coordinates, minimized over grid
// poses and symmetry compositions. The in-plane distance is the per-axis
// maximum (lattice cells are axis-aligned boxes, so the guarantee is
// per-coordinate). Used to check the lattice-resolution guarantee.
struct CoordDistance {
  size_t index = 0;
  double in_plane_mm = 0;  // max(|dx|, |dy|)
  double angle_deg = 0;
};
CoordDistance nearest_in_coords(const PoseGrid& grid, const RigidTransform& pose);

struct NoiseSpec {
  double trans_mm = 1.25;  // uniform in +-trans_mm, each in-plane axis
  double rot_deg = 3.0;    // uniform in +-rot_deg about the grasp axis
  double delta_d_min_mm = 1.0;
  double delta_d_max_mm = 2.0;
};

struct TrainingSample {
  ContactPose pose;
  size_t label = 0;      // nearest grid index, recomputed from geometry
  double delta_d_mm = 0; // per-sample deformation threshold
  size_t source_index = 0;
};

// Draws perturbed grid poses with their nearest-grid labels. Owns the point
// set used for labeling so repeated draws are consistent.
class TrainingSampler {
 public:
  TrainingSampler(const PoseGrid& grid, const TriangleMesh& mesh,
                  NoiseSpec noise, size_t label_points = 512,
                  uint64_t label_seed = 7777);

  TrainingSample draw(Rng& rng) const;
  ContactMask render(const TrainingSample& sample) const;

  const PoseGrid& grid() const { return grid_; }
  const PointStats& label_stats() const { return stats_; }
  const NoiseSpec& noise() const { return noise_; }

 private:
  const PoseGrid& grid_;
  const TriangleMesh& mesh_;
  NoiseSpec noise_;
  PointStats stats_;
};

struct PairedContact {
  ContactPose pose;     // object w.r.t. sensor 2, settled
  double opening_mm = 0;
  bool contact = true;  // false marks the no-second-contact case
};

// Mirrors the stored contact across the grasp axis: sensor 2 faces sensor 1
// at separation equal to the stored opening.
PairedContact paired_jaw_pose(const PoseGrid& grid, size_t index);

// Same construction for an arbitrary settled pose and opening.
RigidTransform paired_jaw_transform(const RigidTransform& sensor1_pose,
                                    double opening_mm, double d_mm);

void save_grid(const PoseGrid& grid, const std::filesystem::path& dir);
PoseGrid load_grid(const std::filesystem::path& dir);

}  // namespace touchloc
