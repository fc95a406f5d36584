#pragma once

#include <Eigen/Core>
#include <Eigen/Geometry>
#include <array>
#include <optional>
#include <string>
#include <vector>

#include "touchloc/rng.hpp"

namespace touchloc {

using Vec3 = Eigen::Vector3d;
using Mat3 = Eigen::Matrix3d;
using Mat4 = Eigen::Matrix4d;

// Rigid transform with orthonormality enforced at construction.
// Units are millimetres throughout the library.
struct RigidTransform {
  Mat3 rotation = Mat3::Identity();
  Vec3 translation = Vec3::Zero();

  static constexpr double kOrthoTol = 1e-9;

  RigidTransform() = default;
  RigidTransform(const Mat3& r, const Vec3& t);
  static RigidTransform identity() { return {}; }
  static RigidTransform from_matrix(const Mat4& m);
  static RigidTransform rotation_z(double radians);
  static RigidTransform axis_angle(const Vec3& axis, double radians,
                                   const Vec3& center = Vec3::Zero());
  static RigidTransform translate(const Vec3& t) {
    return RigidTransform(Mat3::Identity(), t);
  }

  Vec3 apply(const Vec3& p) const { return rotation * p + translation; }
  RigidTransform compose(const RigidTransform& other) const;  // this ∘ other
  RigidTransform inverse() const;
  Mat4 matrix() const;

  // Validates the orthonormality/determinant invariants; throws ConfigError.
  void check_valid() const;
};

// Relative rotation angle between two transforms, in radians.
double rotation_angle_between(const RigidTransform& a, const RigidTransform& b);

struct TriangleMesh {
  std::vector<Vec3> vertices;
  std::vector<std::array<int, 3>> faces;
  // Finite symmetry group of the object (always contains the identity once
  // finalized). Each transform maps the vertex set onto itself within
  // symmetry_tolerance_mm.
  std::vector<RigidTransform> symmetries;
  double symmetry_tolerance_mm = 0.1;

  double triangle_area(size_t face) const;
  double surface_area() const;
  Vec3 bbox_min() const;
  Vec3 bbox_max() const;
  // Largest vertex distance from the origin; used to scale tolerances.
  double bounding_radius() const;

  // Removes faces with area < area_eps (mm^2) and out-of-range indices are an
  // error. Called by the loaders.
  void clean_degenerate_faces(double area_eps = 1e-12);

  // Verifies that t maps the vertex set onto itself within tol (mm).
  bool is_symmetry(const RigidTransform& t, double tol) const;

  // Replaces `symmetries` with the group generated by the declared
  // transforms (closure under composition), validating each element against
  // the vertex set. Throws SymmetryError on failure or if the closure
  // exceeds max_group_size (e.g. a generator of infinite order).
  void finalize_symmetries(const std::vector<RigidTransform>& declared,
                           double tol, size_t max_group_size = 4096);
};

// Area-uniform surface sampling; deterministic for a fixed seed.
std::vector<Vec3> sample_surface_points(const TriangleMesh& mesh, size_t n,
                                        uint64_t seed);

// Precomputed moments of a point set; enables O(1) bounds on the mean
// point-to-point distance between two placements (used to prune nearest-pose
// scans without changing their result).
struct PointStats {
  std::vector<Vec3> points;
  Vec3 mean = Vec3::Zero();
  Mat3 second_moment = Mat3::Zero();  // E[p p^T]

  explicit PointStats(std::vector<Vec3> pts);
  size_t size() const { return points.size(); }
};

// Mean distance between corresponding points under two placements
// (sum order fixed by the point order, so swapping a and b is exact).
double mean_point_distance(const RigidTransform& a, const RigidTransform& b,
                           const std::vector<Vec3>& points);

// Lower/upper bounds on mean_point_distance from the point moments.
double mean_point_distance_lower(const RigidTransform& a,
                                 const RigidTransform& b,
                                 const PointStats& stats);
double mean_point_distance_upper(const RigidTransform& a,
                                 const RigidTransform& b,
                                 const PointStats& stats);

// Pose error between two object poses over a sampled point set.
// When the mesh declares symmetries the result is the minimum over the
// symmetry group applied on either side, which keeps the metric exactly
// symmetric in (a, b) and scores symmetry-equivalent poses as 0.
double pose_error(const RigidTransform& pose_a, const RigidTransform& pose_b,
                  const std::vector<Vec3>& points,
                  const std::vector<RigidTransform>& symmetries = {});

// Deterministic rotation mapping `direction` onto +z; used to build grid
// poses from approach directions.
Mat3 rotation_to_z(const Vec3& direction);

// Proposes grasp axes as antipodal pairs of dominant face normals: returns
// one canonical direction per pair, ordered by supporting area.
std::vector<Vec3> propose_approach_directions(const TriangleMesh& mesh,
                                              double min_area_fraction = 0.05,
                                              double angle_tol_deg = 2.0);

}  // namespace touchloc
