#include "touchloc/geometry.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <numeric>
#include <unordered_map>

#include "touchloc/errors.hpp"

namespace touchloc {

RigidTransform::RigidTransform(const Mat3& r, const Vec3& t)
    : rotation(r), translation(t) {
  check_valid();
}

void RigidTransform::check_valid() const {
  Mat3 gram = rotation.transpose() * rotation;
  double ortho_err = (gram - Mat3::Identity()).cwiseAbs().maxCoeff();
  double det_err = std::abs(rotation.determinant() - 1.0);
  // Construction-time tolerance is looser than kOrthoTol because inputs may
  // come from parsed text; we re-orthonormalize when within 1e-6.
  if (ortho_err > 1e-6 || det_err > 1e-6) {
    throw ConfigError("rotation not orthonormal with det=1 (errors " +
                      std::to_string(ortho_err) + ", " +
                      std::to_string(det_err) + ")");
  }
  if (ortho_err > kOrthoTol || det_err > kOrthoTol) {
    // Project onto SO(3) via the orthogonal factor of the polar decomposition.
    Eigen::JacobiSVD<Mat3> svd(rotation,
                               Eigen::ComputeFullU | Eigen::ComputeFullV);
    Mat3 r = svd.matrixU() * svd.matrixV().transpose();
    if (r.determinant() < 0) {
      Mat3 d = Mat3::Identity();
      d(2, 2) = -1;
      r = svd.matrixU() * d * svd.matrixV().transpose();
    }
    const_cast<RigidTransform*>(this)->rotation = r;
  }
}

RigidTransform RigidTransform::from_matrix(const Mat4& m) {
  if (std::abs(m(3, 0)) > 1e-12 || std::abs(m(3, 1)) > 1e-12 ||
      std::abs(m(3, 2)) > 1e-12 || std::abs(m(3, 3) - 1.0) > 1e-12) {
    throw ConfigError("4x4 transform bottom row must be [0 0 0 1]");
  }
  return RigidTransform(m.topLeftCorner<3, 3>(), m.topRightCorner<3, 1>());
}

RigidTransform RigidTransform::rotation_z(double radians) {
  Mat3 r;
  double c = std::cos(radians), s = std::sin(radians);
  r << c, -s, 0, s, c, 0, 0, 0, 1;
  RigidTransform t;
  t.rotation = r;
  return t;
}

RigidTransform RigidTransform::axis_angle(const Vec3& axis, double radians,
                                          const Vec3& center) {
  double n = axis.norm();
  if (n < 1e-12) throw ConfigError("axis-angle with zero axis");
  Mat3 r = Eigen::AngleAxisd(radians, axis / n).toRotationMatrix();
  RigidTransform t;
  t.rotation = r;
  t.translation = center - r * center;
  return t;
}

RigidTransform RigidTransform::compose(const RigidTransform& other) const {
  RigidTransform out;
  out.rotation = rotation * other.rotation;
  out.translation = rotation * other.translation + translation;
  return out;
}

RigidTransform RigidTransform::inverse() const {
  RigidTransform out;
  out.rotation = rotation.transpose();
  out.translation = -(rotation.transpose() * translation);
  return out;
}

Mat4 RigidTransform::matrix() const {
  Mat4 m = Mat4::Identity();
  m.topLeftCorner<3, 3>() = rotation;
  m.topRightCorner<3, 1>() = translation;
  return m;
}

double rotation_angle_between(const RigidTransform& a,
                              const RigidTransform& b) {
  Mat3 rel = a.rotation.transpose() * b.rotation;
  double c = (rel.trace() - 1.0) * 0.5;
  c = std::clamp(c, -1.0, 1.0);
  return std::acos(c);
}

double TriangleMesh::triangle_area(size_t face) const {
  const auto& f = faces[face];
  Vec3 e1 = vertices[f[1]] - vertices[f[0]];
  Vec3 e2 = vertices[f[2]] - vertices[f[0]];
  return 0.5 * e1.cross(e2).norm();
}

double TriangleMesh::surface_area() const {
  double a = 0;
  for (size_t i = 0; i < faces.size(); ++i) a += triangle_area(i);
  return a;
}

Vec3 TriangleMesh::bbox_min() const {
  if (vertices.empty()) throw EmptyMesh("bbox of empty mesh");
  Vec3 m = vertices[0];
  for (const auto& v : vertices) m = m.cwiseMin(v);
  return m;
}

Vec3 TriangleMesh::bbox_max() const {
  if (vertices.empty()) throw EmptyMesh("bbox of empty mesh");
  Vec3 m = vertices[0];
  for (const auto& v : vertices) m = m.cwiseMax(v);
  return m;
}

double TriangleMesh::bounding_radius() const {
  double r = 0;
  for (const auto& v : vertices) r = std::max(r, v.norm());
  return r;
}

void TriangleMesh::clean_degenerate_faces(double area_eps) {
  for (const auto& f : faces) {
    for (int k = 0; k < 3; ++k) {
      if (f[k] < 0 || static_cast<size_t>(f[k]) >= vertices.size()) {
        throw ParseError("face index out of range");
      }
    }
  }
  std::vector<std::array<int, 3>> kept;
  kept.reserve(faces.size());
  for (size_t i = 0; i < faces.size(); ++i) {
    if (triangle_area(i) >= area_eps) kept.push_back(faces[i]);
  }
  faces = std::move(kept);
}

namespace {

// Spatial hash over vertices for nearest-vertex queries within tol.
class VertexGrid {
 public:
  VertexGrid(const std::vector<Vec3>& pts, double cell) : cell_(cell) {
    for (size_t i = 0; i < pts.size(); ++i) {
      cells_[key(pts[i])].push_back(static_cast<int>(i));
    }
  }

  bool has_point_within(const std::vector<Vec3>& pts, const Vec3& q,
                        double tol) const {
    double t2 = tol * tol;
    auto [kx, ky, kz] = coords(q);
    for (int dx = -1; dx <= 1; ++dx)
      for (int dy = -1; dy <= 1; ++dy)
        for (int dz = -1; dz <= 1; ++dz) {
          auto it = cells_.find(pack(kx + dx, ky + dy, kz + dz));
          if (it == cells_.end()) continue;
          for (int i : it->second) {
            if ((pts[i] - q).squaredNorm() <= t2) return true;
          }
        }
    return false;
  }

 private:
  std::tuple<int64_t, int64_t, int64_t> coords(const Vec3& p) const {
    return {static_cast<int64_t>(std::floor(p.x() / cell_)),
            static_cast<int64_t>(std::floor(p.y() / cell_)),
            static_cast<int64_t>(std::floor(p.z() / cell_))};
  }
  static uint64_t pack(int64_t x, int64_t y, int64_t z) {
    auto h = [](int64_t v) {
      return static_cast<uint64_t>(v) * 0x9e3779b97f4a7c15ull;
    };
    return h(x) ^ (h(y) << 21 | h(y) >> 43) ^ (h(z) << 42 | h(z) >> 22);
  }
  uint64_t key(const Vec3& p) const {
    auto [x, y, z] = coords(p);
    return pack(x, y, z);
  }
  double cell_;
  std::unordered_map<uint64_t, std::vector<int>> cells_;
};

}  // namespace

bool TriangleMesh::is_symmetry(const RigidTransform& t, double tol) const {
  if (vertices.empty()) return false;
  VertexGrid grid(vertices, std::max(tol, 1e-6) * 2.0);
  for (const auto& v : vertices) {
    if (!grid.has_point_within(vertices, t.apply(v), tol)) return false;
  }
  return true;
}

void TriangleMesh::finalize_symmetries(
    const std::vector<RigidTransform>& declared, double tol,
    size_t max_group_size) {
  symmetry_tolerance_mm = tol;
  for (const auto& s : declared) {
    if (!is_symmetry(s, tol)) {
      throw SymmetryError(
          "declared transform does not map the vertex set onto itself within " +
          std::to_string(tol) + " mm");
    }
  }
  // Group closure with tolerance-based dedup on (rotation, translation).
  auto same = [&](const RigidTransform& a, const RigidTransform& b) {
    return (a.rotation - b.rotation).cwiseAbs().maxCoeff() < 1e-6 &&
           (a.translation - b.translation).norm() < std::max(tol, 1e-6);
  };
  std::vector<RigidTransform> group;
  group.push_back(RigidTransform::identity());
  auto add_unique = [&](const RigidTransform& t) {
    for (const auto& g : group)
      if (same(g, t)) return false;
    group.push_back(t);
    return true;
  };
  for (const auto& s : declared) add_unique(s);
  size_t frontier = 0;
  while (frontier < group.size()) {
    size_t end = group.size();
    for (size_t i = frontier; i < end; ++i) {
      for (size_t j = 0; j < end; ++j) {
        RigidTransform c = group[i].compose(group[j]);
        if (group.size() >= max_group_size) {
          throw SymmetryError("symmetry closure exceeds " +
                              std::to_string(max_group_size) +
                              " elements; declare a finite group explicitly");
        }
        add_unique(c);
      }
    }
    frontier = end;
  }
  // Closure of a finite set of rigid maps preserving a bounded vertex set is
  // a group, so inverses are already present; validate every element.
  for (const auto& g : group) {
    if (!is_symmetry(g, tol * 2.0)) {
      throw SymmetryError("closure produced a non-symmetry element");
    }
  }
  symmetries = std::move(group);
}

std::vector<Vec3> sample_surface_points(const TriangleMesh& mesh, size_t n,
                                        uint64_t seed) {
  if (mesh.faces.empty() || mesh.vertices.empty()) {
    throw EmptyMesh("sample_surface_points on empty mesh");
  }
  if (n == 0) throw ConfigError("sample_surface_points requires n >= 1");
  std::vector<double> cum(mesh.faces.size());
  double total = 0;
  for (size_t i = 0; i < mesh.faces.size(); ++i) {
    total += mesh.triangle_area(i);
    cum[i] = total;
  }
  if (total <= 0) throw EmptyMesh("mesh has zero surface area");
  Rng rng(seed);
  std::vector<Vec3> out;
  out.reserve(n);
  for (size_t k = 0; k < n; ++k) {
    double r = rng.uniform() * total;
    size_t face =
        std::lower_bound(cum.begin(), cum.end(), r) - cum.begin();
    if (face >= mesh.faces.size()) face = mesh.faces.size() - 1;
    const auto& f = mesh.faces[face];
    double u = rng.uniform(), v = rng.uniform();
    if (u + v > 1.0) {
      u = 1.0 - u;
      v = 1.0 - v;
    }
    out.push_back(mesh.vertices[f[0]] +
                  u * (mesh.vertices[f[1]] - mesh.vertices[f[0]]) +
                  v * (mesh.vertices[f[2]] - mesh.vertices[f[0]]));
  }
  return out;
}

PointStats::PointStats(std::vector<Vec3> pts) : points(std::move(pts)) {
  if (points.empty()) return;
  for (const auto& p : points) {
    mean += p;
    second_moment += p * p.transpose();
  }
  mean /= static_cast<double>(points.size());
  second_moment /= static_cast<double>(points.size());
}

double mean_point_distance(const RigidTransform& a, const RigidTransform& b,
                           const std::vector<Vec3>& points) {
  if (points.empty()) throw EmptySupport("mean_point_distance over no points");
  const Mat3 m = a.rotation - b.rotation;
  const Vec3 d = a.translation - b.translation;
  double sum = 0;
  for (const auto& p : points) sum += (m * p + d).norm();
  return sum / static_cast<double>(points.size());
}

double mean_point_distance_lower(const RigidTransform& a,
                                 const RigidTransform& b,
                                 const PointStats& stats) {
  // Triangle inequality: mean |Mp+d| >= |M mu + d|.
  const Mat3 m = a.rotation - b.rotation;
  const Vec3 d = a.translation - b.translation;
  return (m * stats.mean + d).norm();
}

double mean_point_distance_upper(const RigidTransform& a,
                                 const RigidTransform& b,
                                 const PointStats& stats) {
  // Jensen: mean |Mp+d| <= sqrt(mean |Mp+d|^2), the RMS has a closed form in
  // the first two moments.
  const Mat3 m = a.rotation - b.rotation;
  const Vec3 d = a.translation - b.translation;
  double q = (m.transpose() * m).cwiseProduct(stats.second_moment).sum() +
             2.0 * d.dot(m * stats.mean) + d.squaredNorm();
  return std::sqrt(std::max(q, 0.0));
}

double pose_error(const RigidTransform& pose_a, const RigidTransform& pose_b,
                  const std::vector<Vec3>& points,
                  const std::vector<RigidTransform>& symmetries) {
  if (symmetries.size() <= 1) {
    return mean_point_distance(pose_a, pose_b, points);
  }
  // Minimum over the group composed on either side. Each candidate value is
  // exactly invariant under swapping (a, b), and the candidate set is too,
  // so the result is exactly symmetric.
  double best = std::numeric_limits<double>::infinity();
  for (const auto& s : symmetries) {
    best = std::min(best, mean_point_distance(pose_a.compose(s), pose_b, points));
    best = std::min(best, mean_point_distance(pose_a, pose_b.compose(s), points));
  }
  return best;
}

Mat3 rotation_to_z(const Vec3& direction) {
  double n = direction.norm();
  if (n < 1e-12) throw ConfigError("approach direction must be nonzero");
  Vec3 u = direction / n;
  const Vec3 z(0, 0, 1);
  double c = u.dot(z);
  if (c > 1.0 - 1e-12) return Mat3::Identity();
  if (c < -1.0 + 1e-12) {
    // 180 degrees about x.
    Mat3 r;
    r << 1, 0, 0, 0, -1, 0, 0, 0, -1;
    return r;
  }
  Vec3 axis = u.cross(z).normalized();
  return Eigen::AngleAxisd(std::acos(c), axis).toRotationMatrix();
}

std::vector<Vec3> propose_approach_directions(const TriangleMesh& mesh,
                                              double min_area_fraction,
                                              double angle_tol_deg) {
  struct Cluster {
    Vec3 normal;
    double area;
  };
  std::vector<Cluster> clusters;
  double cos_tol = std::cos(angle_tol_deg * M_PI / 180.0);
  for (size_t i = 0; i < mesh.faces.size(); ++i) {
    const auto& f = mesh.faces[i];
    Vec3 e1 = mesh.vertices[f[1]] - mesh.vertices[f[0]];
    Vec3 e2 = mesh.vertices[f[2]] - mesh.vertices[f[0]];
    Vec3 cr = e1.cross(e2);
    double a = 0.5 * cr.norm();
    if (a < 1e-12) continue;
    Vec3 nrm = cr.normalized();
    bool merged = false;
    for (auto& c : clusters) {
      if (c.normal.dot(nrm) > cos_tol) {
        c.normal = (c.normal * c.area + nrm * a).normalized();
        c.area += a;
        merged = true;
        break;
      }
    }
    if (!merged) clusters.push_back({nrm, a});
  }
  double total = mesh.surface_area();
  std::vector<Vec3> out;
  std::vector<bool> used(clusters.size(), false);
  std::sort(clusters.begin(), clusters.end(),
            [](const Cluster& a, const Cluster& b) { return a.area > b.area; });
  for (size_t i = 0; i < clusters.size(); ++i) {
    if (used[i] || clusters[i].area < min_area_fraction * total) continue;
    for (size_t j = i + 1; j < clusters.size(); ++j) {
      if (used[j] || clusters[j].area < min_area_fraction * total) continue;
      if (clusters[i].normal.dot(clusters[j].normal) < -cos_tol) {
        used[i] = used[j] = true;
        // Canonical sign: make the first nonzero coordinate positive.
        Vec3 axis = clusters[i].normal;
        for (int k = 0; k < 3; ++k) {
          if (std::abs(axis[k]) > 1e-9) {
            if (axis[k] < 0) axis = -axis;
            break;
          }
        }
        out.push_back(axis);
        break;
      }
    }
  }
  return out;
}

}  // namespace touchloc
