#include <doctest.h>

#include <cmath>

#include "testutil.hpp"
#include "touchloc/errors.hpp"
#include "touchloc/geometry.hpp"
#include "touchloc/mesh_io.hpp"
#include "touchloc/primitives.hpp"

using namespace touchloc;

namespace {

TriangleMesh unit_square_mesh() {
  // [0,1]^2 in the xy plane, split along the diagonal.
  TriangleMesh m;
  m.vertices = {{0, 0, 0}, {1, 0, 0}, {1, 1, 0}, {0, 1, 0}};
  m.faces = {{0, 1, 2}, {0, 2, 3}};
  return m;
}

std::filesystem::path cube_obj_path() {
  static auto dir = testutil::make_temp_dir("geom");
  static auto path = testutil::write_text(dir / "cube.obj",
                                          testutil::unit_cube_obj());
  return path;
}

}  // namespace

TEST_CASE("load_mesh: unit cube has 8 vertices and 12 faces") {
  TriangleMesh mesh = load_mesh(cube_obj_path(), MeshUnits::Millimeters);
  CHECK(mesh.vertices.size() == 8);
  CHECK(mesh.faces.size() == 12);
}

TEST_CASE("load_mesh: meter units scale to mm") {
  TriangleMesh mesh = load_mesh(cube_obj_path(), MeshUnits::Meters);
  CHECK(mesh.bbox_max().x() == doctest::Approx(500.0));
}

TEST_CASE("load_mesh: missing file and garbage files fail") {
  CHECK_THROWS_AS(load_mesh("/nonexistent/x.obj", MeshUnits::Millimeters),
                  ParseError);
  auto dir = testutil::make_temp_dir("badmesh");
  auto bad = testutil::write_text(dir / "bad.obj", "v 1 2\nf 1 2 3\n");
  CHECK_THROWS_AS(load_mesh(bad, MeshUnits::Millimeters), ParseError);
  auto unsup = testutil::write_text(dir / "mesh.ply", "ply");
  CHECK_THROWS_AS(load_mesh(unsup, MeshUnits::Millimeters), ParseError);
}

TEST_CASE("STL round trip through both encodings") {
  auto dir = testutil::make_temp_dir("stl");
  // ASCII STL of one triangle.
  std::string ascii =
      "solid t\nfacet normal 0 0 1\nouter loop\n"
      "vertex 0 0 0\nvertex 1 0 0\nvertex 0 1 0\n"
      "endloop\nendfacet\nendsolid t\n";
  auto path = testutil::write_text(dir / "tri.stl", ascii);
  TriangleMesh mesh = load_mesh(path, MeshUnits::Millimeters);
  CHECK(mesh.vertices.size() == 3);
  CHECK(mesh.faces.size() == 1);
}

TEST_CASE("symmetry: declared 90-degree z-rotation accepted and closed") {
  TriangleMesh mesh = load_mesh(cube_obj_path(), MeshUnits::Millimeters);
  auto rot90 = RigidTransform::axis_angle(Vec3(0, 0, 1), M_PI / 2);
  mesh.finalize_symmetries({rot90}, 0.1);
  // Closure of a 90-degree generator: identity, 90, 180, 270.
  CHECK(mesh.symmetries.size() == 4);
}

TEST_CASE("symmetry: 45-degree z-rotation rejected for a cube") {
  TriangleMesh mesh = load_mesh(cube_obj_path(), MeshUnits::Millimeters);
  auto rot45 = RigidTransform::axis_angle(Vec3(0, 0, 1), M_PI / 4);
  CHECK_THROWS_AS(mesh.finalize_symmetries({rot45}, 0.1), SymmetryError);
}

TEST_CASE("sample_surface_points: mean near centroid on the unit square") {
  TriangleMesh m = unit_square_mesh();
  auto pts = sample_surface_points(m, 10000, 42);
  REQUIRE(pts.size() == 10000);
  Vec3 mean = Vec3::Zero();
  for (const auto& p : pts) {
    CHECK(p.x() >= -1e-12);
    CHECK(p.x() <= 1 + 1e-12);
    CHECK(p.y() >= -1e-12);
    CHECK(p.y() <= 1 + 1e-12);
    CHECK(std::abs(p.z()) < 1e-12);
    mean += p;
  }
  mean /= 10000.0;
  CHECK((mean - Vec3(0.5, 0.5, 0)).norm() < 0.01);
}

TEST_CASE("sample_surface_points: n=1 and determinism") {
  TriangleMesh m = unit_square_mesh();
  auto one = sample_surface_points(m, 1, 7);
  CHECK(one.size() == 1);
  auto a = sample_surface_points(m, 500, 123);
  auto b = sample_surface_points(m, 500, 123);
  for (size_t i = 0; i < a.size(); ++i) CHECK(a[i] == b[i]);
  auto c = sample_surface_points(m, 500, 124);
  bool any_diff = false;
  for (size_t i = 0; i < a.size(); ++i) {
    if (a[i] != c[i]) any_diff = true;
  }
  CHECK(any_diff);
}

TEST_CASE("sample_surface_points: per-triangle counts within 3 sigma") {
  TriangleMesh m = unit_square_mesh();
  auto pts = sample_surface_points(m, 100000, 2024);
  // Triangle 0 is below the diagonal x + y <= 1 (equal areas).
  size_t below = 0;
  for (const auto& p : pts) {
    if (p.x() + p.y() <= 1.0) ++below;
  }
  double expect = 50000.0, sigma = std::sqrt(100000 * 0.25);
  CHECK(std::abs(static_cast<double>(below) - expect) <= 3 * sigma);
}

TEST_CASE("pose_error: identity and pure translation") {
  TriangleMesh mesh = load_mesh(cube_obj_path(), MeshUnits::Millimeters);
  auto pts = sample_surface_points(mesh, 1000, 5);
  RigidTransform a;
  CHECK(pose_error(a, a, pts) == 0.0);
  RigidTransform b = a;
  b.translation = Vec3(3, 4, 0);
  CHECK(pose_error(a, b, pts) == doctest::Approx(5.0).epsilon(1e-12));
}

TEST_CASE("pose_error: 90-degree rotation matches direct evaluation") {
  TriangleMesh mesh = load_mesh(cube_obj_path(), MeshUnits::Millimeters);
  auto pts = sample_surface_points(mesh, 10000, 11);
  RigidTransform a;
  RigidTransform b = RigidTransform::axis_angle(Vec3(0, 0, 1), M_PI / 2);
  // Independent oracle: direct per-point evaluation.
  double sum = 0;
  for (const auto& p : pts) sum += (a.apply(p) - b.apply(p)).norm();
  double expected = sum / static_cast<double>(pts.size());
  CHECK(pose_error(a, b, pts) == doctest::Approx(expected).epsilon(1e-12));
  CHECK(expected > 0.5);  // sanity: rotating a cube moves its surface
}

TEST_CASE("pose_error: exact symmetry in arguments, with symmetry group") {
  TriangleMesh mesh = load_mesh(cube_obj_path(), MeshUnits::Millimeters);
  mesh.finalize_symmetries({RigidTransform::axis_angle(Vec3(0, 0, 1), M_PI / 2)},
                           0.1);
  auto pts = sample_surface_points(mesh, 2000, 9);
  Rng rng(77);
  for (int i = 0; i < 10; ++i) {
    RigidTransform a = RigidTransform::axis_angle(
        Vec3(rng.normal(), rng.normal(), rng.normal()).normalized(),
        rng.uniform(0, M_PI));
    a.translation = Vec3(rng.uniform(-5, 5), rng.uniform(-5, 5), rng.uniform(-5, 5));
    RigidTransform b = RigidTransform::axis_angle(
        Vec3(rng.normal(), rng.normal(), rng.normal()).normalized(),
        rng.uniform(0, M_PI));
    double ab = pose_error(a, b, pts, mesh.symmetries);
    double ba = pose_error(b, a, pts, mesh.symmetries);
    CHECK(ab == ba);  // exact, not approximate
  }
}

TEST_CASE("pose_error: symmetry-equivalent poses score near zero") {
  TriangleMesh mesh = load_mesh(cube_obj_path(), MeshUnits::Millimeters);
  mesh.finalize_symmetries({RigidTransform::axis_angle(Vec3(0, 0, 1), M_PI / 2)},
                           0.1);
  auto pts = sample_surface_points(mesh, 2000, 13);
  RigidTransform a = RigidTransform::axis_angle(Vec3(1, 1, 0).normalized(), 0.3);
  a.translation = Vec3(1, 2, 3);
  for (const auto& s : mesh.symmetries) {
    double err = pose_error(a, a.compose(s), pts, mesh.symmetries);
    CHECK(err <= 2 * mesh.symmetry_tolerance_mm);
  }
}

TEST_CASE("pose_error: invariant under a common left-composed transform") {
  TriangleMesh mesh = load_mesh(cube_obj_path(), MeshUnits::Millimeters);
  auto pts = sample_surface_points(mesh, 2000, 21);
  Rng rng(31);
  RigidTransform a = RigidTransform::axis_angle(Vec3(0, 1, 0), 0.4);
  a.translation = Vec3(2, -1, 4);
  RigidTransform b = RigidTransform::axis_angle(Vec3(1, 0, 0), -0.7);
  b.translation = Vec3(-3, 0.5, 1);
  RigidTransform t = RigidTransform::axis_angle(
      Vec3(rng.normal(), rng.normal(), rng.normal()).normalized(), 1.1);
  t.translation = Vec3(10, -20, 5);
  double base = pose_error(a, b, pts);
  double moved = pose_error(t.compose(a), t.compose(b), pts);
  CHECK(moved == doctest::Approx(base).epsilon(1e-9));
}

TEST_CASE("moment bounds bracket the mean point distance") {
  TriangleMesh mesh = load_mesh(cube_obj_path(), MeshUnits::Millimeters);
  PointStats stats(sample_surface_points(mesh, 500, 3));
  Rng rng(17);
  for (int i = 0; i < 50; ++i) {
    RigidTransform a = RigidTransform::axis_angle(
        Vec3(rng.normal(), rng.normal(), rng.normal()).normalized(),
        rng.uniform(0, M_PI));
    a.translation = Vec3(rng.uniform(-3, 3), rng.uniform(-3, 3), rng.uniform(-3, 3));
    RigidTransform b;
    double exact = mean_point_distance(a, b, stats.points);
    CHECK(mean_point_distance_lower(a, b, stats) <= exact + 1e-12);
    CHECK(mean_point_distance_upper(a, b, stats) >= exact - 1e-12);
  }
}

TEST_CASE("rotation_to_z maps directions onto +z") {
  for (const Vec3& u : {Vec3(0, 0, 1), Vec3(0, 0, -1), Vec3(1, 0, 0),
                        Vec3(0.3, -0.8, 0.5).normalized()}) {
    Mat3 r = rotation_to_z(u);
    CHECK((r * u - Vec3(0, 0, 1)).norm() < 1e-12);
    CHECK(std::abs(r.determinant() - 1.0) < 1e-12);
  }
}

TEST_CASE("propose_approach_directions finds the cube's three axes") {
  TriangleMesh mesh = load_mesh(cube_obj_path(), MeshUnits::Millimeters);
  auto dirs = propose_approach_directions(mesh);
  CHECK(dirs.size() == 3);
  for (const auto& d : dirs) {
    // Each direction is an axis of the cube.
    CHECK(d.cwiseAbs().maxCoeff() == doctest::Approx(1.0));
  }
}

TEST_CASE("degenerate faces are cleaned at load") {
  auto dir = testutil::make_temp_dir("degen");
  auto path = testutil::write_text(dir / "d.obj",
                                   "v 0 0 0\nv 1 0 0\nv 0 1 0\nv 2 0 0\n"
                                   "f 1 2 3\nf 1 2 4\n");  // second is collinear
  TriangleMesh mesh = load_mesh(path, MeshUnits::Millimeters);
  CHECK(mesh.faces.size() == 1);
}
