#include <doctest.h>

#include <cmath>
#include <fstream>

#include "testutil.hpp"
#include "touchloc/artifact.hpp"
#include "touchloc/errors.hpp"
#include "touchloc/pose_grid.hpp"
#include "touchloc/primitives.hpp"

using namespace touchloc;

namespace {

ObjectConfig cube_config(double extent) {
  ObjectConfig cfg;
  cfg.approach_directions = {Vec3(0, 0, 1)};
  cfg.xy_extents = {{-extent, extent, -extent, extent}};
  return cfg;
}

GridSpec mini_spec(const TriangleMesh& mesh, const ObjectConfig& cfg) {
  return GridSpec::from_object(cfg, mesh, GridVariant::MiniOneFace,
                               RenderConfig{});
}

}  // namespace

TEST_CASE("build_grid: unit cube mini grid has a full 3x3 lattice") {
  TriangleMesh cube = make_box(1, 1, 1);  // unit cube
  ObjectConfig cfg = cube_config(5.0);    // 10x10 mm extent at 5 mm pitch
  GridSpec spec = mini_spec(cube, cfg);
  PoseGrid grid = build_grid(cube, spec, RenderConfig{});
  CHECK(grid.size() == 9);
  for (size_t i = 0; i < grid.size(); ++i) {
    CHECK(grid.masks[i].count() > 0);
    auto ex = footprint_extrema(cube, grid.poses[i].transform, grid.render_config);
    CHECK(ex.min_depth == doctest::Approx(10.0).epsilon(1e-9));
  }
  // Lexicographic ordering of coordinates.
  for (size_t i = 1; i < grid.size(); ++i) {
    CHECK(*grid.poses[i - 1].grid_coords < *grid.poses[i].grid_coords);
  }
}

TEST_CASE("build_grid: 90-degree symmetry quotients the angular sweep by 4") {
  TriangleMesh cube = make_box(10, 10, 10);
  GridSpec spec;
  spec.approach_directions = {Vec3(0, 0, 1)};
  spec.xy_extents = {{-2.5, 2.5, -2.5, 2.5}};
  spec.xy_resolution_mm = 2.5;
  spec.theta_resolution_deg = 6.0;

  PoseGrid plain = build_grid(cube, spec, RenderConfig{});

  TriangleMesh sym_cube = cube;
  sym_cube.finalize_symmetries(
      {RigidTransform::axis_angle(Vec3(0, 0, 1), M_PI / 2)}, 0.1);
  PoseGrid quotient = build_grid(sym_cube, spec, RenderConfig{});

  CHECK(plain.size() == 9 * 60);
  CHECK(quotient.size() == plain.size() / 4);
}

TEST_CASE("build_grid: empty grid when nothing contacts") {
  TriangleMesh cube = make_box(1, 1, 1);
  GridSpec spec;
  spec.approach_directions = {Vec3(0, 0, 1)};
  spec.xy_extents = {{100, 110, 100, 110}};  // fully outside the sensor
  spec.xy_resolution_mm = 5.0;
  spec.theta_resolution_deg = 360.0;
  CHECK_THROWS_AS(build_grid(cube, spec, RenderConfig{}), EmptyGrid);
}

TEST_CASE("build_grid: parallel build matches the sequential one") {
  TriangleMesh mesh = make_hanger_plate();
  ObjectConfig cfg;
  cfg.approach_directions = {Vec3(0, 0, 1)};
  GridSpec spec = GridSpec::from_object(cfg, mesh, GridVariant::MiniOneFace,
                                        RenderConfig{});
  PoseGrid a = build_grid(mesh, spec, RenderConfig{}, 1);
  PoseGrid b = build_grid(mesh, spec, RenderConfig{}, 4);
  CHECK(a.hash == b.hash);
}

TEST_CASE("nearest_grid_pose: exact pose, in-cell offset") {
  TriangleMesh cube = make_box(1, 1, 1);
  ObjectConfig cfg = cube_config(5.0);
  PoseGrid grid = build_grid(cube, mini_spec(cube, cfg), RenderConfig{});
  PointStats stats(sample_surface_points(cube, 512, 7777));

  ContactPose q;
  q.transform = grid.poses[4].transform;
  auto [idx0, d0] = nearest_grid_pose(grid, q, stats);
  CHECK(idx0 == 4);
  CHECK(d0 <= 1e-12);

  q.transform.translation.x() += 1.0;  // within the 5 mm cell
  auto [idx1, d1] = nearest_grid_pose(grid, q, stats);
  CHECK(idx1 == 4);
  CHECK(d1 == doctest::Approx(1.0).epsilon(1e-9));
}

TEST_CASE("nearest_grid_pose matches the brute-force oracle with symmetries") {
  TriangleMesh cube = make_box(10, 10, 10);
  cube.finalize_symmetries(
      {RigidTransform::axis_angle(Vec3(0, 0, 1), M_PI / 2)}, 0.1);
  GridSpec spec;
  spec.approach_directions = {Vec3(0, 0, 1)};
  spec.xy_extents = {{-2.5, 2.5, -2.5, 2.5}};
  spec.xy_resolution_mm = 2.5;
  spec.theta_resolution_deg = 30.0;
  PoseGrid grid = build_grid(cube, spec, RenderConfig{});
  PointStats stats(sample_surface_points(cube, 256, 31));

  Rng rng(678);
  for (int i = 0; i < 25; ++i) {
    size_t src = rng.uniform_index(grid.size());
    RigidTransform t = grid.poses[src].transform;
    t.translation.x() += rng.uniform(-2.0, 2.0);
    t.translation.y() += rng.uniform(-2.0, 2.0);
    t.rotation = RigidTransform::rotation_z(rng.uniform(-0.3, 0.3)).rotation *
                 t.rotation;
    ContactPose q;
    q.transform = settle_to_contact(cube, t, grid.render_config).transform;
    auto fast = nearest_grid_pose(grid, q, stats);
    auto slow = testutil::brute_force_nearest(grid, q.transform, stats.points);
    CHECK(fast.first == slow.first);
    CHECK(fast.second == doctest::Approx(slow.second).epsilon(1e-12));
  }
}

TEST_CASE("symmetry quotient invariant: symmetric images stay near the grid") {
  TriangleMesh cube = make_box(10, 10, 10);
  cube.finalize_symmetries(
      {RigidTransform::axis_angle(Vec3(0, 0, 1), M_PI / 2)}, 0.1);
  GridSpec spec;
  spec.approach_directions = {Vec3(0, 0, 1)};
  spec.xy_extents = {{0, 0, 0, 0}};
  spec.xy_resolution_mm = 2.5;
  spec.theta_resolution_deg = 30.0;
  PoseGrid grid = build_grid(cube, spec, RenderConfig{});
  PointStats stats(sample_surface_points(cube, 512, 55));
  for (size_t g = 0; g < grid.size(); ++g) {
    for (const auto& s : grid.symmetries) {
      ContactPose q;
      q.transform = grid.poses[g].transform.compose(s);
      auto [idx, dist] = nearest_grid_pose(grid, q, stats);
      CHECK(dist <= 2 * grid.symmetry_tolerance_mm);
    }
  }
}

TEST_CASE("no two grid poses are symmetry-equivalent") {
  TriangleMesh cube = make_box(10, 10, 10);
  cube.finalize_symmetries(
      {RigidTransform::axis_angle(Vec3(0, 0, 1), M_PI / 2)}, 0.1);
  GridSpec spec;
  spec.approach_directions = {Vec3(0, 0, 1)};
  spec.xy_extents = {{-2.5, 2.5, -2.5, 2.5}};
  spec.xy_resolution_mm = 2.5;
  spec.theta_resolution_deg = 45.0;
  PoseGrid grid = build_grid(cube, spec, RenderConfig{});
  auto pts = sample_surface_points(cube, 256, 19);
  for (size_t i = 0; i < grid.size(); ++i) {
    for (size_t j = i + 1; j < grid.size(); ++j) {
      CHECK(pose_error(grid.poses[i].transform, grid.poses[j].transform, pts,
                       grid.symmetries) > 0.0);
    }
  }
}

TEST_CASE("resolution bound: perturbed poses have a lattice neighbor in range") {
  TriangleMesh mesh = make_hanger_plate();
  GridSpec spec;
  spec.approach_directions = {Vec3(0, 0, 1)};
  spec.xy_extents = {{-10, 10, -5, 5}};
  spec.xy_resolution_mm = 2.5;
  spec.theta_resolution_deg = 6.0;
  PoseGrid grid = build_grid(mesh, spec, RenderConfig{});
  Rng rng(4242);
  for (int i = 0; i < 100; ++i) {
    size_t src = rng.uniform_index(grid.size());
    RigidTransform t = grid.poses[src].transform;
    t.translation.x() += rng.uniform(-1.25, 1.25);
    t.translation.y() += rng.uniform(-1.25, 1.25);
    t.rotation =
        RigidTransform::rotation_z(rng.uniform(-3.0, 3.0) * M_PI / 180.0)
            .rotation *
        t.rotation;
    RigidTransform settled =
        settle_to_contact(mesh, t, grid.render_config).transform;
    CoordDistance cd = nearest_in_coords(grid, settled);
    CHECK(cd.in_plane_mm <= 1.25 + 1e-6);
    CHECK(cd.angle_deg <= 3.0 + 1e-9);
  }
}

TEST_CASE("training sampler: zero noise returns the drawn index") {
  TriangleMesh cube = make_box(1, 1, 1);
  ObjectConfig cfg = cube_config(5.0);
  PoseGrid grid = build_grid(cube, mini_spec(cube, cfg), RenderConfig{});
  NoiseSpec zero;
  zero.trans_mm = 0;
  zero.rot_deg = 0;
  TrainingSampler sampler(grid, cube, zero);
  Rng rng(1);
  for (int i = 0; i < 20; ++i) {
    TrainingSample s = sampler.draw(rng);
    CHECK(s.label == s.source_index);
    CHECK(s.delta_d_mm >= 1.0);
    CHECK(s.delta_d_mm <= 2.0);
  }
}

TEST_CASE("training sampler: labels match the exhaustive oracle at the boundary") {
  TriangleMesh cube = make_box(1, 1, 1);
  ObjectConfig cfg = cube_config(5.0);
  PoseGrid grid = build_grid(cube, mini_spec(cube, cfg), RenderConfig{});
  TrainingSampler sampler(grid, cube, NoiseSpec{});
  Rng rng(77);
  for (int i = 0; i < 30; ++i) {
    TrainingSample s = sampler.draw(rng);
    auto oracle = testutil::brute_force_nearest(grid, s.pose.transform,
                                                sampler.label_stats().points);
    CHECK(s.label == oracle.first);
  }
}

TEST_CASE("training sampler: fixed seed reproduces the sequence") {
  TriangleMesh cube = make_box(1, 1, 1);
  ObjectConfig cfg = cube_config(5.0);
  PoseGrid grid = build_grid(cube, mini_spec(cube, cfg), RenderConfig{});
  TrainingSampler sampler(grid, cube, NoiseSpec{});
  Rng a(9), b(9);
  for (int i = 0; i < 10; ++i) {
    TrainingSample sa = sampler.draw(a);
    TrainingSample sb = sampler.draw(b);
    CHECK(sa.label == sb.label);
    CHECK(sa.delta_d_mm == sb.delta_d_mm);
    CHECK(sa.pose.transform.translation == sb.pose.transform.translation);
  }
}

TEST_CASE("paired jaw: cube's second mask is the first mask mirrored") {
  TriangleMesh cube = make_box(10, 10, 10);
  GridSpec spec;
  spec.approach_directions = {Vec3(0, 0, 1)};
  spec.xy_extents = {{1.0, 1.6, 0.5, 1.0}};  // off-center, away from pixel grid
  spec.xy_resolution_mm = 0.7;
  spec.theta_resolution_deg = 360.0;
  PoseGrid grid = build_grid(cube, spec, RenderConfig{});
  REQUIRE(grid.size() >= 1);
  for (size_t i = 0; i < grid.size(); ++i) {
    CHECK(grid.has_second_contact[i] == 1);
    CHECK(grid.openings_mm[i] == doctest::Approx(10.0).epsilon(1e-9));
    CHECK(grid.masks2[i] == testutil::mirror_y(grid.masks[i]));
  }
}

TEST_CASE("paired jaw: wedge's second mask differs and matches a direct render") {
  TriangleMesh wedge = make_wedge();
  GridSpec spec;
  spec.approach_directions = {Vec3(0, 0, 1)};
  spec.xy_extents = {{-5, 5, -5, 5}};
  spec.xy_resolution_mm = 5.0;
  spec.theta_resolution_deg = 360.0;
  PoseGrid grid = build_grid(wedge, spec, RenderConfig{});
  REQUIRE(grid.size() > 0);
  for (size_t i = 0; i < grid.size(); ++i) {
    PairedContact pc = paired_jaw_pose(grid, i);
    CHECK(pc.contact);
    // Opening equals the object extent along the grasp axis at that pose.
    auto ex = footprint_extrema(wedge, grid.poses[i].transform,
                                grid.render_config);
    CHECK(pc.opening_mm ==
          doctest::Approx(ex.max_depth - ex.min_depth).epsilon(1e-9));
    // Direct render oracle at the mirrored pose.
    ContactMask oracle = testutil::raycast_contact_mask(
        wedge, pc.pose.transform, grid.render_config,
        grid.render_config.delta_d_mm);
    CHECK(mask_iou(grid.masks2[i], oracle) >= 0.99);
    // The wedge's top contact is a band, not the bottom rectangle.
    CHECK(mask_iou(grid.masks[i], grid.masks2[i]) < 0.8);
  }
}

TEST_CASE("paired jaw: opening is consistent with re-settling from the far side") {
  TriangleMesh mesh = make_hanger_plate();
  ObjectConfig cfg;
  cfg.approach_directions = {Vec3(0, 0, 1)};
  PoseGrid grid = build_grid(mesh, mini_spec(mesh, cfg), RenderConfig{});
  for (size_t i = 0; i < grid.size(); ++i) {
    PairedContact pc = paired_jaw_pose(grid, i);
    RigidTransform resettled =
        settle_to_contact(mesh, pc.pose.transform, grid.render_config).transform;
    CHECK(std::abs(resettled.translation.z() -
                   pc.pose.transform.translation.z()) < 1e-6);
  }
}

TEST_CASE("grid save/load round trip preserves the content hash") {
  TriangleMesh cube = make_box(1, 1, 1);
  ObjectConfig cfg = cube_config(5.0);
  PoseGrid grid = build_grid(cube, mini_spec(cube, cfg), RenderConfig{});
  auto dir = testutil::make_temp_dir("grid_io");
  save_grid(grid, dir / "g");
  PoseGrid loaded = load_grid(dir / "g");
  CHECK(loaded.hash == grid.hash);
  CHECK(loaded.size() == grid.size());
  CHECK(loaded.masks[3] == grid.masks[3]);
  CHECK(loaded.openings_mm[5] == grid.openings_mm[5]);
  CHECK(loaded.poses[2].transform.matrix() == grid.poses[2].transform.matrix());

  // Corruption is detected via the stored hash.
  {
    std::fstream f(dir / "g" / "openings.bin",
                   std::ios::in | std::ios::out | std::ios::binary);
    f.seekp(0);
    char b = 0x5a;
    f.write(&b, 1);
  }
  CHECK_THROWS_AS(load_grid(dir / "g"), ArtifactMismatchError);
}

TEST_CASE("identical builds serialize byte-identically") {
  TriangleMesh cube = make_box(1, 1, 1);
  ObjectConfig cfg = cube_config(5.0);
  PoseGrid g1 = build_grid(cube, mini_spec(cube, cfg), RenderConfig{});
  PoseGrid g2 = build_grid(cube, mini_spec(cube, cfg), RenderConfig{});
  auto dir = testutil::make_temp_dir("grid_det");
  save_grid(g1, dir / "a");
  save_grid(g2, dir / "b");
  for (const char* name : {"manifest.json", "poses.bin", "masks1.bin",
                           "masks2.bin", "openings.bin"}) {
    auto ba = read_file_bytes(dir / "a" / name);
    auto bb = read_file_bytes(dir / "b" / name);
    CHECK(ba == bb);
  }
}

TEST_CASE("grid variants derive the documented resolutions") {
  TriangleMesh mesh = make_hanger_plate();
  ObjectConfig cfg;
  cfg.approach_directions = {Vec3(0, 0, 1), Vec3(1, 0, 0)};
  RenderConfig rc;
  GridSpec full = GridSpec::from_object(cfg, mesh, GridVariant::Full, rc);
  CHECK(full.approach_directions.size() == 2);
  CHECK(full.xy_resolution_mm == 2.5);
  CHECK(full.theta_resolution_deg == 6.0);
  GridSpec one = GridSpec::from_object(cfg, mesh, GridVariant::OneFace, rc);
  CHECK(one.approach_directions.size() == 1);
  CHECK(one.theta_count() == 60);
  GridSpec bmof =
      GridSpec::from_object(cfg, mesh, GridVariant::BiggerMiniOneFace, rc);
  CHECK(bmof.xy_resolution_mm == 5.0);
  CHECK(bmof.theta_count() == 10);
  GridSpec mof = GridSpec::from_object(cfg, mesh, GridVariant::MiniOneFace, rc);
  CHECK(mof.theta_count() == 1);
}
