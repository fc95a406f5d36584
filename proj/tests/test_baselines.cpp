#include <doctest.h>

#include <cmath>

#include "testutil.hpp"
#include "touchloc/baselines.hpp"
#include "touchloc/errors.hpp"
#include "touchloc/primitives.hpp"

using namespace touchloc;

namespace {

PoseGrid cube_mini_grid() {
  TriangleMesh cube = make_box(1, 1, 1);
  GridSpec spec;
  spec.approach_directions = {Vec3(0, 0, 1)};
  spec.xy_extents = {{-5, 5, -5, 5}};
  spec.xy_resolution_mm = 5.0;
  spec.theta_resolution_deg = 360.0;
  return build_grid(cube, spec, RenderConfig{});
}

EncoderConfig tiny_config() {
  EncoderConfig cfg;
  cfg.input_size = 160;
  cfg.channels = {4, 8, 8};
  cfg.embedding_dim = 16;
  cfg.seed = 3;
  return cfg;
}

Mat3 random_rotation(Rng& rng) {
  return RigidTransform::axis_angle(
             Vec3(rng.normal(), rng.normal(), rng.normal()).normalized(),
             rng.uniform(0, 2 * M_PI))
      .rotation;
}

}  // namespace

TEST_CASE("rot6d: exact rotations decode to themselves") {
  Rng rng(41);
  for (int i = 0; i < 100; ++i) {
    Mat3 r = random_rotation(rng);
    RigidTransform t;
    t.rotation = r;
    t.translation = Vec3(1, 2, 3);
    SixDofPoseLabel label = encode_pose_label(t, 10.0);
    RigidTransform back = decode_pose_label(label, 10.0);
    CHECK((back.rotation - r).cwiseAbs().maxCoeff() < 1e-9);
    CHECK((back.translation - t.translation).norm() < 1e-9);
  }
}

TEST_CASE("rot6d: perturbed six-vectors decode to valid rotations") {
  Rng rng(43);
  for (int i = 0; i < 10000; ++i) {
    std::array<double, 6> r6;
    for (auto& v : r6) v = rng.normal();
    Vec3 a(r6[0], r6[1], r6[2]), b(r6[3], r6[4], r6[5]);
    if (a.norm() < 1e-6 || a.cross(b).norm() < 1e-6) continue;  // collinear
    Mat3 r = rotation_from_6d(r6);
    CHECK((r.transpose() * r - Mat3::Identity()).cwiseAbs().maxCoeff() < 1e-6);
    CHECK(r.determinant() == doctest::Approx(1.0).epsilon(1e-6));
  }
  CHECK_THROWS_AS(rotation_from_6d({0, 0, 0, 1, 0, 0}), ConfigError);
  CHECK_THROWS_AS(rotation_from_6d({1, 0, 0, 2, 0, 0}), ConfigError);
}

TEST_CASE("pixel_match_single: exact grid mask wins; empty query ties to 0") {
  PoseGrid grid = cube_mini_grid();
  for (size_t i = 0; i < grid.size(); ++i) {
    PixelMatchResult res = pixel_match_single(grid, grid.masks[i]);
    CHECK(res.best_index == i);
    CHECK(!res.all_tied);
  }
  ContactMask empty(160, 160);
  PixelMatchResult res = pixel_match_single(grid, empty);
  CHECK(res.all_tied);
  CHECK(res.best_index == 0);
  for (double s : res.scores) CHECK(s == 0.0);
}

TEST_CASE("pixel_match_single: random queries match a popcount oracle") {
  PoseGrid grid = cube_mini_grid();
  Rng rng(55);
  for (int trial = 0; trial < 10; ++trial) {
    ContactMask q(160, 160);
    int x0 = 60 + static_cast<int>(rng.uniform_index(40));
    int y0 = 60 + static_cast<int>(rng.uniform_index(40));
    for (int y = y0; y < y0 + 12; ++y)
      for (int x = x0; x < x0 + 12; ++x) q.set(x, y, true);
    PixelMatchResult res = pixel_match_single(grid, q);
    // Oracle: per-pixel nested loops.
    size_t best_idx = 0;
    long best = -1;
    for (size_t i = 0; i < grid.size(); ++i) {
      long overlap = 0;
      for (int y = 0; y < 160; ++y)
        for (int x = 0; x < 160; ++x)
          if (q.get(x, y) && grid.masks[i].get(x, y)) ++overlap;
      if (overlap > best) {
        best = overlap;
        best_idx = i;
      }
    }
    CHECK(res.best_index == best_idx);
  }
}

TEST_CASE("pixel_match_pj: exact triplet scores zero; opening normalization") {
  TriangleMesh wedge = make_wedge();
  GridSpec spec;
  spec.approach_directions = {Vec3(0, 0, 1)};
  spec.xy_extents = {{-5, 5, -5, 5}};
  spec.xy_resolution_mm = 5.0;
  spec.theta_resolution_deg = 120.0;
  PoseGrid grid = build_grid(wedge, spec, RenderConfig{});
  double w_scale = 0;
  for (double w : grid.openings_mm) w_scale = std::max(w_scale, w);

  for (size_t i = 0; i < grid.size(); ++i) {
    PixelMatchPjResult res = pixel_match_pj(grid, grid.masks[i], grid.masks2[i],
                                            grid.openings_mm[i]);
    CHECK(res.best_index == i);
    CHECK(res.pixel_error_1 == 0.0);
    CHECK(res.pixel_error_2 == 0.0);
    CHECK(res.opening_term == 0.0);
  }
  // Observed opening off by w_scale makes the opening term exactly 1.
  PixelMatchPjResult off = pixel_match_pj(grid, grid.masks[0], grid.masks2[0],
                                          grid.openings_mm[0] + w_scale);
  if (off.best_index == 0) CHECK(off.opening_term == doctest::Approx(1.0));
}

TEST_CASE("pixel_match_pj: random queries match a brute-force oracle") {
  TriangleMesh wedge = make_wedge();
  GridSpec spec;
  spec.approach_directions = {Vec3(0, 0, 1)};
  spec.xy_extents = {{-5, 5, -5, 5}};
  spec.xy_resolution_mm = 5.0;
  spec.theta_resolution_deg = 120.0;
  PoseGrid grid = build_grid(wedge, spec, RenderConfig{});
  TrainingSampler sampler(grid, wedge, NoiseSpec{});
  Rng rng(77);
  double w_scale = 0;
  for (double w : grid.openings_mm) w_scale = std::max(w_scale, w);
  for (int trial = 0; trial < 8; ++trial) {
    TrainingSample s = sampler.draw(rng);
    ContactMask m1 = sampler.render(s);
    auto ex = footprint_extrema(wedge, s.pose.transform, grid.render_config);
    double opening = ex.max_depth - grid.render_config.d_mm;
    ContactPose p2 = settle_to_contact(
        wedge, paired_jaw_transform(s.pose.transform, opening,
                                    grid.render_config.d_mm),
        grid.render_config);
    ContactMask m2 = render_contact(wedge, p2, grid.render_config, s.delta_d_mm);
    PixelMatchPjResult fast = pixel_match_pj(grid, m1, m2, opening);
    // Oracle with independent arithmetic.
    double best = 1e300;
    size_t best_idx = 0;
    double n_px = 160.0 * 160.0;
    for (size_t i = 0; i < grid.size(); ++i) {
      double pe1 = 0, pe2 = 0;
      for (int y = 0; y < 160; ++y) {
        for (int x = 0; x < 160; ++x) {
          pe1 += m1.get(x, y) != grid.masks[i].get(x, y) ? 1 : 0;
          pe2 += m2.get(x, y) != grid.masks2[i].get(x, y) ? 1 : 0;
        }
      }
      double score = pe1 / n_px + pe2 / n_px +
                     std::abs(opening - grid.openings_mm[i]) / w_scale;
      if (score < best) {
        best = score;
        best_idx = i;
      }
    }
    CHECK(fast.best_index == best_idx);
  }
}

TEST_CASE("classification: untrained head yields near-chance distributions") {
  PoseGrid grid = cube_mini_grid();
  ClassificationModel model(tiny_config(), grid.size());
  model.grid_hash = grid.hash;
  PoseDistribution dist = model.predict(grid.masks[0]);
  dist.validate(1e-9);
  for (double p : dist.probs) {
    CHECK(p > 0.2 / grid.size());
    CHECK(p < 5.0 / grid.size());
  }
}

TEST_CASE("classification: short training fits the mini grid") {
  PoseGrid grid = cube_mini_grid();
  TriangleMesh cube = make_box(1, 1, 1);
  TrainingSampler sampler(grid, cube, NoiseSpec{});
  EncoderConfig cfg = tiny_config();
  cfg.epochs = 4;
  cfg.samples_per_epoch = 400;
  cfg.batch_size = 8;
  cfg.lr_start = 0.01;  // raw-logit heads need a gentler rate than the
                        // temperature-scaled contrastive loss
  ClassificationModel model = classification_train(cfg, grid, sampler);
  // Exact grid masks should mostly classify to their own index.
  size_t hits = 0;
  for (size_t i = 0; i < grid.size(); ++i) {
    if (model.predict(grid.masks[i]).argmax() == i) ++hits;
  }
  CHECK(hits >= grid.size() - 1);
}

TEST_CASE("pose regression: smoke training and decode validity") {
  PoseGrid grid = cube_mini_grid();
  TriangleMesh cube = make_box(1, 1, 1);
  TrainingSampler sampler(grid, cube, NoiseSpec{});
  EncoderConfig cfg = tiny_config();
  cfg.epochs = 2;
  cfg.samples_per_epoch = 200;
  cfg.batch_size = 8;
  cfg.lr_start = 0.01;
  PoseRegressionModel model = pose_regression_train(cfg, grid, sampler);
  RigidTransform pred = model.predict(grid.masks[4]);
  CHECK((pred.rotation.transpose() * pred.rotation - Mat3::Identity())
            .cwiseAbs()
            .maxCoeff() < 1e-5);
  CHECK(pred.rotation.determinant() == doctest::Approx(1.0).epsilon(1e-5));
  // Center-of-grid contact should regress somewhere near the sensor region.
  CHECK(pred.translation.norm() < 100.0);
}

TEST_CASE("baseline checkpoints round trip") {
  PoseGrid grid = cube_mini_grid();
  auto dir = testutil::make_temp_dir("baseline_io");

  ClassificationModel cls(tiny_config(), grid.size());
  cls.grid_hash = grid.hash;
  save_classifier(cls, dir / "cls.ckpt");
  ClassificationModel cls2 = load_classifier(dir / "cls.ckpt");
  CHECK(cls2.grid_hash == grid.hash);
  CHECK(cls.predict(grid.masks[1]).probs == cls2.predict(grid.masks[1]).probs);

  PoseRegressionModel reg(tiny_config(), 25.0);
  reg.grid_hash = grid.hash;
  save_pose_regressor(reg, dir / "reg.ckpt");
  PoseRegressionModel reg2 = load_pose_regressor(dir / "reg.ckpt");
  CHECK(reg2.translation_scale() == 25.0);
  CHECK(reg.predict(grid.masks[1]).matrix() == reg2.predict(grid.masks[1]).matrix());

  CHECK_THROWS_AS(load_classifier(dir / "reg.ckpt"), ParseError);
}
