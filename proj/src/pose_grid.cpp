#include "touchloc/pose_grid.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstring>
#include <fstream>
#include <functional>
#include <json.hpp>
#include <limits>
#include <map>
#include <thread>

#include "touchloc/artifact.hpp"
#include "touchloc/errors.hpp"

namespace touchloc {

using nlohmann::json;

GridVariant grid_variant_from_string(const std::string& name) {
  if (name == "full") return GridVariant::Full;
  if (name == "one-face" || name == "one_face") return GridVariant::OneFace;
  if (name == "bigger-mini-one-face" || name == "bigger_mini_one_face") {
    return GridVariant::BiggerMiniOneFace;
  }
  if (name == "mini-one-face" || name == "mini_one_face") {
    return GridVariant::MiniOneFace;
  }
  throw ConfigError("unknown grid variant '" + name + "'");
}

std::string grid_variant_name(GridVariant v) {
  switch (v) {
    case GridVariant::Full: return "full";
    case GridVariant::OneFace: return "one-face";
    case GridVariant::BiggerMiniOneFace: return "bigger-mini-one-face";
    case GridVariant::MiniOneFace: return "mini-one-face";
  }
  return "full";
}

void GridSpec::validate() const {
  if (approach_directions.empty()) {
    throw ConfigError("grid needs at least one approach direction");
  }
  if (xy_resolution_mm <= 0 || theta_resolution_deg <= 0) {
    throw ConfigError("grid resolutions must be positive");
  }
  double ratio = 360.0 / theta_resolution_deg;
  if (std::abs(ratio - std::round(ratio)) > 1e-9) {
    throw ConfigError("360 must be divisible by theta_resolution");
  }
  if (xy_extents.size() != approach_directions.size()) {
    throw ConfigError("need one xy extent per approach direction");
  }
  for (const auto& e : xy_extents) {
    if (e[1] < e[0] || e[3] < e[2]) {
      throw ConfigError("extent with max < min");
    }
  }
}

int GridSpec::theta_count() const {
  return static_cast<int>(std::llround(360.0 / theta_resolution_deg));
}

GridSpec GridSpec::from_object(const ObjectConfig& config,
                               const TriangleMesh& mesh, GridVariant variant,
                               const RenderConfig& render) {
  (void)render;
  GridSpec spec;
  std::vector<Vec3> dirs = config.approach_directions;
  if (dirs.empty()) dirs = propose_approach_directions(mesh);
  if (dirs.empty()) {
    throw ConfigError("no approach directions declared or derivable");
  }
  std::vector<std::array<double, 4>> extents = config.xy_extents;
  if (!extents.empty() && extents.size() != dirs.size()) {
    throw ConfigError("xy_extents count must match approach_directions");
  }
  if (extents.empty()) {
    // Sensor center sweeps the object's projected footprint at theta = 0.
    for (const auto& u : dirs) {
      Mat3 r0 = rotation_to_z(u);
      double x0 = 1e300, x1 = -1e300, y0 = 1e300, y1 = -1e300;
      for (const auto& v : mesh.vertices) {
        Vec3 p = r0 * v;
        x0 = std::min(x0, p.x());
        x1 = std::max(x1, p.x());
        y0 = std::min(y0, p.y());
        y1 = std::max(y1, p.y());
      }
      extents.push_back({-x1, -x0, -y1, -y0});
    }
  }
  switch (variant) {
    case GridVariant::Full:
      spec.approach_directions = dirs;
      spec.xy_extents = extents;
      spec.xy_resolution_mm = 2.5;
      spec.theta_resolution_deg = 6.0;
      break;
    case GridVariant::OneFace:
      spec.approach_directions = {dirs[0]};
      spec.xy_extents = {extents[0]};
      spec.xy_resolution_mm = 2.5;
      spec.theta_resolution_deg = 6.0;
      break;
    case GridVariant::BiggerMiniOneFace:
      spec.approach_directions = {dirs[0]};
      spec.xy_extents = {extents[0]};
      spec.xy_resolution_mm = 5.0;
      spec.theta_resolution_deg = 36.0;
      break;
    case GridVariant::MiniOneFace:
      spec.approach_directions = {dirs[0]};
      spec.xy_extents = {extents[0]};
      spec.xy_resolution_mm = 5.0;
      spec.theta_resolution_deg = 360.0;  // single angle
      break;
  }
  spec.validate();
  return spec;
}

namespace {

// Lattice values are multiples of the pitch so symmetric extents produce
// symmetric lattices.
std::vector<int> lattice_indices(double lo, double hi, double pitch) {
  int k0 = static_cast<int>(std::ceil((lo - 1e-9) / pitch));
  int k1 = static_cast<int>(std::floor((hi + 1e-9) / pitch));
  std::vector<int> out;
  for (int k = k0; k <= k1; ++k) out.push_back(k);
  return out;
}

Mat3 rot_x_pi() {
  Mat3 r;
  r << 1, 0, 0, 0, -1, 0, 0, 0, -1;
  return r;
}

struct Candidate {
  GridCoords coords;
  double x, y, theta_rad;
  RigidTransform settled;
  bool contact = false;
};

struct LatticeKey {
  int dir, theta, x, y;
  auto operator<=>(const LatticeKey&) const = default;
};

void parallel_for(size_t n, int jobs, const std::function<void(size_t)>& fn) {
  jobs = std::max(1, jobs);
  if (jobs == 1 || n < 2) {
    for (size_t i = 0; i < n; ++i) fn(i);
    return;
  }
  std::atomic<size_t> next{0};
  auto worker = [&] {
    for (size_t i = next.fetch_add(1); i < n; i = next.fetch_add(1)) fn(i);
  };
  std::vector<std::thread> threads;
  for (int t = 0; t < jobs; ++t) threads.emplace_back(worker);
  for (auto& t : threads) t.join();
}

}  // namespace

PoseGrid build_grid(const TriangleMesh& mesh, const GridSpec& spec,
                    const RenderConfig& render, int jobs) {
  spec.validate();
  render.validate();
  if (mesh.vertices.empty() || mesh.faces.empty()) {
    throw EmptyMesh("build_grid on empty mesh");
  }

  const int n_theta = spec.theta_count();
  const double theta_step = spec.theta_resolution_deg * M_PI / 180.0;
  std::vector<Mat3> base_rot;
  for (const auto& u : spec.approach_directions) base_rot.push_back(rotation_to_z(u));

  // Lexicographic lattice enumeration: (direction, theta, x, y).
  std::vector<Candidate> cands;
  for (size_t di = 0; di < spec.approach_directions.size(); ++di) {
    const auto& ext = spec.xy_extents[di];
    auto xs = lattice_indices(ext[0], ext[1], spec.xy_resolution_mm);
    auto ys = lattice_indices(ext[2], ext[3], spec.xy_resolution_mm);
    for (int ti = 0; ti < n_theta; ++ti) {
      for (int xi : xs) {
        for (int yi : ys) {
          Candidate c;
          c.coords = {static_cast<int>(di), xi, yi, ti};
          c.x = xi * spec.xy_resolution_mm;
          c.y = yi * spec.xy_resolution_mm;
          c.theta_rad = ti * theta_step;
          cands.push_back(c);
        }
      }
    }
  }

  parallel_for(cands.size(), jobs, [&](size_t i) {
    Candidate& c = cands[i];
    RigidTransform t;
    t.rotation = RigidTransform::rotation_z(c.theta_rad).rotation *
                 base_rot[c.coords.direction];
    t.translation = Vec3(c.x, c.y, render.d_mm);
    try {
      c.settled = settle_to_contact(mesh, t, render).transform;
      c.contact = true;
    } catch (const NoContactPossible&) {
      c.contact = false;
    }
  });

  // Symmetry quotient: a candidate is dropped when some symmetry image of it
  // lands (within tolerance) on an earlier kept lattice pose. Processing in
  // lexicographic order keeps the smallest coordinates of each orbit.
  const bool has_sym = mesh.symmetries.size() > 1;
  std::map<LatticeKey, size_t> kept_keys;
  std::vector<size_t> kept;
  const double trans_tol = std::max(mesh.symmetry_tolerance_mm * 3.0, 1e-6);
  const double angle_tol = 2.0 * M_PI / 180.0;
  auto coords_of = [&](const RigidTransform& t,
                       LatticeKey* key) -> bool {
    // Recover (direction, theta, x, y) of a transform that should lie on the
    // lattice; false if it does not.
    for (size_t di = 0; di < spec.approach_directions.size(); ++di) {
      Mat3 rz = t.rotation * base_rot[di].transpose();
      // Must be a rotation about z.
      if (std::abs(rz(2, 2) - 1.0) > 1.0 - std::cos(angle_tol)) continue;
      double theta = std::atan2(rz(1, 0), rz(0, 0));
      double tn = theta / theta_step;
      int ti = static_cast<int>(std::llround(tn));
      if (std::abs(tn - ti) * theta_step > angle_tol) continue;
      ti = ((ti % n_theta) + n_theta) % n_theta;
      double xn = t.translation.x() / spec.xy_resolution_mm;
      double yn = t.translation.y() / spec.xy_resolution_mm;
      int xi = static_cast<int>(std::llround(xn));
      int yi = static_cast<int>(std::llround(yn));
      if (std::abs(xn - xi) * spec.xy_resolution_mm > trans_tol) continue;
      if (std::abs(yn - yi) * spec.xy_resolution_mm > trans_tol) continue;
      *key = {static_cast<int>(di), ti, xi, yi};
      return true;
    }
    return false;
  };
  for (size_t i = 0; i < cands.size(); ++i) {
    if (!cands[i].contact) continue;
    bool duplicate = false;
    if (has_sym) {
      for (size_t s = 1; s < mesh.symmetries.size() && !duplicate; ++s) {
        RigidTransform image = cands[i].settled.compose(mesh.symmetries[s]);
        LatticeKey key;
        if (coords_of(image, &key) && kept_keys.count(key)) duplicate = true;
      }
    }
    if (duplicate) continue;
    kept_keys.emplace(LatticeKey{cands[i].coords.direction,
                                 cands[i].coords.theta_index,
                                 cands[i].coords.x_index,
                                 cands[i].coords.y_index},
                      kept.size());
    kept.push_back(i);
  }
  if (kept.empty()) throw EmptyGrid("no lattice pose makes contact");

  PoseGrid grid;
  grid.spec = spec;
  grid.render_config = render;
  grid.symmetries = mesh.symmetries.empty()
                        ? std::vector<RigidTransform>{RigidTransform::identity()}
                        : mesh.symmetries;
  grid.symmetry_tolerance_mm = mesh.symmetry_tolerance_mm;
  {
    ContentHash mh;
    for (const auto& v : mesh.vertices) {
      double c[3] = {v.x(), v.y(), v.z()};
      mh.update(c, sizeof(c));
    }
    for (const auto& f : mesh.faces) mh.update(f.data(), sizeof(int) * 3);
    grid.mesh_hash = mh.hex();
  }

  const size_t n = kept.size();
  grid.poses.resize(n);
  grid.masks.resize(n);
  grid.masks2.resize(n);
  grid.has_second_contact.assign(n, 0);
  grid.openings_mm.assign(n, 0.0);
  std::vector<uint8_t> keep_after_render(n, 1);

  parallel_for(n, jobs, [&](size_t k) {
    const Candidate& c = cands[kept[k]];
    ContactPose cp;
    cp.transform = c.settled;
    cp.grid_coords = c.coords;
    ContactMask m1 = render_contact(mesh, cp, render);
    if (m1.count() == 0) {
      keep_after_render[k] = 0;
      return;
    }
    FootprintExtrema ex = footprint_extrema(mesh, c.settled, render);
    double opening = ex.max_depth - render.d_mm;
    RigidTransform flipped =
        paired_jaw_transform(c.settled, opening, render.d_mm);
    ContactPose cp2 = settle_to_contact(mesh, flipped, render);
    ContactMask m2 = render_contact(mesh, cp2, render);
    grid.poses[k] = cp;
    grid.masks[k] = std::move(m1);
    grid.masks2[k] = std::move(m2);
    grid.has_second_contact[k] = grid.masks2[k].count() > 0 ? 1 : 0;
    grid.openings_mm[k] = opening;
  });

  // Compact out knife-edge poses whose downsampled mask is empty.
  size_t w = 0;
  for (size_t k = 0; k < n; ++k) {
    if (!keep_after_render[k]) continue;
    if (w != k) {
      grid.poses[w] = grid.poses[k];
      grid.masks[w] = std::move(grid.masks[k]);
      grid.masks2[w] = std::move(grid.masks2[k]);
      grid.has_second_contact[w] = grid.has_second_contact[k];
      grid.openings_mm[w] = grid.openings_mm[k];
    }
    ++w;
  }
  grid.poses.resize(w);
  grid.masks.resize(w);
  grid.masks2.resize(w);
  grid.has_second_contact.resize(w);
  grid.openings_mm.resize(w);
  if (grid.poses.empty()) throw EmptyGrid("all contacting poses render empty");
  grid.compute_hash();
  return grid;
}

std::pair<size_t, double> nearest_grid_pose(const PoseGrid& grid,
                                            const ContactPose& pose,
                                            const PointStats& points) {
  if (grid.size() == 0) throw EmptyGrid("nearest_grid_pose on empty grid");
  if (points.size() == 0) throw EmptySupport("nearest_grid_pose needs points");
  const auto& syms = grid.symmetries;
  // Seed with a cheap upper bound so the exact pass can prune aggressively.
  double best_ub = std::numeric_limits<double>::infinity();
  for (size_t g = 0; g < grid.size(); ++g) {
    const RigidTransform& tg = grid.poses[g].transform;
    for (const auto& s : syms) {
      best_ub = std::min(best_ub, mean_point_distance_upper(
                                      pose.transform.compose(s), tg, points));
      best_ub = std::min(best_ub, mean_point_distance_upper(
                                      pose.transform, tg.compose(s), points));
    }
  }
  double best = std::numeric_limits<double>::infinity();
  size_t best_idx = 0;
  const double slack = 1e-12 + 1e-12 * best_ub;
  for (size_t g = 0; g < grid.size(); ++g) {
    const RigidTransform& tg = grid.poses[g].transform;
    for (const auto& s : syms) {
      for (int side = 0; side < 2; ++side) {
        RigidTransform a = side == 0 ? pose.transform.compose(s) : pose.transform;
        RigidTransform b = side == 0 ? tg : tg.compose(s);
        double lb = mean_point_distance_lower(a, b, points);
        double cap = std::min(best, best_ub + slack);
        if (lb > cap + slack) continue;
        double val = mean_point_distance(a, b, points.points);
        if (val < best) {
          best = val;
          best_idx = g;
        }
      }
    }
  }
  return {best_idx, best};
}

CoordDistance nearest_in_coords(const PoseGrid& grid,
                                const RigidTransform& pose) {
  if (grid.size() == 0) throw EmptyGrid("nearest_in_coords on empty grid");
  // Rank candidates by cell-normalized distance (half a lattice step in each
  // coordinate counts as 1), so the winner satisfies both bounds whenever any
  // element does.
  const double xy_half = grid.spec.xy_resolution_mm / 2.0;
  const double th_half = grid.spec.theta_resolution_deg / 2.0;
  CoordDistance best;
  double best_score = std::numeric_limits<double>::infinity();
  for (size_t g = 0; g < grid.size(); ++g) {
    for (const auto& s : grid.symmetries) {
      RigidTransform tg = grid.poses[g].transform.compose(s);
      double dxy =
          (tg.translation - pose.translation).head<2>().cwiseAbs().maxCoeff();
      double ang = rotation_angle_between(
                       tg, RigidTransform{pose.rotation, pose.translation}) *
                   180.0 / M_PI;
      double score = std::max(dxy / xy_half, ang / th_half);
      if (score < best_score) {
        best_score = score;
        best = {g, dxy, ang};
      }
    }
  }
  return best;
}

TrainingSampler::TrainingSampler(const PoseGrid& grid, const TriangleMesh& mesh,
                                 NoiseSpec noise, size_t label_points,
                                 uint64_t label_seed)
    : grid_(grid),
      mesh_(mesh),
      noise_(noise),
      stats_(sample_surface_points(mesh, label_points, label_seed)) {
  if (grid_.size() == 0) throw EmptyGrid("sampler over empty grid");
}

TrainingSample TrainingSampler::draw(Rng& rng) const {
  for (int attempt = 0; attempt < 100; ++attempt) {
    size_t idx = static_cast<size_t>(rng.uniform_index(grid_.size()));
    double dx = rng.uniform(-noise_.trans_mm, noise_.trans_mm);
    double dy = rng.uniform(-noise_.trans_mm, noise_.trans_mm);
    double dth = rng.uniform(-noise_.rot_deg, noise_.rot_deg) * M_PI / 180.0;
    double dd = rng.uniform(noise_.delta_d_min_mm, noise_.delta_d_max_mm);
    const RigidTransform& base = grid_.poses[idx].transform;
    // Perturb about the grasp axis and in the sensor plane, then re-settle.
    RigidTransform t;
    t.rotation = RigidTransform::rotation_z(dth).rotation * base.rotation;
    t.translation = base.translation + Vec3(dx, dy, 0);
    try {
      ContactPose settled = settle_to_contact(mesh_, t, grid_.render_config);
      TrainingSample s;
      s.pose = settled;
      s.pose.grid_coords.reset();
      s.label = nearest_grid_pose(grid_, s.pose, stats_).first;
      s.delta_d_mm = dd;
      s.source_index = idx;
      return s;
    } catch (const NoContactPossible&) {
      continue;
    }
  }
  throw NoContactPossible("training sampler exceeded 100 settle retries");
}

ContactMask TrainingSampler::render(const TrainingSample& sample) const {
  return render_contact(mesh_, sample.pose, grid_.render_config,
                        sample.delta_d_mm);
}

RigidTransform paired_jaw_transform(const RigidTransform& sensor1_pose,
                                    double opening_mm, double d_mm) {
  RigidTransform flip;
  flip.rotation = rot_x_pi();
  flip.translation = Vec3(0, 0, 2 * d_mm + opening_mm);
  return flip.compose(sensor1_pose);
}

PairedContact paired_jaw_pose(const PoseGrid& grid, size_t index) {
  if (index >= grid.size()) throw ConfigError("grid index out of range");
  PairedContact out;
  out.opening_mm = grid.openings_mm[index];
  out.contact = grid.has_second_contact[index] != 0;
  // The stored opening is the footprint extent along the grasp axis, so the
  // flipped pose is settled by construction (the far surface lands at depth
  // d); build_grid verifies this by re-settling before rendering masks2.
  out.pose.transform = paired_jaw_transform(
      grid.poses[index].transform, out.opening_mm, grid.render_config.d_mm);
  out.pose.grid_coords = grid.poses[index].grid_coords;
  return out;
}

namespace {

json render_config_json(const RenderConfig& r) {
  return json{{"image_size", r.image_size},
              {"supersample_size", r.supersample_size},
              {"sensor_extent_x_mm", r.sensor_extent_x_mm},
              {"sensor_extent_y_mm", r.sensor_extent_y_mm},
              {"d_mm", r.d_mm},
              {"delta_d_mm", r.delta_d_mm}};
}

RenderConfig render_config_from_json(const json& j) {
  RenderConfig r;
  r.image_size = j.at("image_size").get<int>();
  r.supersample_size = j.at("supersample_size").get<int>();
  r.sensor_extent_x_mm = j.at("sensor_extent_x_mm").get<double>();
  r.sensor_extent_y_mm = j.at("sensor_extent_y_mm").get<double>();
  r.d_mm = j.at("d_mm").get<double>();
  r.delta_d_mm = j.at("delta_d_mm").get<double>();
  return r;
}

json spec_json(const GridSpec& s) {
  json dirs = json::array(), exts = json::array();
  for (const auto& d : s.approach_directions) dirs.push_back({d.x(), d.y(), d.z()});
  for (const auto& e : s.xy_extents) exts.push_back({e[0], e[1], e[2], e[3]});
  return json{{"approach_directions", dirs},
              {"xy_extents", exts},
              {"xy_resolution_mm", s.xy_resolution_mm},
              {"theta_resolution_deg", s.theta_resolution_deg}};
}

GridSpec spec_from_json(const json& j) {
  GridSpec s;
  for (const auto& d : j.at("approach_directions")) {
    s.approach_directions.emplace_back(d[0].get<double>(), d[1].get<double>(),
                                       d[2].get<double>());
  }
  for (const auto& e : j.at("xy_extents")) {
    s.xy_extents.push_back({e[0].get<double>(), e[1].get<double>(),
                            e[2].get<double>(), e[3].get<double>()});
  }
  s.xy_resolution_mm = j.at("xy_resolution_mm").get<double>();
  s.theta_resolution_deg = j.at("theta_resolution_deg").get<double>();
  return s;
}

template <typename T>
void append_pod(std::vector<uint8_t>& out, const T& v) {
  const auto* p = reinterpret_cast<const uint8_t*>(&v);
  out.insert(out.end(), p, p + sizeof(T));
}

std::vector<uint8_t> poses_bytes(const PoseGrid& grid) {
  std::vector<uint8_t> out;
  out.reserve(grid.size() * (16 * 8 + 16));
  for (const auto& p : grid.poses) {
    Mat4 m = p.transform.matrix();
    for (int r = 0; r < 4; ++r)
      for (int c = 0; c < 4; ++c) append_pod(out, m(r, c));
    GridCoords gc = p.grid_coords.value_or(GridCoords{});
    append_pod(out, static_cast<int32_t>(gc.direction));
    append_pod(out, static_cast<int32_t>(gc.x_index));
    append_pod(out, static_cast<int32_t>(gc.y_index));
    append_pod(out, static_cast<int32_t>(gc.theta_index));
  }
  return out;
}

std::vector<uint8_t> masks_bytes(const std::vector<ContactMask>& masks) {
  std::vector<uint8_t> out;
  for (const auto& m : masks) {
    auto blob = m.to_blob();
    out.insert(out.end(), blob.begin(), blob.end());
  }
  return out;
}

std::vector<uint8_t> openings_bytes(const PoseGrid& grid) {
  std::vector<uint8_t> out;
  for (double w : grid.openings_mm) append_pod(out, w);
  for (uint8_t f : grid.has_second_contact) out.push_back(f);
  return out;
}

json symmetries_json(const PoseGrid& grid) {
  json arr = json::array();
  for (const auto& s : grid.symmetries) {
    Mat4 m = s.matrix();
    json rows = json::array();
    for (int r = 0; r < 4; ++r) {
      json row = json::array();
      for (int c = 0; c < 4; ++c) row.push_back(m(r, c));
      rows.push_back(row);
    }
    arr.push_back(rows);
  }
  return arr;
}

}  // namespace

void PoseGrid::compute_hash() {
  ContentHash h;
  h.update(spec_json(spec).dump());
  h.update(render_config_json(render_config).dump());
  h.update(mesh_hash);
  auto pb = poses_bytes(*this);
  h.update(pb.data(), pb.size());
  auto mb1 = masks_bytes(masks);
  h.update(mb1.data(), mb1.size());
  auto mb2 = masks_bytes(masks2);
  h.update(mb2.data(), mb2.size());
  auto ob = openings_bytes(*this);
  h.update(ob.data(), ob.size());
  hash = h.hex();
}

void save_grid(const PoseGrid& grid, const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  write_file_bytes(dir / "poses.bin", poses_bytes(grid));
  write_file_bytes(dir / "masks1.bin", masks_bytes(grid.masks));
  write_file_bytes(dir / "masks2.bin", masks_bytes(grid.masks2));
  write_file_bytes(dir / "openings.bin", openings_bytes(grid));
  json manifest;
  manifest["format_version"] = 1;
  manifest["count"] = grid.size();
  manifest["spec"] = spec_json(grid.spec);
  manifest["render_config"] = render_config_json(grid.render_config);
  manifest["mesh_hash"] = grid.mesh_hash;
  manifest["symmetries"] = symmetries_json(grid);
  manifest["symmetry_tolerance_mm"] = grid.symmetry_tolerance_mm;
  manifest["symmetry_canonical"] = grid.symmetry_canonical;
  manifest["grid_hash"] = grid.hash;
  std::ofstream out(dir / "manifest.json", std::ios::trunc);
  if (!out) throw ConfigError("cannot write manifest: " + dir.string());
  out << manifest.dump(2) << "\n";
}

PoseGrid load_grid(const std::filesystem::path& dir) {
  std::ifstream in(dir / "manifest.json");
  if (!in) throw ConfigError("cannot open grid manifest in " + dir.string());
  json manifest;
  try {
    in >> manifest;
  } catch (const std::exception& e) {
    throw ConfigError("grid manifest parse: " + std::string(e.what()));
  }
  PoseGrid grid;
  grid.spec = spec_from_json(manifest.at("spec"));
  grid.render_config = render_config_from_json(manifest.at("render_config"));
  grid.mesh_hash = manifest.at("mesh_hash").get<std::string>();
  grid.symmetry_tolerance_mm = manifest.at("symmetry_tolerance_mm").get<double>();
  grid.symmetry_canonical = manifest.at("symmetry_canonical").get<bool>();
  for (const auto& s : manifest.at("symmetries")) {
    Mat4 m;
    for (int r = 0; r < 4; ++r)
      for (int c = 0; c < 4; ++c) m(r, c) = s[r][c].get<double>();
    grid.symmetries.push_back(RigidTransform::from_matrix(m));
  }
  size_t n = manifest.at("count").get<size_t>();

  auto pb = read_file_bytes(dir / "poses.bin");
  const size_t stride = 16 * 8 + 16;
  if (pb.size() != n * stride) throw ParseError("poses.bin size mismatch");
  for (size_t i = 0; i < n; ++i) {
    const uint8_t* p = pb.data() + i * stride;
    Mat4 m;
    for (int r = 0; r < 4; ++r)
      for (int c = 0; c < 4; ++c) {
        double v;
        std::memcpy(&v, p + (r * 4 + c) * 8, 8);
        m(r, c) = v;
      }
    int32_t gc[4];
    std::memcpy(gc, p + 16 * 8, 16);
    ContactPose cp;
    cp.transform = RigidTransform::from_matrix(m);
    cp.grid_coords = GridCoords{gc[0], gc[1], gc[2], gc[3]};
    grid.poses.push_back(cp);
  }

  auto load_masks = [&](const char* name, std::vector<ContactMask>* out) {
    auto mb = read_file_bytes(dir / name);
    size_t off = 0;
    for (size_t i = 0; i < n; ++i) {
      if (off + 8 > mb.size()) throw ParseError(std::string(name) + " truncated");
      uint32_t w, h;
      std::memcpy(&w, mb.data() + off, 4);
      std::memcpy(&h, mb.data() + off + 4, 4);
      size_t sz = 8 + (static_cast<size_t>(w) * h + 7) / 8;
      if (off + sz > mb.size()) throw ParseError(std::string(name) + " truncated");
      out->push_back(ContactMask::from_blob(mb.data() + off, sz));
      off += sz;
    }
    if (off != mb.size()) throw ParseError(std::string(name) + " trailing bytes");
  };
  load_masks("masks1.bin", &grid.masks);
  load_masks("masks2.bin", &grid.masks2);

  auto ob = read_file_bytes(dir / "openings.bin");
  if (ob.size() != n * 9) throw ParseError("openings.bin size mismatch");
  for (size_t i = 0; i < n; ++i) {
    double w;
    std::memcpy(&w, ob.data() + i * 8, 8);
    grid.openings_mm.push_back(w);
  }
  grid.has_second_contact.assign(ob.begin() + static_cast<long>(n * 8), ob.end());

  grid.compute_hash();
  std::string stored = manifest.at("grid_hash").get<std::string>();
  if (stored != grid.hash) {
    throw ArtifactMismatchError("grid content hash mismatch in " + dir.string());
  }
  return grid;
}

}  // namespace touchloc
