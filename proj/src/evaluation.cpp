#include "touchloc/evaluation.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <json.hpp>
#include <map>

#include "touchloc/errors.hpp"

namespace touchloc {

using nlohmann::json;

double median(std::vector<double> values) {
  if (values.empty()) throw EmptySupport("median of empty set");
  std::sort(values.begin(), values.end());
  size_t n = values.size();
  return n % 2 ? values[n / 2] : 0.5 * (values[n / 2 - 1] + values[n / 2]);
}

double expected_random_error(const PoseGrid& grid,
                             const std::vector<uint8_t>& support,
                             const RigidTransform& ground_truth,
                             const PointStats& points, size_t n_samples,
                             uint64_t seed) {
  if (support.size() != grid.size()) {
    throw DimensionMismatch("support length != grid size");
  }
  std::vector<size_t> idx;
  for (size_t i = 0; i < support.size(); ++i) {
    if (support[i]) idx.push_back(i);
  }
  if (idx.empty()) throw EmptySupport("expected_random_error over empty support");
  auto err_of = [&](size_t i) {
    return pose_error(grid.poses[i].transform, ground_truth, points.points,
                      grid.symmetries);
  };
  if (idx.size() <= n_samples) {
    double sum = 0;
    for (size_t i : idx) sum += err_of(i);
    return sum / static_cast<double>(idx.size());
  }
  Rng rng(seed);
  double sum = 0;
  for (size_t k = 0; k < n_samples; ++k) {
    sum += err_of(idx[rng.uniform_index(idx.size())]);
  }
  return sum / static_cast<double>(n_samples);
}

double closest_grid_error(const PoseGrid& grid,
                          const RigidTransform& ground_truth,
                          const PointStats& points) {
  ContactPose cp;
  cp.transform = ground_truth;
  return nearest_grid_pose(grid, cp, points).second;
}

std::vector<TestObservation> generate_test_set(const PoseGrid& grid,
                                               const TriangleMesh& mesh,
                                               const NoiseSpec& noise,
                                               size_t count, uint64_t seed) {
  TrainingSampler sampler(grid, mesh, noise);
  Rng rng(seed);
  std::vector<TestObservation> out;
  out.reserve(count);
  for (size_t i = 0; i < count; ++i) {
    TrainingSample s = sampler.draw(rng);
    TestObservation t;
    t.ground_truth = s.pose.transform;
    t.source_index = s.source_index;
    t.direction = grid.poses[s.source_index].grid_coords
                      ? grid.poses[s.source_index].grid_coords->direction
                      : 0;
    t.obs.mask_1 = sampler.render(s);
    // Parallel-jaw observation at the true (noised) pose.
    FootprintExtrema ex =
        footprint_extrema(mesh, s.pose.transform, grid.render_config);
    double opening = ex.max_depth - grid.render_config.d_mm;
    RigidTransform flipped = paired_jaw_transform(s.pose.transform, opening,
                                                  grid.render_config.d_mm);
    ContactPose settled2 = settle_to_contact(mesh, flipped, grid.render_config);
    t.obs.mask_2 = render_contact(mesh, settled2, grid.render_config,
                                  s.delta_d_mm);
    t.obs.opening_mm = opening;
    t.obs.ground_truth = s.pose.transform;
    out.push_back(std::move(t));
  }
  return out;
}

namespace {

struct Timer {
  std::chrono::steady_clock::time_point t0 = std::chrono::steady_clock::now();
  double ms() const {
    return std::chrono::duration<double, std::milli>(
               std::chrono::steady_clock::now() - t0)
        .count();
  }
};

std::vector<uint8_t> ball_support(const PoseGrid& grid,
                                  const RigidTransform& center, double radius,
                                  const PointStats& points) {
  std::vector<uint8_t> s(grid.size(), 0);
  for (size_t i = 0; i < grid.size(); ++i) {
    double err = pose_error(grid.poses[i].transform, center, points.points,
                            grid.symmetries);
    s[i] = err <= radius ? 1 : 0;
  }
  return s;
}

}  // namespace

ExperimentResult run_experiment(const ExperimentArtifacts& art,
                                const ExperimentConfig& config, bool verbose) {
  if (!art.grid || !art.mesh) throw ConfigError("experiment needs grid + mesh");
  auto test_set = generate_test_set(*art.grid, *art.mesh, config.noise,
                                    config.test_count, config.test_seed);
  return run_experiment_on(art, config, test_set, verbose);
}

ExperimentResult run_experiment_on(const ExperimentArtifacts& art,
                                   const ExperimentConfig& config,
                                   const std::vector<TestObservation>& test_set,
                                   bool verbose) {
  if (!art.grid || !art.mesh) throw ConfigError("experiment needs grid + mesh");
  const PoseGrid& grid = *art.grid;
  PointStats points(
      sample_surface_points(*art.mesh, config.eval_points, config.eval_points_seed));
  std::vector<uint8_t> full_support(grid.size(), 1);

  ExperimentResult result;
  for (size_t oi = 0; oi < test_set.size(); ++oi) {
    const TestObservation& t = test_set[oi];
    double closest = closest_grid_error(grid, t.ground_truth, points);
    double rand_full = expected_random_error(grid, full_support, t.ground_truth,
                                             points, 2000, 99 + oi);

    auto push = [&](const std::string& method, const std::string& ablation,
                    long best_index, const RigidTransform& predicted,
                    double entropy, double runtime_ms, double rand_err) {
      EvalRecord r;
      r.observation_id = "obs" + std::to_string(oi);
      r.method = method;
      r.ablation = ablation;
      r.direction = t.direction;
      r.best_index = best_index;
      r.pose_error_mm =
          pose_error(predicted, t.ground_truth, points.points, grid.symmetries);
      r.normalized_error = rand_err > 0 ? r.pose_error_mm / rand_err : 0.0;
      r.closest_grid_error_mm = closest;
      r.entropy = entropy;
      r.runtime_ms = runtime_ms;
      result.records.push_back(std::move(r));
    };

    for (const std::string& method : config.methods) {
      if (method == "embedding" && art.encoder && art.bank1) {
        LocalizeArtifacts la{art.grid, art.encoder, art.bank1, art.bank2,
                             &points};
        for (const std::string& ablation : config.ablations) {
          if (ablation == "single") {
            GraspObservation obs;
            obs.mask_1 = t.obs.mask_1;
            Timer timer;
            LocalizeResult res = localize(la, obs, PriorSpec::uniform(),
                                          config.sigma_opening_mm);
            push("embedding", "single", static_cast<long>(res.best_index),
                 grid.poses[res.best_index].transform, res.dist.entropy(),
                 timer.ms(), rand_full);
          } else if (ablation == "pj") {
            if (!art.bank2) continue;
            Timer timer;
            LocalizeResult res = localize(la, t.obs, PriorSpec::uniform(),
                                          config.sigma_opening_mm);
            push("embedding", "pj", static_cast<long>(res.best_index),
                 grid.poses[res.best_index].transform, res.dist.entropy(),
                 timer.ms(), rand_full);
          } else if (ablation == "pj+prior") {
            if (!art.bank2) continue;
            for (double radius : config.prior_radii_mm) {
              PriorSpec prior = PriorSpec::ball(t.ground_truth, radius);
              Timer timer;
              LocalizeResult res;
              try {
                res = localize(la, t.obs, prior, config.sigma_opening_mm);
              } catch (const ZeroPosterior&) {
                continue;  // prior excluded every grid pose
              }
              double ms = timer.ms();
              auto support = ball_support(grid, t.ground_truth, radius, points);
              double rand_filtered;
              try {
                rand_filtered = expected_random_error(grid, support,
                                                      t.ground_truth, points,
                                                      2000, 171 + oi);
              } catch (const EmptySupport&) {
                continue;
              }
              char name[32];
              std::snprintf(name, sizeof(name), "pj+prior%g", radius);
              push("embedding", name, static_cast<long>(res.best_index),
                   grid.poses[res.best_index].transform, res.dist.entropy(),
                   ms, rand_filtered);
            }
          }
        }
      } else if (method == "pixel") {
        for (const std::string& ablation : config.ablations) {
          if (ablation == "single") {
            Timer timer;
            PixelMatchResult res = pixel_match_single(grid, t.obs.mask_1);
            push("pixel", "single", static_cast<long>(res.best_index),
                 grid.poses[res.best_index].transform, 0.0, timer.ms(),
                 rand_full);
          } else if (ablation == "pj" && t.obs.mask_2 && t.obs.opening_mm) {
            Timer timer;
            PixelMatchPjResult res = pixel_match_pj(
                grid, t.obs.mask_1, *t.obs.mask_2, *t.obs.opening_mm);
            push("pixel", "pj", static_cast<long>(res.best_index),
                 grid.poses[res.best_index].transform, 0.0, timer.ms(),
                 rand_full);
          }
        }
      } else if (method == "classification" && art.classifier) {
        Timer timer;
        PoseDistribution dist = art.classifier->predict(t.obs.mask_1);
        size_t best = dist.argmax();
        push("classification", "single", static_cast<long>(best),
             grid.poses[best].transform, dist.entropy(), timer.ms(), rand_full);
      } else if (method == "pose_regression" && art.regressor) {
        Timer timer;
        RigidTransform predicted = art.regressor->predict(t.obs.mask_1);
        push("pose_regression", "single", -1, predicted, 0.0, timer.ms(),
             rand_full);
      }
    }
    if (verbose && (oi + 1) % 20 == 0) {
      std::fprintf(stderr, "evaluated %zu/%zu observations\n", oi + 1,
                   test_set.size());
    }
  }

  // Medians per (method, ablation) overall and per direction.
  std::map<std::tuple<std::string, std::string, int>,
           std::pair<std::vector<double>, std::vector<double>>>
      buckets;
  for (const auto& r : result.records) {
    auto add = [&](int dir) {
      auto& b = buckets[{r.method, r.ablation, dir}];
      b.first.push_back(r.pose_error_mm);
      b.second.push_back(r.normalized_error);
    };
    add(-1);
    add(r.direction);
  }
  for (auto& [key, vals] : buckets) {
    SummaryRow row;
    row.method = std::get<0>(key);
    row.ablation = std::get<1>(key);
    row.direction = std::get<2>(key);
    row.count = vals.first.size();
    row.median_error_mm = median(vals.first);
    row.median_normalized = median(vals.second);
    result.summary.push_back(std::move(row));
  }
  return result;
}

void write_records_csv(const std::vector<EvalRecord>& records,
                       const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw ConfigError("cannot write " + path.string());
  out << "observation_id,method,ablation,direction,best_index,pose_error_mm,"
         "normalized_error,closest_grid_error_mm,entropy,runtime_ms\n";
  char line[512];
  for (const auto& r : records) {
    std::snprintf(line, sizeof(line), "%s,%s,%s,%d,%ld,%.9g,%.9g,%.9g,%.9g,%.9g\n",
                  r.observation_id.c_str(), r.method.c_str(), r.ablation.c_str(),
                  r.direction, r.best_index, r.pose_error_mm,
                  r.normalized_error, r.closest_grid_error_mm, r.entropy,
                  r.runtime_ms);
    out << line;
  }
}

void write_summary_json(const ExperimentResult& result,
                        const std::filesystem::path& path) {
  json j;
  j["rows"] = json::array();
  for (const auto& s : result.summary) {
    j["rows"].push_back({{"method", s.method},
                         {"ablation", s.ablation},
                         {"direction", s.direction},
                         {"count", s.count},
                         {"median_error_mm", s.median_error_mm},
                         {"median_normalized", s.median_normalized}});
  }
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw ConfigError("cannot write " + path.string());
  out << j.dump(2) << "\n";
}

std::vector<DistributionMapRow> export_distribution_map(
    const PoseGrid& grid, const PoseDistribution& dist, int direction,
    int theta_index) {
  if (dist.size() != grid.size()) {
    throw DimensionMismatch("distribution length != grid size");
  }
  std::vector<DistributionMapRow> rows;
  for (size_t i = 0; i < grid.size(); ++i) {
    const auto& gc = grid.poses[i].grid_coords;
    if (!gc || gc->direction != direction || gc->theta_index != theta_index) {
      continue;
    }
    DistributionMapRow row;
    row.x_index = gc->x_index;
    row.y_index = gc->y_index;
    row.x_mm = gc->x_index * grid.spec.xy_resolution_mm;
    row.y_mm = gc->y_index * grid.spec.xy_resolution_mm;
    row.probability = dist.probs[i];
    rows.push_back(row);
  }
  return rows;
}

void write_distribution_map_csv(const std::vector<DistributionMapRow>& rows,
                                const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw ConfigError("cannot write " + path.string());
  out << "x_index,y_index,x_mm,y_mm,probability\n";
  char line[160];
  for (const auto& r : rows) {
    std::snprintf(line, sizeof(line), "%d,%d,%.9g,%.9g,%.12g\n", r.x_index,
                  r.y_index, r.x_mm, r.y_mm, r.probability);
    out << line;
  }
}

}  // namespace touchloc
