#pragma once

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "touchloc/baselines.hpp"
#include "touchloc/fusion.hpp"
#include "touchloc/pose_grid.hpp"

namespace touchloc {

struct EvalRecord {
  std::string observation_id;
  std::string method;    // embedding | pixel | classification | pose_regression
  std::string ablation;  // single | pj | pj+prior10 | ...
  int direction = 0;
  long best_index = -1;  // -1 when the method predicts a pose directly
  double pose_error_mm = 0;
  double normalized_error = 0;
  double closest_grid_error_mm = 0;
  double entropy = 0;
  double runtime_ms = 0;
};

// Monte-Carlo mean pose error of a uniformly drawn supported grid pose
// against the ground truth; exact enumeration when the support is small.
double expected_random_error(const PoseGrid& grid,
                             const std::vector<uint8_t>& support,
                             const RigidTransform& ground_truth,
                             const PointStats& points, size_t n_samples = 2000,
                             uint64_t seed = 99);

double closest_grid_error(const PoseGrid& grid,
                          const RigidTransform& ground_truth,
                          const PointStats& points);

// Simulated grasp: a noised grid pose with both finger masks and the opening.
struct TestObservation {
  GraspObservation obs;
  RigidTransform ground_truth;
  size_t source_index = 0;
  int direction = 0;
};

std::vector<TestObservation> generate_test_set(const PoseGrid& grid,
                                               const TriangleMesh& mesh,
                                               const NoiseSpec& noise,
                                               size_t count, uint64_t seed);

struct ExperimentConfig {
  std::vector<std::string> methods = {"embedding", "pixel", "classification",
                                      "pose_regression"};
  std::vector<std::string> ablations = {"single", "pj", "pj+prior"};
  std::vector<double> prior_radii_mm = {10.0, 5.0};
  size_t test_count = 100;
  uint64_t test_seed = 7001;
  double sigma_opening_mm = 1.0;
  size_t eval_points = 10000;
  uint64_t eval_points_seed = 4242;
  NoiseSpec noise;
};

struct ExperimentArtifacts {
  const PoseGrid* grid = nullptr;
  const TriangleMesh* mesh = nullptr;
  const Encoder* encoder = nullptr;          // embedding method
  const EmbeddingBank* bank1 = nullptr;
  const EmbeddingBank* bank2 = nullptr;
  const ClassificationModel* classifier = nullptr;
  const PoseRegressionModel* regressor = nullptr;
};

struct SummaryRow {
  std::string method;
  std::string ablation;
  int direction = -1;  // -1 aggregates all directions
  size_t count = 0;
  double median_error_mm = 0;
  double median_normalized = 0;
};

struct ExperimentResult {
  std::vector<EvalRecord> records;
  std::vector<SummaryRow> summary;
};

ExperimentResult run_experiment(const ExperimentArtifacts& art,
                                const ExperimentConfig& config,
                                bool verbose = false);

// Re-runs an experiment on an externally generated test set (shared across
// methods for apples-to-apples comparisons).
ExperimentResult run_experiment_on(const ExperimentArtifacts& art,
                                   const ExperimentConfig& config,
                                   const std::vector<TestObservation>& test_set,
                                   bool verbose = false);

void write_records_csv(const std::vector<EvalRecord>& records,
                       const std::filesystem::path& path);
void write_summary_json(const ExperimentResult& result,
                        const std::filesystem::path& path);

double median(std::vector<double> values);

// (x, y, probability) rows for a fixed (direction, theta) slice of the grid.
struct DistributionMapRow {
  int x_index = 0, y_index = 0;
  double x_mm = 0, y_mm = 0;
  double probability = 0;
};
std::vector<DistributionMapRow> export_distribution_map(
    const PoseGrid& grid, const PoseDistribution& dist, int direction,
    int theta_index);
void write_distribution_map_csv(const std::vector<DistributionMapRow>& rows,
                                const std::filesystem::path& path);

}  // namespace touchloc
