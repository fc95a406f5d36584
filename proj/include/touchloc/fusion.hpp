#pragma once

#include <optional>
#include <string>
#include <vector>

#include "touchloc/distribution.hpp"
#include "touchloc/embedding.hpp"
#include "touchloc/pose_grid.hpp"

namespace touchloc {

struct PriorSpec {
  enum class Kind { Uniform, Ball, Tabulated };
  Kind kind = Kind::Uniform;
  // Ball: keep grid poses within radius (symmetry-min pose error) of center.
  RigidTransform ball_center;
  double ball_radius_mm = 0;
  // Tabulated: unnormalized nonnegative weights, one per grid pose.
  std::vector<double> table;

  static PriorSpec uniform() { return {}; }
  static PriorSpec ball(const RigidTransform& center, double radius_mm);
  static PriorSpec tabulated(std::vector<double> weights);
};

struct GraspObservation {
  ContactMask mask_1;
  std::optional<ContactMask> mask_2;
  std::optional<double> opening_mm;
  std::optional<RigidTransform> ground_truth;  // evaluation only

  void validate() const;  // mask_2 present requires opening present
};

struct PosteriorResult {
  PoseDistribution dist;
  bool no_contact_warning = false;  // the query mask was empty
};

// score(bank, encode(mask)); empty masks still produce a valid distribution
// but set the warning flag.
PosteriorResult single_contact_posterior(const EmbeddingBank& bank,
                                         const Encoder& encoder,
                                         const ContactMask& mask);

// Elementwise product of the per-sensor posteriors, the optional opening
// factor, and the prior weights (empty = uniform), renormalized. Computed in
// log space with max subtraction.
PoseDistribution fuse(const std::vector<PoseDistribution>& posteriors,
                      const std::vector<double>* opening_factor = nullptr,
                      const std::vector<double>* prior_weights = nullptr);

// Posterior with the training-distribution correction:
//   P(x | C_1..C_N) ∝ Π_i P(x | C_i) * P_ta(x) / P_tr(x)^N.
// With uniform P_tr and P_ta this reduces to fuse().
PoseDistribution fuse_general(const std::vector<PoseDistribution>& posteriors,
                              const std::vector<double>& task_prior,
                              const std::vector<double>& train_prior, size_t n);

// Gaussian kernel on the opening discrepancy, unnormalized (1 at zero error).
std::vector<double> opening_likelihood(const std::vector<double>& grid_openings,
                                       double observed_mm, double sigma_mm);

// Zeroes out poses farther than radius (symmetry-min pose error) from the
// center and renormalizes.
PoseDistribution apply_prior_ball(const PoseDistribution& dist,
                                  const PoseGrid& grid,
                                  const RigidTransform& center,
                                  double radius_mm, const PointStats& points);

struct LocalizeArtifacts {
  const PoseGrid* grid = nullptr;
  const Encoder* encoder = nullptr;
  const EmbeddingBank* bank1 = nullptr;
  const EmbeddingBank* bank2 = nullptr;   // needed for mask_2 observations
  const PointStats* points = nullptr;     // needed for ball priors
};

struct LocalizeResult {
  PoseDistribution dist;
  size_t best_index = 0;
  std::vector<std::string> warnings;
};

// Composes the single-contact posteriors for every available mask, the
// opening factor when an opening is observed, and the prior; best match is
// the argmax (ties to the lowest index). Poses without a second-finger
// contact carry zero weight in the second factor.
LocalizeResult localize(const LocalizeArtifacts& art,
                        const GraspObservation& obs, const PriorSpec& prior,
                        double sigma_opening_mm = 1.0);

}  // namespace touchloc
