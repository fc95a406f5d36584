#include "touchloc/fusion.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "touchloc/errors.hpp"

namespace touchloc {

PriorSpec PriorSpec::ball(const RigidTransform& center, double radius_mm) {
  PriorSpec p;
  p.kind = Kind::Ball;
  p.ball_center = center;
  p.ball_radius_mm = radius_mm;
  return p;
}

PriorSpec PriorSpec::tabulated(std::vector<double> weights) {
  for (double w : weights) {
    if (!(w >= 0) || !std::isfinite(w)) {
      throw ConfigError("tabulated prior must be nonnegative and finite");
    }
  }
  PriorSpec p;
  p.kind = Kind::Tabulated;
  p.table = std::move(weights);
  return p;
}

void GraspObservation::validate() const {
  if (mask_2.has_value() && !opening_mm.has_value()) {
    throw ConfigError("a second contact mask requires the gripper opening");
  }
}

PosteriorResult single_contact_posterior(const EmbeddingBank& bank,
                                         const Encoder& encoder,
                                         const ContactMask& mask) {
  PosteriorResult out;
  out.no_contact_warning = mask.count() == 0;
  out.dist = score(bank, encoder.encode(mask), encoder.config().temperature);
  return out;
}

namespace {

PoseDistribution normalize_log_weights(std::vector<double> logw,
                                       const std::string& grid_hash) {
  double mx = -std::numeric_limits<double>::infinity();
  for (double v : logw) mx = std::max(mx, v);
  if (!std::isfinite(mx)) {
    throw ZeroPosterior(
        "all posterior mass annihilated (contradictory evidence or an "
        "overtight prior)");
  }
  double sum = 0;
  for (double& v : logw) {
    v = std::exp(v - mx);
    sum += v;
  }
  PoseDistribution out;
  out.grid_hash = grid_hash;
  out.probs.resize(logw.size());
  for (size_t i = 0; i < logw.size(); ++i) out.probs[i] = logw[i] / sum;
  return out;
}

double safe_log(double v) {
  return v > 0 ? std::log(v) : -std::numeric_limits<double>::infinity();
}

}  // namespace

PoseDistribution fuse(const std::vector<PoseDistribution>& posteriors,
                      const std::vector<double>* opening_factor,
                      const std::vector<double>* prior_weights) {
  if (posteriors.empty()) throw ConfigError("fuse needs at least one posterior");
  const size_t n = posteriors[0].size();
  for (const auto& p : posteriors) {
    if (p.size() != n) throw DimensionMismatch("posterior lengths differ");
  }
  if (opening_factor && opening_factor->size() != n) {
    throw DimensionMismatch("opening factor length");
  }
  if (prior_weights && !prior_weights->empty() && prior_weights->size() != n) {
    throw DimensionMismatch("prior length");
  }
  std::vector<double> logw(n, 0.0);
  for (const auto& p : posteriors) {
    for (size_t i = 0; i < n; ++i) logw[i] += safe_log(p.probs[i]);
  }
  if (opening_factor) {
    for (size_t i = 0; i < n; ++i) logw[i] += safe_log((*opening_factor)[i]);
  }
  if (prior_weights && !prior_weights->empty()) {
    for (size_t i = 0; i < n; ++i) logw[i] += safe_log((*prior_weights)[i]);
  }
  return normalize_log_weights(std::move(logw), posteriors[0].grid_hash);
}

PoseDistribution fuse_general(const std::vector<PoseDistribution>& posteriors,
                              const std::vector<double>& task_prior,
                              const std::vector<double>& train_prior,
                              size_t n_sensors) {
  if (posteriors.empty()) throw ConfigError("fuse_general needs posteriors");
  if (n_sensors != posteriors.size()) {
    throw ConfigError("n_sensors must equal the posterior count");
  }
  const size_t n = posteriors[0].size();
  for (const auto& p : posteriors) {
    if (p.size() != n) throw DimensionMismatch("posterior lengths differ");
  }
  if (!task_prior.empty() && task_prior.size() != n) {
    throw DimensionMismatch("task prior length");
  }
  if (!train_prior.empty() && train_prior.size() != n) {
    throw DimensionMismatch("train prior length");
  }
  for (double v : train_prior) {
    if (!(v > 0)) {
      throw InvalidTrainingPrior("P_tr must be strictly positive on the grid");
    }
  }
  std::vector<double> logw(n, 0.0);
  for (const auto& p : posteriors) {
    for (size_t i = 0; i < n; ++i) logw[i] += safe_log(p.probs[i]);
  }
  if (!task_prior.empty()) {
    for (size_t i = 0; i < n; ++i) logw[i] += safe_log(task_prior[i]);
  }
  if (!train_prior.empty()) {
    double nd = static_cast<double>(n_sensors);
    for (size_t i = 0; i < n; ++i) logw[i] -= nd * std::log(train_prior[i]);
  }
  return normalize_log_weights(std::move(logw), posteriors[0].grid_hash);
}

std::vector<double> opening_likelihood(const std::vector<double>& grid_openings,
                                       double observed_mm, double sigma_mm) {
  if (sigma_mm <= 0) throw ConfigError("sigma_opening must be positive");
  std::vector<double> out(grid_openings.size());
  double inv = 1.0 / (2.0 * sigma_mm * sigma_mm);
  for (size_t i = 0; i < out.size(); ++i) {
    double d = grid_openings[i] - observed_mm;
    out[i] = std::exp(-d * d * inv);
  }
  return out;
}

PoseDistribution apply_prior_ball(const PoseDistribution& dist,
                                  const PoseGrid& grid,
                                  const RigidTransform& center,
                                  double radius_mm, const PointStats& points) {
  if (radius_mm <= 0) throw ConfigError("prior radius must be positive");
  if (dist.size() != grid.size()) {
    throw DimensionMismatch("distribution length != grid size");
  }
  std::vector<double> logw(dist.size());
  for (size_t i = 0; i < dist.size(); ++i) {
    double err = pose_error(grid.poses[i].transform, center, points.points,
                            grid.symmetries);
    logw[i] = err <= radius_mm ? safe_log(dist.probs[i])
                               : -std::numeric_limits<double>::infinity();
  }
  return normalize_log_weights(std::move(logw), dist.grid_hash);
}

LocalizeResult localize(const LocalizeArtifacts& art,
                        const GraspObservation& obs, const PriorSpec& prior,
                        double sigma_opening_mm) {
  if (!art.grid || !art.encoder || !art.bank1) {
    throw ConfigError("localize needs grid, encoder, and bank");
  }
  obs.validate();
  if (art.bank1->grid_hash != art.grid->hash) {
    throw ArtifactMismatchError("bank was built from a different grid");
  }
  LocalizeResult out;
  std::vector<PoseDistribution> posteriors;

  PosteriorResult p1 = single_contact_posterior(*art.bank1, *art.encoder,
                                                obs.mask_1);
  if (p1.no_contact_warning) out.warnings.push_back("mask_1 has no contact");
  posteriors.push_back(std::move(p1.dist));

  if (obs.mask_2.has_value()) {
    if (!art.bank2) throw ConfigError("second mask requires the sensor-2 bank");
    if (art.bank2->grid_hash != art.grid->hash) {
      throw ArtifactMismatchError("sensor-2 bank was built from a different grid");
    }
    PosteriorResult p2 = single_contact_posterior(*art.bank2, *art.encoder,
                                                  *obs.mask_2);
    if (p2.no_contact_warning) out.warnings.push_back("mask_2 has no contact");
    // Poses that do not touch the second finger are not valid hypotheses for
    // a two-contact observation.
    for (size_t i = 0; i < p2.dist.size(); ++i) {
      if (!art.grid->has_second_contact[i]) p2.dist.probs[i] = 0.0;
    }
    posteriors.push_back(std::move(p2.dist));
  }

  std::vector<double> opening;
  const std::vector<double>* opening_ptr = nullptr;
  if (obs.opening_mm.has_value()) {
    opening = opening_likelihood(art.grid->openings_mm, *obs.opening_mm,
                                 sigma_opening_mm);
    opening_ptr = &opening;
  }

  std::vector<double> prior_weights;
  switch (prior.kind) {
    case PriorSpec::Kind::Uniform:
      break;
    case PriorSpec::Kind::Tabulated:
      prior_weights = prior.table;
      break;
    case PriorSpec::Kind::Ball: {
      if (!art.points) throw ConfigError("ball prior requires surface points");
      prior_weights.assign(art.grid->size(), 0.0);
      for (size_t i = 0; i < art.grid->size(); ++i) {
        double err = pose_error(art.grid->poses[i].transform, prior.ball_center,
                                art.points->points, art.grid->symmetries);
        prior_weights[i] = err <= prior.ball_radius_mm ? 1.0 : 0.0;
      }
      break;
    }
  }
  out.dist = fuse(posteriors, opening_ptr,
                  prior_weights.empty() ? nullptr : &prior_weights);
  out.best_index = out.dist.argmax();
  return out;
}

}  // namespace touchloc
