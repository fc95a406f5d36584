#pragma once

#include <array>
#include <filesystem>
#include <vector>

#include "touchloc/distribution.hpp"
#include "touchloc/embedding.hpp"
#include "touchloc/pose_grid.hpp"

namespace touchloc {

// Nine-element pose: translation (scaled) + the first two columns of the
// rotation matrix.
struct SixDofPoseLabel {
  Vec3 translation = Vec3::Zero();  // divided by translation_scale
  std::array<double, 6> rotation6d = {1, 0, 0, 0, 1, 0};  // column-major pair
};

SixDofPoseLabel encode_pose_label(const RigidTransform& pose,
                                  double translation_scale);
// Gram-Schmidt on the two columns; third column is their cross product.
Mat3 rotation_from_6d(const std::array<double, 6>& r6);
RigidTransform decode_pose_label(const SixDofPoseLabel& label,
                                 double translation_scale);

// --- Pixel comparison -------------------------------------------------------

struct PixelMatchResult {
  std::vector<double> scores;  // raw overlap counts, not probabilities
  size_t best_index = 0;
  bool all_tied = false;
};
// Most 1-pixels in common with the observed mask; ties to the lowest index.
PixelMatchResult pixel_match_single(const PoseGrid& grid,
                                    const ContactMask& mask);

struct PixelMatchPjResult {
  size_t best_index = 0;
  double best_score = 0;
  // Components at the best index: pixel errors and the opening term.
  double pixel_error_1 = 0, pixel_error_2 = 0, opening_term = 0;
};
// Sum of per-finger pixel disagreement rates plus the opening error
// normalized by the largest grid opening; lowest score wins.
PixelMatchPjResult pixel_match_pj(const PoseGrid& grid, const ContactMask& mask_1,
                                  const ContactMask& mask_2,
                                  double observed_opening_mm);

// --- Grid classification ----------------------------------------------------

class ClassificationModel {
 public:
  ClassificationModel(const EncoderConfig& config, size_t grid_size);

  PoseDistribution predict(const ContactMask& mask) const;
  size_t grid_size() const { return grid_size_; }
  const EncoderConfig& config() const { return config_; }

  void forward(const nn::Tensor<float>& input, nn::Workspace<float>& ws,
               std::vector<float>* logits) const;
  void backward(const std::vector<float>& dlogits, nn::Workspace<float>& ws);
  std::vector<nn::ParamRef<float>> params();

  std::string grid_hash;

 private:
  EncoderConfig config_;
  size_t grid_size_;
  nn::ConvStack<float> stack_;
  nn::Linear<float> head_;
};

ClassificationModel classification_train(const EncoderConfig& config,
                                         const PoseGrid& grid,
                                         const TrainingSampler& sampler,
                                         bool verbose = false);

// --- Direct pose regression -------------------------------------------------

class PoseRegressionModel {
 public:
  PoseRegressionModel(const EncoderConfig& config, double translation_scale);

  RigidTransform predict(const ContactMask& mask) const;
  double translation_scale() const { return translation_scale_; }
  const EncoderConfig& config() const { return config_; }

  void forward(const nn::Tensor<float>& input, nn::Workspace<float>& ws,
               std::vector<float>* out9) const;
  void backward(const std::vector<float>& dout9, nn::Workspace<float>& ws);
  std::vector<nn::ParamRef<float>> params();

  std::string grid_hash;

 private:
  EncoderConfig config_;
  double translation_scale_;
  nn::ConvStack<float> stack_;
  nn::Linear<float> head_;
};

PoseRegressionModel pose_regression_train(const EncoderConfig& config,
                                          const PoseGrid& grid,
                                          const TrainingSampler& sampler,
                                          bool verbose = false);

void save_classifier(const ClassificationModel& model,
                     const std::filesystem::path& path);
ClassificationModel load_classifier(const std::filesystem::path& path);
void save_pose_regressor(const PoseRegressionModel& model,
                         const std::filesystem::path& path);
PoseRegressionModel load_pose_regressor(const std::filesystem::path& path);

}  // namespace touchloc
