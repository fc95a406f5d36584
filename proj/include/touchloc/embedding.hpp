#pragma once

#include <Eigen/Core>
#include <filesystem>
#include <string>
#include <vector>

#include "touchloc/distribution.hpp"
#include "touchloc/nn.hpp"
#include "touchloc/pose_grid.hpp"

namespace touchloc {

struct EncoderConfig {
  int input_size = 160;
  std::vector<int> channels = {8, 16, 32, 32, 32};
  int kernel = 3;
  int embedding_dim = 1000;
  double temperature = 0.07;
  int epochs = 15;
  double lr_start = 0.03;
  double momentum = 0.9;
  double weight_decay = 0.0;
  int batch_size = 16;
  size_t samples_per_epoch = 2000;
  double holdout_fraction = 0.10;
  uint64_t seed = 1;

  void validate() const;
  std::string to_json() const;
  static EncoderConfig from_json(const std::string& text);
};

// Fully-convolutional encoder with a final projection to a unit vector.
class Encoder {
 public:
  explicit Encoder(const EncoderConfig& config);

  const EncoderConfig& config() const { return config_; }

  // Deterministic unit-norm embedding. The workspace overload is the
  // allocation-free path for hot loops; one workspace per thread.
  std::vector<float> encode(const ContactMask& mask) const;
  void encode(const ContactMask& mask, nn::Workspace<float>& ws) const;

  // Forward from an already-prepared input tensor (training path).
  void forward(const nn::Tensor<float>& input, nn::Workspace<float>& ws) const;
  // Backward from a gradient on the unit embedding.
  void backward(const std::vector<float>& dembedding, nn::Workspace<float>& ws);

  std::vector<nn::ParamRef<float>> params();
  size_t param_count() const;
  void copy_params_to(std::vector<float>* out) const;
  void load_params(const std::vector<float>& flat);

 private:
  EncoderConfig config_;
  nn::EmbedNet<float> net_;
};

// The fixed queue: one unit-norm row per grid pose.
struct EmbeddingBank {
  Eigen::Matrix<float, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor> matrix;
  std::string grid_hash;

  size_t rows() const { return static_cast<size_t>(matrix.rows()); }
  size_t dim() const { return static_cast<size_t>(matrix.cols()); }
};

EmbeddingBank build_bank(const Encoder& encoder, const PoseGrid& grid);
// Re-encodes masks into an existing bank layout (queue refresh).
void refresh_bank(const Encoder& encoder, const std::vector<ContactMask>& masks,
                  EmbeddingBank* bank);

// softmax(bank * query / temperature).
PoseDistribution score(const EmbeddingBank& bank,
                       const std::vector<float>& query, double temperature);

// Raw similarity logits for a batch of queries (columns); used by the
// throughput benchmark and batch evaluation.
Eigen::MatrixXf score_logits_batch(const EmbeddingBank& bank,
                                   const Eigen::MatrixXf& queries);

struct EpochStats {
  int epoch = 0;
  double mean_loss = 0;
  double holdout_top1 = 0;
  double lr = 0;
};

struct TrainResult {
  Encoder encoder;
  EmbeddingBank bank;
  std::vector<EpochStats> history;
};

// Contrastive training against the fixed queue: cross-entropy between
// softmax(bank . encode(mask) / T) and the one-hot nearest-grid label, SGD
// with momentum and a linearly decaying learning rate, queue re-encoded once
// per epoch. Deterministic for a fixed config seed.
TrainResult train_encoder(const EncoderConfig& config, const PoseGrid& grid,
                          const TrainingSampler& sampler, bool verbose = false);

// Versioned checkpoint: JSON header (config, kind, grid hash) + f32 blob.
void save_encoder(const Encoder& encoder, const std::string& grid_hash,
                  const std::filesystem::path& path);
struct LoadedEncoder {
  Encoder encoder;
  std::string grid_hash;
};
LoadedEncoder load_encoder(const std::filesystem::path& path);

void save_bank(const EmbeddingBank& bank, const std::filesystem::path& path);
EmbeddingBank load_bank(const std::filesystem::path& path);

}  // namespace touchloc
