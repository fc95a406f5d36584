#include "touchloc/baselines.hpp"

#include <cmath>
#include <cstdio>
#include <cstring>
#include <json.hpp>
#include <limits>

#include "touchloc/artifact.hpp"
#include "touchloc/errors.hpp"

namespace touchloc {

using nlohmann::json;

SixDofPoseLabel encode_pose_label(const RigidTransform& pose,
                                  double translation_scale) {
  if (translation_scale <= 0) throw ConfigError("translation scale must be > 0");
  SixDofPoseLabel out;
  out.translation = pose.translation / translation_scale;
  const Mat3& r = pose.rotation;
  out.rotation6d = {r(0, 0), r(1, 0), r(2, 0), r(0, 1), r(1, 1), r(2, 1)};
  return out;
}

Mat3 rotation_from_6d(const std::array<double, 6>& r6) {
  Vec3 a1(r6[0], r6[1], r6[2]);
  Vec3 a2(r6[3], r6[4], r6[5]);
  double n1 = a1.norm();
  if (n1 < 1e-12) throw ConfigError("degenerate 6d rotation (zero first column)");
  Vec3 b1 = a1 / n1;
  Vec3 a2p = a2 - b1.dot(a2) * b1;
  double n2 = a2p.norm();
  if (n2 < 1e-12) throw ConfigError("degenerate 6d rotation (collinear columns)");
  Vec3 b2 = a2p / n2;
  Vec3 b3 = b1.cross(b2);
  Mat3 r;
  r.col(0) = b1;
  r.col(1) = b2;
  r.col(2) = b3;
  return r;
}

RigidTransform decode_pose_label(const SixDofPoseLabel& label,
                                 double translation_scale) {
  RigidTransform t;
  t.rotation = rotation_from_6d(label.rotation6d);
  t.translation = label.translation * translation_scale;
  return t;
}

PixelMatchResult pixel_match_single(const PoseGrid& grid,
                                    const ContactMask& mask) {
  if (grid.size() == 0) throw EmptyGrid("pixel match on empty grid");
  PixelMatchResult out;
  out.scores.resize(grid.size());
  for (size_t i = 0; i < grid.size(); ++i) {
    out.scores[i] = static_cast<double>(mask_and_count(mask, grid.masks[i]));
  }
  out.best_index = 0;
  bool tied = true;
  for (size_t i = 0; i < out.scores.size(); ++i) {
    if (out.scores[i] > out.scores[out.best_index]) out.best_index = i;
    if (out.scores[i] != out.scores[0]) tied = false;
  }
  out.all_tied = tied;
  if (tied) out.best_index = 0;
  return out;
}

PixelMatchPjResult pixel_match_pj(const PoseGrid& grid, const ContactMask& mask_1,
                                  const ContactMask& mask_2,
                                  double observed_opening_mm) {
  if (grid.size() == 0) throw EmptyGrid("pixel match on empty grid");
  double w_scale = 0;
  for (double w : grid.openings_mm) w_scale = std::max(w_scale, w);
  w_scale = std::max(w_scale, 1e-9);
  const double n_px = static_cast<double>(mask_1.width()) * mask_1.height();
  PixelMatchPjResult out;
  double best = std::numeric_limits<double>::infinity();
  for (size_t i = 0; i < grid.size(); ++i) {
    if (!grid.has_second_contact[i]) continue;
    double pe1 = static_cast<double>(mask_xor_count(mask_1, grid.masks[i])) / n_px;
    double pe2 = static_cast<double>(mask_xor_count(mask_2, grid.masks2[i])) / n_px;
    double ow = std::abs(observed_opening_mm - grid.openings_mm[i]) / w_scale;
    double score = pe1 + pe2 + ow;
    if (score < best) {
      best = score;
      out.best_index = i;
      out.best_score = score;
      out.pixel_error_1 = pe1;
      out.pixel_error_2 = pe2;
      out.opening_term = ow;
    }
  }
  if (!std::isfinite(best)) {
    throw EmptyGrid("no grid pose has a second-finger contact");
  }
  return out;
}

namespace {

int feature_size_for(const EncoderConfig& c) {
  int dim = c.input_size;
  for (size_t i = 0; i < c.channels.size(); ++i) {
    dim = (dim + 2 * (c.kernel / 2) - c.kernel) / 2 + 1;
  }
  if (dim <= 0) throw ConfigError("conv stack collapses below 1x1");
  return c.channels.back() * dim * dim;
}

}  // namespace

ClassificationModel::ClassificationModel(const EncoderConfig& config,
                                         size_t grid_size)
    : config_(config),
      grid_size_(grid_size),
      stack_(1, config.channels, config.input_size, config.kernel, 2),
      head_(feature_size_for(config), static_cast<int>(grid_size)) {
  config_.validate();
  if (grid_size == 0) throw EmptyGrid("classifier over empty grid");
  Rng rng(config_.seed);
  stack_.init(rng);
  head_.init(rng);
}

void ClassificationModel::forward(const nn::Tensor<float>& input,
                                  nn::Workspace<float>& ws,
                                  std::vector<float>* logits) const {
  stack_.forward(input, ws);
  logits->resize(grid_size_);
  head_.forward(ws.feature.data(), logits->data());
}

void ClassificationModel::backward(const std::vector<float>& dlogits,
                                   nn::Workspace<float>& ws) {
  ws.dfeat.resize(ws.feature.size());
  head_.backward(ws.feature.data(), dlogits.data(), ws.dfeat.data());
  stack_.backward(ws.dfeat, ws);
}

std::vector<nn::ParamRef<float>> ClassificationModel::params() {
  auto p = stack_.params();
  auto hp = head_.params();
  p.insert(p.end(), hp.begin(), hp.end());
  return p;
}

PoseDistribution ClassificationModel::predict(const ContactMask& mask) const {
  nn::Workspace<float> ws;
  nn::Tensor<float> input;
  nn::mask_to_tensor(mask, input);
  std::vector<float> logits;
  forward(input, ws, &logits);
  double mx = *std::max_element(logits.begin(), logits.end());
  double sum = 0;
  PoseDistribution dist;
  dist.grid_hash = grid_hash;
  dist.probs.resize(logits.size());
  for (size_t i = 0; i < logits.size(); ++i) {
    dist.probs[i] = std::exp(static_cast<double>(logits[i]) - mx);
    sum += dist.probs[i];
  }
  for (double& p : dist.probs) p /= sum;
  return dist;
}

ClassificationModel classification_train(const EncoderConfig& config,
                                         const PoseGrid& grid,
                                         const TrainingSampler& sampler,
                                         bool verbose) {
  ClassificationModel model(config, grid.size());
  model.grid_hash = grid.hash;
  nn::SgdOptimizer<float> opt(model.params(), config.momentum,
                              config.weight_decay);
  Rng rng = Rng(config.seed).fork(303);
  nn::Workspace<float> ws;
  nn::Tensor<float> input;
  std::vector<float> logits, dlogits(grid.size());
  for (int epoch = 0; epoch < config.epochs; ++epoch) {
    double lr = config.lr_start *
                (1.0 - static_cast<double>(epoch) / config.epochs);
    double loss_sum = 0;
    opt.zero_grad();
    int in_batch = 0;
    for (size_t step = 0; step < config.samples_per_epoch; ++step) {
      TrainingSample s = sampler.draw(rng);
      ContactMask mask = sampler.render(s);
      nn::mask_to_tensor(mask, input);
      model.forward(input, ws, &logits);
      double loss = nn::cross_entropy_grad<float>(logits.data(), grid.size(),
                                                  s.label, dlogits.data());
      if (!std::isfinite(loss)) {
        throw DivergenceError("classification loss diverged at epoch " +
                              std::to_string(epoch));
      }
      loss_sum += loss;
      model.backward(dlogits, ws);
      if (++in_batch == config.batch_size ||
          step + 1 == config.samples_per_epoch) {
        opt.step(lr);
        opt.zero_grad();
        in_batch = 0;
      }
    }
    if (verbose) {
      std::fprintf(stderr, "classification epoch %d: loss %.4f\n", epoch,
                   loss_sum / static_cast<double>(config.samples_per_epoch));
    }
  }
  return model;
}

PoseRegressionModel::PoseRegressionModel(const EncoderConfig& config,
                                         double translation_scale)
    : config_(config),
      translation_scale_(translation_scale),
      stack_(1, config.channels, config.input_size, config.kernel, 2),
      head_(feature_size_for(config), 9) {
  config_.validate();
  if (translation_scale <= 0) throw ConfigError("translation scale must be > 0");
  Rng rng(config_.seed);
  stack_.init(rng);
  head_.init(rng);
}

void PoseRegressionModel::forward(const nn::Tensor<float>& input,
                                  nn::Workspace<float>& ws,
                                  std::vector<float>* out9) const {
  stack_.forward(input, ws);
  out9->resize(9);
  head_.forward(ws.feature.data(), out9->data());
}

void PoseRegressionModel::backward(const std::vector<float>& dout9,
                                   nn::Workspace<float>& ws) {
  ws.dfeat.resize(ws.feature.size());
  head_.backward(ws.feature.data(), dout9.data(), ws.dfeat.data());
  stack_.backward(ws.dfeat, ws);
}

std::vector<nn::ParamRef<float>> PoseRegressionModel::params() {
  auto p = stack_.params();
  auto hp = head_.params();
  p.insert(p.end(), hp.begin(), hp.end());
  return p;
}

RigidTransform PoseRegressionModel::predict(const ContactMask& mask) const {
  nn::Workspace<float> ws;
  nn::Tensor<float> input;
  nn::mask_to_tensor(mask, input);
  std::vector<float> out9;
  forward(input, ws, &out9);
  SixDofPoseLabel label;
  label.translation = Vec3(out9[0], out9[1], out9[2]);
  label.rotation6d = {out9[3], out9[4], out9[5], out9[6], out9[7], out9[8]};
  return decode_pose_label(label, translation_scale_);
}

PoseRegressionModel pose_regression_train(const EncoderConfig& config,
                                          const PoseGrid& grid,
                                          const TrainingSampler& sampler,
                                          bool verbose) {
  // Translation target scaled by the grid's pose spread so both halves of the
  // nine-element loss are commensurate.
  double scale = 0;
  for (const auto& p : grid.poses) scale = std::max(scale, p.transform.translation.norm());
  scale = std::max(scale * 2.0, 1.0);
  PoseRegressionModel model(config, scale);
  model.grid_hash = grid.hash;
  nn::SgdOptimizer<float> opt(model.params(), config.momentum,
                              config.weight_decay);
  Rng rng = Rng(config.seed).fork(404);
  nn::Workspace<float> ws;
  nn::Tensor<float> input;
  std::vector<float> out9, dout9(9);
  for (int epoch = 0; epoch < config.epochs; ++epoch) {
    double lr = config.lr_start *
                (1.0 - static_cast<double>(epoch) / config.epochs);
    double loss_sum = 0;
    opt.zero_grad();
    int in_batch = 0;
    for (size_t step = 0; step < config.samples_per_epoch; ++step) {
      TrainingSample s = sampler.draw(rng);
      ContactMask mask = sampler.render(s);
      nn::mask_to_tensor(mask, input);
      model.forward(input, ws, &out9);
      SixDofPoseLabel target = encode_pose_label(s.pose.transform, scale);
      float t9[9] = {static_cast<float>(target.translation.x()),
                     static_cast<float>(target.translation.y()),
                     static_cast<float>(target.translation.z()),
                     static_cast<float>(target.rotation6d[0]),
                     static_cast<float>(target.rotation6d[1]),
                     static_cast<float>(target.rotation6d[2]),
                     static_cast<float>(target.rotation6d[3]),
                     static_cast<float>(target.rotation6d[4]),
                     static_cast<float>(target.rotation6d[5])};
      double loss = 0;
      for (int i = 0; i < 9; ++i) {
        float diff = out9[i] - t9[i];
        loss += static_cast<double>(diff) * diff / 9.0;
        dout9[i] = 2.0f * diff / 9.0f;
      }
      if (!std::isfinite(loss)) {
        throw DivergenceError("pose regression loss diverged at epoch " +
                              std::to_string(epoch));
      }
      loss_sum += loss;
      model.backward(dout9, ws);
      if (++in_batch == config.batch_size ||
          step + 1 == config.samples_per_epoch) {
        opt.step(lr);
        opt.zero_grad();
        in_batch = 0;
      }
    }
    if (verbose) {
      std::fprintf(stderr, "pose regression epoch %d: loss %.6f\n", epoch,
                   loss_sum / static_cast<double>(config.samples_per_epoch));
    }
  }
  return model;
}

namespace {

constexpr char kCkptMagic[4] = {'T', 'L', 'C', 'K'};

void append_u32(std::vector<uint8_t>& out, uint32_t v) {
  const auto* p = reinterpret_cast<const uint8_t*>(&v);
  out.insert(out.end(), p, p + 4);
}

template <typename Model>
void save_model(Model& model, const std::string& kind, const json& extra,
                const std::filesystem::path& path) {
  json header;
  header["kind"] = kind;
  header["config"] = json::parse(model.config().to_json());
  header["grid_hash"] = model.grid_hash;
  for (auto it = extra.begin(); it != extra.end(); ++it) {
    header[it.key()] = it.value();
  }
  size_t count = 0;
  std::vector<float> flat;
  for (auto& p : model.params()) {
    flat.insert(flat.end(), p.w, p.w + p.n);
    count += p.n;
  }
  header["param_count"] = count;
  std::string htext = header.dump();
  std::vector<uint8_t> out;
  out.insert(out.end(), kCkptMagic, kCkptMagic + 4);
  append_u32(out, 1);
  append_u32(out, static_cast<uint32_t>(htext.size()));
  out.insert(out.end(), htext.begin(), htext.end());
  const auto* p = reinterpret_cast<const uint8_t*>(flat.data());
  out.insert(out.end(), p, p + flat.size() * 4);
  write_file_bytes(path, out);
}

json read_model_header(const std::vector<uint8_t>& bytes,
                       const std::string& kind, size_t* blob_offset) {
  if (bytes.size() < 12 || std::memcmp(bytes.data(), kCkptMagic, 4) != 0) {
    throw ParseError("not a model checkpoint");
  }
  uint32_t version, hlen;
  std::memcpy(&version, bytes.data() + 4, 4);
  std::memcpy(&hlen, bytes.data() + 8, 4);
  if (version != 1) throw ParseError("unsupported checkpoint version");
  if (bytes.size() < 12 + hlen) throw ParseError("checkpoint truncated");
  json header = json::parse(std::string(bytes.begin() + 12,
                                        bytes.begin() + 12 + hlen));
  if (header.at("kind").get<std::string>() != kind) {
    throw ParseError("checkpoint kind mismatch: expected " + kind);
  }
  *blob_offset = 12 + hlen;
  return header;
}

template <typename Model>
void load_blob_into(Model& model, const std::vector<uint8_t>& bytes,
                    size_t offset, size_t count) {
  if (bytes.size() != offset + count * 4) {
    throw ParseError("checkpoint blob size mismatch");
  }
  std::vector<float> flat(count);
  std::memcpy(flat.data(), bytes.data() + offset, count * 4);
  size_t off = 0;
  for (auto& p : model.params()) {
    if (off + p.n > flat.size()) throw ParseError("checkpoint blob too short");
    std::copy(flat.begin() + static_cast<long>(off),
              flat.begin() + static_cast<long>(off + p.n), p.w);
    off += p.n;
  }
  if (off != flat.size()) throw ParseError("checkpoint layout mismatch");
}

}  // namespace

void save_classifier(const ClassificationModel& model,
                     const std::filesystem::path& path) {
  auto& m = const_cast<ClassificationModel&>(model);
  save_model(m, "classification", json{{"grid_size", model.grid_size()}}, path);
}

ClassificationModel load_classifier(const std::filesystem::path& path) {
  auto bytes = read_file_bytes(path);
  size_t off;
  json header = read_model_header(bytes, "classification", &off);
  EncoderConfig cfg = EncoderConfig::from_json(header.at("config").dump());
  ClassificationModel model(cfg, header.at("grid_size").get<size_t>());
  model.grid_hash = header.at("grid_hash").get<std::string>();
  load_blob_into(model, bytes, off, header.at("param_count").get<size_t>());
  return model;
}

void save_pose_regressor(const PoseRegressionModel& model,
                         const std::filesystem::path& path) {
  auto& m = const_cast<PoseRegressionModel&>(model);
  save_model(m, "pose_regression",
             json{{"translation_scale", model.translation_scale()}}, path);
}

PoseRegressionModel load_pose_regressor(const std::filesystem::path& path) {
  auto bytes = read_file_bytes(path);
  size_t off;
  json header = read_model_header(bytes, "pose_regression", &off);
  EncoderConfig cfg = EncoderConfig::from_json(header.at("config").dump());
  PoseRegressionModel model(cfg, header.at("translation_scale").get<double>());
  model.grid_hash = header.at("grid_hash").get<std::string>();
  load_blob_into(model, bytes, off, header.at("param_count").get<size_t>());
  return model;
}

}  // namespace touchloc
