#include "touchloc/embedding.hpp"

#include <cmath>
#include <cstdio>
#include <cstring>
#include <json.hpp>

#include "touchloc/artifact.hpp"
#include "touchloc/errors.hpp"

namespace touchloc {

using nlohmann::json;

void EncoderConfig::validate() const {
  if (input_size <= 0) throw ConfigError("encoder input_size must be positive");
  if (channels.empty()) throw ConfigError("encoder needs conv channels");
  if (embedding_dim < 2) throw ConfigError("embedding_dim must be >= 2");
  if (temperature <= 0) throw ConfigError("temperature must be positive");
  if (epochs < 0 || batch_size <= 0) throw ConfigError("bad training sizes");
  if (holdout_fraction < 0 || holdout_fraction >= 1) {
    throw ConfigError("holdout_fraction in [0, 1)");
  }
}

std::string EncoderConfig::to_json() const {
  json j;
  j["input_size"] = input_size;
  j["channels"] = channels;
  j["kernel"] = kernel;
  j["embedding_dim"] = embedding_dim;
  j["temperature"] = temperature;
  j["epochs"] = epochs;
  j["lr_start"] = lr_start;
  j["momentum"] = momentum;
  j["weight_decay"] = weight_decay;
  j["batch_size"] = batch_size;
  j["samples_per_epoch"] = samples_per_epoch;
  j["holdout_fraction"] = holdout_fraction;
  j["seed"] = seed;
  return j.dump();
}

EncoderConfig EncoderConfig::from_json(const std::string& text) {
  json j = json::parse(text);
  EncoderConfig c;
  c.input_size = j.at("input_size").get<int>();
  c.channels = j.at("channels").get<std::vector<int>>();
  c.kernel = j.at("kernel").get<int>();
  c.embedding_dim = j.at("embedding_dim").get<int>();
  c.temperature = j.at("temperature").get<double>();
  c.epochs = j.at("epochs").get<int>();
  c.lr_start = j.at("lr_start").get<double>();
  c.momentum = j.at("momentum").get<double>();
  c.weight_decay = j.at("weight_decay").get<double>();
  c.batch_size = j.at("batch_size").get<int>();
  c.samples_per_epoch = j.at("samples_per_epoch").get<size_t>();
  c.holdout_fraction = j.at("holdout_fraction").get<double>();
  c.seed = j.at("seed").get<uint64_t>();
  c.validate();
  return c;
}

Encoder::Encoder(const EncoderConfig& config)
    : config_(config),
      net_(config.channels, config.input_size, config.kernel,
           config.embedding_dim) {
  config_.validate();
  Rng rng(config_.seed);
  net_.init(rng);
}

void Encoder::forward(const nn::Tensor<float>& input,
                      nn::Workspace<float>& ws) const {
  if (input.h != config_.input_size || input.w != config_.input_size ||
      input.c != 1) {
    throw DimensionMismatch("encoder input must be 1x" +
                            std::to_string(config_.input_size) + "x" +
                            std::to_string(config_.input_size));
  }
  net_.forward(input, ws);
}

void Encoder::backward(const std::vector<float>& dembedding,
                       nn::Workspace<float>& ws) {
  net_.backward(dembedding, ws);
}

std::vector<float> Encoder::encode(const ContactMask& mask) const {
  nn::Workspace<float> ws;
  encode(mask, ws);
  return ws.embedding;
}

void Encoder::encode(const ContactMask& mask, nn::Workspace<float>& ws) const {
  nn::Tensor<float> input;
  nn::mask_to_tensor(mask, input);
  forward(input, ws);
}

std::vector<nn::ParamRef<float>> Encoder::params() { return net_.params(); }

size_t Encoder::param_count() const {
  size_t n = 0;
  for (auto& p : const_cast<Encoder*>(this)->params()) n += p.n;
  return n;
}

void Encoder::copy_params_to(std::vector<float>* out) const {
  out->clear();
  for (auto& p : const_cast<Encoder*>(this)->params()) {
    out->insert(out->end(), p.w, p.w + p.n);
  }
}

void Encoder::load_params(const std::vector<float>& flat) {
  size_t off = 0;
  for (auto& p : params()) {
    if (off + p.n > flat.size()) throw ParseError("checkpoint blob too short");
    std::copy(flat.begin() + static_cast<long>(off),
              flat.begin() + static_cast<long>(off + p.n), p.w);
    off += p.n;
  }
  if (off != flat.size()) throw ParseError("checkpoint blob size mismatch");
}

EmbeddingBank build_bank(const Encoder& encoder, const PoseGrid& grid) {
  EmbeddingBank bank;
  bank.grid_hash = grid.hash;
  bank.matrix.resize(static_cast<Eigen::Index>(grid.size()),
                     encoder.config().embedding_dim);
  refresh_bank(encoder, grid.masks, &bank);
  return bank;
}

void refresh_bank(const Encoder& encoder, const std::vector<ContactMask>& masks,
                  EmbeddingBank* bank) {
  if (static_cast<size_t>(bank->matrix.rows()) != masks.size()) {
    throw DimensionMismatch("bank rows != mask count");
  }
  nn::Workspace<float> ws;
  for (size_t i = 0; i < masks.size(); ++i) {
    encoder.encode(masks[i], ws);
    for (int j = 0; j < bank->matrix.cols(); ++j) {
      bank->matrix(static_cast<Eigen::Index>(i), j) = ws.embedding[j];
    }
  }
}

PoseDistribution score(const EmbeddingBank& bank,
                       const std::vector<float>& query, double temperature) {
  if (static_cast<size_t>(bank.matrix.cols()) != query.size()) {
    throw DimensionMismatch("query dim != bank dim");
  }
  if (temperature <= 0) throw ConfigError("temperature must be positive");
  Eigen::VectorXf logits(bank.matrix.rows());
  nn::det_matvec(bank.matrix.data(), bank.rows(), bank.dim(), query.data(),
                 logits.data());
  logits /= static_cast<float>(temperature);
  float mx = logits.size() ? logits.maxCoeff() : 0.f;
  Eigen::ArrayXf ex = (logits.array() - mx).exp();
  double sum = static_cast<double>(ex.cast<double>().sum());
  PoseDistribution dist;
  dist.grid_hash = bank.grid_hash;
  dist.probs.resize(static_cast<size_t>(ex.size()));
  for (Eigen::Index i = 0; i < ex.size(); ++i) {
    dist.probs[static_cast<size_t>(i)] = static_cast<double>(ex[i]) / sum;
  }
  return dist;
}

Eigen::MatrixXf score_logits_batch(const EmbeddingBank& bank,
                                   const Eigen::MatrixXf& queries) {
  if (queries.rows() != bank.matrix.cols()) {
    throw DimensionMismatch("query dim != bank dim");
  }
  return bank.matrix * queries;
}

TrainResult train_encoder(const EncoderConfig& config, const PoseGrid& grid,
                          const TrainingSampler& sampler, bool verbose) {
  config.validate();
  if (grid.size() == 0) throw EmptyGrid("training on empty grid");
  TrainResult result{Encoder(config), EmbeddingBank{}, {}};
  Encoder& enc = result.encoder;
  EmbeddingBank& bank = result.bank;
  bank.grid_hash = grid.hash;
  bank.matrix.resize(static_cast<Eigen::Index>(grid.size()),
                     config.embedding_dim);

  nn::SgdOptimizer<float> opt(enc.params(), config.momentum,
                              config.weight_decay);
  Rng sample_rng = Rng(config.seed).fork(101);
  Rng holdout_rng = Rng(config.seed).fork(202);

  // Held-out simulated samples, drawn once with an independent stream.
  size_t n_holdout = static_cast<size_t>(
      std::llround(config.holdout_fraction * config.samples_per_epoch));
  std::vector<ContactMask> holdout_masks;
  std::vector<size_t> holdout_labels;
  for (size_t i = 0; i < n_holdout; ++i) {
    TrainingSample s = sampler.draw(holdout_rng);
    holdout_masks.push_back(sampler.render(s));
    holdout_labels.push_back(s.label);
  }

  nn::Workspace<float> ws;
  nn::Tensor<float> input;
  std::vector<float> logits(grid.size()), dlogits(grid.size());
  std::vector<float> demb(config.embedding_dim);
  const float inv_t = static_cast<float>(1.0 / config.temperature);

  auto holdout_top1 = [&]() -> double {
    if (holdout_masks.empty()) return 0.0;
    size_t hits = 0;
    nn::Workspace<float> hws;
    std::vector<float> logits(grid.size());
    for (size_t i = 0; i < holdout_masks.size(); ++i) {
      enc.encode(holdout_masks[i], hws);
      nn::det_matvec(bank.matrix.data(), bank.rows(), bank.dim(),
                     hws.embedding.data(), logits.data());
      size_t am = 0;
      for (size_t g = 1; g < logits.size(); ++g) {
        if (logits[g] > logits[am]) am = g;
      }
      if (am == holdout_labels[i]) ++hits;
    }
    return static_cast<double>(hits) / holdout_masks.size();
  };

  refresh_bank(enc, grid.masks, &bank);
  for (int epoch = 0; epoch < config.epochs; ++epoch) {
    double lr = config.lr_start *
                (1.0 - static_cast<double>(epoch) / config.epochs);
    double loss_sum = 0;
    opt.zero_grad();
    int in_batch = 0;
    for (size_t step = 0; step < config.samples_per_epoch; ++step) {
      TrainingSample s = sampler.draw(sample_rng);
      ContactMask mask = sampler.render(s);
      nn::mask_to_tensor(mask, input);
      enc.forward(input, ws);
      nn::det_matvec(bank.matrix.data(), bank.rows(), bank.dim(),
                     ws.embedding.data(), logits.data());
      for (auto& v : logits) v *= inv_t;
      double loss = nn::cross_entropy_grad<float>(logits.data(), grid.size(),
                                                  s.label, dlogits.data());
      if (!std::isfinite(loss)) {
        throw DivergenceError(
            "training loss is not finite at epoch " + std::to_string(epoch) +
            " step " + std::to_string(step) +
            "; lower lr_start or raise the temperature");
      }
      loss_sum += loss;
      // dL/dq = bank^T dlogits / T (the queue is fixed within the epoch).
      std::fill(demb.begin(), demb.end(), 0.f);
      for (size_t g = 0; g < grid.size(); ++g) {
        nn::det_axpy(dlogits[g] * inv_t,
                     bank.matrix.data() + g * bank.dim(), demb.data(),
                     bank.dim());
      }
      enc.backward(demb, ws);
      if (++in_batch == config.batch_size ||
          step + 1 == config.samples_per_epoch) {
        opt.step(lr);
        opt.zero_grad();
        in_batch = 0;
      }
    }
    refresh_bank(enc, grid.masks, &bank);  // queue refresh, once per epoch
    EpochStats st;
    st.epoch = epoch;
    st.mean_loss = loss_sum / static_cast<double>(config.samples_per_epoch);
    st.holdout_top1 = holdout_top1();
    st.lr = lr;
    result.history.push_back(st);
    if (verbose) {
      std::fprintf(stderr, "epoch %d: loss %.4f holdout-top1 %.3f lr %.4f\n",
                   st.epoch, st.mean_loss, st.holdout_top1, st.lr);
    }
  }
  if (config.epochs == 0) refresh_bank(enc, grid.masks, &bank);
  return result;
}

namespace {

constexpr char kCkptMagic[4] = {'T', 'L', 'C', 'K'};
constexpr char kBankMagic[4] = {'T', 'L', 'B', 'K'};

void append_u32(std::vector<uint8_t>& out, uint32_t v) {
  const auto* p = reinterpret_cast<const uint8_t*>(&v);
  out.insert(out.end(), p, p + 4);
}

}  // namespace

void save_encoder(const Encoder& encoder, const std::string& grid_hash,
                  const std::filesystem::path& path) {
  json header;
  header["kind"] = "embedding";
  header["config"] = json::parse(encoder.config().to_json());
  header["grid_hash"] = grid_hash;
  header["param_count"] = encoder.param_count();
  std::string htext = header.dump();

  std::vector<uint8_t> out;
  out.insert(out.end(), kCkptMagic, kCkptMagic + 4);
  append_u32(out, 1);  // version
  append_u32(out, static_cast<uint32_t>(htext.size()));
  out.insert(out.end(), htext.begin(), htext.end());
  std::vector<float> flat;
  encoder.copy_params_to(&flat);
  const auto* p = reinterpret_cast<const uint8_t*>(flat.data());
  out.insert(out.end(), p, p + flat.size() * 4);
  write_file_bytes(path, out);
}

LoadedEncoder load_encoder(const std::filesystem::path& path) {
  auto bytes = read_file_bytes(path);
  if (bytes.size() < 12 || std::memcmp(bytes.data(), kCkptMagic, 4) != 0) {
    throw ParseError("not an encoder checkpoint: " + path.string());
  }
  uint32_t version, hlen;
  std::memcpy(&version, bytes.data() + 4, 4);
  std::memcpy(&hlen, bytes.data() + 8, 4);
  if (version != 1) throw ParseError("unsupported checkpoint version");
  if (bytes.size() < 12 + hlen) throw ParseError("checkpoint truncated");
  std::string htext(bytes.begin() + 12, bytes.begin() + 12 + hlen);
  json header = json::parse(htext);
  if (header.at("kind").get<std::string>() != "embedding") {
    throw ParseError("checkpoint kind is not 'embedding'");
  }
  EncoderConfig cfg = EncoderConfig::from_json(header.at("config").dump());
  size_t n = header.at("param_count").get<size_t>();
  if (bytes.size() != 12 + hlen + n * 4) {
    throw ParseError("checkpoint parameter blob size mismatch");
  }
  std::vector<float> flat(n);
  std::memcpy(flat.data(), bytes.data() + 12 + hlen, n * 4);
  LoadedEncoder out{Encoder(cfg), header.at("grid_hash").get<std::string>()};
  out.encoder.load_params(flat);
  return out;
}

void save_bank(const EmbeddingBank& bank, const std::filesystem::path& path) {
  json header;
  header["rows"] = bank.rows();
  header["dim"] = bank.dim();
  header["grid_hash"] = bank.grid_hash;
  std::string htext = header.dump();
  std::vector<uint8_t> out;
  out.insert(out.end(), kBankMagic, kBankMagic + 4);
  append_u32(out, 1);
  append_u32(out, static_cast<uint32_t>(htext.size()));
  out.insert(out.end(), htext.begin(), htext.end());
  const auto* p = reinterpret_cast<const uint8_t*>(bank.matrix.data());
  out.insert(out.end(), p, p + bank.rows() * bank.dim() * 4);
  write_file_bytes(path, out);
}

EmbeddingBank load_bank(const std::filesystem::path& path) {
  auto bytes = read_file_bytes(path);
  if (bytes.size() < 12 || std::memcmp(bytes.data(), kBankMagic, 4) != 0) {
    throw ParseError("not a bank file: " + path.string());
  }
  uint32_t version, hlen;
  std::memcpy(&version, bytes.data() + 4, 4);
  std::memcpy(&hlen, bytes.data() + 8, 4);
  if (version != 1) throw ParseError("unsupported bank version");
  std::string htext(bytes.begin() + 12, bytes.begin() + 12 + hlen);
  json header = json::parse(htext);
  size_t rows = header.at("rows").get<size_t>();
  size_t dim = header.at("dim").get<size_t>();
  if (bytes.size() != 12 + hlen + rows * dim * 4) {
    throw ParseError("bank data size mismatch");
  }
  EmbeddingBank bank;
  bank.grid_hash = header.at("grid_hash").get<std::string>();
  bank.matrix.resize(static_cast<Eigen::Index>(rows),
                     static_cast<Eigen::Index>(dim));
  std::memcpy(bank.matrix.data(), bytes.data() + 12 + hlen, rows * dim * 4);
  return bank;
}

}  // namespace touchloc
