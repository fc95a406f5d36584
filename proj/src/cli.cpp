#include "touchloc/cli.hpp"

#include <CLI11.hpp>
#include <chrono>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <json.hpp>
#include <thread>

#include "touchloc/artifact.hpp"
#include "touchloc/baselines.hpp"
#include "touchloc/embedding.hpp"
#include "touchloc/errors.hpp"
#include "touchloc/evaluation.hpp"
#include "touchloc/fusion.hpp"
#include "touchloc/mesh_io.hpp"
#include "touchloc/pose_grid.hpp"

namespace touchloc {

namespace {

using nlohmann::json;

RenderConfig render_config_from_object_json(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open object config: " + path.string());
  json j;
  in >> j;
  RenderConfig r;
  if (j.contains("render")) {
    const auto& rj = j["render"];
    r.image_size = rj.value("image_size", r.image_size);
    r.supersample_size = rj.value("supersample_size", r.supersample_size);
    r.sensor_extent_x_mm = rj.value("sensor_extent_x_mm", r.sensor_extent_x_mm);
    r.sensor_extent_y_mm = rj.value("sensor_extent_y_mm", r.sensor_extent_y_mm);
    r.d_mm = rj.value("d_mm", r.d_mm);
    r.delta_d_mm = rj.value("delta_d_mm", r.delta_d_mm);
  }
  r.validate();
  return r;
}

ContactMask load_mask_file(const std::filesystem::path& path) {
  return ContactMask::from_blob(read_file_bytes(path));
}

GraspObservation load_observation(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open observation: " + path.string());
  json j;
  try {
    in >> j;
  } catch (const std::exception& e) {
    throw ConfigError("observation parse: " + std::string(e.what()));
  }
  GraspObservation obs;
  auto base = path.parent_path();
  if (!j.contains("mask")) throw ConfigError("observation missing 'mask'");
  obs.mask_1 = load_mask_file(base / j["mask"].get<std::string>());
  if (j.contains("mask2") && !j["mask2"].is_null()) {
    obs.mask_2 = load_mask_file(base / j["mask2"].get<std::string>());
  }
  if (j.contains("opening_mm") && !j["opening_mm"].is_null()) {
    obs.opening_mm = j["opening_mm"].get<double>();
  }
  if (j.contains("ground_truth_pose") && !j["ground_truth_pose"].is_null()) {
    Mat4 m;
    const auto& gm = j["ground_truth_pose"];
    for (int r = 0; r < 4; ++r)
      for (int c = 0; c < 4; ++c) m(r, c) = gm[r][c].get<double>();
    obs.ground_truth = RigidTransform::from_matrix(m);
  }
  obs.validate();
  return obs;
}

json pose_to_json(const RigidTransform& t) {
  Mat4 m = t.matrix();
  json rows = json::array();
  for (int r = 0; r < 4; ++r) {
    json row = json::array();
    for (int c = 0; c < 4; ++c) row.push_back(m(r, c));
    rows.push_back(row);
  }
  return rows;
}

PriorSpec parse_prior_flag(const std::string& text) {
  if (text.empty() || text == "uniform") return PriorSpec::uniform();
  if (text.rfind("ball:", 0) == 0) {
    std::vector<double> v;
    std::string rest = text.substr(5);
    size_t pos = 0;
    while (pos < rest.size()) {
      size_t comma = rest.find(',', pos);
      std::string tok = rest.substr(pos, comma == std::string::npos
                                             ? std::string::npos
                                             : comma - pos);
      try {
        v.push_back(std::stod(tok));
      } catch (...) {
        throw ConfigError("bad prior component '" + tok + "'");
      }
      if (comma == std::string::npos) break;
      pos = comma + 1;
    }
    if (v.size() != 8) {
      throw ConfigError("ball prior needs cx,cy,cz,qw,qx,qy,qz,r");
    }
    Eigen::Quaterniond q(v[3], v[4], v[5], v[6]);
    if (q.norm() < 1e-9) throw ConfigError("ball prior quaternion is zero");
    q.normalize();
    RigidTransform center;
    center.rotation = q.toRotationMatrix();
    center.translation = Vec3(v[0], v[1], v[2]);
    return PriorSpec::ball(center, v[7]);
  }
  throw ConfigError("prior must be 'uniform' or 'ball:cx,cy,cz,qw,qx,qy,qz,r'");
}

void write_distribution_json(const LocalizeResult& res, const PoseGrid& grid,
                             size_t top_k, const std::filesystem::path& path,
                             const std::filesystem::path& sidecar) {
  std::vector<size_t> order(res.dist.size());
  for (size_t i = 0; i < order.size(); ++i) order[i] = i;
  std::partial_sort(order.begin(),
                    order.begin() + static_cast<long>(
                                        std::min(top_k, order.size())),
                    order.end(), [&](size_t a, size_t b) {
                      if (res.dist.probs[a] != res.dist.probs[b]) {
                        return res.dist.probs[a] > res.dist.probs[b];
                      }
                      return a < b;
                    });
  json j;
  j["best_index"] = res.best_index;
  j["entropy"] = res.dist.entropy();
  j["warnings"] = res.warnings;
  j["top_k"] = json::array();
  for (size_t k = 0; k < std::min(top_k, order.size()); ++k) {
    size_t i = order[k];
    j["top_k"].push_back({{"index", i},
                          {"probability", res.dist.probs[i]},
                          {"pose", pose_to_json(grid.poses[i].transform)}});
  }
  if (!sidecar.empty()) {
    std::vector<uint8_t> bytes(res.dist.size() * 8);
    std::memcpy(bytes.data(), res.dist.probs.data(), bytes.size());
    write_file_bytes(sidecar, bytes);
    j["distribution_file"] = sidecar.filename().string();
  }
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw ConfigError("cannot write " + path.string());
  out << j.dump(2) << "\n";
}

struct CommonTrainFlags {
  int epochs = 15;
  uint64_t seed = 1;
  size_t samples = 2000;
  int batch = 16;
  int dim = 1000;
  double temperature = 0.07;
  double lr = 0.03;
  std::string channels = "8,16,32,32,32";
};

EncoderConfig encoder_config_from_flags(const CommonTrainFlags& f,
                                        const PoseGrid& grid) {
  EncoderConfig cfg;
  cfg.input_size = grid.render_config.image_size;
  cfg.embedding_dim = f.dim;
  cfg.temperature = f.temperature;
  cfg.epochs = f.epochs;
  cfg.lr_start = f.lr;
  cfg.batch_size = f.batch;
  cfg.samples_per_epoch = f.samples;
  cfg.seed = f.seed;
  cfg.channels.clear();
  size_t pos = 0;
  while (pos < f.channels.size()) {
    size_t comma = f.channels.find(',', pos);
    std::string tok = f.channels.substr(
        pos, comma == std::string::npos ? std::string::npos : comma - pos);
    try {
      cfg.channels.push_back(std::stoi(tok));
    } catch (...) {
      throw ConfigError("bad channel list '" + f.channels + "'");
    }
    if (comma == std::string::npos) break;
    pos = comma + 1;
  }
  cfg.validate();
  return cfg;
}

void add_train_flags(CLI::App* cmd, CommonTrainFlags* f) {
  cmd->add_option("--epochs", f->epochs, "Training epochs");
  cmd->add_option("--seed", f->seed, "Training seed");
  cmd->add_option("--samples", f->samples, "Samples per epoch");
  cmd->add_option("--batch", f->batch, "SGD batch size");
  cmd->add_option("--dim", f->dim, "Embedding dimension");
  cmd->add_option("--temperature", f->temperature, "Softmax temperature");
  cmd->add_option("--lr", f->lr, "Initial learning rate");
  cmd->add_option("--channels", f->channels, "Conv channels, comma-separated");
}

int cmd_grid(const std::filesystem::path& object_path,
             const std::filesystem::path& out, const std::string& variant,
             int jobs) {
  ObjectConfig ocfg = ObjectConfig::from_json_file(object_path);
  TriangleMesh mesh = load_object(ocfg);
  RenderConfig render = render_config_from_object_json(object_path);
  GridSpec spec = GridSpec::from_object(ocfg, mesh,
                                        grid_variant_from_string(variant),
                                        render);
  PoseGrid grid = build_grid(mesh, spec, render, jobs);
  save_grid(grid, out);
  std::printf("grid: %zu poses (variant %s) -> %s\nhash: %s\n", grid.size(),
              variant.c_str(), out.string().c_str(), grid.hash.c_str());
  return 0;
}

int cmd_train(const std::filesystem::path& grid_dir,
              const std::filesystem::path& object_path,
              const std::filesystem::path& out,
              const CommonTrainFlags& flags, bool quiet) {
  PoseGrid grid = load_grid(grid_dir);
  ObjectConfig ocfg = ObjectConfig::from_json_file(object_path);
  TriangleMesh mesh = load_object(ocfg);
  EncoderConfig cfg = encoder_config_from_flags(flags, grid);
  TrainingSampler sampler(grid, mesh, NoiseSpec{});
  TrainResult result = train_encoder(cfg, grid, sampler, !quiet);
  save_encoder(result.encoder, grid.hash, out);
  save_bank(result.bank, out.string() + ".bank1");
  EmbeddingBank bank2;
  bank2.grid_hash = grid.hash;
  bank2.matrix.resize(static_cast<Eigen::Index>(grid.size()),
                      cfg.embedding_dim);
  refresh_bank(result.encoder, grid.masks2, &bank2);
  save_bank(bank2, out.string() + ".bank2");
  double final_top1 =
      result.history.empty() ? 0.0 : result.history.back().holdout_top1;
  std::printf("trained encoder -> %s (holdout top-1 %.3f)\n",
              out.string().c_str(), final_top1);
  return 0;
}

int cmd_localize(const std::filesystem::path& grid_dir,
                 const std::filesystem::path& ckpt,
                 const std::filesystem::path& obs_path,
                 const std::filesystem::path& object_path,
                 const std::string& prior_text, double sigma_opening,
                 const std::filesystem::path& out, size_t top_k,
                 bool dump_distribution) {
  PoseGrid grid = load_grid(grid_dir);
  LoadedEncoder le = load_encoder(ckpt);
  if (le.grid_hash != grid.hash) {
    throw ArtifactMismatchError("checkpoint grid hash " + le.grid_hash +
                                " != grid " + grid.hash);
  }
  EmbeddingBank bank1 = load_bank(ckpt.string() + ".bank1");
  EmbeddingBank bank2;
  bool have_bank2 = std::filesystem::exists(ckpt.string() + ".bank2");
  if (have_bank2) bank2 = load_bank(ckpt.string() + ".bank2");
  GraspObservation obs = load_observation(obs_path);
  PriorSpec prior = parse_prior_flag(prior_text);

  std::optional<PointStats> points;
  if (prior.kind == PriorSpec::Kind::Ball) {
    if (object_path.empty()) {
      throw ConfigError("ball priors need --object for surface sampling");
    }
    ObjectConfig ocfg = ObjectConfig::from_json_file(object_path);
    TriangleMesh mesh = load_object(ocfg);
    points.emplace(sample_surface_points(mesh, 10000, 4242));
  }

  LocalizeArtifacts art;
  art.grid = &grid;
  art.encoder = &le.encoder;
  art.bank1 = &bank1;
  art.bank2 = have_bank2 ? &bank2 : nullptr;
  art.points = points ? &*points : nullptr;
  LocalizeResult res = localize(art, obs, prior, sigma_opening);
  write_distribution_json(res, grid, top_k, out,
                          dump_distribution
                              ? std::filesystem::path(out.string() + ".probs")
                              : std::filesystem::path());
  std::printf("best index %zu (p=%.4f) -> %s\n", res.best_index,
              res.dist.probs[res.best_index], out.string().c_str());
  return 0;
}

int cmd_bench(const std::filesystem::path& grid_dir,
              const std::filesystem::path& ckpt, size_t synthetic_rows,
              int dim, int batch, double seconds) {
  Encoder* encoder = nullptr;
  std::optional<LoadedEncoder> le;
  EmbeddingBank bank;
  std::optional<PoseGrid> grid;
  Rng rng(12345);
  std::vector<ContactMask> query_masks;
  RenderConfig rc;

  if (!grid_dir.empty()) {
    grid = load_grid(grid_dir);
    le = load_encoder(ckpt);
    if (le->grid_hash != grid->hash) {
      throw ArtifactMismatchError("checkpoint/grid hash mismatch");
    }
    encoder = &le->encoder;
    bank = load_bank(ckpt.string() + ".bank1");
    rc = grid->render_config;
    for (size_t i = 0; i < std::min<size_t>(grid->size(), 64); ++i) {
      query_masks.push_back(grid->masks[i]);
    }
  } else {
    EncoderConfig cfg;
    cfg.input_size = rc.image_size;
    cfg.embedding_dim = dim;
    le.emplace(LoadedEncoder{Encoder(cfg), "synthetic"});
    encoder = &le->encoder;
    bank.grid_hash = "synthetic";
    bank.matrix.resize(static_cast<Eigen::Index>(synthetic_rows), dim);
    for (Eigen::Index r = 0; r < bank.matrix.rows(); ++r) {
      double n2 = 0;
      for (int c = 0; c < dim; ++c) {
        double v = rng.normal();
        bank.matrix(r, c) = static_cast<float>(v);
        n2 += v * v;
      }
      bank.matrix.row(r) /= static_cast<float>(std::sqrt(n2));
    }
    // Random rectangle masks as queries.
    for (int i = 0; i < 64; ++i) {
      ContactMask m(rc.image_size, rc.image_size);
      int x0 = static_cast<int>(rng.uniform_index(rc.image_size / 2));
      int y0 = static_cast<int>(rng.uniform_index(rc.image_size / 2));
      int w = 20 + static_cast<int>(rng.uniform_index(rc.image_size / 2));
      int h = 20 + static_cast<int>(rng.uniform_index(rc.image_size / 2));
      for (int y = y0; y < std::min(y0 + h, rc.image_size); ++y)
        for (int x = x0; x < std::min(x0 + w, rc.image_size); ++x)
          m.set(x, y, true);
      query_masks.push_back(m);
    }
  }

  const double temperature = encoder->config().temperature;
  nn::Workspace<float> ws;
  auto run_single = [&](size_t i) {
    encoder->encode(query_masks[i % query_masks.size()], ws);
    PoseDistribution p = score(bank, ws.embedding, temperature);
    PoseDistribution fused = fuse({p});
    return fused.argmax();
  };

  // Warmup + single-query mode.
  size_t sink = run_single(0);
  auto t0 = std::chrono::steady_clock::now();
  size_t iters = 0;
  while (std::chrono::duration<double>(std::chrono::steady_clock::now() - t0)
             .count() < seconds) {
    sink += run_single(iters++);
  }
  double single_elapsed =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - t0)
          .count();
  double single_rate = iters / single_elapsed;

  // Batched mode: encode a batch, one GEMM against the bank, then per-column
  // softmax + fuse.
  const int b = std::max(1, batch);
  Eigen::MatrixXf queries(bank.matrix.cols(), b);
  t0 = std::chrono::steady_clock::now();
  size_t evals = 0;
  while (std::chrono::duration<double>(std::chrono::steady_clock::now() - t0)
             .count() < seconds) {
    for (int c = 0; c < b; ++c) {
      encoder->encode(query_masks[(evals + c) % query_masks.size()], ws);
      for (Eigen::Index r = 0; r < queries.rows(); ++r) {
        queries(r, c) = ws.embedding[static_cast<size_t>(r)];
      }
    }
    Eigen::MatrixXf logits = score_logits_batch(bank, queries);
    logits /= static_cast<float>(temperature);
    for (int c = 0; c < b; ++c) {
      Eigen::ArrayXf col = logits.col(c).array();
      float mx = col.maxCoeff();
      Eigen::ArrayXf ex = (col - mx).exp();
      double sum = ex.cast<double>().sum();
      PoseDistribution dist;
      dist.probs.resize(static_cast<size_t>(ex.size()));
      for (Eigen::Index i = 0; i < ex.size(); ++i) {
        dist.probs[static_cast<size_t>(i)] = ex[i] / sum;
      }
      PoseDistribution fused = fuse({dist});
      sink += fused.argmax();
    }
    evals += static_cast<size_t>(b);
  }
  double batch_elapsed =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - t0)
          .count();
  double batch_rate = evals / batch_elapsed;

  json j;
  j["bank_rows"] = bank.rows();
  j["bank_dim"] = bank.dim();
  j["single_query_evals_per_s"] = single_rate;
  j["batched_evals_per_s"] = batch_rate;
  j["batch"] = b;
  j["sustained_evals_per_s"] = std::max(single_rate, batch_rate);
  j["meets_50hz"] = std::max(single_rate, batch_rate) >= 50.0;
  j["checksum"] = sink;
  std::cout << j.dump(2) << std::endl;
  if (!j["meets_50hz"].get<bool>()) {
    std::fprintf(stderr, "throughput below 50 evaluations/second\n");
  }
  return 0;
}

int cmd_eval(const std::filesystem::path& spec_path) {
  std::ifstream in(spec_path);
  if (!in) throw ConfigError("cannot open experiment spec: " + spec_path.string());
  json j;
  try {
    in >> j;
  } catch (const std::exception& e) {
    throw ConfigError("experiment spec parse: " + std::string(e.what()));
  }
  auto base = spec_path.parent_path();
  auto path_of = [&](const std::string& key) -> std::filesystem::path {
    return j.contains(key) && !j[key].is_null()
               ? base / j[key].get<std::string>()
               : std::filesystem::path();
  };

  PoseGrid grid = load_grid(path_of("grid"));
  ObjectConfig ocfg = ObjectConfig::from_json_file(path_of("object"));
  TriangleMesh mesh = load_object(ocfg);

  std::optional<LoadedEncoder> le;
  std::optional<EmbeddingBank> bank1, bank2;
  if (!path_of("checkpoint").empty()) {
    le = load_encoder(path_of("checkpoint"));
    if (le->grid_hash != grid.hash) {
      throw ArtifactMismatchError("checkpoint/grid hash mismatch");
    }
    bank1 = load_bank(path_of("checkpoint").string() + ".bank1");
    if (std::filesystem::exists(path_of("checkpoint").string() + ".bank2")) {
      bank2 = load_bank(path_of("checkpoint").string() + ".bank2");
    }
  }
  std::optional<ClassificationModel> classifier;
  if (!path_of("classifier").empty()) {
    classifier = load_classifier(path_of("classifier"));
    if (classifier->grid_hash != grid.hash) {
      throw ArtifactMismatchError("classifier/grid hash mismatch");
    }
  }
  std::optional<PoseRegressionModel> regressor;
  if (!path_of("regressor").empty()) {
    regressor = load_pose_regressor(path_of("regressor"));
    if (regressor->grid_hash != grid.hash) {
      throw ArtifactMismatchError("regressor/grid hash mismatch");
    }
  }

  ExperimentConfig cfg;
  if (j.contains("methods")) cfg.methods = j["methods"].get<std::vector<std::string>>();
  if (j.contains("ablations")) {
    cfg.ablations = j["ablations"].get<std::vector<std::string>>();
  }
  if (j.contains("prior_radii_mm")) {
    cfg.prior_radii_mm = j["prior_radii_mm"].get<std::vector<double>>();
  }
  cfg.test_count = j.value("test_count", cfg.test_count);
  cfg.test_seed = j.value("test_seed", cfg.test_seed);
  cfg.sigma_opening_mm = j.value("sigma_opening_mm", cfg.sigma_opening_mm);
  cfg.eval_points = j.value("eval_points", cfg.eval_points);

  ExperimentArtifacts art;
  art.grid = &grid;
  art.mesh = &mesh;
  art.encoder = le ? &le->encoder : nullptr;
  art.bank1 = bank1 ? &*bank1 : nullptr;
  art.bank2 = bank2 ? &*bank2 : nullptr;
  art.classifier = classifier ? &*classifier : nullptr;
  art.regressor = regressor ? &*regressor : nullptr;

  auto out_dir = base / j.value("out_dir", std::string("eval_out"));
  std::filesystem::create_directories(out_dir);
  ExperimentResult result = run_experiment(art, cfg, true);
  write_records_csv(result.records, out_dir / "records.csv");
  write_summary_json(result, out_dir / "summary.json");

  // Distribution map of the first test observation's single-contact
  // posterior, sliced at the ground-truth direction and theta.
  if (art.encoder && art.bank1 && grid.size() > 0) {
    auto test_set = generate_test_set(grid, mesh, cfg.noise, 1, cfg.test_seed);
    PosteriorResult post = single_contact_posterior(*art.bank1, *art.encoder,
                                                    test_set[0].obs.mask_1);
    const auto& gc = grid.poses[test_set[0].source_index].grid_coords;
    auto rows = export_distribution_map(grid, post.dist,
                                        gc ? gc->direction : 0,
                                        gc ? gc->theta_index : 0);
    write_distribution_map_csv(rows, out_dir / "distribution_map.csv");
  }

  for (const auto& row : result.summary) {
    if (row.direction != -1) continue;
    std::printf("%-16s %-12s n=%-4zu median %.2f mm (%.3f normalized)\n",
                row.method.c_str(), row.ablation.c_str(), row.count,
                row.median_error_mm, row.median_normalized);
  }
  std::printf("records: %s\n", (out_dir / "records.csv").string().c_str());
  return 0;
}

}  // namespace

int run_cli(int argc, char** argv) {
  CLI::App app{"Simulation-grounded tactile pose estimation"};
  app.name("touchloc");
  app.require_subcommand(1);

  // grid build
  auto* grid_cmd = app.add_subcommand("grid", "Pose grid operations");
  grid_cmd->require_subcommand(1);
  auto* grid_build = grid_cmd->add_subcommand("build", "Build a contact pose grid");
  std::filesystem::path gb_object, gb_out;
  std::string gb_variant = "full";
  int gb_jobs = static_cast<int>(std::thread::hardware_concurrency());
  grid_build->add_option("--object", gb_object, "Object config JSON")->required();
  grid_build->add_option("--out", gb_out, "Output grid directory")->required();
  grid_build->add_option("--variant", gb_variant,
                         "full|one-face|bigger-mini-one-face|mini-one-face");
  grid_build->add_option("--jobs", gb_jobs, "Worker threads");

  // train
  auto* train_cmd = app.add_subcommand("train", "Train the contact embedding");
  std::filesystem::path tr_grid, tr_object, tr_out;
  CommonTrainFlags tr_flags;
  bool tr_quiet = false;
  train_cmd->add_option("--grid", tr_grid, "Grid directory")->required();
  train_cmd->add_option("--object", tr_object, "Object config JSON")->required();
  train_cmd->add_option("--out", tr_out, "Output checkpoint path")->required();
  add_train_flags(train_cmd, &tr_flags);
  train_cmd->add_flag("--quiet", tr_quiet, "Suppress per-epoch logs");

  // localize
  auto* loc_cmd = app.add_subcommand("localize", "Estimate a pose distribution");
  std::filesystem::path lc_grid, lc_ckpt, lc_obs, lc_out, lc_object;
  std::string lc_prior = "uniform";
  double lc_sigma = 1.0;
  size_t lc_topk = 10;
  bool lc_dump = false;
  loc_cmd->add_option("--grid", lc_grid, "Grid directory")->required();
  loc_cmd->add_option("--ckpt", lc_ckpt, "Encoder checkpoint")->required();
  loc_cmd->add_option("--obs", lc_obs, "Observation JSON")->required();
  loc_cmd->add_option("--out", lc_out, "Output JSON")->required();
  loc_cmd->add_option("--object", lc_object,
                      "Object config (needed for ball priors)");
  loc_cmd->add_option("--prior", lc_prior,
                      "uniform or ball:cx,cy,cz,qw,qx,qy,qz,r");
  loc_cmd->add_option("--sigma-opening", lc_sigma,
                      "Opening confidence sigma (mm)");
  loc_cmd->add_option("--top-k", lc_topk, "Top poses to report");
  loc_cmd->add_flag("--dump-distribution", lc_dump,
                    "Write the full probability vector as a binary sidecar");

  // baseline
  auto* base_cmd = app.add_subcommand("baseline", "Comparison methods");
  base_cmd->require_subcommand(1);

  auto* bp = base_cmd->add_subcommand("pixel", "Direct pixel comparison");
  std::filesystem::path bp_grid, bp_obs, bp_out;
  bool bp_pj = false;
  bp->add_option("--grid", bp_grid, "Grid directory")->required();
  bp->add_option("--obs", bp_obs, "Observation JSON")->required();
  bp->add_option("--out", bp_out, "Output JSON")->required();
  bp->add_flag("--pj", bp_pj, "Use both masks and the opening");

  auto* bct = base_cmd->add_subcommand("classify-train",
                                       "Train the grid classifier");
  std::filesystem::path bct_grid, bct_object, bct_out;
  CommonTrainFlags bct_flags;
  bct->add_option("--grid", bct_grid, "Grid directory")->required();
  bct->add_option("--object", bct_object, "Object config JSON")->required();
  bct->add_option("--out", bct_out, "Output checkpoint")->required();
  add_train_flags(bct, &bct_flags);

  auto* bc = base_cmd->add_subcommand("classify", "Classify a contact mask");
  std::filesystem::path bc_grid, bc_ckpt, bc_obs, bc_out;
  bc->add_option("--grid", bc_grid, "Grid directory")->required();
  bc->add_option("--ckpt", bc_ckpt, "Classifier checkpoint")->required();
  bc->add_option("--obs", bc_obs, "Observation JSON")->required();
  bc->add_option("--out", bc_out, "Output JSON")->required();

  auto* brt = base_cmd->add_subcommand("regress-train",
                                       "Train the direct pose regressor");
  std::filesystem::path brt_grid, brt_object, brt_out;
  CommonTrainFlags brt_flags;
  brt->add_option("--grid", brt_grid, "Grid directory")->required();
  brt->add_option("--object", brt_object, "Object config JSON")->required();
  brt->add_option("--out", brt_out, "Output checkpoint")->required();
  add_train_flags(brt, &brt_flags);

  auto* br = base_cmd->add_subcommand("regress", "Regress a pose directly");
  std::filesystem::path br_ckpt, br_obs, br_out;
  br->add_option("--ckpt", br_ckpt, "Regressor checkpoint")->required();
  br->add_option("--obs", br_obs, "Observation JSON")->required();
  br->add_option("--out", br_out, "Output JSON")->required();

  // eval
  auto* eval_cmd = app.add_subcommand("eval", "Run an experiment spec");
  std::filesystem::path ev_spec;
  eval_cmd->add_option("--spec", ev_spec, "Experiment spec JSON")->required();

  // bench
  auto* bench_cmd = app.add_subcommand("bench", "Throughput benchmark");
  std::filesystem::path bn_grid, bn_ckpt;
  size_t bn_rows = 100000;
  int bn_dim = 1000, bn_batch = 16;
  double bn_seconds = 3.0;
  bench_cmd->add_option("--grid", bn_grid, "Grid directory (with --ckpt)");
  bench_cmd->add_option("--ckpt", bn_ckpt, "Encoder checkpoint");
  bench_cmd->add_option("--synthetic-rows", bn_rows,
                        "Synthetic bank rows when no grid is given");
  bench_cmd->add_option("--dim", bn_dim, "Synthetic bank dimension");
  bench_cmd->add_option("--batch", bn_batch, "Batch size for sustained mode");
  bench_cmd->add_option("--seconds", bn_seconds, "Measurement window");

  try {
    app.parse(argc, argv);
    if (grid_build->parsed()) {
      return cmd_grid(gb_object, gb_out, gb_variant, gb_jobs);
    }
    if (train_cmd->parsed()) {
      return cmd_train(tr_grid, tr_object, tr_out, tr_flags, tr_quiet);
    }
    if (loc_cmd->parsed()) {
      return cmd_localize(lc_grid, lc_ckpt, lc_obs, lc_object, lc_prior,
                          lc_sigma, lc_out, lc_topk, lc_dump);
    }
    if (bp->parsed()) {
      PoseGrid grid = load_grid(bp_grid);
      GraspObservation obs = load_observation(bp_obs);
      json j;
      if (bp_pj) {
        if (!obs.mask_2 || !obs.opening_mm) {
          throw ConfigError("--pj needs mask2 and opening_mm in the observation");
        }
        PixelMatchPjResult res =
            pixel_match_pj(grid, obs.mask_1, *obs.mask_2, *obs.opening_mm);
        j["best_index"] = res.best_index;
        j["score"] = res.best_score;
        j["pose"] = pose_to_json(grid.poses[res.best_index].transform);
      } else {
        PixelMatchResult res = pixel_match_single(grid, obs.mask_1);
        j["best_index"] = res.best_index;
        j["all_tied"] = res.all_tied;
        j["pose"] = pose_to_json(grid.poses[res.best_index].transform);
      }
      std::ofstream out(bp_out, std::ios::trunc);
      out << j.dump(2) << "\n";
      return 0;
    }
    if (bct->parsed()) {
      PoseGrid grid = load_grid(bct_grid);
      ObjectConfig ocfg = ObjectConfig::from_json_file(bct_object);
      TriangleMesh mesh = load_object(ocfg);
      EncoderConfig cfg = encoder_config_from_flags(bct_flags, grid);
      TrainingSampler sampler(grid, mesh, NoiseSpec{});
      ClassificationModel model = classification_train(cfg, grid, sampler, true);
      save_classifier(model, bct_out);
      std::printf("trained classifier -> %s\n", bct_out.string().c_str());
      return 0;
    }
    if (bc->parsed()) {
      PoseGrid grid = load_grid(bc_grid);
      ClassificationModel model = load_classifier(bc_ckpt);
      if (model.grid_hash != grid.hash) {
        throw ArtifactMismatchError("classifier/grid hash mismatch");
      }
      GraspObservation obs = load_observation(bc_obs);
      PoseDistribution dist = model.predict(obs.mask_1);
      size_t best = dist.argmax();
      json j;
      j["best_index"] = best;
      j["probability"] = dist.probs[best];
      j["entropy"] = dist.entropy();
      j["pose"] = pose_to_json(grid.poses[best].transform);
      std::ofstream out(bc_out, std::ios::trunc);
      out << j.dump(2) << "\n";
      return 0;
    }
    if (brt->parsed()) {
      PoseGrid grid = load_grid(brt_grid);
      ObjectConfig ocfg = ObjectConfig::from_json_file(brt_object);
      TriangleMesh mesh = load_object(ocfg);
      EncoderConfig cfg = encoder_config_from_flags(brt_flags, grid);
      TrainingSampler sampler(grid, mesh, NoiseSpec{});
      PoseRegressionModel model = pose_regression_train(cfg, grid, sampler, true);
      save_pose_regressor(model, brt_out);
      std::printf("trained pose regressor -> %s\n", brt_out.string().c_str());
      return 0;
    }
    if (br->parsed()) {
      PoseRegressionModel model = load_pose_regressor(br_ckpt);
      GraspObservation obs = load_observation(br_obs);
      RigidTransform pose = model.predict(obs.mask_1);
      json j;
      j["pose"] = pose_to_json(pose);
      std::ofstream out(br_out, std::ios::trunc);
      out << j.dump(2) << "\n";
      return 0;
    }
    if (eval_cmd->parsed()) return cmd_eval(ev_spec);
    if (bench_cmd->parsed()) {
      return cmd_bench(bn_grid, bn_ckpt, bn_rows, bn_dim, bn_batch, bn_seconds);
    }
    return 0;
  } catch (const CLI::ParseError& e) {
    return app.exit(e);
  } catch (const Error& e) {
    json err;
    err["error"] = {{"type", e.type()}, {"message", e.what()}};
    std::cerr << err.dump() << std::endl;
    return static_cast<int>(e.code());
  } catch (const std::exception& e) {
    json err;
    err["error"] = {{"type", "RuntimeError"}, {"message", e.what()}};
    std::cerr << err.dump() << std::endl;
    return 4;
  }
}

}  // namespace touchloc
