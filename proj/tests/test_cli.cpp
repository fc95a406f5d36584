#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cstdlib>
#include <fstream>
#include <json.hpp>
#include <sstream>

#include "testutil.hpp"
#include "touchloc/artifact.hpp"
#include "touchloc/pose_grid.hpp"

using namespace touchloc;
using nlohmann::json;

namespace {

struct RunResult {
  int exit_code;
  std::string out;
  std::string err;
};

RunResult run_cli(const std::string& args) {
  auto dir = testutil::make_temp_dir("cli_run");
  auto out_path = dir / "out.txt";
  auto err_path = dir / "err.txt";
  std::string cmd = std::string(TOUCHLOC_BIN) + " " + args + " > " +
                    out_path.string() + " 2> " + err_path.string();
  int status = std::system(cmd.c_str());
  auto slurp = [](const std::filesystem::path& p) {
    std::ifstream in(p);
    std::stringstream ss;
    ss << in.rdbuf();
    return ss.str();
  };
  return {WEXITSTATUS(status), slurp(out_path), slurp(err_path)};
}

std::string read_text(const std::filesystem::path& p) {
  std::ifstream in(p);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

// Shared end-to-end artifacts (built once).
struct Pipeline {
  std::filesystem::path work;
  std::filesystem::path grid_dir;
  std::filesystem::path ckpt;
  std::filesystem::path obs;

  Pipeline() {
    work = testutil::make_temp_dir("cli_pipeline");
    grid_dir = work / "grid";
    ckpt = work / "model.ckpt";

    std::string assets = TOUCHLOC_ASSETS;
    RunResult g = run_cli("grid build --object " + assets +
                          "/cube.json --out " + grid_dir.string() +
                          " --variant mini-one-face --jobs 1");
    REQUIRE(g.exit_code == 0);

    RunResult t = run_cli("train --grid " + grid_dir.string() + " --object " +
                          assets + "/cube.json --out " + ckpt.string() +
                          " --epochs 2 --samples 150 --batch 8 --dim 16 "
                          "--channels 4,8,8 --quiet");
    REQUIRE(t.exit_code == 0);

    // Observation: the exact mask of grid pose 4 with its opening.
    PoseGrid grid = load_grid(grid_dir);
    write_file_bytes(work / "mask1.bin", grid.masks[4].to_blob());
    write_file_bytes(work / "mask2.bin", grid.masks2[4].to_blob());
    json obs_json = {{"mask", "mask1.bin"},
                     {"mask2", "mask2.bin"},
                     {"opening_mm", grid.openings_mm[4]}};
    obs = work / "obs.json";
    std::ofstream(obs) << obs_json.dump(2);
  }
};

Pipeline& pipeline() {
  static Pipeline p;
  return p;
}

}  // namespace

TEST_CASE("help output matches the golden files") {
  struct Golden {
    const char* args;
    const char* file;
  };
  const Golden goldens[] = {
      {"--help", "help_root.txt"},
      {"grid build --help", "help_grid_build.txt"},
      {"train --help", "help_train.txt"},
      {"localize --help", "help_localize.txt"},
      {"baseline --help", "help_baseline.txt"},
      {"eval --help", "help_eval.txt"},
      {"bench --help", "help_bench.txt"},
  };
  for (const auto& g : goldens) {
    RunResult res = run_cli(g.args);
    CHECK(res.exit_code == 0);
    std::string expected =
        read_text(std::filesystem::path(TOUCHLOC_GOLDEN) / g.file);
    REQUIRE(!expected.empty());
    CHECK(res.out == expected);
  }
}

TEST_CASE("end-to-end: grid, train, localize on the bundled cube") {
  Pipeline& p = pipeline();
  auto out = p.work / "dist.json";
  RunResult r = run_cli("localize --grid " + p.grid_dir.string() + " --ckpt " +
                        p.ckpt.string() + " --obs " + p.obs.string() +
                        " --out " + out.string());
  CHECK(r.exit_code == 0);
  json dist = json::parse(read_text(out));
  CHECK(dist["best_index"].get<size_t>() == 4);
  CHECK(dist["top_k"].size() == 9);  // grid has 9 poses; top-k clamps
  double psum = 0;
  for (const auto& e : dist["top_k"]) psum += e["probability"].get<double>();
  CHECK(psum <= 1.0 + 1e-9);
}

TEST_CASE("localize with a ball prior through the flag syntax") {
  Pipeline& p = pipeline();
  PoseGrid grid = load_grid(p.grid_dir);
  Eigen::Quaterniond q(grid.poses[4].transform.rotation);
  Vec3 t = grid.poses[4].transform.translation;
  char prior[256];
  std::snprintf(prior, sizeof(prior), "ball:%g,%g,%g,%g,%g,%g,%g,%g", t.x(),
                t.y(), t.z(), q.w(), q.x(), q.y(), q.z(), 6.0);
  auto out = p.work / "dist_prior.json";
  std::string assets = TOUCHLOC_ASSETS;
  RunResult r = run_cli("localize --grid " + p.grid_dir.string() + " --ckpt " +
                        p.ckpt.string() + " --obs " + p.obs.string() +
                        " --object " + assets + "/cube.json --prior " + prior +
                        " --out " + out.string());
  CHECK(r.exit_code == 0);
  json dist = json::parse(read_text(out));
  CHECK(dist["best_index"].get<size_t>() == 4);
}

TEST_CASE("artifact mismatch exits with code 3") {
  Pipeline& p = pipeline();
  auto other_grid = p.work / "grid2";
  std::string assets = TOUCHLOC_ASSETS;
  auto cfg2 = p.work / "cube2.json";
  {
    json j = json::parse(read_text(std::filesystem::path(assets) / "cube.json"));
    j["xy_extents"] = {{-10, 10, -10, 10}};
    std::ofstream(cfg2) << j.dump(2);
    std::filesystem::copy_file(std::filesystem::path(assets) / "cube.obj",
                               p.work / "cube.obj",
                               std::filesystem::copy_options::skip_existing);
  }
  RunResult g = run_cli("grid build --object " + cfg2.string() + " --out " +
                        other_grid.string() + " --variant mini-one-face");
  REQUIRE(g.exit_code == 0);
  RunResult r = run_cli("localize --grid " + other_grid.string() + " --ckpt " +
                        p.ckpt.string() + " --obs " + p.obs.string() +
                        " --out " + (p.work / "x.json").string());
  CHECK(r.exit_code == 3);
  json err = json::parse(r.err);
  CHECK(err.contains("error"));
  CHECK(err["error"]["type"].get<std::string>() == "ArtifactMismatchError");
}

TEST_CASE("config errors exit with code 2") {
  RunResult r = run_cli("grid build --object /nonexistent.json --out /tmp/x");
  CHECK(r.exit_code == 2);
  json err = json::parse(r.err);
  CHECK(err["error"]["type"].get<std::string>() == "ConfigError");
}

TEST_CASE("pixel baseline CLI mirrors the localize schema") {
  Pipeline& p = pipeline();
  auto out = p.work / "pixel.json";
  RunResult r = run_cli("baseline pixel --grid " + p.grid_dir.string() +
                        " --obs " + p.obs.string() + " --out " + out.string());
  CHECK(r.exit_code == 0);
  json res = json::parse(read_text(out));
  CHECK(res["best_index"].get<size_t>() == 4);

  RunResult rpj = run_cli("baseline pixel --pj --grid " + p.grid_dir.string() +
                          " --obs " + p.obs.string() + " --out " + out.string());
  CHECK(rpj.exit_code == 0);
  json res2 = json::parse(read_text(out));
  CHECK(res2["best_index"].get<size_t>() == 4);
}

TEST_CASE("bench runs on a small synthetic bank") {
  RunResult r = run_cli(
      "bench --synthetic-rows 2000 --dim 64 --batch 8 --seconds 0.2");
  CHECK(r.exit_code == 0);
  json res = json::parse(r.out);
  CHECK(res["bank_rows"].get<size_t>() == 2000);
  CHECK(res["single_query_evals_per_s"].get<double>() > 0);
  CHECK(res["batched_evals_per_s"].get<double>() > 0);
}
