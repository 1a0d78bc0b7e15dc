#include "liftcore/cli.hpp"

#include <catch2/catch_amalgamated.hpp>

#include <filesystem>
#include <fstream>

using namespace liftcore;
namespace fs = std::filesystem;

namespace {

fs::path temp_dir(const std::string& tag) {
  const fs::path p = fs::temp_directory_path() / ("liftcore_cli_" + tag);
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

int run_cli(std::initializer_list<std::string> args) {
  return cli::run(std::vector<std::string>(args));
}

}  // namespace

TEST_CASE("plan command writes a valid plan") {
  const auto dir = temp_dir("plan");
  const std::string out = (dir / "plan.json").string();
  REQUIRE(run_cli({"plan", "--l", "16", "--D", "4", "--step", "0.05", "--out", out}) == 0);
  const auto plan = io::read_plan_json(out);
  REQUIRE(plan.frame_count() == 109);
  fs::remove_all(dir);
}

TEST_CASE("unknown arguments exit nonzero") {
  REQUIRE(run_cli({"plan", "--bogus", "3"}) == 1);
  REQUIRE(run_cli({"noexist"}) == 1);
}

TEST_CASE("config loader rejects unknown keys and missing schema") {
  const auto dir = temp_dir("cfg");
  {
    std::ofstream f(dir / "bad1.json");
    f << R"({"plan": {"l": 4}})";
  }
  REQUIRE_THROWS_WITH(cli::load_config(dir / "bad1.json"),
                      Catch::Matchers::ContainsSubstring("schema_version"));
  {
    std::ofstream f(dir / "bad2.json");
    f << R"({"schema_version": 1, "train": {"vanila_iters": 5}})";
  }
  REQUIRE_THROWS_WITH(cli::load_config(dir / "bad2.json"),
                      Catch::Matchers::ContainsSubstring("vanila_iters"));
  {
    std::ofstream f(dir / "good.json");
    f << R"({"schema_version": 1, "plan": {"l": 3, "D": 2, "step": 0.1},
             "train": {"vanilla_iters": 7, "seed": 9},
             "field": {"hidden_dim": 4, "levels": [1]}})";
  }
  const auto cfg = cli::load_config(dir / "good.json");
  REQUIRE(cfg.l == 3);
  REQUIRE(cfg.train.vanilla_iters == 7);
  REQUIRE(cfg.train.seed == 9);
  REQUIRE(cfg.train.field.hidden_dim == 4);
  fs::remove_all(dir);
}

TEST_CASE("render command on an empty scene produces a background png") {
  const auto dir = temp_dir("render_empty");
  GaussianCloud empty;
  io::write_ply_gaussians(dir / "empty.ply", empty);
  const std::string out = (dir / "out.png").string();
  REQUIRE(run_cli({"render", "--gaussians", (dir / "empty.ply").string(), "--width", "16",
                   "--height", "12", "--focal", "20", "--out", out, "--background",
                   "0.25", "0.5", "0.75"}) == 0);
  const auto img = io::read_png(out);
  REQUIRE(img.width == 16);
  REQUIRE(img.height == 12);
  for (int y = 0; y < img.height; ++y)
    for (int x = 0; x < img.width; ++x) {
      REQUIRE(img.at(x, y, 0) == Catch::Approx(0.25).margin(1.0 / 255));
      REQUIRE(img.at(x, y, 1) == Catch::Approx(0.5).margin(1.0 / 255));
      REQUIRE(img.at(x, y, 2) == Catch::Approx(0.75).margin(1.0 / 255));
    }
  fs::remove_all(dir);
}

TEST_CASE("synth then match and register recover the manifest poses") {
  const auto dir = temp_dir("pipeline_poses");
  const std::string plan = (dir / "plan.json").string();
  const std::string data = (dir / "data").string();
  REQUIRE(run_cli({"plan", "--l", "3", "--D", "2", "--step", "0.06", "--out", plan}) == 0);
  REQUIRE(run_cli({"synth", "--plan", plan, "--out", data, "--distortion", "none",
                   "--width", "48", "--height", "48", "--focal", "45", "--seed", "3",
                   "--eval-views", "2"}) == 0);
  REQUIRE(run_cli({"match", "--data", data, "--out", (dir / "match.json").string()}) == 0);
  REQUIRE(run_cli({"register", "--data", data, "--match", (dir / "match.json").string(),
                   "--out-poses", (dir / "poses.json").string(), "--out-cloud",
                   (dir / "cloud.ply").string(), "--out-depth",
                   (data + "/depth_abs")}) == 0);

  const auto recovered = io::read_poses_json(dir / "poses.json");
  const auto gt = io::read_poses_json(fs::path(data) / "poses_gt.json");
  REQUIRE(recovered.poses.size() == gt.poses.size());
  for (const auto& [fid, pose] : gt.poses) {
    const auto& rec = recovered.poses.at(fid);
    REQUIRE((rec.R - pose.R).cwiseAbs().maxCoeff() < 1e-6);
    REQUIRE((rec.t - pose.t).norm() < 1e-6);
    REQUIRE(std::abs(recovered.scales.at(fid) - 1.0) < 1e-6);
  }
  // focal recovered from the root pointmap
  REQUIRE(std::abs(recovered.focal - 45.0) / 45.0 < 1e-3);
  fs::remove_all(dir);
}

TEST_CASE("the documented eight-command sequence completes") {
  setenv("LIFTCORE_THREADS", "2", 1);
  const auto dir = temp_dir("full_seq");
  const std::string plan = (dir / "plan.json").string();
  const std::string data = (dir / "data").string();
  const std::string match = (dir / "match.json").string();
  const std::string poses = (dir / "poses.json").string();
  const std::string cloud = (dir / "cloud.ply").string();
  const std::string depth_abs = data + "/depth_abs";
  const std::string depth_cal = data + "/depth_cal";
  const std::string model = (dir / "model").string();

  REQUIRE(run_cli({"plan", "--l", "2", "--D", "2", "--step", "0.05", "--out", plan}) == 0);
  REQUIRE(run_cli({"synth", "--plan", plan, "--out", data, "--distortion", "smooth-warp",
                   "--amplitude", "0.02", "--width", "40", "--height", "40", "--focal",
                   "38", "--seed", "11", "--eval-views", "2"}) == 0);
  REQUIRE(run_cli({"match", "--data", data, "--out", match}) == 0);
  REQUIRE(run_cli({"register", "--data", data, "--match", match, "--out-poses", poses,
                   "--out-cloud", cloud, "--out-depth", depth_abs}) == 0);
  REQUIRE(run_cli({"calibrate", "--data", data, "--depth-abs", depth_abs, "--out",
                   depth_cal}) == 0);
  REQUIRE(run_cli({"train", "--data", data, "--poses", poses, "--cloud", cloud,
                   "--depth-cal", depth_cal, "--out", model, "--vanilla-iters", "8",
                   "--field-iters", "8", "--max-points", "300", "--seed", "5"}) == 0);
  REQUIRE(run_cli({"render", "--gaussians", model + "/gaussians.ply", "--poses", poses,
                   "--frame-id", "0", "--width", "40", "--height", "40", "--out",
                   (dir / "render.png").string()}) == 0);
  REQUIRE(run_cli({"eval", "--data", data, "--gaussians", model + "/gaussians.ply",
                   "--poses", poses, "--out", (dir / "metrics.json").string(),
                   "--steps", "5"}) == 0);

  // all artifacts exist
  for (const std::string& p : std::initializer_list<std::string>
       {plan, match, poses, cloud, model + "/gaussians.ply", model + "/field.ckpt",
        model + "/metrics.jsonl", (dir / "render.png").string(),
        (dir / "metrics.json").string()})
    REQUIRE(fs::exists(p));

  // metrics json shape
  std::ifstream mf(dir / "metrics.json");
  const Json mj = Json::parse(mf);
  REQUIRE(mj.contains("mean_psnr"));
  REQUIRE(mj.at("views").size() == 2);

  // field checkpoint reloads and deforms the trained cloud
  const auto field = io::read_field_checkpoint(model + "/field.ckpt");
  const auto g = io::read_ply_gaussians(model + "/gaussians.ply");
  REQUIRE_NOTHROW(field.deform(g, FrameStamp{0.5, 0.0}));

  unsetenv("LIFTCORE_THREADS");
  fs::remove_all(dir);
}

TEST_CASE("missing inputs produce machine-parsable failures") {
  const auto dir = temp_dir("missing");
  REQUIRE(run_cli({"match", "--data", (dir / "nope").string(), "--out",
                   (dir / "m.json").string()}) == 1);
  REQUIRE(run_cli({"render", "--gaussians", (dir / "nope.ply").string(), "--out",
                   (dir / "o.png").string()}) == 1);
  fs::remove_all(dir);
}
