#include "liftcore/io.hpp"

#include <catch2/catch_amalgamated.hpp>

#include <filesystem>
#include <fstream>

using namespace liftcore;
namespace fs = std::filesystem;

namespace {

fs::path temp_dir(const std::string& tag) {
  const fs::path p = fs::temp_directory_path() / ("liftcore_io_" + tag);
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

std::string slurp(const fs::path& p) {
  std::ifstream f(p, std::ios::binary);
  return std::string((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());
}

}  // namespace

TEST_CASE("pfm round trips bit-exactly") {
  const auto dir = temp_dir("pfm");
  Rng rng(101);
  for (int trial = 0; trial < 20; ++trial) {
    io::PfmData pfm;
    pfm.width = 3 + static_cast<int>(rng.uniform_index(20));
    pfm.height = 2 + static_cast<int>(rng.uniform_index(20));
    pfm.channels = trial % 2 == 0 ? 1 : 3;
    pfm.data.resize(static_cast<size_t>(pfm.width) * pfm.height * pfm.channels);
    for (auto& v : pfm.data) v = static_cast<float>(rng.normal() * 10.0);
    const fs::path p = dir / ("t" + std::to_string(trial) + ".pfm");
    io::write_pfm(p, pfm);
    const auto back = io::read_pfm(p);
    REQUIRE(back.width == pfm.width);
    REQUIRE(back.height == pfm.height);
    REQUIRE(back.channels == pfm.channels);
    REQUIRE(back.data.size() == pfm.data.size());
    for (size_t i = 0; i < pfm.data.size(); ++i)
      REQUIRE(std::memcmp(&back.data[i], &pfm.data[i], 4) == 0);
    // write-after-read is byte identical
    const fs::path p2 = dir / "again.pfm";
    io::write_pfm(p2, back);
    REQUIRE(slurp(p) == slurp(p2));
  }
  fs::remove_all(dir);
}

TEST_CASE("png round trips 8-bit content") {
  const auto dir = temp_dir("png");
  Rng rng(102);
  Image img(13, 9, 3);
  for (auto& v : img.data) v = std::round(rng.uniform() * 255.0) / 255.0;
  io::write_png(dir / "a.png", img);
  const auto back = io::read_png(dir / "a.png");
  REQUIRE(back.width == img.width);
  REQUIRE(back.height == img.height);
  REQUIRE(back.channels == 3);
  for (size_t i = 0; i < img.data.size(); ++i)
    REQUIRE(back.data[i] == Catch::Approx(img.data[i]).margin(1e-12));
  fs::remove_all(dir);
}

TEST_CASE("gaussian ply round trips") {
  const auto dir = temp_dir("gply");
  Rng rng(103);

  // Build a cloud from float32-representable raw fields so the file layer
  // round trips exactly.
  GaussianCloud g;
  const int n = 50;
  g.resize(n);
  for (int i = 0; i < n; ++i) {
    for (int c = 0; c < 3; ++c) {
      g.centers[i](c) = static_cast<float>(rng.normal());
      g.scales[i](c) = std::exp(static_cast<double>(static_cast<float>(rng.uniform(-3, 0))));
      g.colors_sh[i](c) = static_cast<float>(rng.normal());
    }
    const float logit = static_cast<float>(rng.uniform(-3, 3));
    g.opacities[i] = 1.0 / (1.0 + std::exp(-static_cast<double>(logit)));
    Quat q(static_cast<float>(1 + rng.normal()), static_cast<float>(rng.normal()),
           static_cast<float>(rng.normal()), static_cast<float>(rng.normal()));
    g.rotations[i] = q;  // stored raw; reader normalizes
  }
  io::write_ply_gaussians(dir / "g.ply", g);
  const auto back = io::read_ply_gaussians(dir / "g.ply");
  REQUIRE(back.size() == g.size());

  // write-after-read must produce an identical file
  io::write_ply_gaussians(dir / "g2.ply", back);
  io::write_ply_gaussians(dir / "g3.ply", io::read_ply_gaussians(dir / "g2.ply"));
  REQUIRE(slurp(dir / "g2.ply") == slurp(dir / "g3.ply"));

  for (int i = 0; i < n; ++i) {
    REQUIRE((back.centers[i] - g.centers[i]).cwiseAbs().maxCoeff() < 1e-6);
    REQUIRE(std::abs(back.opacities[i] - g.opacities[i]) < 1e-6);
  }
  fs::remove_all(dir);
}

TEST_CASE("point ply round trips") {
  const auto dir = temp_dir("pply");
  Rng rng(104);
  std::vector<MergedPoint> cloud(30);
  for (auto& p : cloud) {
    for (int c = 0; c < 3; ++c) {
      p.position(c) = static_cast<float>(rng.normal() * 3);
      p.color(c) = std::round(rng.uniform() * 255.0) / 255.0;
    }
    p.confidence = static_cast<float>(rng.uniform());
    p.source_frame_id = static_cast<int>(rng.uniform_index(20));
  }
  io::write_ply_points(dir / "c.ply", cloud);
  const auto back = io::read_ply_points(dir / "c.ply");
  REQUIRE(back.size() == cloud.size());
  io::write_ply_points(dir / "c2.ply", back);
  REQUIRE(slurp(dir / "c.ply") == slurp(dir / "c2.ply"));
  fs::remove_all(dir);
}

TEST_CASE("pose json round trips values exactly") {
  const auto dir = temp_dir("poses");
  Rng rng(105);
  io::PoseDocument doc;
  doc.focal = 123.456789012345;
  for (int i = 0; i < 7; ++i) {
    Pose p;
    p.R = quat_to_matrix(Quat(1 + rng.normal(), rng.normal(), rng.normal(), rng.normal()));
    p.t = rng.normal3();
    doc.poses[i] = p;
    doc.scales[i] = rng.uniform(0.5, 2.0);
  }
  io::write_poses_json(dir / "p.json", doc);
  const auto back = io::read_poses_json(dir / "p.json");
  REQUIRE(back.focal == doc.focal);
  for (const auto& [id, p] : doc.poses) {
    REQUIRE((back.poses.at(id).R - p.R).cwiseAbs().maxCoeff() == 0.0);
    REQUIRE((back.poses.at(id).t - p.t).cwiseAbs().maxCoeff() == 0.0);
    REQUIRE(back.scales.at(id) == doc.scales.at(id));
  }
  fs::remove_all(dir);
}

TEST_CASE("plan json round trips") {
  const auto dir = temp_dir("plan");
  const auto plan = plan_articulated(4, 4, 0.07, 0.01);
  io::write_plan_json(dir / "plan.json", plan);
  const auto back = io::read_plan_json(dir / "plan.json");
  REQUIRE(back.clip_length == plan.clip_length);
  REQUIRE(back.directions == plan.directions);
  REQUIRE(back.step == plan.step);
  REQUIRE(back.normalizer == plan.normalizer);
  REQUIRE(back.frames.size() == plan.frames.size());
  REQUIRE(back.clips.size() == plan.clips.size());
  for (size_t i = 0; i < plan.frames.size(); ++i) {
    REQUIRE(back.frames[i].frame_id == plan.frames[i].frame_id);
    REQUIRE(back.frames[i].stamp == plan.frames[i].stamp);
    REQUIRE(back.frames[i].step_i == plan.frames[i].step_i);
  }
  for (size_t c = 0; c < plan.clips.size(); ++c) {
    REQUIRE(back.clips[c].frame_ids == plan.clips[c].frame_ids);
    for (size_t k = 0; k < plan.clips[c].poses.size(); ++k)
      REQUIRE((back.clips[c].poses[k].matrix() - plan.clips[c].poses[k].matrix())
                  .cwiseAbs().maxCoeff() == 0.0);
  }
  fs::remove_all(dir);
}

TEST_CASE("field checkpoint round trips bit-exactly") {
  const auto dir = temp_dir("ckpt");
  FieldConfig cfg;
  cfg.hidden_dim = 8;
  cfg.base_res_i = 6;
  cfg.base_res_j = 5;
  cfg.levels = {1, 2};
  cfg.mlp_hidden = 16;
  cfg.bbox_min = Vec3(-2, -1, 0);
  cfg.bbox_max = Vec3(2, 1, 7);
  Rng rng(106);
  const DistortionField field(cfg, rng);
  io::write_field_checkpoint(dir / "f.ckpt", field);
  const auto back = io::read_field_checkpoint(dir / "f.ckpt");
  REQUIRE(back.param_count() == field.param_count());
  REQUIRE(back.config().hidden_dim == cfg.hidden_dim);
  REQUIRE(back.config().levels == cfg.levels);
  REQUIRE((back.config().bbox_min - cfg.bbox_min).norm() == 0.0);
  for (size_t i = 0; i < field.param_count(); ++i)
    REQUIRE(back.params()[i] == field.params()[i]);

  io::write_field_checkpoint(dir / "f2.ckpt", back);
  REQUIRE(slurp(dir / "f.ckpt") == slurp(dir / "f2.ckpt"));
  fs::remove_all(dir);
}
