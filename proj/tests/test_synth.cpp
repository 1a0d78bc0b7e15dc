#include "liftcore/synth.hpp"

#include "liftcore/depthcal.hpp"

#include <catch2/catch_amalgamated.hpp>

#include <filesystem>

using namespace liftcore;
namespace fs = std::filesystem;

namespace {

fs::path temp_dir(const std::string& tag) {
  const fs::path p = fs::temp_directory_path() / ("liftcore_test_" + tag);
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

}  // namespace

TEST_CASE("on-axis sphere has its depth minimum at the image center") {
  SynthScene scene;
  Primitive s;
  s.kind = PrimitiveKind::sphere;
  s.center = Vec3(0, 0, 4);
  s.radius = 1.0;
  scene.primitives.push_back(s);

  const int wh = 33;
  const auto gt = render_gt(scene, Pose::identity(), Intrinsics(40.0, wh, wh), wh, wh);
  double best = 1e300;
  int best_px = -1;
  for (int i = 0; i < wh * wh; ++i) {
    if (gt.pointmap.confidence[i] <= 0.0) continue;
    if (gt.depth.data[i] < best) { best = gt.depth.data[i]; best_px = i; }
  }
  REQUIRE(best_px == (wh / 2) * wh + wh / 2);
  REQUIRE(best == Catch::Approx(3.0).margin(1e-6));
}

TEST_CASE("unproject then project restores pixel coordinates") {
  const auto scene = default_scene();
  const int w = 24, h = 20;
  const Intrinsics intr(35.0, w, h);
  const auto gt = render_gt(scene, Pose::identity(), intr, w, h);
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) {
      if (gt.pointmap.conf(x, y) <= 0.0) continue;
      const Vec3& p = gt.pointmap.at(x, y);
      const double u = intr.focal * p.x() / p.z() + intr.cx;
      const double v = intr.focal * p.y() / p.z() + intr.cy;
      REQUIRE(u == Catch::Approx(x + 0.5).margin(1e-9));
      REQUIRE(v == Catch::Approx(y + 0.5).margin(1e-9));
      REQUIRE(gt.depth.at(x, y) == Catch::Approx(p.z()).margin(1e-12));
    }
}

TEST_CASE("pointmap pairs close the loop with relative_pose") {
  const auto scene = default_scene();
  const int w = 48, h = 48;
  const Intrinsics intr(40.0, w, h);

  Pose ref;  // identity
  Pose src;
  src.R = axis_angle_to_matrix(Vec3(0.02, -0.05, 0.01));
  src.t = Vec3(0.15, -0.1, 0.05);

  const auto gt_src = render_gt(scene, src, intr, w, h);

  PairObservation pair;
  pair.ref_frame_id = 0;
  pair.src_frame_id = 1;
  pair.points_in_src = gt_src.pointmap;
  pair.points_in_ref = gt_src.pointmap;
  const Pose rel = compose(ref.inverse(), src);  // src camera in ref frame
  for (auto& p : pair.points_in_ref.points) p = rel.apply(p);

  const auto rp = relative_pose(pair);
  REQUIRE((rp.R - rel.R).cwiseAbs().maxCoeff() < 1e-8);
  REQUIRE((rp.T - rel.t).norm() < 1e-8);
  REQUIRE(std::abs(rp.scale - 1.0) < 1e-8);
}

TEST_CASE("distortion gain vanishes at the origin stamp and grows with |stamp|") {
  DistortionSpec spec;
  spec.mode = DistortionSpec::Mode::smooth_warp;
  spec.amplitude = 0.02;
  spec.validate();
  REQUIRE(DistortionSpec::gain(FrameStamp{0.0, 0.0}) == 0.0);
  REQUIRE(DistortionSpec::gain(FrameStamp{0.5, 0.0}) <
          DistortionSpec::gain(FrameStamp{0.9, 0.0}));
  REQUIRE(DistortionSpec::gain(FrameStamp{0.5, 0.2}) <
          DistortionSpec::gain(FrameStamp{0.5, 0.6}));
}

TEST_CASE("emit_dataset writes the full directory contract") {
  const auto dir = temp_dir("emit");
  const auto plan = plan_articulated(3, 2, 0.08);
  DistortionSpec spec;
  spec.mode = DistortionSpec::Mode::smooth_warp;
  spec.amplitude = 0.02;
  EmitOptions opts;
  opts.width = 40;
  opts.height = 32;
  opts.focal = 36.0;
  opts.seed = 5;
  opts.eval_views = 2;
  emit_dataset(default_scene(), plan, spec, dir, opts);

  REQUIRE(fs::exists(dir / "plan.json"));
  REQUIRE(fs::exists(dir / "poses_gt.json"));
  REQUIRE(fs::exists(dir / "manifest.json"));
  for (const auto& f : plan.frames) {
    REQUIRE(fs::exists(dir / "frames" / std::to_string(f.clip_id) /
                       (std::to_string(f.index_in_clip) + ".png")));
    const std::string fid = std::to_string(f.frame_id);
    REQUIRE(fs::exists(dir / "pointmaps" / (fid + ".pfm")));
    REQUIRE(fs::exists(dir / "conf" / (fid + ".pfm")));
    REQUIRE(fs::exists(dir / "depth_rel" / (fid + ".pfm")));
    if (f.frame_id != 0)
      REQUIRE(fs::exists(dir / "pointmaps_in_pred" / (fid + ".pfm")));
  }
  REQUIRE(fs::exists(dir / "eval" / "0.png"));
  REQUIRE(fs::exists(dir / "eval" / "1.png"));

  // the input frame is emitted undistorted: it must match a direct render
  const auto gt = render_gt(default_scene(), Pose::identity(),
                            Intrinsics(opts.focal, opts.width, opts.height),
                            opts.width, opts.height);
  const auto img = io::read_png(dir / "frames" / "0" / "0.png");
  double max_diff = 0.0;
  for (size_t i = 0; i < img.data.size(); ++i)
    max_diff = std::max(max_diff, std::abs(img.data[i] - gt.image.data[i]));
  REQUIRE(max_diff <= 0.5 / 255.0 + 1e-9);  // 8-bit quantization only

  fs::remove_all(dir);
}

TEST_CASE("distortion none emits frames identical to direct renders") {
  const auto dir = temp_dir("emit_none");
  const auto plan = plan_articulated(2, 2, 0.08);
  EmitOptions opts;
  opts.width = 32;
  opts.height = 32;
  opts.focal = 30.0;
  emit_dataset(default_scene(), plan, DistortionSpec{}, dir, opts);

  const auto poses = pose_sequence(plan);
  for (const auto& f : plan.frames) {
    const auto gt = render_gt(default_scene(), poses[f.frame_id].pose,
                              Intrinsics(opts.focal, opts.width, opts.height),
                              opts.width, opts.height);
    const auto img = io::read_png(dir / "frames" / std::to_string(f.clip_id) /
                                  (std::to_string(f.index_in_clip) + ".png"));
    for (size_t i = 0; i < img.data.size(); ++i)
      REQUIRE(std::abs(img.data[i] - gt.image.data[i]) <= 0.5 / 255.0 + 1e-9);
  }
  fs::remove_all(dir);
}

TEST_CASE("emitted relative depth calibrates back to the absolute depth") {
  const auto dir = temp_dir("emit_cal");
  const auto plan = plan_articulated(2, 2, 0.08);
  EmitOptions opts;
  opts.width = 32;
  opts.height = 32;
  opts.focal = 30.0;
  opts.seed = 9;
  emit_dataset(default_scene(), plan, DistortionSpec{}, dir, opts);

  for (const auto& f : plan.frames) {
    const std::string fid = std::to_string(f.frame_id);
    const auto pm = io::read_pointmap_pfm(dir / "pointmaps" / (fid + ".pfm"),
                                          dir / "conf" / (fid + ".pfm"));
    const auto d_rel = io::read_depth_pfm(dir / "depth_rel" / (fid + ".pfm"),
                                          DepthKind::relative);
    DepthMap d_abs(pm.width, pm.height, DepthKind::absolute, 0.0);
    std::vector<std::uint8_t> mask(pm.size(), 0);
    for (size_t i = 0; i < pm.size(); ++i) {
      d_abs.data[i] = pm.points[i].z();
      mask[i] = pm.confidence[i] > 0.0 ? 1 : 0;
    }
    const auto [res, out] = calibrate(d_abs, d_rel, mask);
    for (size_t i = 0; i < out.data.size(); ++i)
      if (mask[i])
        REQUIRE(std::abs(out.data[i] - d_abs.data[i]) < 1e-5);
  }
  fs::remove_all(dir);
}
