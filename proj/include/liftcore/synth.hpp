#pragma once

// Synthetic oracle: procedurally textured sphere/box/plane scenes rendered
// by ray casting (an independent code path from the splat renderer), with
// exact depth, pointmaps and poses, plus controllable per-frame smooth-warp
// distortions that vanish exactly at the input frame's (0,0) stamp.

#include "liftcore/core.hpp"
#include "liftcore/io.hpp"
#include "liftcore/matching.hpp"
#include "liftcore/trajectory.hpp"

#include <filesystem>

namespace liftcore {

enum class PrimitiveKind { sphere, box, plane };

struct Primitive {
  PrimitiveKind kind = PrimitiveKind::sphere;
  Vec3 center = Vec3::Zero();      // sphere/box center, or a point on the plane
  double radius = 1.0;             // sphere
  Vec3 half_extent = Vec3::Ones(); // axis-aligned box
  Vec3 normal = Vec3(0, 0, -1);    // plane
  Vec3 base_color = Vec3::Constant(0.5);
  Vec3 tex_amp = Vec3::Constant(0.25);   // per-channel albedo modulation
  Vec3 tex_freq = Vec3(3.0, 4.0, 5.0);   // spatial frequency per axis
  Vec3 tex_phase = Vec3::Zero();
};

struct SynthScene {
  std::vector<Primitive> primitives;
  Vec3 background = Vec3(0.05, 0.05, 0.08);

  void validate() const {
    check(!primitives.empty(), "scene: no primitives");
  }
};

// View-independent diffuse albedo with smooth procedural texture.
inline Vec3 albedo(const Primitive& p, const Vec3& pos) {
  Vec3 c;
  for (int ch = 0; ch < 3; ++ch) {
    const double phase = p.tex_phase(ch) + 1.7 * ch;
    const double s = std::sin(p.tex_freq.x() * pos.x() + p.tex_freq.y() * pos.y() +
                              p.tex_freq.z() * pos.z() + phase);
    c(ch) = std::clamp(p.base_color(ch) + p.tex_amp(ch) * s, 0.0, 1.0);
  }
  return c;
}

// Default desk scene: a textured backdrop plane with spheres and a box in
// front, all visible from the origin looking down +z.
inline SynthScene default_scene() {
  SynthScene s;
  Primitive backdrop;
  backdrop.kind = PrimitiveKind::plane;
  backdrop.center = Vec3(0, 0, 6.0);
  backdrop.normal = Vec3(0, 0, -1);
  backdrop.base_color = Vec3(0.45, 0.5, 0.55);
  backdrop.tex_amp = Vec3(0.3, 0.25, 0.2);
  backdrop.tex_freq = Vec3(2.1, 2.7, 0.0);
  s.primitives.push_back(backdrop);

  Primitive s1;
  s1.kind = PrimitiveKind::sphere;
  s1.center = Vec3(-0.8, 0.2, 4.0);
  s1.radius = 0.85;
  s1.base_color = Vec3(0.7, 0.3, 0.25);
  s1.tex_amp = Vec3(0.2, 0.15, 0.1);
  s1.tex_freq = Vec3(5.0, 6.5, 4.0);
  s.primitives.push_back(s1);

  Primitive s2;
  s2.kind = PrimitiveKind::sphere;
  s2.center = Vec3(1.0, -0.35, 4.6);
  s2.radius = 0.7;
  s2.base_color = Vec3(0.25, 0.55, 0.7);
  s2.tex_amp = Vec3(0.12, 0.2, 0.22);
  s2.tex_freq = Vec3(6.0, 4.5, 5.5);
  s.primitives.push_back(s2);

  Primitive b;
  b.kind = PrimitiveKind::box;
  b.center = Vec3(0.25, 0.9, 5.2);
  b.half_extent = Vec3(0.6, 0.45, 0.5);
  b.base_color = Vec3(0.6, 0.6, 0.3);
  b.tex_amp = Vec3(0.2, 0.2, 0.25);
  b.tex_freq = Vec3(4.2, 5.1, 3.3);
  s.primitives.push_back(b);
  return s;
}

namespace synthdetail {

// Nearest positive ray parameter, or a negative value on miss.
inline double intersect(const Primitive& p, const Vec3& o, const Vec3& d) {
  switch (p.kind) {
    case PrimitiveKind::sphere: {
      const Vec3 oc = o - p.center;
      const double a = d.squaredNorm();
      const double b = 2.0 * oc.dot(d);
      const double c = oc.squaredNorm() - p.radius * p.radius;
      const double disc = b * b - 4 * a * c;
      if (disc < 0.0) return -1.0;
      const double sq = std::sqrt(disc);
      const double t0 = (-b - sq) / (2 * a);
      if (t0 > 1e-9) return t0;
      const double t1 = (-b + sq) / (2 * a);
      return t1 > 1e-9 ? t1 : -1.0;
    }
    case PrimitiveKind::plane: {
      const double denom = p.normal.dot(d);
      if (std::abs(denom) < 1e-12) return -1.0;
      const double t = p.normal.dot(p.center - o) / denom;
      return t > 1e-9 ? t : -1.0;
    }
    case PrimitiveKind::box: {
      double tmin = -1e300, tmax = 1e300;
      for (int k = 0; k < 3; ++k) {
        const double lo = p.center(k) - p.half_extent(k);
        const double hi = p.center(k) + p.half_extent(k);
        if (std::abs(d(k)) < 1e-12) {
          if (o(k) < lo || o(k) > hi) return -1.0;
          continue;
        }
        double t0 = (lo - o(k)) / d(k);
        double t1 = (hi - o(k)) / d(k);
        if (t0 > t1) std::swap(t0, t1);
        tmin = std::max(tmin, t0);
        tmax = std::min(tmax, t1);
      }
      if (tmax < tmin) return -1.0;
      if (tmin > 1e-9) return tmin;
      return tmax > 1e-9 ? tmax : -1.0;
    }
  }
  return -1.0;
}

}  // namespace synthdetail

struct GroundTruth {
  Image image;
  DepthMap depth;    // kind absolute; 0 marks a miss
  PointMap pointmap; // camera-frame points, confidence 1 on hits
};

// Ray-cast rendering with exact depth and camera-frame pointmap. Depth is
// the camera-z of the hit; pointmap(i,j) = depth * ((i'-cx)/f, ..., 1).
inline GroundTruth render_gt(const SynthScene& scene, const Pose& pose,
                             const Intrinsics& intr, int width, int height) {
  scene.validate();
  intr.validate();
  GroundTruth gt;
  gt.image = Image(width, height, 3);
  gt.depth = DepthMap(width, height, DepthKind::absolute, 0.0);
  gt.pointmap = PointMap(width, height);

  const double f = intr.focal;
  parallel_for(0, height, [&](std::int64_t yi, int) {
    const int y = static_cast<int>(yi);
    for (int x = 0; x < width; ++x) {
      const Vec3 dir_cam((x + 0.5 - intr.cx) / f, (y + 0.5 - intr.cy) / f, 1.0);
      const Vec3 dir_world = pose.R * dir_cam;
      double best_t = -1.0;
      const Primitive* hit = nullptr;
      for (const auto& p : scene.primitives) {
        const double t = synthdetail::intersect(p, pose.t, dir_world);
        if (t > 0.0 && (best_t < 0.0 || t < best_t)) {
          best_t = t;
          hit = &p;
        }
      }
      if (hit) {
        const Vec3 world = pose.t + best_t * dir_world;
        const Vec3 c = albedo(*hit, world);
        for (int ch = 0; ch < 3; ++ch) gt.image.at(x, y, ch) = c(ch);
        gt.depth.at(x, y) = best_t;  // dir_cam.z == 1, so t is camera depth
        gt.pointmap.at(x, y) = best_t * dir_cam;
        gt.pointmap.conf(x, y) = 1.0;
      } else {
        for (int ch = 0; ch < 3; ++ch) gt.image.at(x, y, ch) = scene.background(ch);
      }
    }
  });
  return gt;
}

// ---------------------------------------------------------------------------
// Per-frame smooth-warp distortion: a low-frequency sinusoidal image-space
// displacement, scaled by amplitude * min(W,H) * g(stamp) pixels, with
// per-frame phases so frames distort independently. g(0,0) = 0 exactly.

struct DistortionSpec {
  enum class Mode { none, smooth_warp };
  Mode mode = Mode::none;
  double amplitude = 0.0;  // fraction of the image dimension at gain 1
  double frequency = 2.0;  // cycles across the image

  static double gain(const FrameStamp& s) { return std::hypot(s.ti, s.tj); }

  void validate() const {
    check(gain(FrameStamp{0.0, 0.0}) == 0.0, "distortion: gain at origin must be 0");
    check(amplitude >= 0.0, "distortion: negative amplitude");
  }
};

namespace synthdetail {

struct Warp {
  double ax = 0.0, ay = 0.0;  // pixel amplitude per axis
  double kx = 0.0, ky = 0.0;  // angular frequency
  double phx = 0.0, phy = 0.0;

  // displacement sampled at an output pixel center
  void displacement(double x, double y, double* dx, double* dy) const {
    *dx = ax * std::sin(ky * y + phx);
    *dy = ay * std::sin(kx * x + phy);
  }
};

inline Warp make_warp(const DistortionSpec& spec, const FrameStamp& stamp,
                      int frame_id, std::uint64_t seed, int width, int height) {
  Warp w;
  if (spec.mode == DistortionSpec::Mode::none) return w;
  const double g = DistortionSpec::gain(stamp);
  const double amp = spec.amplitude * std::min(width, height) * g;
  Rng rng(seed ^ (0x51ed2701u + static_cast<std::uint64_t>(frame_id) * 0x9e3779b97f4a7c15ull));
  w.ax = amp * rng.uniform(0.7, 1.0);
  w.ay = amp * rng.uniform(0.7, 1.0);
  w.kx = 2.0 * M_PI * spec.frequency / width;
  w.ky = 2.0 * M_PI * spec.frequency / height;
  w.phx = rng.uniform(0.0, 2.0 * M_PI);
  w.phy = rng.uniform(0.0, 2.0 * M_PI);
  return w;
}

// out(p) = in(p + disp(p)). Image samples bilinearly; depth/pointmap/conf
// use the nearest source pixel so geometry channels stay consistent.
inline void apply_warp(const Warp& w, GroundTruth& gt) {
  if (w.ax == 0.0 && w.ay == 0.0) return;
  const int width = gt.image.width, height = gt.image.height;
  Image img_out(width, height, 3);
  DepthMap dep_out(width, height, DepthKind::absolute, 0.0);
  PointMap pm_out(width, height);

  for (int y = 0; y < height; ++y) {
    for (int x = 0; x < width; ++x) {
      double dx, dy;
      w.displacement(x + 0.5, y + 0.5, &dx, &dy);
      const double sx = std::clamp(x + 0.5 + dx, 0.0, width - 1e-6);
      const double sy = std::clamp(y + 0.5 + dy, 0.0, height - 1e-6);
      // bilinear image sample over pixel centers
      const double gx = std::clamp(sx - 0.5, 0.0, width - 1.0);
      const double gy = std::clamp(sy - 0.5, 0.0, height - 1.0);
      const int x0 = std::min(static_cast<int>(gx), width - 2 >= 0 ? width - 2 : 0);
      const int y0 = std::min(static_cast<int>(gy), height - 2 >= 0 ? height - 2 : 0);
      const double fx = gx - x0, fy = gy - y0;
      for (int c = 0; c < 3; ++c) {
        const double v00 = gt.image.at(x0, y0, c);
        const double v10 = gt.image.at(std::min(x0 + 1, width - 1), y0, c);
        const double v01 = gt.image.at(x0, std::min(y0 + 1, height - 1), c);
        const double v11 = gt.image.at(std::min(x0 + 1, width - 1), std::min(y0 + 1, height - 1), c);
        img_out.at(x, y, c) = (1 - fx) * (1 - fy) * v00 + fx * (1 - fy) * v10 +
                              (1 - fx) * fy * v01 + fx * fy * v11;
      }
      const int nx = std::clamp(static_cast<int>(sx), 0, width - 1);
      const int ny = std::clamp(static_cast<int>(sy), 0, height - 1);
      dep_out.at(x, y) = gt.depth.at(nx, ny);
      pm_out.at(x, y) = gt.pointmap.at(nx, ny);
      pm_out.conf(x, y) = gt.pointmap.conf(nx, ny);
    }
  }
  gt.image = std::move(img_out);
  gt.depth = std::move(dep_out);
  gt.pointmap = std::move(pm_out);
}

}  // namespace synthdetail

// Serves distorted synthetic frames directly (no disk round trip).
class SynthFrameProvider : public FrameProvider {
 public:
  SynthFrameProvider(SynthScene scene, const TrajectoryPlan& plan, Intrinsics intr,
                     int width, int height, DistortionSpec distortion, std::uint64_t seed)
      : scene_(std::move(scene)), intr_(intr), width_(width), height_(height),
        distortion_(distortion), seed_(seed), poses_(pose_sequence(plan)) {}

  Image fetch(const PlannedFrame& f) override {
    GroundTruth gt = render_gt(scene_, poses_[f.frame_id].pose, intr_, width_, height_);
    const auto w = synthdetail::make_warp(distortion_, f.stamp, f.frame_id, seed_, width_, height_);
    synthdetail::apply_warp(w, gt);
    return gt.image;
  }

 private:
  SynthScene scene_;
  Intrinsics intr_;
  int width_, height_;
  DistortionSpec distortion_;
  std::uint64_t seed_;
  std::vector<FramePose> poses_;
};

// ---------------------------------------------------------------------------
// Dataset emission: the full on-disk contract consumed by the pipeline.
//
//   plan.json
//   frames/<clip_id>/<index>.png
//   pointmaps/<frame_id>.pfm          frame's pixels in its own camera frame
//   conf/<frame_id>.pfm               per-pixel confidence of that pointmap
//   pointmaps_in_pred/<frame_id>.pfm  same pixels in the predecessor's frame
//   depth_rel/<frame_id>.pfm          synthetic relative depth a*d + b
//   eval/<k>.png                      held-out undistorted views
//   poses_gt.json, manifest.json      ground truth (synth only)

struct EmitOptions {
  int width = 128;
  int height = 128;
  double focal = 120.0;
  std::uint64_t seed = 1;
  int eval_views = 4;
  bool one_axis_stamps = false;  // collapse stamps to (|t|, 0) in plan.json
};

inline void emit_dataset(const SynthScene& scene, const TrajectoryPlan& plan,
                         const DistortionSpec& distortion,
                         const std::filesystem::path& out_dir,
                         const EmitOptions& opts = {}) {
  scene.validate();
  distortion.validate();
  namespace fs = std::filesystem;
  std::error_code ec;
  fs::create_directories(out_dir, ec);
  check(!ec && fs::is_directory(out_dir), "synth: cannot create " + out_dir.string());
  for (const char* sub : {"frames", "pointmaps", "conf", "pointmaps_in_pred",
                          "depth_rel", "eval"})
    fs::create_directories(out_dir / sub);

  const Intrinsics intr(opts.focal, opts.width, opts.height);
  const auto poses = pose_sequence(plan);
  Rng rng(opts.seed);

  io::write_plan_json(out_dir / "plan.json", plan);

  // Predecessor per frame (the frame just before it in its clip).
  std::map<int, int> pred;
  for (const auto& clip : plan.clips)
    for (size_t k = 1; k < clip.frame_ids.size(); ++k)
      if (clip.frame_ids[k] != clip.anchor_frame_id)
        pred[clip.frame_ids[k]] = clip.frame_ids[k - 1];

  Json manifest;
  manifest["schema_version"] = 1;
  manifest["width"] = opts.width;
  manifest["height"] = opts.height;
  manifest["focal"] = opts.focal;
  manifest["seed"] = opts.seed;
  manifest["distortion"]["mode"] =
      distortion.mode == DistortionSpec::Mode::none ? "none" : "smooth-warp";
  manifest["distortion"]["amplitude"] = distortion.amplitude;
  manifest["distortion"]["frequency"] = distortion.frequency;
  manifest["one_axis_stamps"] = opts.one_axis_stamps;

  io::PoseDocument gt_doc;
  gt_doc.focal = opts.focal;

  std::vector<GroundTruth> gts(plan.frames.size());
  for (const auto& pf : plan.frames) {
    GroundTruth gt = render_gt(scene, poses[pf.frame_id].pose, intr, opts.width, opts.height);
    const auto w = synthdetail::make_warp(distortion, pf.stamp, pf.frame_id, opts.seed,
                                          opts.width, opts.height);
    synthdetail::apply_warp(w, gt);
    gts[pf.frame_id] = std::move(gt);
  }

  Json frames_json = Json::array();
  for (const auto& pf : plan.frames) {
    const GroundTruth& gt = gts[pf.frame_id];
    const fs::path clip_dir = out_dir / "frames" / std::to_string(pf.clip_id);
    fs::create_directories(clip_dir);
    io::write_png(clip_dir / (std::to_string(pf.index_in_clip) + ".png"), gt.image);

    const std::string fid = std::to_string(pf.frame_id);
    io::write_pointmap_pfm(out_dir / "pointmaps" / (fid + ".pfm"),
                           out_dir / "conf" / (fid + ".pfm"), gt.pointmap);

    if (auto it = pred.find(pf.frame_id); it != pred.end()) {
      const Pose rel = compose(poses[it->second].pose.inverse(), poses[pf.frame_id].pose);
      PointMap in_pred = gt.pointmap;
      in_pred.frame = std::to_string(it->second);
      for (auto& p : in_pred.points) p = rel.apply(p);
      // confidence already mirrors the own-frame map
      io::write_pfm(out_dir / "pointmaps_in_pred" / (fid + ".pfm"), [&] {
        io::PfmData d;
        d.width = in_pred.width; d.height = in_pred.height; d.channels = 3;
        d.data.resize(in_pred.size() * 3);
        for (size_t i = 0; i < in_pred.size(); ++i)
          for (int c = 0; c < 3; ++c)
            d.data[i * 3 + c] = static_cast<float>(in_pred.points[i](c));
        return d;
      }());
    }

    // synthetic "monocular" relative depth: a*d + b with a > 0
    const double a = rng.uniform(0.5, 2.0);
    double mean_d = 0.0;
    size_t hits = 0;
    for (size_t i = 0; i < gt.depth.data.size(); ++i)
      if (gt.pointmap.confidence[i] > 0.0) { mean_d += gt.depth.data[i]; ++hits; }
    mean_d = hits ? mean_d / hits : 1.0;
    const double b = rng.uniform(-0.5, 0.5) * a * mean_d;
    DepthMap rel_depth(opts.width, opts.height, DepthKind::relative, 0.0);
    for (size_t i = 0; i < rel_depth.data.size(); ++i)
      rel_depth.data[i] = a * gt.depth.data[i] + b;
    io::write_depth_pfm(out_dir / "depth_rel" / (fid + ".pfm"), rel_depth);

    gt_doc.poses[pf.frame_id] = poses[pf.frame_id].pose;

    Json jf;
    jf["frame_id"] = pf.frame_id;
    jf["clip_id"] = pf.clip_id;
    jf["index_in_clip"] = pf.index_in_clip;
    FrameStamp st = pf.stamp;
    if (opts.one_axis_stamps) st = FrameStamp{std::hypot(st.ti, st.tj), 0.0};
    jf["stamp"] = Json::array({st.ti, st.tj});
    jf["pose"] = io::pose_to_json(poses[pf.frame_id].pose);
    jf["depth_rel_affine"] = Json::array({a, b});
    frames_json.push_back(std::move(jf));
  }
  manifest["frames"] = std::move(frames_json);
  io::write_poses_json(out_dir / "poses_gt.json", gt_doc);

  // Held-out evaluation views: undistorted renders at poses inside the
  // covered view region but off the training trajectory.
  Json evals = Json::array();
  const double reach = plan.step * (plan.clip_length - 1);
  for (int k = 0; k < opts.eval_views; ++k) {
    const double ang = 2.0 * M_PI * (k + 0.5) / std::max(1, opts.eval_views);
    Pose p;
    p.t = Vec3(0.55 * reach * std::cos(ang), -0.45 * reach * std::sin(ang), 0.0);
    const GroundTruth gt = render_gt(scene, p, intr, opts.width, opts.height);
    io::write_png(out_dir / "eval" / (std::to_string(k) + ".png"), gt.image);
    Json je;
    je["name"] = std::to_string(k);
    je["pose"] = io::pose_to_json(p);
    evals.push_back(std::move(je));
  }
  manifest["eval_views"] = std::move(evals);

  std::ofstream mf(out_dir / "manifest.json");
  check(mf.good(), "synth: cannot write manifest");
  mf << manifest.dump(2) << "\n";
}

}  // namespace liftcore
