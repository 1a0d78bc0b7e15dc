#pragma once

// Command-line surface: plan | synth | match | register | calibrate |
// train | render | eval. Each command wraps the corresponding module and
// speaks the on-disk dataset contract. All stochastic commands take --seed;
// LIFTCORE_THREADS caps the worker count. Errors exit 1 with a single
// machine-parsable line on stderr.

#include "liftcore/core.hpp"
#include "liftcore/depthcal.hpp"
#include "liftcore/field.hpp"
#include "liftcore/io.hpp"
#include "liftcore/matching.hpp"
#include "liftcore/splat.hpp"
#include "liftcore/synth.hpp"
#include "liftcore/train.hpp"
#include "liftcore/trajectory.hpp"

#include <CLI11.hpp>

#include <filesystem>
#include <fstream>
#include <iostream>

namespace liftcore::cli {

namespace fs = std::filesystem;

// ---------------------------------------------------------------------------
// Pipeline configuration document: nested sections mirroring the module
// configs. Unknown keys are rejected; schema_version is required.

struct PipelineConfig {
  int schema_version = 1;
  // plan
  int l = 16;
  int D = 4;
  double step = 0.05;
  double rot_step = 0.0;
  // matching
  int extra_edges = 0;
  int refine_iters = 400;
  // train + field
  TrainConfig train;
};

namespace detail {

inline void reject_unknown(const Json& j, const std::vector<std::string>& known,
                           const std::string& where) {
  for (const auto& [key, val] : j.items()) {
    (void)val;
    if (std::find(known.begin(), known.end(), key) == known.end())
      throw Error("config: unknown key '" + key + "' in " + where);
  }
}

template <typename T>
void maybe(const Json& j, const char* key, T& out) {
  if (j.contains(key)) out = j.at(key).get<T>();
}

}  // namespace detail

inline PipelineConfig load_config(const fs::path& path) {
  std::ifstream f(path);
  check(f.good(), "config: cannot open " + path.string());
  const Json j = Json::parse(f);
  check(j.contains("schema_version"), "config: schema_version missing");
  check(j.at("schema_version").get<int>() == 1, "config: unsupported schema_version");
  detail::reject_unknown(j, {"schema_version", "plan", "matching", "train", "field", "render"},
                         "top level");
  PipelineConfig cfg;
  if (j.contains("plan")) {
    const Json& p = j.at("plan");
    detail::reject_unknown(p, {"l", "D", "step", "rot_step"}, "plan");
    detail::maybe(p, "l", cfg.l);
    detail::maybe(p, "D", cfg.D);
    detail::maybe(p, "step", cfg.step);
    detail::maybe(p, "rot_step", cfg.rot_step);
  }
  if (j.contains("matching")) {
    const Json& m = j.at("matching");
    detail::reject_unknown(m, {"extra_edges", "refine_iters"}, "matching");
    detail::maybe(m, "extra_edges", cfg.extra_edges);
    detail::maybe(m, "refine_iters", cfg.refine_iters);
  }
  if (j.contains("train")) {
    const Json& t = j.at("train");
    detail::reject_unknown(
        t, {"vanilla_iters", "field_iters", "lambda_rgb", "lambda_ssim", "lambda_depth",
            "lambda_tv", "lambda_distort", "lr_position", "lr_opacity", "lr_scale",
            "lr_rotation", "lr_sh", "lr_field", "prune_interval", "prune_opacity",
            "distort_batch", "max_points", "seed"},
        "train");
    auto& tc = cfg.train;
    detail::maybe(t, "vanilla_iters", tc.vanilla_iters);
    detail::maybe(t, "field_iters", tc.field_iters);
    detail::maybe(t, "lambda_rgb", tc.lambda_rgb);
    detail::maybe(t, "lambda_ssim", tc.lambda_ssim);
    detail::maybe(t, "lambda_depth", tc.lambda_depth);
    detail::maybe(t, "lambda_tv", tc.lambda_tv);
    detail::maybe(t, "lambda_distort", tc.lambda_distort);
    detail::maybe(t, "lr_position", tc.lr_position);
    detail::maybe(t, "lr_opacity", tc.lr_opacity);
    detail::maybe(t, "lr_scale", tc.lr_scale);
    detail::maybe(t, "lr_rotation", tc.lr_rotation);
    detail::maybe(t, "lr_sh", tc.lr_sh);
    detail::maybe(t, "lr_field", tc.lr_field);
    detail::maybe(t, "prune_interval", tc.prune_interval);
    detail::maybe(t, "prune_opacity", tc.prune_opacity);
    detail::maybe(t, "distort_batch", tc.distort_batch);
    detail::maybe(t, "max_points", tc.max_points);
    std::uint64_t seed = cfg.train.seed;
    detail::maybe(t, "seed", seed);
    cfg.train.seed = seed;
  }
  if (j.contains("field")) {
    const Json& fj = j.at("field");
    detail::reject_unknown(fj, {"hidden_dim", "base_res_i", "base_res_j", "levels",
                                "mlp_hidden", "multiplicative_scale", "init_noise"},
                           "field");
    auto& fc = cfg.train.field;
    detail::maybe(fj, "hidden_dim", fc.hidden_dim);
    detail::maybe(fj, "base_res_i", fc.base_res_i);
    detail::maybe(fj, "base_res_j", fc.base_res_j);
    if (fj.contains("levels")) fc.levels = fj.at("levels").get<std::vector<int>>();
    detail::maybe(fj, "mlp_hidden", fc.mlp_hidden);
    detail::maybe(fj, "multiplicative_scale", fc.multiplicative_scale);
    detail::maybe(fj, "init_noise", fc.init_noise);
  }
  if (j.contains("render")) {
    const Json& r = j.at("render");
    detail::reject_unknown(r, {"background"}, "render");
    if (r.contains("background")) {
      const auto bg = r.at("background").get<std::vector<double>>();
      check(bg.size() == 3, "config: render.background needs 3 components");
      cfg.train.render.background = Vec3(bg[0], bg[1], bg[2]);
    }
  }
  return cfg;
}

// ---------------------------------------------------------------------------
// Dataset access

struct Dataset {
  fs::path dir;
  TrajectoryPlan plan;
  Json manifest;
  bool has_manifest = false;

  static Dataset open(const fs::path& dir) {
    Dataset d;
    d.dir = dir;
    check(fs::exists(dir / "plan.json"), "dataset: missing plan.json in " + dir.string());
    d.plan = io::read_plan_json(dir / "plan.json");
    if (fs::exists(dir / "manifest.json")) {
      std::ifstream f(dir / "manifest.json");
      d.manifest = Json::parse(f);
      d.has_manifest = true;
    }
    return d;
  }

  fs::path frame_path(const PlannedFrame& f) const {
    return dir / "frames" / std::to_string(f.clip_id) /
           (std::to_string(f.index_in_clip) + ".png");
  }

  Image frame(int frame_id) const {
    const auto& f = plan.frame(frame_id);
    const fs::path p = frame_path(f);
    check(fs::exists(p), "dataset: missing frame " + std::to_string(frame_id) +
                             " at " + p.string());
    return io::read_png(p);
  }

  PointMap pointmap(int frame_id) const {
    return io::read_pointmap_pfm(
        dir / "pointmaps" / (std::to_string(frame_id) + ".pfm"),
        dir / "conf" / (std::to_string(frame_id) + ".pfm"), std::to_string(frame_id));
  }

  PointMap pointmap_in_pred(int frame_id, int pred_id) const {
    const fs::path p = dir / "pointmaps_in_pred" / (std::to_string(frame_id) + ".pfm");
    check(fs::exists(p), "dataset: missing pair pointmap for frame " +
                             std::to_string(frame_id));
    const io::PfmData pts = io::read_pfm(p);
    check(pts.channels == 3, "dataset: pair pointmap must be 3-channel");
    PointMap pm(pts.width, pts.height, std::to_string(pred_id));
    for (size_t i = 0; i < pm.size(); ++i)
      pm.points[i] = Vec3(pts.data[i * 3], pts.data[i * 3 + 1], pts.data[i * 3 + 2]);
    const io::PfmData conf = io::read_pfm(dir / "conf" / (std::to_string(frame_id) + ".pfm"));
    for (size_t i = 0; i < pm.size(); ++i) pm.confidence[i] = conf.data[i];
    return pm;
  }

  DepthMap depth_rel(int frame_id) const {
    return io::read_depth_pfm(dir / "depth_rel" / (std::to_string(frame_id) + ".pfm"),
                              DepthKind::relative);
  }
};

class DirectoryFrameProvider : public FrameProvider {
 public:
  explicit DirectoryFrameProvider(const Dataset& ds) : ds_(ds) {}
  Image fetch(const PlannedFrame& f) override { return ds_.frame(f.frame_id); }

 private:
  const Dataset& ds_;
};

inline PairObservation load_pair(const Dataset& ds, const MatchEdge& e) {
  PairObservation pair;
  pair.ref_frame_id = e.ref_frame_id;
  pair.src_frame_id = e.src_frame_id;
  pair.points_in_src = ds.pointmap(e.src_frame_id);
  pair.points_in_ref = ds.pointmap_in_pred(e.src_frame_id, e.ref_frame_id);
  check(pair.points_in_src.width == pair.points_in_ref.width &&
            pair.points_in_src.height == pair.points_in_ref.height,
        "dataset: pair pointmap resolution mismatch for frame " +
            std::to_string(e.src_frame_id));
  return pair;
}

// ---------------------------------------------------------------------------
// match.json

inline Json relpose_to_json(const RelativePose& rp, bool tree) {
  Json j;
  j["ref"] = rp.ref_frame_id;
  j["src"] = rp.src_frame_id;
  j["tree"] = tree;
  Json rows = Json::array();
  for (int r = 0; r < 3; ++r) {
    Json row = Json::array();
    for (int c = 0; c < 3; ++c) row.push_back(rp.R(r, c));
    rows.push_back(row);
  }
  j["rotation"] = rows;
  j["translation"] = Json::array({rp.T.x(), rp.T.y(), rp.T.z()});
  j["scale"] = rp.scale;
  j["residual"] = rp.residual;
  return j;
}

inline std::pair<RelativePose, bool> relpose_from_json(const Json& j) {
  RelativePose rp;
  rp.ref_frame_id = j.at("ref").get<int>();
  rp.src_frame_id = j.at("src").get<int>();
  for (int r = 0; r < 3; ++r)
    for (int c = 0; c < 3; ++c) rp.R(r, c) = j.at("rotation")[r][c].get<double>();
  const auto& t = j.at("translation");
  rp.T = Vec3(t[0].get<double>(), t[1].get<double>(), t[2].get<double>());
  rp.scale = j.at("scale").get<double>();
  rp.residual = j.at("residual").get<double>();
  return {rp, j.at("tree").get<bool>()};
}

// ---------------------------------------------------------------------------
// commands

inline int cmd_plan(const std::string& out, int l, int D, double step, double rot_step) {
  const auto plan = plan_articulated(l, D, step, rot_step);
  io::write_plan_json(out, plan);
  std::cout << "plan: " << plan.frame_count() << " frames, " << plan.clips.size()
            << " clips -> " << out << "\n";
  return 0;
}

struct SynthArgs {
  std::string plan_path;
  std::string out_dir;
  std::string distortion = "none";
  double amplitude = 0.02;
  double frequency = 2.0;
  int width = 128, height = 128;
  double focal = 120.0;
  std::uint64_t seed = 1;
  int eval_views = 4;
  bool one_axis = false;
};

inline int cmd_synth(const SynthArgs& a) {
  const auto plan = io::read_plan_json(a.plan_path);
  DistortionSpec spec;
  if (a.distortion == "none") spec.mode = DistortionSpec::Mode::none;
  else if (a.distortion == "smooth-warp") spec.mode = DistortionSpec::Mode::smooth_warp;
  else throw Error("synth: unknown distortion mode '" + a.distortion + "'");
  spec.amplitude = a.amplitude;
  spec.frequency = a.frequency;
  EmitOptions opts;
  opts.width = a.width;
  opts.height = a.height;
  opts.focal = a.focal;
  opts.seed = a.seed;
  opts.eval_views = a.eval_views;
  opts.one_axis_stamps = a.one_axis;
  emit_dataset(default_scene(), plan, spec, a.out_dir, opts);
  std::cout << "synth: dataset with " << plan.frame_count() << " frames -> "
            << a.out_dir << "\n";
  return 0;
}

inline int cmd_match(const std::string& data_dir, const std::string& out,
                     int extra_edges) {
  const auto ds = Dataset::open(data_dir);
  const auto graph = build_match_graph(ds.plan, extra_edges);
  const auto root_pm = ds.pointmap(graph.root);
  const auto intr = estimate_focal(root_pm);

  Json j;
  j["schema_version"] = 1;
  j["focal"] = intr.focal;
  j["root"] = graph.root;
  Json edges = Json::array();
  for (const auto& e : graph.edges) {
    const auto pair = load_pair(ds, e);
    const auto rp = relative_pose(pair);
    edges.push_back(relpose_to_json(rp, e.tree));
  }
  j["edges"] = std::move(edges);
  std::ofstream f(out);
  check(f.good(), "match: cannot open for write: " + out);
  f << j.dump(2) << "\n";
  std::cout << "match: focal " << intr.focal << ", " << graph.edges.size()
            << " edges -> " << out << "\n";
  return 0;
}

struct RegisterArgs {
  std::string data_dir;
  std::string match_path;
  std::string out_poses;
  std::string out_cloud;
  std::string out_depth;  // directory for per-frame absolute depth PFMs
  int refine_iters = 400;
};

inline int cmd_register(const RegisterArgs& a) {
  const auto ds = Dataset::open(a.data_dir);
  std::ifstream mf(a.match_path);
  check(mf.good(), "register: cannot open " + a.match_path);
  const Json mj = Json::parse(mf);

  MatchGraph graph;
  graph.root = mj.at("root").get<int>();
  for (const auto& f : ds.plan.frames) graph.nodes.push_back(f.frame_id);
  std::vector<RelativePose> rel;
  bool any_extra = false;
  for (const auto& je : mj.at("edges")) {
    auto [rp, tree] = relpose_from_json(je);
    graph.edges.push_back(MatchEdge{rp.ref_frame_id, rp.src_frame_id, tree});
    any_extra = any_extra || !tree;
    rel.push_back(rp);
  }

  std::vector<PairObservation> pairs;
  if (any_extra && a.refine_iters > 0)
    for (const auto& e : graph.edges) pairs.push_back(load_pair(ds, e));

  std::vector<FrameGeometry> geometry;
  for (const auto& f : ds.plan.frames) {
    FrameGeometry g;
    g.frame_id = f.frame_id;
    g.own = ds.pointmap(f.frame_id);
    g.image = ds.frame(f.frame_id);
    geometry.push_back(std::move(g));
  }

  const auto scene = register_frames(graph, pairs, rel, geometry, a.refine_iters);

  io::PoseDocument doc;
  doc.focal = scene.intrinsics.focal;
  for (size_t i = 0; i < scene.frame_ids.size(); ++i) {
    doc.poses[scene.frame_ids[i]] = scene.poses[i];
    doc.scales[scene.frame_ids[i]] = scene.scales[i];
  }
  io::write_poses_json(a.out_poses, doc);
  io::write_ply_points(a.out_cloud, scene.cloud);
  if (!a.out_depth.empty()) {
    fs::create_directories(a.out_depth);
    for (size_t i = 0; i < scene.frame_ids.size(); ++i) {
      if (scene.depths[i].data.empty()) continue;
      io::write_depth_pfm(fs::path(a.out_depth) /
                              (std::to_string(scene.frame_ids[i]) + ".pfm"),
                          scene.depths[i]);
    }
  }
  std::cout << "register: " << scene.frame_ids.size() << " frames, "
            << scene.cloud.size() << " points -> " << a.out_cloud << "\n";
  return 0;
}

inline int cmd_calibrate(const std::string& data_dir, const std::string& depth_abs_dir,
                         const std::string& out_dir) {
  const auto ds = Dataset::open(data_dir);
  fs::create_directories(out_dir);
  Json calib;
  calib["schema_version"] = 1;
  Json per_frame = Json::object();
  for (const auto& f : ds.plan.frames) {
    const std::string fid = std::to_string(f.frame_id);
    const fs::path abs_path = fs::path(depth_abs_dir) / (fid + ".pfm");
    check(fs::exists(abs_path), "calibrate: missing absolute depth for frame " + fid);
    const auto d_abs = io::read_depth_pfm(abs_path, DepthKind::absolute);
    const auto d_rel = ds.depth_rel(f.frame_id);
    const auto pm = ds.pointmap(f.frame_id);
    std::vector<std::uint8_t> mask(pm.size(), 0);
    for (size_t i = 0; i < pm.size(); ++i)
      mask[i] = (pm.confidence[i] > 0.0 && d_abs.data[i] > 0.0) ? 1 : 0;
    const auto [res, d_cal] = calibrate(d_abs, d_rel, mask);
    io::write_depth_pfm(fs::path(out_dir) / (fid + ".pfm"), d_cal);
    per_frame[fid] = Json::array({res.scale, res.shift});
  }
  calib["scale_shift"] = std::move(per_frame);
  std::ofstream cf(fs::path(out_dir) / "calib.json");
  cf << calib.dump(2) << "\n";
  std::cout << "calibrate: " << ds.plan.frame_count() << " frames -> " << out_dir << "\n";
  return 0;
}

struct TrainArgs {
  std::string data_dir;
  std::string poses_path;
  std::string cloud_path;
  std::string depth_cal_dir;  // optional
  std::string out_dir;
  std::string config_path;    // optional
  int vanilla_iters = -1;     // -1: keep config/default
  int field_iters = -1;
  int max_points = -1;
  double lambda_distort = -1.0;
  std::int64_t seed = -1;
  bool one_axis = false;
};

inline int cmd_train(const TrainArgs& a) {
  const auto ds = Dataset::open(a.data_dir);
  const auto poses = io::read_poses_json(a.poses_path);

  TrainConfig cfg;
  if (!a.config_path.empty()) cfg = load_config(a.config_path).train;
  if (a.vanilla_iters >= 0) cfg.vanilla_iters = a.vanilla_iters;
  if (a.field_iters >= 0) cfg.field_iters = a.field_iters;
  if (a.max_points > 0) cfg.max_points = a.max_points;
  if (a.lambda_distort >= 0.0) cfg.lambda_distort = a.lambda_distort;
  if (a.seed >= 0) cfg.seed = static_cast<std::uint64_t>(a.seed);

  // registered scene: merged cloud from the ply, poses from the document
  RegisteredScene scene;
  scene.cloud = io::read_ply_points(a.cloud_path);
  check(!scene.cloud.empty(), "train: empty registered cloud " + a.cloud_path);
  scene.intrinsics.focal = poses.focal;

  std::vector<TrainView> views;
  for (const auto& f : ds.plan.frames) {
    TrainView v;
    v.frame_id = f.frame_id;
    v.stamp = a.one_axis ? FrameStamp{std::hypot(f.stamp.ti, f.stamp.tj), 0.0} : f.stamp;
    auto it = poses.poses.find(f.frame_id);
    check(it != poses.poses.end(), "train: no pose for frame " + std::to_string(f.frame_id));
    v.pose = it->second;
    v.image = ds.frame(f.frame_id);
    if (!a.depth_cal_dir.empty()) {
      const fs::path dp = fs::path(a.depth_cal_dir) / (std::to_string(f.frame_id) + ".pfm");
      if (fs::exists(dp)) {
        v.depth_prior = io::read_depth_pfm(dp, DepthKind::calibrated);
        const auto pm = ds.pointmap(f.frame_id);
        v.depth_mask.assign(pm.size(), 0);
        for (size_t i = 0; i < pm.size(); ++i)
          v.depth_mask[i] = pm.confidence[i] > 0.0 ? 1 : 0;
      }
    }
    views.push_back(std::move(v));
  }
  check(!views.empty(), "train: dataset has no frames");
  const int width = views[0].image.width, height = views[0].image.height;
  Intrinsics intr(poses.focal, width, height);

  fs::create_directories(a.out_dir);
  std::ofstream metrics(fs::path(a.out_dir) / "metrics.jsonl");
  TrainCallbacks cb;
  cb.on_record = [&metrics](const LossRecord& r) {
    Json j;
    j["iteration"] = r.iteration;
    j["phase"] = r.phase;
    j["total"] = r.total;
    j["rgb"] = r.rgb;
    j["ssim"] = r.ssim;
    j["depth"] = r.depth;
    j["tv"] = r.tv;
    j["distort"] = r.distort;
    j["psnr"] = r.psnr;
    j["gaussians"] = r.gaussians;
    metrics << j.dump() << "\n";
  };
  cb.on_checkpoint = [&a](int iter, const GaussianCloud& g, const DistortionField& f) {
    const fs::path ck = fs::path(a.out_dir) / ("checkpoint_" + std::to_string(iter));
    fs::create_directories(ck);
    io::write_ply_gaussians(ck / "gaussians.ply", g);
    io::write_field_checkpoint(ck / "field.ckpt", f);
  };

  const auto result = train(views, scene, intr, cfg, cb);
  io::write_ply_gaussians(fs::path(a.out_dir) / "gaussians.ply", result.canonical);
  io::write_field_checkpoint(fs::path(a.out_dir) / "field.ckpt", result.field);
  std::cout << "train: " << result.canonical.size() << " gaussians -> " << a.out_dir
            << "\n";
  return 0;
}

struct RenderArgs {
  std::string gaussians_path;
  std::string field_path;   // optional: render the deformed scene
  double stamp_ti = 0.0, stamp_tj = 0.0;
  std::string poses_path;   // pose source (with --frame-id), or identity
  int frame_id = -1;
  double focal = 120.0;
  int width = 128, height = 128;
  std::string out_png;
  std::vector<double> background = {0, 0, 0};
};

inline int cmd_render(const RenderArgs& a) {
  GaussianCloud cloud = io::read_ply_gaussians(a.gaussians_path);
  Pose pose;  // identity default
  double focal = a.focal;
  if (!a.poses_path.empty()) {
    const auto doc = io::read_poses_json(a.poses_path);
    focal = doc.focal;
    if (a.frame_id >= 0) {
      auto it = doc.poses.find(a.frame_id);
      check(it != doc.poses.end(), "render: no pose for frame " + std::to_string(a.frame_id));
      pose = it->second;
    }
  }
  if (!a.field_path.empty()) {
    const auto field = io::read_field_checkpoint(a.field_path);
    cloud = field.deform(cloud, FrameStamp{a.stamp_ti, a.stamp_tj});
  }
  RenderOptions opts;
  check(a.background.size() == 3, "render: background needs 3 components");
  opts.background = Vec3(a.background[0], a.background[1], a.background[2]);
  const auto ctx = render(cloud, pose, Intrinsics(focal, a.width, a.height),
                          a.width, a.height, opts);
  io::write_png(a.out_png, ctx.out.color_image());
  std::cout << "render: " << cloud.size() << " gaussians -> " << a.out_png << "\n";
  return 0;
}

struct EvalArgs {
  std::string data_dir;
  std::string gaussians_path;
  std::string poses_path;  // for the shared focal
  std::string out_json;
  int steps = 500;
};

inline int cmd_eval(const EvalArgs& a) {
  const auto ds = Dataset::open(a.data_dir);
  check(ds.has_manifest, "eval: dataset has no manifest with eval views");
  const auto cloud = io::read_ply_gaussians(a.gaussians_path);
  const auto poses = io::read_poses_json(a.poses_path);

  Json out;
  out["schema_version"] = 1;
  Json views = Json::array();
  double sum_psnr = 0.0, sum_ssim = 0.0;
  int count = 0;
  for (const auto& je : ds.manifest.at("eval_views")) {
    const std::string name = je.at("name").get<std::string>();
    const Pose init = io::pose_from_json(je.at("pose"));
    const Image target = io::read_png(ds.dir / "eval" / (name + ".png"));
    const Intrinsics intr(poses.focal, target.width, target.height);
    const auto res = eval_test_view(cloud, target, init, intr, a.steps);
    Json jv;
    jv["name"] = name;
    jv["psnr"] = res.psnr;
    jv["ssim"] = res.ssim;
    jv["converged"] = res.converged;
    views.push_back(std::move(jv));
    sum_psnr += res.psnr;
    sum_ssim += res.ssim;
    ++count;
  }
  check(count > 0, "eval: no eval views in manifest");
  out["views"] = std::move(views);
  out["mean_psnr"] = sum_psnr / count;
  out["mean_ssim"] = sum_ssim / count;
  std::ofstream f(a.out_json);
  check(f.good(), "eval: cannot open for write: " + a.out_json);
  f << out.dump(2) << "\n";
  std::cout << "eval: mean psnr " << (sum_psnr / count) << " over " << count
            << " views -> " << a.out_json << "\n";
  return 0;
}

// ---------------------------------------------------------------------------
// dispatch

inline int run(const std::vector<std::string>& args) {
  CLI::App app{"liftcore: articulated-trajectory Gaussian splatting pipeline"};
  app.require_subcommand(1);

  // plan
  auto* plan = app.add_subcommand("plan", "plan an articulated trajectory");
  int l = 16, D = 4;
  double step = 0.05, rot_step = 0.0;
  std::string plan_out = "plan.json";
  plan->add_option("--l", l, "frames per clip");
  plan->add_option("--D", D, "motion directions (2 or 4)");
  plan->add_option("--step", step, "per-frame displacement, world units");
  plan->add_option("--rot-step", rot_step, "per-frame look rotation, radians");
  plan->add_option("--out", plan_out, "output plan.json");

  // synth
  auto* synth = app.add_subcommand("synth", "emit a synthetic oracle dataset");
  SynthArgs sa;
  synth->add_option("--plan", sa.plan_path, "plan.json")->required();
  synth->add_option("--out", sa.out_dir, "output dataset directory")->required();
  synth->add_option("--distortion", sa.distortion, "none | smooth-warp");
  synth->add_option("--amplitude", sa.amplitude, "warp amplitude, image fraction");
  synth->add_option("--frequency", sa.frequency, "warp cycles across the image");
  synth->add_option("--width", sa.width, "frame width");
  synth->add_option("--height", sa.height, "frame height");
  synth->add_option("--focal", sa.focal, "focal length, pixels");
  synth->add_option("--seed", sa.seed, "rng seed");
  synth->add_option("--eval-views", sa.eval_views, "held-out view count");
  synth->add_flag("--one-axis-stamps", sa.one_axis, "collapse stamps to one axis");

  // match
  auto* match = app.add_subcommand("match", "estimate focal and per-edge relative poses");
  std::string match_data, match_out = "match.json";
  int extra_edges = 0;
  match->add_option("--data", match_data, "dataset directory")->required();
  match->add_option("--out", match_out, "output match.json");
  match->add_option("--extra-edges", extra_edges, "loop-closure edge count");

  // register
  auto* reg = app.add_subcommand("register", "compose absolute poses and merge the cloud");
  RegisterArgs ra;
  reg->add_option("--data", ra.data_dir, "dataset directory")->required();
  reg->add_option("--match", ra.match_path, "match.json")->required();
  reg->add_option("--out-poses", ra.out_poses, "output poses.json")->required();
  reg->add_option("--out-cloud", ra.out_cloud, "output merged cloud ply")->required();
  reg->add_option("--out-depth", ra.out_depth, "output absolute depth directory");
  reg->add_option("--refine-iters", ra.refine_iters, "global alignment iterations");

  // calibrate
  auto* cal = app.add_subcommand("calibrate", "calibrate relative depth to absolute");
  std::string cal_data, cal_abs, cal_out;
  cal->add_option("--data", cal_data, "dataset directory")->required();
  cal->add_option("--depth-abs", cal_abs, "absolute depth directory")->required();
  cal->add_option("--out", cal_out, "output calibrated depth directory")->required();

  // train
  auto* tr = app.add_subcommand("train", "optimize canonical gaussians + distortion field");
  TrainArgs ta;
  tr->add_option("--data", ta.data_dir, "dataset directory")->required();
  tr->add_option("--poses", ta.poses_path, "poses.json")->required();
  tr->add_option("--cloud", ta.cloud_path, "merged cloud ply")->required();
  tr->add_option("--depth-cal", ta.depth_cal_dir, "calibrated depth directory");
  tr->add_option("--out", ta.out_dir, "output directory")->required();
  tr->add_option("--config", ta.config_path, "pipeline config json");
  tr->add_option("--vanilla-iters", ta.vanilla_iters, "phase-1 iterations");
  tr->add_option("--field-iters", ta.field_iters, "phase-2 iterations");
  tr->add_option("--max-points", ta.max_points, "gaussian budget");
  tr->add_option("--lambda-distort", ta.lambda_distort, "distortion penalty weight");
  tr->add_option("--seed", ta.seed, "rng seed");
  tr->add_flag("--one-axis-stamps", ta.one_axis, "collapse stamps to one axis");

  // render
  auto* rd = app.add_subcommand("render", "render a gaussian scene to png");
  RenderArgs rda;
  rd->add_option("--gaussians", rda.gaussians_path, "gaussians.ply")->required();
  rd->add_option("--field", rda.field_path, "field checkpoint (renders deformed)");
  rd->add_option("--stamp-ti", rda.stamp_ti, "stamp t_i for --field");
  rd->add_option("--stamp-tj", rda.stamp_tj, "stamp t_j for --field");
  rd->add_option("--poses", rda.poses_path, "poses.json (focal + optional frame pose)");
  rd->add_option("--frame-id", rda.frame_id, "render at this frame's pose");
  rd->add_option("--focal", rda.focal, "focal when no poses.json given");
  rd->add_option("--width", rda.width, "image width");
  rd->add_option("--height", rda.height, "image height");
  rd->add_option("--out", rda.out_png, "output png")->required();
  rd->add_option("--background", rda.background, "background rgb")->expected(3);

  // eval
  auto* ev = app.add_subcommand("eval", "test-pose optimization metrics on eval views");
  EvalArgs ea;
  ev->add_option("--data", ea.data_dir, "dataset directory")->required();
  ev->add_option("--gaussians", ea.gaussians_path, "gaussians.ply")->required();
  ev->add_option("--poses", ea.poses_path, "poses.json (shared focal)")->required();
  ev->add_option("--out", ea.out_json, "output metrics json")->required();
  ev->add_option("--steps", ea.steps, "pose optimization steps");

  std::vector<std::string> reversed(args.rbegin(), args.rend());
  try {
    app.parse(reversed);
  } catch (const CLI::ParseError& e) {
    if (e.get_exit_code() == 0) {  // --help
      std::cout << app.help();
      return 0;
    }
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }

  try {
    if (plan->parsed()) return cmd_plan(plan_out, l, D, step, rot_step);
    if (synth->parsed()) return cmd_synth(sa);
    if (match->parsed()) return cmd_match(match_data, match_out, extra_edges);
    if (reg->parsed()) return cmd_register(ra);
    if (cal->parsed()) return cmd_calibrate(cal_data, cal_abs, cal_out);
    if (tr->parsed()) return cmd_train(ta);
    if (rd->parsed()) return cmd_render(rda);
    if (ev->parsed()) return cmd_eval(ea);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  std::cerr << "error: no command\n";
  return 1;
}

inline int run(int argc, const char* const* argv) {
  std::vector<std::string> args;
  for (int i = 1; i < argc; ++i) args.emplace_back(argv[i]);
  return run(args);
}

}  // namespace liftcore::cli
