#pragma once

// Neural-matching alignment math: shared-focal recovery from a pointmap
// (Weiszfeld iteratively reweighted least squares), confidence-weighted
// closed-form similarity alignment between pointmap pairs (Umeyama), the
// temporal L-1 match graph, and global registration into the input frame.
//
// Pointmaps and confidences are inputs here (from MASt3R-style matchers on
// disk or from the synthetic oracle); the networks themselves are not part
// of this library.

#include "liftcore/core.hpp"
#include "liftcore/trajectory.hpp"

#include <algorithm>
#include <map>

namespace liftcore {

// Same-pixel two-frame observation: both pointmaps cover one shared pixel
// grid (the src frame's pixels) and give each pixel's 3D point expressed in
// the src camera frame and in the ref camera frame respectively. Matchers
// emit exactly this for an image pair; per-point weights are the product of
// the two confidence channels.
struct PairObservation {
  int ref_frame_id = 0;
  int src_frame_id = 0;
  PointMap points_in_ref;  // shared pixels, coordinates in the ref frame
  PointMap points_in_src;  // shared pixels, coordinates in the src frame

  void validate() const {
    check(points_in_ref.width == points_in_src.width &&
              points_in_ref.height == points_in_src.height,
          "pair: pointmap resolutions differ");
    points_in_ref.validate();
    points_in_src.validate();
  }
};

// Similarity transform mapping src-frame coordinates into ref-frame
// coordinates: x_ref = scale * (R x_src) + T. The rigid part is the pose of
// the src camera expressed in the ref frame.
struct RelativePose {
  int ref_frame_id = 0;
  int src_frame_id = 0;
  Mat3 R = Mat3::Identity();
  Vec3 T = Vec3::Zero();
  double scale = 1.0;
  double residual = 0.0;  // weighted RMS alignment error

  Sim3 sim3() const { return Sim3{scale, R, T}; }
};

struct MatchEdge {
  int ref_frame_id = 0;  // parent, nearer the root
  int src_frame_id = 0;
  bool tree = true;
};

// Tree rooted at the input frame (L-1 edges for L frames), plus optional
// extra edges for loop closure.
struct MatchGraph {
  int root = 0;
  std::vector<int> nodes;
  std::vector<MatchEdge> edges;

  size_t tree_edge_count() const {
    size_t n = 0;
    for (const auto& e : edges) n += e.tree ? 1 : 0;
    return n;
  }
};

// ---------------------------------------------------------------------------
// Focal recovery (Weiszfeld / IRLS).
//
// Minimizes sum_ij O_ij || (i', j') - f * (P0, P1) / P2 || over f, where
// (i', j') are image-centered pixel coordinates. Pixel (i, j) contributes
// its center (i + 0.5 - W/2, j + 0.5 - H/2).

inline Intrinsics estimate_focal(const PointMap& pm, int max_iters = 50) {
  const int w = pm.width, h = pm.height;
  const double cx = w / 2.0, cy = h / 2.0;

  std::vector<Vec2> u, v;
  std::vector<double> wgt;
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      const double c = pm.conf(x, y);
      const Vec3& p = pm.at(x, y);
      if (c <= 0.0 || p.z() <= 1e-9) continue;
      u.emplace_back(x + 0.5 - cx, y + 0.5 - cy);
      v.emplace_back(p.x() / p.z(), p.y() / p.z());
      wgt.push_back(c);
    }
  }
  check(u.size() >= 100, "focal: need >= 100 confident pixels with positive depth");

  double den0 = 0.0, num0 = 0.0;
  for (size_t k = 0; k < u.size(); ++k) {
    num0 += wgt[k] * u[k].dot(v[k]);
    den0 += wgt[k] * v[k].squaredNorm();
  }
  check(den0 > 1e-18, "focal: degenerate pointmap (all points on optical axis)");

  double f = num0 / den0;  // weighted least-squares start
  for (int it = 0; it < max_iters; ++it) {
    double num = 0.0, den = 0.0;
    for (size_t k = 0; k < u.size(); ++k) {
      const double r = (u[k] - f * v[k]).norm();
      const double rho = wgt[k] / std::max(r, 1e-12);
      num += rho * u[k].dot(v[k]);
      den += rho * v[k].squaredNorm();
    }
    check(den > 1e-18, "focal: degenerate reweighting");
    const double next = num / den;
    const bool converged = std::abs(next - f) <= 1e-12 * std::abs(next);
    f = next;
    if (converged) break;
  }
  check(f > 0.0 && std::isfinite(f), "focal: solver produced invalid focal");
  return Intrinsics(f, w, h);
}

// ---------------------------------------------------------------------------
// Confidence-weighted similarity alignment (closed-form Umeyama).
//
// Solves argmin_{s,R,T} sum_i w_i || s (R x_i + .) ... || precisely:
// minimizes sum_i w_i || s R x_i + T - y_i ||^2 with x from points_in_src
// and y from points_in_ref; w_i is the product of the two confidences.

inline constexpr double kMinPairWeight = 1e-6;

inline RelativePose relative_pose(const PairObservation& pair) {
  const size_t n = pair.points_in_src.size();
  check(pair.points_in_ref.size() == n, "pair: pointmap sizes differ");

  std::vector<Vec3> x, y;
  std::vector<double> w;
  x.reserve(n); y.reserve(n); w.reserve(n);
  for (size_t i = 0; i < n; ++i) {
    const double wi = pair.points_in_src.confidence[i] * pair.points_in_ref.confidence[i];
    if (wi < kMinPairWeight) continue;
    x.push_back(pair.points_in_src.points[i]);
    y.push_back(pair.points_in_ref.points[i]);
    w.push_back(wi);
  }
  check(x.size() >= 3, "pair: fewer than 3 confident correspondences");

  double wsum = 0.0;
  Vec3 mx = Vec3::Zero(), my = Vec3::Zero();
  for (size_t i = 0; i < x.size(); ++i) {
    wsum += w[i];
    mx += w[i] * x[i];
    my += w[i] * y[i];
  }
  mx /= wsum;
  my /= wsum;

  double var_x = 0.0;
  Mat3 cov = Mat3::Zero();  // dst . src^T
  for (size_t i = 0; i < x.size(); ++i) {
    const Vec3 dx = x[i] - mx, dy = y[i] - my;
    var_x += w[i] * dx.squaredNorm();
    cov += w[i] * (dy * dx.transpose());
  }
  var_x /= wsum;
  cov /= wsum;
  check(var_x > 1e-18, "pair: degenerate geometry (zero source variance)");

  Eigen::JacobiSVD<Mat3> svd(cov, Eigen::ComputeFullU | Eigen::ComputeFullV);
  const Vec3 d = svd.singularValues();
  check(d(1) > 1e-12 * std::max(d(0), 1e-300),
        "pair: degenerate geometry (collinear points)");

  Vec3 s = Vec3::Ones();
  if (svd.matrixU().determinant() * svd.matrixV().determinant() < 0.0) s(2) = -1.0;

  RelativePose out;
  out.ref_frame_id = pair.ref_frame_id;
  out.src_frame_id = pair.src_frame_id;
  out.R = svd.matrixU() * s.asDiagonal() * svd.matrixV().transpose();
  out.scale = d.dot(s) / var_x;
  check(out.scale > 0.0, "pair: non-positive recovered scale");
  out.T = my - out.scale * (out.R * mx);

  double err = 0.0;
  for (size_t i = 0; i < x.size(); ++i)
    err += w[i] * (out.scale * (out.R * x[i]) + out.T - y[i]).squaredNorm();
  out.residual = std::sqrt(err / wsum);
  return out;
}

// ---------------------------------------------------------------------------
// Match graph: each frame pairs with the frame just before it in its clip;
// each clip's first new frame pairs with the clip anchor. Exactly L-1 tree
// edges. Optionally k extra edges joining terminal frames of consecutive
// clips (loop closure candidates).

inline MatchGraph build_match_graph(const TrajectoryPlan& plan, int extra_edges = 0) {
  check(!plan.frames.empty(), "graph: empty plan");
  MatchGraph g;
  g.root = plan.frames[0].frame_id;
  for (const auto& f : plan.frames) g.nodes.push_back(f.frame_id);

  for (const auto& clip : plan.clips) {
    for (size_t k = 1; k < clip.frame_ids.size(); ++k) {
      const int fid = clip.frame_ids[k];
      if (fid == clip.anchor_frame_id) continue;  // alias slot, nothing new
      MatchEdge e;
      e.ref_frame_id = clip.frame_ids[k - 1];
      e.src_frame_id = fid;
      e.tree = true;
      g.edges.push_back(e);
    }
  }
  check(g.tree_edge_count() + 1 == g.nodes.size(), "graph: plan is disconnected");

  int added = 0;
  for (size_t c = 0; c + 1 < plan.clips.size() && added < extra_edges; ++c) {
    const auto& a = plan.clips[c].frame_ids.back();
    const auto& b = plan.clips[c + 1].frame_ids.back();
    if (a == b) continue;
    g.edges.push_back(MatchEdge{a, b, false});
    ++added;
  }
  return g;
}

// ---------------------------------------------------------------------------
// Global registration.

// Per-frame registration inputs: the frame's own pointmap (its pixels in its
// own camera frame) and the image supplying point colors.
struct FrameGeometry {
  int frame_id = 0;
  PointMap own;
  Image image;
};

struct MergedPoint {
  Vec3 position = Vec3::Zero();  // input-frame coordinates
  Vec3 color = Vec3::Zero();
  double confidence = 0.0;
  int source_frame_id = 0;
};

struct RegisteredScene {
  std::vector<int> frame_ids;
  std::vector<Pose> poses;      // absolute camera-to-world, root = identity
  std::vector<double> scales;   // per-frame depth scale into root units
  Intrinsics intrinsics;
  std::vector<MergedPoint> cloud;
  std::vector<DepthMap> depths;  // per-frame absolute depth, invalid pixels 0

  int index_of(int frame_id) const {
    for (size_t i = 0; i < frame_ids.size(); ++i)
      if (frame_ids[i] == frame_id) return static_cast<int>(i);
    throw Error("scene: unknown frame id " + std::to_string(frame_id));
  }
};

namespace detail {

// so(3) generators for contracting covariance-style gradients.
inline const std::array<Mat3, 3>& so3_generators() {
  static const std::array<Mat3, 3> g = [] {
    std::array<Mat3, 3> a;
    a[0] << 0, 0, 0, 0, 0, -1, 0, 1, 0;
    a[1] << 0, 0, 1, 0, 0, 0, -1, 0, 0;
    a[2] << 0, -1, 0, 1, 0, 0, 0, 0, 0;
    return a;
  }();
  return g;
}

struct RefinePointSet {
  int ref_index = 0;
  int src_index = 0;
  std::vector<Vec3> a;  // src-frame points
  std::vector<Vec3> b;  // ref-frame points
  std::vector<double> w;
  double wsum = 0.0;
};

}  // namespace detail

// Registers all frames into the input frame. Absolute similarities compose
// along the tree; when extra edges are present the per-frame rotations,
// translations and log-scales are refined by gradient descent on the summed
// pair residuals (root gauge frozen). Merged cloud and per-frame absolute
// depths are rebuilt from the final transforms.
inline RegisteredScene register_frames(const MatchGraph& graph,
                                       const std::vector<PairObservation>& pairs,
                                       const std::vector<RelativePose>& rel,
                                       const std::vector<FrameGeometry>& geometry,
                                       int refine_iters = 400,
                                       int refine_points_per_edge = 1024) {
  check(rel.size() == graph.edges.size(), "register: one relative pose per edge required");
  for (size_t i = 0; i < rel.size(); ++i)
    check(rel[i].ref_frame_id == graph.edges[i].ref_frame_id &&
              rel[i].src_frame_id == graph.edges[i].src_frame_id,
          "register: inconsistent edge endpoints at edge " + std::to_string(i));
  check(pairs.size() == graph.edges.size() || pairs.empty(),
        "register: pair observations must match edges (or be empty when no refinement)");

  std::map<int, int> node_index;
  for (size_t i = 0; i < graph.nodes.size(); ++i) node_index[graph.nodes[i]] = static_cast<int>(i);
  check(node_index.count(graph.root), "register: root not among nodes");

  const size_t n = graph.nodes.size();
  std::vector<Sim3> world(n);       // frame coords -> root coords
  std::vector<char> placed(n, 0);
  placed[node_index[graph.root]] = 1;

  // Tree edges are emitted parent-first by construction; a few sweeps settle
  // any ordering.
  size_t remaining = n - 1;
  bool progress = true;
  while (remaining > 0 && progress) {
    progress = false;
    for (size_t i = 0; i < graph.edges.size(); ++i) {
      const auto& e = graph.edges[i];
      if (!e.tree) continue;
      auto ri = node_index.find(e.ref_frame_id);
      auto si = node_index.find(e.src_frame_id);
      check(ri != node_index.end() && si != node_index.end(),
            "register: edge references unknown frame");
      if (placed[ri->second] && !placed[si->second]) {
        world[si->second] = world[ri->second] * rel[i].sim3();
        placed[si->second] = 1;
        --remaining;
        progress = true;
      }
    }
  }
  check(remaining == 0, "register: graph not connected to root");

  // Optional refinement when loop-closing edges exist.
  const bool has_extra = std::any_of(graph.edges.begin(), graph.edges.end(),
                                     [](const MatchEdge& e) { return !e.tree; });
  if (has_extra && refine_iters > 0) {
    check(pairs.size() == graph.edges.size(), "register: refinement needs pair observations");

    std::vector<detail::RefinePointSet> sets;
    for (size_t i = 0; i < graph.edges.size(); ++i) {
      const auto& p = pairs[i];
      detail::RefinePointSet s;
      s.ref_index = node_index[graph.edges[i].ref_frame_id];
      s.src_index = node_index[graph.edges[i].src_frame_id];
      const size_t total = p.points_in_src.size();
      const size_t stride = std::max<size_t>(1, total / static_cast<size_t>(refine_points_per_edge));
      for (size_t k = 0; k < total; k += stride) {
        const double wi = p.points_in_src.confidence[k] * p.points_in_ref.confidence[k];
        if (wi < kMinPairWeight) continue;
        s.a.push_back(p.points_in_src.points[k]);
        s.b.push_back(p.points_in_ref.points[k]);
        s.w.push_back(wi);
        s.wsum += wi;
      }
      if (s.wsum > 0.0) sets.push_back(std::move(s));
    }

    double extent = 1.0;
    {
      Vec3 lo = Vec3::Constant(1e300), hi = Vec3::Constant(-1e300);
      for (const auto& s : sets)
        for (const auto& b : s.b) { lo = lo.cwiseMin(b); hi = hi.cwiseMax(b); }
      if (hi.x() > lo.x()) extent = (hi - lo).norm();
    }

    const auto& gen = detail::so3_generators();
    const double lr_rot = 2e-3, lr_t = 2e-3 * extent, lr_s = 2e-3;
    for (int it = 0; it < refine_iters; ++it) {
      std::vector<Vec3> g_rot(n, Vec3::Zero()), g_t(n, Vec3::Zero());
      std::vector<double> g_logs(n, 0.0);
      for (const auto& s : sets) {
        const Sim3& Wr = world[s.ref_index];
        const Sim3& Ws = world[s.src_index];
        for (size_t k = 0; k < s.a.size(); ++k) {
          const Vec3 pa = Ws.apply(s.a[k]);
          const Vec3 pb = Wr.apply(s.b[k]);
          const Vec3 r = pa - pb;
          const Vec3 gr = (2.0 * s.w[k] / s.wsum / sets.size()) * r;
          // src side: d(s R a + t)
          g_t[s.src_index] += gr;
          g_logs[s.src_index] += gr.dot(pa - Ws.t);
          for (int ax = 0; ax < 3; ++ax)
            g_rot[s.src_index](ax) += gr.dot(Ws.s * (Ws.R * (gen[ax] * s.a[k])));
          // ref side enters with opposite sign
          g_t[s.ref_index] -= gr;
          g_logs[s.ref_index] -= gr.dot(pb - Wr.t);
          for (int ax = 0; ax < 3; ++ax)
            g_rot[s.ref_index](ax) -= gr.dot(Wr.s * (Wr.R * (gen[ax] * s.b[k])));
        }
      }
      const double decay = std::pow(0.05, static_cast<double>(it) / std::max(1, refine_iters));
      const int root_idx = node_index[graph.root];
      for (size_t f = 0; f < n; ++f) {
        if (static_cast<int>(f) == root_idx) continue;  // gauge
        world[f].R = world[f].R * axis_angle_to_matrix(-lr_rot * decay * g_rot[f]);
        world[f].t -= lr_t * decay * g_t[f];
        world[f].s *= std::exp(-lr_s * decay * g_logs[f]);
      }
    }
  }

  // Assemble outputs.
  RegisteredScene scene;
  scene.frame_ids = graph.nodes;
  scene.poses.resize(n);
  scene.scales.resize(n);
  for (size_t i = 0; i < n; ++i) {
    scene.poses[i] = world[i].pose();
    scene.scales[i] = world[i].s;
  }

  const FrameGeometry* root_geo = nullptr;
  for (const auto& g : geometry)
    if (g.frame_id == graph.root) root_geo = &g;
  check(root_geo != nullptr, "register: missing root frame geometry");
  scene.intrinsics = estimate_focal(root_geo->own);

  std::map<int, const FrameGeometry*> geo_by_id;
  for (const auto& g : geometry) {
    check(node_index.count(g.frame_id), "register: geometry for unknown frame");
    geo_by_id[g.frame_id] = &g;
  }

  scene.depths.resize(n);
  for (size_t i = 0; i < n; ++i) {
    auto it = geo_by_id.find(graph.nodes[i]);
    if (it == geo_by_id.end()) continue;  // frame without geometry: empty depth
    const FrameGeometry& g = *it->second;
    const Sim3& W = world[i];
    DepthMap depth(g.own.width, g.own.height, DepthKind::absolute, 0.0);
    for (int y = 0; y < g.own.height; ++y) {
      for (int x = 0; x < g.own.width; ++x) {
        const double c = g.own.conf(x, y);
        if (c <= 0.0) continue;
        const Vec3& p = g.own.at(x, y);
        MergedPoint mp;
        mp.position = W.apply(p);
        mp.confidence = c;
        mp.source_frame_id = g.frame_id;
        if (g.image.channels == 3)
          mp.color = Vec3(g.image.at(x, y, 0), g.image.at(x, y, 1), g.image.at(x, y, 2));
        else if (g.image.channels == 1)
          mp.color = Vec3::Constant(g.image.at(x, y, 0));
        scene.cloud.push_back(mp);
        depth.at(x, y) = W.s * p.z();
      }
    }
    scene.depths[i] = std::move(depth);
  }
  return scene;
}

}  // namespace liftcore
