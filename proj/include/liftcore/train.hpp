#pragma once

// Optimization of canonical Gaussians plus the distortion field: Gaussian
// init from registered point clouds, the full loss stack (L1 RGB, D-SSIM,
// depth prior L1, plane total variation, distortion-at-origin penalty),
// the two-phase schedule (vanilla, then joint with the field), opacity
// pruning, and frozen-model test-pose optimization for evaluation.

#include "liftcore/core.hpp"
#include "liftcore/field.hpp"
#include "liftcore/image_ops.hpp"
#include "liftcore/matching.hpp"
#include "liftcore/splat.hpp"

#include <functional>
#include <map>

namespace liftcore {

struct TrainConfig {
  int vanilla_iters = 3000;
  int field_iters = 14000;

  double lambda_rgb = 0.8;
  double lambda_ssim = 0.2;     // substitutes the perceptual term with D-SSIM
  double lambda_depth = 0.05;
  double lambda_tv = 1e-4;
  double lambda_distort = 1.0;

  double lr_position = 1.6e-4;  // multiplied by scene extent
  double lr_opacity = 0.05;
  double lr_scale = 5e-3;
  double lr_rotation = 1e-3;
  double lr_sh = 2.5e-3;
  double lr_field = 1.6e-3;     // decays 10x exponentially over phase 2

  int prune_interval = 500;
  double prune_opacity = 0.005;
  int distort_batch = 4096;
  int max_points = 100000;
  std::uint64_t seed = 1;

  FieldConfig field;            // bbox overwritten from the scene at startup
  RenderOptions render;

  void validate() const {
    check(vanilla_iters >= 0 && field_iters >= 0, "config: negative iteration count");
    check(lambda_rgb >= 0 && lambda_ssim >= 0 && lambda_depth >= 0 &&
              lambda_tv >= 0 && lambda_distort >= 0,
          "config: loss weights must be non-negative");
  }
};

struct TrainView {
  int frame_id = 0;
  FrameStamp stamp;
  Pose pose;                        // registered camera-to-world
  Image image;                      // target frame
  DepthMap depth_prior;             // calibrated; empty when absent
  std::vector<std::uint8_t> depth_mask;

  bool has_depth() const { return !depth_prior.data.empty(); }
};

struct LossRecord {
  int iteration = 0;
  int phase = 1;
  double total = 0, rgb = 0, ssim = 0, depth = 0, tv = 0, distort = 0;
  double psnr = 0;
  size_t gaussians = 0;
};

// ---------------------------------------------------------------------------
// Gaussian initialization from the registered cloud: voxel downsample to at
// most max_points (duplicates in a voxel merge at the centroid), colors from
// source pixels, isotropic scale from the mean 3-nearest-neighbor distance,
// opacity 0.1, identity rotations.

namespace traindetail {

struct VoxelKey {
  std::int64_t x, y, z;
  bool operator<(const VoxelKey& o) const {
    return std::tie(x, y, z) < std::tie(o.x, o.y, o.z);
  }
};

// Mean distance to the 3 nearest neighbors, exact, via a uniform grid.
inline std::vector<double> knn3_mean_distance(const std::vector<Vec3>& pts) {
  const size_t n = pts.size();
  std::vector<double> out(n, 0.0);
  if (n < 2) return out;

  Vec3 lo = pts[0], hi = pts[0];
  for (const auto& p : pts) {
    lo = lo.cwiseMin(p);
    hi = hi.cwiseMax(p);
  }
  const double extent = std::max((hi - lo).maxCoeff(), 1e-12);
  const double cell = std::max(extent / std::max(1.0, std::cbrt(static_cast<double>(n))), 1e-12);

  std::map<VoxelKey, std::vector<int>> grid;
  auto key_of = [&](const Vec3& p) {
    return VoxelKey{static_cast<std::int64_t>(std::floor((p.x() - lo.x()) / cell)),
                    static_cast<std::int64_t>(std::floor((p.y() - lo.y()) / cell)),
                    static_cast<std::int64_t>(std::floor((p.z() - lo.z()) / cell))};
  };
  for (size_t i = 0; i < n; ++i) grid[key_of(pts[i])].push_back(static_cast<int>(i));

  const int want = std::min<int>(3, static_cast<int>(n) - 1);
  const int max_ring = static_cast<int>(extent / cell) + 2;
  parallel_for(0, static_cast<std::int64_t>(n), [&](std::int64_t ii, int) {
    const size_t i = static_cast<size_t>(ii);
    const VoxelKey base = key_of(pts[i]);
    std::vector<double> best;  // sorted ascending, size <= want
    for (int ring = 0; ring <= max_ring; ++ring) {
      for (std::int64_t dx = -ring; dx <= ring; ++dx)
        for (std::int64_t dy = -ring; dy <= ring; ++dy)
          for (std::int64_t dz = -ring; dz <= ring; ++dz) {
            if (std::max({std::abs(dx), std::abs(dy), std::abs(dz)}) != ring) continue;
            auto it = grid.find(VoxelKey{base.x + dx, base.y + dy, base.z + dz});
            if (it == grid.end()) continue;
            for (int j : it->second) {
              if (static_cast<size_t>(j) == i) continue;
              const double d = (pts[j] - pts[i]).norm();
              best.insert(std::upper_bound(best.begin(), best.end(), d), d);
              if (static_cast<int>(best.size()) > want) best.pop_back();
            }
          }
      // unexplored shells hold only points at distance >= ring*cell, so the
      // k-th best is final once it is no farther than that
      if (static_cast<int>(best.size()) == want && best.back() <= ring * cell) break;
    }
    double mean = 0.0;
    for (double d : best) mean += d;
    out[i] = best.empty() ? cell : mean / best.size();
  });
  return out;
}

}  // namespace traindetail

inline GaussianCloud init_gaussians(const RegisteredScene& scene, int max_points = 100000) {
  check(!scene.cloud.empty(), "init: empty registered cloud");
  check(max_points > 0, "init: max_points must be positive");

  Vec3 lo = scene.cloud[0].position, hi = scene.cloud[0].position;
  for (const auto& p : scene.cloud) {
    lo = lo.cwiseMin(p.position);
    hi = hi.cwiseMax(p.position);
  }
  const double extent = std::max((hi - lo).maxCoeff(), 1e-9);

  // voxel size targeting max_points occupied cells; grow until it fits
  struct Cell {
    Vec3 pos_sum = Vec3::Zero();
    Vec3 color_sum = Vec3::Zero();
    double count = 0.0;
  };
  double voxel = extent / std::max(1.0, std::cbrt(static_cast<double>(max_points)));
  std::map<traindetail::VoxelKey, Cell> cells;
  for (int attempt = 0; attempt < 64; ++attempt) {
    cells.clear();
    for (const auto& p : scene.cloud) {
      traindetail::VoxelKey k{
          static_cast<std::int64_t>(std::floor((p.position.x() - lo.x()) / voxel)),
          static_cast<std::int64_t>(std::floor((p.position.y() - lo.y()) / voxel)),
          static_cast<std::int64_t>(std::floor((p.position.z() - lo.z()) / voxel))};
      auto& cell = cells[k];
      cell.pos_sum += p.position;
      cell.color_sum += p.color;
      cell.count += 1.0;
    }
    if (static_cast<int>(cells.size()) <= max_points) break;
    voxel *= 1.3;
  }
  check(static_cast<int>(cells.size()) <= max_points, "init: voxel downsample failed");

  GaussianCloud g;
  g.resize(cells.size());
  size_t i = 0;
  for (const auto& [key, cell] : cells) {
    g.centers[i] = cell.pos_sum / cell.count;
    g.colors_sh[i] = GaussianCloud::rgb_to_sh(cell.color_sum / cell.count);
    g.opacities[i] = 0.1;
    g.rotations[i] = Quat();
    ++i;
  }
  const auto nn = traindetail::knn3_mean_distance(g.centers);
  for (size_t k = 0; k < g.size(); ++k) {
    const double s = std::max(nn[k], 1e-9);
    g.scales[k] = Vec3::Constant(s);
  }
  return g;
}

// ---------------------------------------------------------------------------
// Adam over flat double buffers.

namespace traindetail {

struct Adam {
  std::vector<double> m, v;
  double beta1 = 0.9, beta2 = 0.999, eps = 1e-8;
  long t = 0;

  void ensure(size_t n) {
    if (m.size() != n) {
      m.assign(n, 0.0);
      v.assign(n, 0.0);
    }
  }

  void step(double* param, const double* grad, size_t n, double lr) {
    ensure(n);
    ++t;
    const double c1 = 1.0 - std::pow(beta1, static_cast<double>(t));
    const double c2 = 1.0 - std::pow(beta2, static_cast<double>(t));
    for (size_t i = 0; i < n; ++i) {
      m[i] = beta1 * m[i] + (1 - beta1) * grad[i];
      v[i] = beta2 * v[i] + (1 - beta2) * grad[i] * grad[i];
      param[i] -= lr * (m[i] / c1) / (std::sqrt(v[i] / c2) + eps);
    }
  }

  void compact(const std::vector<int>& keep, int stride) {
    if (m.empty()) return;
    std::vector<double> nm, nv;
    nm.reserve(keep.size() * stride);
    nv.reserve(keep.size() * stride);
    for (int idx : keep)
      for (int c = 0; c < stride; ++c) {
        nm.push_back(m[static_cast<size_t>(idx) * stride + c]);
        nv.push_back(v[static_cast<size_t>(idx) * stride + c]);
      }
    m = std::move(nm);
    v = std::move(nv);
  }
};

}  // namespace traindetail

// Raw (unconstrained) Gaussian parameters plus optimizer state.
struct TrainState {
  std::vector<Vec3> pos;
  std::vector<Vec3> log_scale;
  std::vector<Vec4> quat;           // normalized on use
  std::vector<double> logit_opacity;
  std::vector<Vec3> sh;
  DistortionField field;
  traindetail::Adam adam_pos, adam_scale, adam_quat, adam_opacity, adam_sh, adam_field;
  int iteration = 0;
  std::vector<LossRecord> history;

  size_t size() const { return pos.size(); }

  static TrainState from_cloud(const GaussianCloud& g) {
    TrainState s;
    s.pos = g.centers;
    s.log_scale.resize(g.size());
    s.quat.resize(g.size());
    s.logit_opacity.resize(g.size());
    s.sh = g.colors_sh;
    for (size_t i = 0; i < g.size(); ++i) {
      s.log_scale[i] = g.scales[i].array().log().matrix();
      s.quat[i] = Vec4(g.rotations[i].w, g.rotations[i].x, g.rotations[i].y, g.rotations[i].z);
      const double op = std::clamp(g.opacities[i], 1e-6, 1.0 - 1e-6);
      s.logit_opacity[i] = std::log(op / (1.0 - op));
    }
    return s;
  }

  GaussianCloud to_cloud() const {
    GaussianCloud g;
    g.resize(size());
    for (size_t i = 0; i < size(); ++i) {
      g.centers[i] = pos[i];
      g.scales[i] = log_scale[i].array().exp().matrix();
      const double qn = quat[i].norm();
      check(qn > 1e-12, "train: quaternion collapsed");
      g.rotations[i] = Quat(quat[i](0) / qn, quat[i](1) / qn, quat[i](2) / qn, quat[i](3) / qn);
      g.opacities[i] = 1.0 / (1.0 + std::exp(-logit_opacity[i]));
      g.colors_sh[i] = sh[i];
    }
    return g;
  }

  void prune(double opacity_threshold) {
    std::vector<int> keep;
    for (size_t i = 0; i < size(); ++i)
      if (1.0 / (1.0 + std::exp(-logit_opacity[i])) >= opacity_threshold)
        keep.push_back(static_cast<int>(i));
    if (keep.size() == size() || keep.empty()) return;  // keep at least one
    auto compact_vec3 = [&](std::vector<Vec3>& v) {
      std::vector<Vec3> nv;
      nv.reserve(keep.size());
      for (int k : keep) nv.push_back(v[k]);
      v = std::move(nv);
    };
    compact_vec3(pos);
    compact_vec3(log_scale);
    compact_vec3(sh);
    std::vector<Vec4> nq;
    std::vector<double> no;
    for (int k : keep) {
      nq.push_back(quat[k]);
      no.push_back(logit_opacity[k]);
    }
    quat = std::move(nq);
    logit_opacity = std::move(no);
    adam_pos.compact(keep, 3);
    adam_scale.compact(keep, 3);
    adam_quat.compact(keep, 4);
    adam_opacity.compact(keep, 1);
    adam_sh.compact(keep, 3);
  }
};

// ---------------------------------------------------------------------------
// Loss stack for one rendered view.

namespace traindetail {

struct ViewLoss {
  double rgb = 0, ssim = 0, depth = 0;
  RenderGrads grads;
};

inline ViewLoss view_loss(const RenderOutput& out, const TrainView& view,
                          const TrainConfig& cfg) {
  ViewLoss vl;
  const size_t npx = static_cast<size_t>(out.width) * out.height;
  check(view.image.width == out.width && view.image.height == out.height &&
            view.image.channels == 3,
        "loss: target resolution mismatch");

  std::vector<double> g_l1, g_ssim;
  vl.rgb = l1_loss(out.color, view.image.data, &g_l1);
  const double ssim_val = ssim(out.color, view.image.data, out.width, out.height, 3,
                               &g_ssim);
  vl.ssim = 1.0 - ssim_val;

  vl.grads.d_color.assign(npx * 3, 0.0);
  for (size_t i = 0; i < npx * 3; ++i)
    vl.grads.d_color[i] = cfg.lambda_rgb * g_l1[i] - cfg.lambda_ssim * g_ssim[i];

  if (view.has_depth() && cfg.lambda_depth > 0.0) {
    check(view.depth_prior.width == out.width && view.depth_prior.height == out.height,
          "loss: depth prior resolution mismatch");
    vl.grads.d_depth.assign(npx, 0.0);
    std::vector<size_t> px_list;
    std::vector<double> valid_priors;
    for (size_t i = 0; i < npx; ++i) {
      const bool masked = view.depth_mask.empty() || view.depth_mask[i];
      if (masked && out.alpha[i] > 0.5) {
        px_list.push_back(i);
        valid_priors.push_back(std::abs(view.depth_prior.data[i]));
      }
    }
    if (!px_list.empty()) {
      // scale-normalized so lambda_depth is meaningful across scene scales;
      // the alpha in the ratio is treated as constant (gradient through the
      // expected depth only), which keeps the term from fighting opacity
      std::nth_element(valid_priors.begin(),
                       valid_priors.begin() + (valid_priors.size() - 1) / 2,
                       valid_priors.end());
      const double norm = std::max(valid_priors[(valid_priors.size() - 1) / 2], 1e-9);
      const double inv = 1.0 / (static_cast<double>(px_list.size()) * norm);
      for (size_t i : px_list) {
        const double a = std::max(out.alpha[i], 1e-6);
        const double diff = out.depth[i] / a - view.depth_prior.data[i];
        vl.depth += std::abs(diff) * inv;
        const double sgn = diff > 0 ? 1.0 : (diff < 0 ? -1.0 : 0.0);
        vl.grads.d_depth[i] = sgn * inv / a;
      }
    }
  }
  return vl;
}

}  // namespace traindetail

// Aggregate loss for one iteration; field terms are optional. Exposed for
// direct testing against the hand-enumerated oracles.
struct LossBreakdown {
  double total = 0, rgb = 0, ssim = 0, depth = 0, tv = 0, distort = 0;
};

inline LossBreakdown loss_breakdown(const RenderOutput& out, const TrainView& view,
                                    const TrainConfig& cfg, const Deformation* origin_deltas,
                                    const DistortionField* field) {
  const auto vl = traindetail::view_loss(out, view, cfg);
  LossBreakdown b;
  b.rgb = vl.rgb;
  b.ssim = vl.ssim;
  b.depth = vl.depth;
  if (field) b.tv = field->tv();
  if (origin_deltas && origin_deltas->size() > 0) {
    double sx = 0, sr = 0, ss = 0;
    const size_t n = origin_deltas->size();
    for (size_t i = 0; i < n; ++i) {
      sx += origin_deltas->dx[i].cwiseAbs().sum();
      sr += origin_deltas->dr[i].cwiseAbs().sum();
      ss += origin_deltas->ds[i].cwiseAbs().sum();
    }
    b.distort = sx / (3.0 * n) + sr / (4.0 * n) + ss / (3.0 * n);
  }
  b.total = cfg.lambda_rgb * b.rgb + cfg.lambda_ssim * b.ssim + cfg.lambda_depth * b.depth +
            cfg.lambda_tv * b.tv + cfg.lambda_distort * b.distort;
  return b;
}

// ---------------------------------------------------------------------------
// Training driver.

struct TrainCallbacks {
  std::function<void(const LossRecord&)> on_record;
  std::function<void(int, const GaussianCloud&, const DistortionField&)> on_checkpoint;
  int record_interval = 50;
  int checkpoint_interval = 1000;
};

struct TrainResult {
  GaussianCloud canonical;
  DistortionField field;
  std::vector<LossRecord> history;
};

inline TrainResult train(const std::vector<TrainView>& views, const RegisteredScene& scene,
                         const Intrinsics& intrinsics, TrainConfig cfg,
                         const TrainCallbacks& callbacks = {}) {
  cfg.validate();
  check(!views.empty(), "train: no views");
  const int width = views[0].image.width, height = views[0].image.height;

  GaussianCloud init = init_gaussians(scene, cfg.max_points);
  TrainState state = TrainState::from_cloud(init);

  // scene extent and field normalization box (bbox + 5%)
  Vec3 lo = init.centers[0], hi = init.centers[0];
  for (const auto& c : init.centers) {
    lo = lo.cwiseMin(c);
    hi = hi.cwiseMax(c);
  }
  const Vec3 pad = 0.05 * (hi - lo).cwiseMax(Vec3::Constant(1e-6));
  cfg.field.bbox_min = lo - pad;
  cfg.field.bbox_max = hi + pad;
  const double extent = std::max((hi - lo).norm(), 1e-9);

  Rng rng(cfg.seed);
  state.field = DistortionField(cfg.field, rng);

  // per-epoch shuffled view order
  std::vector<int> deck(views.size());
  for (size_t i = 0; i < deck.size(); ++i) deck[i] = static_cast<int>(i);
  size_t deck_pos = deck.size();
  auto next_view = [&]() -> const TrainView& {
    if (deck_pos >= deck.size()) {
      for (size_t i = deck.size() - 1; i > 0; --i)
        std::swap(deck[i], deck[rng.uniform_index(i + 1)]);
      deck_pos = 0;
    }
    return views[deck[deck_pos++]];
  };

  const int total_iters = cfg.vanilla_iters + cfg.field_iters;
  for (int it = 0; it < total_iters; ++it) {
    const bool phase2 = it >= cfg.vanilla_iters;
    const TrainView& view = next_view();

    const GaussianCloud cloud = state.to_cloud();
    const size_t n = cloud.size();

    // forward
    Deformation deltas;
    FieldCache cache;
    const GaussianCloud* render_cloud = &cloud;
    GaussianCloud deformed;
    if (phase2) {
      deformed = state.field.deform(cloud, view.stamp, &deltas, &cache);
      render_cloud = &deformed;
    }
    RenderContext ctx = render(*render_cloud, view.pose, intrinsics, width, height, cfg.render);

    const auto vl = traindetail::view_loss(ctx.out, view, cfg);

    // backward through the renderer
    CloudGrads rg;
    render_backward(ctx, vl.grads, rg);

    // gradients w.r.t. raw gaussian parameters
    std::vector<Vec3> g_pos(n, Vec3::Zero()), g_logs(n, Vec3::Zero()), g_sh(n, Vec3::Zero());
    std::vector<Vec4> g_quat(n, Vec4::Zero());
    std::vector<double> g_logit(n, 0.0);
    std::vector<double> g_field(state.field.param_count(), 0.0);

    double tv_value = 0.0, distort_value = 0.0;

    if (!phase2) {
      for (size_t i = 0; i < n; ++i) {
        g_pos[i] = rg.centers[i];
        g_sh[i] = rg.colors_sh[i];
        g_logs[i] = rg.scales[i].cwiseProduct(cloud.scales[i]);
        const double op = cloud.opacities[i];
        g_logit[i] = rg.opacities[i] * op * (1.0 - op);
        // renderer grads are w.r.t. the unit quat; chain through raw->unit
        const Vec4& q = state.quat[i];
        const double qn = q.norm();
        const Vec4 y = q / qn;
        g_quat[i] = (rg.rotations[i] - y * y.dot(rg.rotations[i])) / qn;
      }
    } else {
      // deform backward: render grads on the deformed cloud chain into the
      // canonical cloud and the field parameters
      std::vector<Vec3> gc_centers(n, Vec3::Zero()), gc_scales(n, Vec3::Zero());
      std::vector<Vec4> gc_rot(n, Vec4::Zero());
      DistortionField::Upstream up;
      up.d_centers = &rg.centers;
      up.d_rotations = &rg.rotations;
      up.d_scales = &rg.scales;
      DistortionField::CanonicalGrads cg;
      cg.centers = &gc_centers;
      cg.rotations = &gc_rot;
      cg.scales = &gc_scales;
      state.field.deform_backward(cloud, deltas, cache, up, {}, g_field, cg);

      // distortion penalty at the origin stamp on a sampled batch
      if (cfg.lambda_distort > 0.0 && n > 0) {
        const size_t batch = std::min<size_t>(cfg.distort_batch, n);
        std::vector<int> sample(batch);
        for (size_t b = 0; b < batch; ++b)
          sample[b] = static_cast<int>(rng.uniform_index(n));
        GaussianCloud batch_cloud;
        batch_cloud.resize(batch);
        for (size_t b = 0; b < batch; ++b) {
          batch_cloud.centers[b] = cloud.centers[sample[b]];
          batch_cloud.scales[b] = cloud.scales[sample[b]];
          batch_cloud.rotations[b] = cloud.rotations[sample[b]];
        }
        FieldCache bcache;
        const Deformation bd = state.field.deltas(batch_cloud.centers, FrameStamp{0.0, 0.0},
                                                  &bcache);
        std::vector<Vec3> g_dx(batch), g_ds(batch);
        std::vector<Vec4> g_dr(batch);
        const double wx = cfg.lambda_distort / (3.0 * batch);
        const double wr = cfg.lambda_distort / (4.0 * batch);
        const double ws = cfg.lambda_distort / (3.0 * batch);
        double sx = 0, sr = 0, ss = 0;
        for (size_t b = 0; b < batch; ++b) {
          for (int c = 0; c < 3; ++c) {
            sx += std::abs(bd.dx[b](c));
            ss += std::abs(bd.ds[b](c));
            g_dx[b](c) = wx * (bd.dx[b](c) > 0 ? 1 : (bd.dx[b](c) < 0 ? -1 : 0));
            g_ds[b](c) = ws * (bd.ds[b](c) > 0 ? 1 : (bd.ds[b](c) < 0 ? -1 : 0));
          }
          for (int c = 0; c < 4; ++c) {
            sr += std::abs(bd.dr[b](c));
            g_dr[b](c) = wr * (bd.dr[b](c) > 0 ? 1 : (bd.dr[b](c) < 0 ? -1 : 0));
          }
        }
        distort_value = sx / (3.0 * batch) + sr / (4.0 * batch) + ss / (3.0 * batch);
        DistortionField::DeltaUpstream dup;
        dup.d_dx = &g_dx;
        dup.d_dr = &g_dr;
        dup.d_ds = &g_ds;
        std::vector<Vec3> gb_centers(batch, Vec3::Zero());
        DistortionField::CanonicalGrads bcg;
        bcg.centers = &gb_centers;
        state.field.deform_backward(batch_cloud, bd, bcache, {}, dup, g_field, bcg);
        for (size_t b = 0; b < batch; ++b) gc_centers[sample[b]] += gb_centers[b];
      }

      // grid total variation
      if (cfg.lambda_tv > 0.0) {
        std::vector<double> tv_grad(g_field.size(), 0.0);
        tv_value = state.field.tv(&tv_grad);
        for (size_t i = 0; i < g_field.size(); ++i) g_field[i] += cfg.lambda_tv * tv_grad[i];
      }

      for (size_t i = 0; i < n; ++i) {
        g_pos[i] = gc_centers[i];
        g_sh[i] = rg.colors_sh[i];  // deformation does not touch SH
        g_logs[i] = gc_scales[i].cwiseProduct(cloud.scales[i]);
        const double op = cloud.opacities[i];
        g_logit[i] = rg.opacities[i] * op * (1.0 - op);
        const Vec4& q = state.quat[i];
        const double qn = q.norm();
        const Vec4 y = q / qn;
        g_quat[i] = (gc_rot[i] - y * y.dot(gc_rot[i])) / qn;
      }
    }

    const double total = cfg.lambda_rgb * vl.rgb + cfg.lambda_ssim * vl.ssim +
                         cfg.lambda_depth * vl.depth + cfg.lambda_tv * tv_value +
                         cfg.lambda_distort * distort_value;
    if (!std::isfinite(total)) {
      throw Error("train: non-finite loss at iteration " + std::to_string(it) +
                  " (rgb=" + std::to_string(vl.rgb) + " ssim=" + std::to_string(vl.ssim) +
                  " depth=" + std::to_string(vl.depth) + ")");
    }

    // optimizer steps
    state.adam_pos.step(g_pos.empty() ? nullptr : state.pos[0].data(),
                        g_pos.empty() ? nullptr : g_pos[0].data(), n * 3,
                        cfg.lr_position * extent);
    state.adam_scale.step(state.log_scale[0].data(), g_logs[0].data(), n * 3, cfg.lr_scale);
    state.adam_quat.step(state.quat[0].data(), g_quat[0].data(), n * 4, cfg.lr_rotation);
    state.adam_opacity.step(state.logit_opacity.data(), g_logit.data(), n, cfg.lr_opacity);
    state.adam_sh.step(state.sh[0].data(), g_sh[0].data(), n * 3, cfg.lr_sh);
    if (phase2 && !g_field.empty()) {
      const double progress = cfg.field_iters > 1
          ? static_cast<double>(it - cfg.vanilla_iters) / (cfg.field_iters - 1)
          : 0.0;
      const double lr = cfg.lr_field * std::pow(0.1, progress);
      state.adam_field.step(state.field.params().data(), g_field.data(), g_field.size(), lr);
    }

    state.iteration = it + 1;

    if (cfg.prune_interval > 0 && (it + 1) % cfg.prune_interval == 0)
      state.prune(cfg.prune_opacity);

    if (callbacks.record_interval > 0 &&
        ((it + 1) % callbacks.record_interval == 0 || it + 1 == total_iters)) {
      LossRecord rec;
      rec.iteration = it + 1;
      rec.phase = phase2 ? 2 : 1;
      rec.total = total;
      rec.rgb = vl.rgb;
      rec.ssim = vl.ssim;
      rec.depth = vl.depth;
      rec.tv = tv_value;
      rec.distort = distort_value;
      rec.psnr = psnr(ctx.out.color, view.image.data);
      rec.gaussians = state.size();
      state.history.push_back(rec);
      if (callbacks.on_record) callbacks.on_record(rec);
    }
    if (callbacks.on_checkpoint && callbacks.checkpoint_interval > 0 &&
        (it + 1) % callbacks.checkpoint_interval == 0)
      callbacks.on_checkpoint(it + 1, state.to_cloud(), state.field);
  }

  TrainResult result;
  result.canonical = state.to_cloud();
  result.field = state.field;
  result.history = std::move(state.history);
  return result;
}

// ---------------------------------------------------------------------------
// Frozen-model test-pose optimization: gradient descent on the camera pose
// minimizing photometric L1 + D-SSIM against the test image, Gaussians and
// field untouched. Returns best-so-far on divergence (loss increasing for
// 100 consecutive steps).

struct EvalResult {
  Pose pose;
  double psnr = 0.0;
  double ssim = 0.0;
  double loss = 0.0;
  bool converged = true;
};

inline EvalResult eval_test_view(const GaussianCloud& cloud, const Image& target,
                                 const Pose& init_pose, const Intrinsics& intrinsics,
                                 int steps = 500, const RenderOptions& ropts = {},
                                 double lr_rot = 2e-3, double lr_trans_rel = 2e-3) {
  check(target.channels == 3, "eval: target must be RGB");
  const int w = target.width, h = target.height;

  Vec3 lo = Vec3::Constant(1e300), hi = Vec3::Constant(-1e300);
  for (const auto& c : cloud.centers) {
    lo = lo.cwiseMin(c);
    hi = hi.cwiseMax(c);
  }
  const double extent = cloud.size() ? std::max((hi - lo).norm(), 1e-9) : 1.0;
  const double lr_trans = lr_trans_rel * extent;

  TrainConfig weights;  // photometric weights only
  TrainView view;
  view.image = target;

  Pose pose = init_pose;
  Pose best_pose = pose;
  double best_loss = 1e300;
  int rising = 0;
  bool converged = true;

  traindetail::Adam adam;
  std::array<double, 6> theta{};  // local increment, re-anchored every step

  for (int it = 0; it < steps; ++it) {
    RenderContext ctx = render(cloud, pose, intrinsics, w, h, ropts);
    const auto vl = traindetail::view_loss(ctx.out, view, weights);
    const double loss = weights.lambda_rgb * vl.rgb + weights.lambda_ssim * vl.ssim;
    if (loss < best_loss) {
      best_loss = loss;
      best_pose = pose;
      rising = 0;
    } else if (++rising >= 100) {
      converged = false;
      break;
    }

    CloudGrads rg;
    render_backward(ctx, vl.grads, rg);
    std::array<double, 6> grad{rg.pose_rot(0), rg.pose_rot(1), rg.pose_rot(2),
                               rg.pose_trans(0), rg.pose_trans(1), rg.pose_trans(2)};
    // Adam with lr 1 on a zeroed local increment leaves theta = -m_hat/sqrt(v_hat),
    // already the descent direction; re-anchor the pose every step.
    theta.fill(0.0);
    adam.step(theta.data(), grad.data(), 6, 1.0);
    const Vec3 omega(lr_rot * theta[0], lr_rot * theta[1], lr_rot * theta[2]);
    pose.R = pose.R * axis_angle_to_matrix(omega);
    pose.t += Vec3(lr_trans * theta[3], lr_trans * theta[4], lr_trans * theta[5]);
  }

  // metrics at the best pose
  const auto ctx = render(cloud, best_pose, intrinsics, w, h, ropts);
  EvalResult res;
  res.pose = best_pose;
  res.loss = best_loss;
  res.psnr = psnr(ctx.out.color, target.data);
  res.ssim = ssim(ctx.out.color, target.data, w, h, 3);
  res.converged = converged;
  return res;
}

}  // namespace liftcore
