#pragma once

// Differentiable forward renderer for Gaussian clouds: perspective
// projection, global front-to-back alpha compositing in view-depth order,
// and analytic gradients for every Gaussian parameter plus the camera pose.
//
// Per-pixel compositing is exact at desk scale: each Gaussian rasterizes
// over its ellipse bounding box, pixels composite the covering Gaussians in
// global depth order (stable index tie-break), and contributions with
// alpha below alpha_min are skipped. Depth is alpha-weighted expected
// camera-space depth; background pixels carry the sentinel 0 with alpha 0.

#include "liftcore/core.hpp"

#include <algorithm>
#include <array>

namespace liftcore {

struct RenderOptions {
  Vec3 background = Vec3::Zero();
  double near_plane = 0.01;
  double transmittance_min = 1e-4;  // stop compositing below this
  double alpha_min = 1e-6;          // skip negligible contributions
  double alpha_max = 0.999;         // clamp, keeps 1/(1-alpha) bounded
  double blur = 0.3;                // isotropic screen-space blur, px^2
};

struct RenderOutput {
  int width = 0;
  int height = 0;
  std::vector<double> color;  // W*H*3, unclamped
  std::vector<double> depth;  // W*H, sum of w_i * z_i; 0 on background
  std::vector<double> alpha;  // W*H, accumulated opacity in [0,1]

  Image color_image() const {
    Image img(width, height, 3);
    for (size_t i = 0; i < color.size(); ++i)
      img.data[i] = std::clamp(color[i], 0.0, 1.0);
    return img;
  }
};

struct CloudGrads {
  std::vector<Vec3> centers;
  std::vector<Vec3> scales;
  std::vector<Vec4> rotations;  // (w, x, y, z), includes normalization term
  std::vector<double> opacities;
  std::vector<Vec3> colors_sh;
  Vec3 pose_rot = Vec3::Zero();    // d/d omega for R <- R*exp(omega^)
  Vec3 pose_trans = Vec3::Zero();  // d/d delta for t <- t + delta

  void resize(size_t n) {
    centers.assign(n, Vec3::Zero());
    scales.assign(n, Vec3::Zero());
    rotations.assign(n, Vec4::Zero());
    opacities.assign(n, 0.0);
    colors_sh.assign(n, Vec3::Zero());
    pose_rot.setZero();
    pose_trans.setZero();
  }
};

struct RenderGrads {  // upstream dL/d(output); empty vectors mean zero
  std::vector<double> d_color;
  std::vector<double> d_depth;
  std::vector<double> d_alpha;
};

namespace splatdetail {

struct Projected {
  bool valid = false;
  Vec3 p_cam = Vec3::Zero();
  Vec2 mu = Vec2::Zero();
  Mat2 icov = Mat2::Identity();  // inverse 2D covariance
  Mat2 cov2d = Mat2::Identity();
  Mat3 sigma_cam = Mat3::Zero();
  Mat3 m_rs = Mat3::Zero();  // R_q * diag(s)
  Mat3 r_q = Mat3::Identity();
  Vec4 q_unit = Vec4::Zero();  // normalized quaternion (w,x,y,z)
  double q_norm = 1.0;         // pre-normalization magnitude
  double opacity = 0.0;
  Vec3 color = Vec3::Zero();
  double power_cut = 0.0;  // max exponent q = d^T icov d that still matters
  int x0 = 0, x1 = -1, y0 = 0, y1 = -1;  // inclusive pixel bbox
};

inline const std::array<Mat3, 3>& generators() {
  static const std::array<Mat3, 3> g = [] {
    std::array<Mat3, 3> a;
    a[0] << 0, 0, 0, 0, 0, -1, 0, 1, 0;
    a[1] << 0, 0, 1, 0, 0, 0, -1, 0, 0;
    a[2] << 0, -1, 0, 1, 0, 0, 0, 0, 0;
    return a;
  }();
  return g;
}

// d(R(q))/dq for a unit quaternion, one 3x3 per component.
inline std::array<Mat3, 4> rotation_jacobian(const Vec4& q) {
  const double w = q(0), x = q(1), y = q(2), z = q(3);
  std::array<Mat3, 4> j;
  j[0] << 0, -z, y, z, 0, -x, -y, x, 0;
  j[1] << 0, y, z, y, -2 * x, -w, z, w, -2 * x;
  j[2] << -2 * y, x, w, x, 0, z, -w, z, -2 * y;
  j[3] << -2 * z, -w, x, w, -2 * z, y, x, y, 0;
  for (auto& m : j) m *= 2.0;
  return j;
}

}  // namespace splatdetail

// Forward state retained for the backward pass.
struct RenderContext {
  RenderOutput out;
  RenderOptions opts;
  Pose pose;
  Intrinsics intr;
  std::vector<splatdetail::Projected> proj;
  std::vector<int> order;                  // valid indices, depth sorted
  std::vector<std::vector<int>> pixel_lists;  // per pixel, depth order
  size_t cloud_size = 0;
};

inline RenderContext render(const GaussianCloud& cloud, const Pose& pose,
                            const Intrinsics& intr, int width, int height,
                            const RenderOptions& opts = {}) {
  check(width > 0 && height > 0, "render: empty image size");
  intr.validate();

  RenderContext ctx;
  ctx.opts = opts;
  ctx.pose = pose;
  ctx.intr = intr;
  ctx.cloud_size = cloud.size();
  ctx.out.width = width;
  ctx.out.height = height;
  const size_t npx = static_cast<size_t>(width) * height;
  ctx.out.color.assign(npx * 3, 0.0);
  ctx.out.depth.assign(npx, 0.0);
  ctx.out.alpha.assign(npx, 0.0);

  const size_t n = cloud.size();
  ctx.proj.resize(n);
  const Mat3 W = pose.R.transpose();  // world-to-camera
  const double f = intr.focal;

  parallel_for(0, static_cast<std::int64_t>(n), [&](std::int64_t gi, int) {
    const size_t g = static_cast<size_t>(gi);
    auto& pr = ctx.proj[g];
    pr.valid = false;
    const Vec3 p = W * (cloud.centers[g] - pose.t);
    if (!(p.z() >= opts.near_plane)) return;
    if (cloud.opacities[g] <= opts.alpha_min) return;

    const Quat& qraw = cloud.rotations[g];
    const double qn = qraw.norm();
    if (qn <= 1e-12) return;
    const Vec4 qu(qraw.w / qn, qraw.x / qn, qraw.y / qn, qraw.z / qn);
    Mat3 rq;
    {
      const double w0 = qu(0), x0 = qu(1), y0 = qu(2), z0 = qu(3);
      rq << 1 - 2 * (y0 * y0 + z0 * z0), 2 * (x0 * y0 - w0 * z0), 2 * (x0 * z0 + w0 * y0),
            2 * (x0 * y0 + w0 * z0), 1 - 2 * (x0 * x0 + z0 * z0), 2 * (y0 * z0 - w0 * x0),
            2 * (x0 * z0 - w0 * y0), 2 * (y0 * z0 + w0 * x0), 1 - 2 * (x0 * x0 + y0 * y0);
    }
    const Mat3 m_rs = rq * cloud.scales[g].asDiagonal();
    const Mat3 sigma_world = m_rs * m_rs.transpose();
    const Mat3 sigma_cam = W * sigma_world * W.transpose();

    const double z = p.z();
    Eigen::Matrix<double, 2, 3> J;
    J << f / z, 0, -f * p.x() / (z * z),
         0, f / z, -f * p.y() / (z * z);
    Mat2 cov2d = J * sigma_cam * J.transpose();
    cov2d(0, 0) += opts.blur;
    cov2d(1, 1) += opts.blur;

    const double det = cov2d(0, 0) * cov2d(1, 1) - cov2d(0, 1) * cov2d(1, 0);
    if (det <= 1e-12) return;
    Mat2 icov;
    icov << cov2d(1, 1) / det, -cov2d(0, 1) / det,
            -cov2d(1, 0) / det, cov2d(0, 0) / det;

    pr.power_cut = 2.0 * std::log(cloud.opacities[g] / opts.alpha_min);
    if (pr.power_cut <= 0.0) return;

    const double mid = 0.5 * (cov2d(0, 0) + cov2d(1, 1));
    const double lam_max =
        mid + std::sqrt(std::max(0.0, mid * mid - det));
    const double radius = std::sqrt(pr.power_cut * lam_max);

    const Vec2 mu(f * p.x() / z + intr.cx, f * p.y() / z + intr.cy);
    // pixel i has center i + 0.5
    int x0 = static_cast<int>(std::ceil(mu.x() - radius - 0.5));
    int x1 = static_cast<int>(std::floor(mu.x() + radius - 0.5));
    int y0 = static_cast<int>(std::ceil(mu.y() - radius - 0.5));
    int y1 = static_cast<int>(std::floor(mu.y() + radius - 0.5));
    x0 = std::max(x0, 0); y0 = std::max(y0, 0);
    x1 = std::min(x1, width - 1); y1 = std::min(y1, height - 1);
    if (x0 > x1 || y0 > y1) return;

    pr.valid = true;
    pr.p_cam = p;
    pr.mu = mu;
    pr.icov = icov;
    pr.cov2d = cov2d;
    pr.sigma_cam = sigma_cam;
    pr.m_rs = m_rs;
    pr.r_q = rq;
    pr.q_unit = qu;
    pr.q_norm = qn;
    pr.opacity = cloud.opacities[g];
    pr.color = GaussianCloud::sh_to_rgb(cloud.colors_sh[g]);
    pr.x0 = x0; pr.x1 = x1; pr.y0 = y0; pr.y1 = y1;
  });

  // Global depth sort, stable with index tie-break.
  ctx.order.clear();
  for (size_t g = 0; g < n; ++g)
    if (ctx.proj[g].valid) ctx.order.push_back(static_cast<int>(g));
  std::sort(ctx.order.begin(), ctx.order.end(), [&](int a, int b) {
    const double za = ctx.proj[a].p_cam.z(), zb = ctx.proj[b].p_cam.z();
    return za < zb || (za == zb && a < b);
  });

  // Bin to pixels; each worker owns a row range so lists are identical for
  // any worker count.
  ctx.pixel_lists.assign(npx, {});
  const int workers = thread_count();
  parallel_for(0, workers, [&](std::int64_t wi, int) {
    const int rows_per = (height + workers - 1) / workers;
    const int ry0 = static_cast<int>(wi) * rows_per;
    const int ry1 = std::min(height, ry0 + rows_per);
    if (ry0 >= ry1) return;
    for (int idx : ctx.order) {
      const auto& pr = ctx.proj[idx];
      const int yy0 = std::max(pr.y0, ry0), yy1 = std::min(pr.y1, ry1 - 1);
      for (int y = yy0; y <= yy1; ++y)
        for (int x = pr.x0; x <= pr.x1; ++x)
          ctx.pixel_lists[static_cast<size_t>(y) * width + x].push_back(idx);
    }
  }, workers);

  // Per-pixel front-to-back compositing.
  parallel_for(0, static_cast<std::int64_t>(npx), [&](std::int64_t pi, int) {
    const size_t px = static_cast<size_t>(pi);
    const double cxp = (px % width) + 0.5;
    const double cyp = (px / width) + 0.5;
    double T = 1.0;
    Vec3 acc = Vec3::Zero();
    double accz = 0.0;
    for (int idx : ctx.pixel_lists[px]) {
      if (T < opts.transmittance_min) break;
      const auto& pr = ctx.proj[idx];
      const Vec2 d(cxp - pr.mu.x(), cyp - pr.mu.y());
      const double q = d.dot(pr.icov * d);
      if (q > pr.power_cut || q < 0.0) continue;
      const double alpha = std::min(opts.alpha_max, pr.opacity * std::exp(-0.5 * q));
      if (alpha < opts.alpha_min) continue;
      const double wgt = alpha * T;
      acc += wgt * pr.color;
      accz += wgt * pr.p_cam.z();
      T *= 1.0 - alpha;
    }
    ctx.out.color[px * 3 + 0] = acc.x() + T * opts.background.x();
    ctx.out.color[px * 3 + 1] = acc.y() + T * opts.background.y();
    ctx.out.color[px * 3 + 2] = acc.z() + T * opts.background.z();
    ctx.out.depth[px] = accz;
    ctx.out.alpha[px] = 1.0 - T;
  });

  return ctx;
}

// Backward pass: upstream gradients w.r.t. color/depth/alpha images in,
// gradients for all Gaussian parameters and the camera pose out. The
// forward context must be unmodified.
inline void render_backward(const RenderContext& ctx, const RenderGrads& up,
                            CloudGrads& grads) {
  const int width = ctx.out.width, height = ctx.out.height;
  const size_t npx = static_cast<size_t>(width) * height;
  const size_t n = ctx.cloud_size;
  check(up.d_color.empty() || up.d_color.size() == npx * 3, "backward: d_color size");
  check(up.d_depth.empty() || up.d_depth.size() == npx, "backward: d_depth size");
  check(up.d_alpha.empty() || up.d_alpha.size() == npx, "backward: d_alpha size");
  check(!ctx.proj.empty() || n == 0, "backward: mismatched forward state");
  grads.resize(n);
  if (n == 0) return;

  const RenderOptions& opts = ctx.opts;

  // Stage 1: per-pixel screen-space gradients, accumulated per Gaussian.
  struct ScreenGrad {
    Vec2 mu = Vec2::Zero();
    Mat2 icov = Mat2::Zero();
    double opacity = 0.0;
    Vec3 color = Vec3::Zero();
    double z = 0.0;
  };
  const int workers = thread_count();
  std::vector<std::vector<ScreenGrad>> sg_local(workers, std::vector<ScreenGrad>(n));

  parallel_for(0, static_cast<std::int64_t>(npx), [&](std::int64_t pi, int w) {
    const size_t px = static_cast<size_t>(pi);
    const Vec3 gC = up.d_color.empty()
                        ? Vec3::Zero()
                        : Vec3(up.d_color[px * 3], up.d_color[px * 3 + 1], up.d_color[px * 3 + 2]);
    const double gD = up.d_depth.empty() ? 0.0 : up.d_depth[px];
    const double gA = up.d_alpha.empty() ? 0.0 : up.d_alpha[px];
    if (gC.isZero(0.0) && gD == 0.0 && gA == 0.0) return;

    const double cxp = (px % width) + 0.5;
    const double cyp = (px / width) + 0.5;
    const double T_fin = 1.0 - ctx.out.alpha[px];
    // Remaining contribution behind the current Gaussian, color and depth.
    Vec3 rest_c(ctx.out.color[px * 3] - T_fin * opts.background.x(),
                ctx.out.color[px * 3 + 1] - T_fin * opts.background.y(),
                ctx.out.color[px * 3 + 2] - T_fin * opts.background.z());
    double rest_z = ctx.out.depth[px];

    double T = 1.0;
    auto& sg = sg_local[w];
    for (int idx : ctx.pixel_lists[px]) {
      if (T < opts.transmittance_min) break;
      const auto& pr = ctx.proj[idx];
      const Vec2 d(cxp - pr.mu.x(), cyp - pr.mu.y());
      const double q = d.dot(pr.icov * d);
      if (q > pr.power_cut || q < 0.0) continue;
      const double gval = std::exp(-0.5 * q);
      const double alpha_raw = pr.opacity * gval;
      const bool clamped = alpha_raw > opts.alpha_max;
      const double alpha = clamped ? opts.alpha_max : alpha_raw;
      if (alpha < opts.alpha_min) continue;
      const double wgt = alpha * T;

      rest_c -= wgt * pr.color;
      rest_z -= wgt * pr.p_cam.z();

      // dL/dcolor_k and depth path
      sg[idx].color += wgt * gC;
      sg[idx].z += wgt * gD;

      // dL/dalpha_k: own contribution minus everything it occludes.
      const double om = 1.0 - alpha;
      double g_alpha = gC.dot(T * pr.color - (rest_c + T_fin * opts.background) / om);
      g_alpha += gD * (T * pr.p_cam.z() - rest_z / om);
      g_alpha += gA * (T_fin / om);

      if (!clamped) {
        sg[idx].opacity += g_alpha * gval;
        const double g_q = -0.5 * alpha * g_alpha;
        sg[idx].mu += g_q * -2.0 * (pr.icov * d);  // dq/dmu = -2 Q d
        sg[idx].icov += g_q * (d * d.transpose());
      }
      T *= om;
    }
  }, workers);

  std::vector<ScreenGrad> sg(n);
  for (int w = 0; w < workers; ++w)
    for (size_t g = 0; g < n; ++g) {
      sg[g].mu += sg_local[w][g].mu;
      sg[g].icov += sg_local[w][g].icov;
      sg[g].opacity += sg_local[w][g].opacity;
      sg[g].color += sg_local[w][g].color;
      sg[g].z += sg_local[w][g].z;
    }
  sg_local.clear();

  // Stage 2: chain screen-space gradients to Gaussian parameters and pose.
  const Mat3 W = ctx.pose.R.transpose();
  const double f = ctx.intr.focal;
  const auto& gen = splatdetail::generators();
  std::vector<Vec3> pose_rot_acc(workers, Vec3::Zero());
  std::vector<Vec3> pose_trans_acc(workers, Vec3::Zero());

  parallel_for(0, static_cast<std::int64_t>(n), [&](std::int64_t gi, int wk) {
    const size_t g = static_cast<size_t>(gi);
    const auto& pr = ctx.proj[g];
    if (!pr.valid) return;
    const auto& s = sg[g];

    grads.colors_sh[g] += kShC0 * s.color;

    // icov -> cov2d
    const Mat2 g_cov2d = -pr.icov * s.icov * pr.icov;

    // cov2d = J sigma_cam J^T + blur I
    const Vec3 p = pr.p_cam;
    const double z = p.z(), z2 = z * z;
    Eigen::Matrix<double, 2, 3> J;
    J << f / z, 0, -f * p.x() / z2,
         0, f / z, -f * p.y() / z2;
    const Mat3 g_sigma_cam = J.transpose() * g_cov2d * J;
    const Eigen::Matrix<double, 2, 3> g_J =
        (g_cov2d + g_cov2d.transpose()) * J * pr.sigma_cam;

    // mu = (f x / z + cx, f y / z + cy)
    Vec3 g_p = Vec3::Zero();
    g_p.x() += s.mu.x() * f / z;
    g_p.y() += s.mu.y() * f / z;
    g_p.z() += -f * (s.mu.x() * p.x() + s.mu.y() * p.y()) / z2;
    // J dependence on p
    g_p.x() += g_J(0, 2) * (-f / z2);
    g_p.y() += g_J(1, 2) * (-f / z2);
    g_p.z() += g_J(0, 0) * (-f / z2) + g_J(1, 1) * (-f / z2) +
               g_J(0, 2) * (2.0 * f * p.x() / (z2 * z)) +
               g_J(1, 2) * (2.0 * f * p.y() / (z2 * z));
    // depth output is p.z
    g_p.z() += s.z;

    grads.opacities[g] += s.opacity;
    grads.centers[g] += W.transpose() * g_p;

    // sigma_cam = W sigma_world W^T
    const Mat3 g_sigma_world = W.transpose() * g_sigma_cam * W;
    const Mat3 g_m = (g_sigma_world + g_sigma_world.transpose()) * pr.m_rs;

    // m = R_q diag(s)
    const Mat3 rt_gm = pr.r_q.transpose() * g_m;
    // recover per-axis scale from m_rs column norms is not needed: use s from m = R_q S
    for (int k = 0; k < 3; ++k) grads.scales[g](k) += rt_gm(k, k);

    // g_Rq = g_m S; column k of m_rs = R_q * s_k e_k, so S = R_q^T m_rs diag
    Mat3 S_diag = Mat3::Zero();
    for (int k = 0; k < 3; ++k) S_diag(k, k) = (pr.r_q.transpose() * pr.m_rs)(k, k);
    const Mat3 g_rq = g_m * S_diag;

    const auto jac = splatdetail::rotation_jacobian(pr.q_unit);
    Vec4 g_qu = Vec4::Zero();
    for (int k = 0; k < 4; ++k) g_qu(k) = (g_rq.cwiseProduct(jac[k])).sum();
    // through normalization q_unit = q / |q|
    const Vec4 g_qraw = (g_qu - pr.q_unit * pr.q_unit.dot(g_qu)) / pr.q_norm;
    grads.rotations[g] += g_qraw;

    // Camera pose. Translation: p = W (X - t).
    pose_trans_acc[wk] += -(W.transpose() * g_p);
    // Rotation increment R <- R exp(omega^): dp = -omega x p,
    // dSigma_cam = -omega^ Sigma + Sigma omega^.
    Vec3 g_rot = -p.cross(g_p);
    for (int k = 0; k < 3; ++k)
      g_rot(k) += (g_sigma_cam.cwiseProduct(-gen[k] * pr.sigma_cam + pr.sigma_cam * gen[k])).sum();
    pose_rot_acc[wk] += g_rot;
  }, workers);

  for (int w = 0; w < workers; ++w) {
    grads.pose_rot += pose_rot_acc[w];
    grads.pose_trans += pose_trans_acc[w];
  }
}

}  // namespace liftcore
