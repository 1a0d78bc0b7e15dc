#include "liftcore/splat.hpp"

#include <catch2/catch_amalgamated.hpp>

using namespace liftcore;

namespace {

GaussianCloud random_cloud(int n, Rng& rng, double z_lo = 2.0, double z_hi = 5.0) {
  GaussianCloud g;
  g.resize(n);
  for (int i = 0; i < n; ++i) {
    g.centers[i] = Vec3(rng.uniform(-0.8, 0.8), rng.uniform(-0.8, 0.8),
                        rng.uniform(z_lo, z_hi));
    g.scales[i] = Vec3(rng.uniform(0.05, 0.25), rng.uniform(0.05, 0.25),
                       rng.uniform(0.05, 0.25));
    Quat q(1.0 + 0.3 * rng.normal(), 0.3 * rng.normal(), 0.3 * rng.normal(),
           0.3 * rng.normal());
    g.rotations[i] = q.normalized();
    g.opacities[i] = rng.uniform(0.3, 0.8);
    g.colors_sh[i] = Vec3(rng.uniform(-0.8, 0.8), rng.uniform(-0.8, 0.8),
                          rng.uniform(-0.8, 0.8));
  }
  return g;
}

Intrinsics tiny_intr(int w, int h, double f = 20.0) { return Intrinsics(f, w, h); }

}  // namespace

TEST_CASE("empty cloud renders pure background") {
  GaussianCloud g;
  RenderOptions opts;
  opts.background = Vec3(0.2, 0.4, 0.6);
  const auto ctx = render(g, Pose::identity(), tiny_intr(8, 8), 8, 8, opts);
  for (int i = 0; i < 64; ++i) {
    REQUIRE(ctx.out.color[i * 3 + 0] == 0.2);
    REQUIRE(ctx.out.color[i * 3 + 1] == 0.4);
    REQUIRE(ctx.out.color[i * 3 + 2] == 0.6);
    REQUIRE(ctx.out.alpha[i] == 0.0);
    REQUIRE(ctx.out.depth[i] == 0.0);  // background sentinel
  }
}

TEST_CASE("single on-axis gaussian peaks at the image center") {
  GaussianCloud g;
  g.resize(1);
  g.centers[0] = Vec3(0, 0, 3);
  g.scales[0] = Vec3(0.3, 0.3, 0.3);
  g.opacities[0] = 0.9;
  g.colors_sh[0] = GaussianCloud::rgb_to_sh(Vec3(0.9, 0.1, 0.2));

  const int wh = 17;  // odd size: center pixel covers the optical axis
  const auto ctx = render(g, Pose::identity(), tiny_intr(wh, wh, 30.0), wh, wh);
  double best = -1.0;
  int best_px = -1;
  for (int i = 0; i < wh * wh; ++i)
    if (ctx.out.color[i * 3] > best) { best = ctx.out.color[i * 3]; best_px = i; }
  REQUIRE(best_px == (wh / 2) * wh + wh / 2);
  // peak color approaches opacity * color
  REQUIRE(ctx.out.color[best_px * 3 + 0] == Catch::Approx(0.9 * 0.9).margin(1e-3));
  REQUIRE(ctx.out.color[best_px * 3 + 1] == Catch::Approx(0.9 * 0.1).margin(1e-3));
}

TEST_CASE("two-gaussian compositing matches the hand-computed oracle") {
  // two huge flat gaussians covering the whole tiny image at depths 1 and 2
  GaussianCloud g;
  g.resize(2);
  g.centers[0] = Vec3(0, 0, 1);
  g.centers[1] = Vec3(0, 0, 2);
  g.scales[0] = Vec3(50, 50, 0.01);   // effectively constant over the pixel grid
  g.scales[1] = Vec3(100, 100, 0.01);
  g.opacities[0] = 0.6;
  g.opacities[1] = 0.6;
  const Vec3 c1(0.8, 0.2, 0.1), c2(0.1, 0.7, 0.3);
  g.colors_sh[0] = GaussianCloud::rgb_to_sh(c1);
  g.colors_sh[1] = GaussianCloud::rgb_to_sh(c2);

  RenderOptions opts;
  opts.background = Vec3(0.05, 0.05, 0.05);
  const auto ctx = render(g, Pose::identity(), tiny_intr(4, 4, 10.0), 4, 4, opts);

  // center pixels: nearly exactly alpha 0.6 each
  const int px = 1 * 4 + 1;
  const double w1 = 0.6, w2 = 0.4 * 0.6, T = 1.0 - w1 - w2;
  const Vec3 expect = w1 * c1 + w2 * c2 + T * opts.background;
  for (int c = 0; c < 3; ++c)
    REQUIRE(ctx.out.color[px * 3 + c] == Catch::Approx(expect(c)).margin(1e-3));
  const double expect_depth = w1 * 1.0 + w2 * 2.0;
  REQUIRE(ctx.out.depth[px] == Catch::Approx(expect_depth).margin(5e-3));
  REQUIRE(ctx.out.alpha[px] == Catch::Approx(w1 + w2).margin(1e-3));
}

TEST_CASE("compositing conserves weights") {
  Rng rng(81);
  const auto g = random_cloud(40, rng);
  RenderOptions opts;
  opts.background = Vec3(0.3, 0.3, 0.3);
  const int wh = 24;
  const auto ctx = render(g, Pose::identity(), tiny_intr(wh, wh), wh, wh, opts);
  // alpha + T_fin == 1 by construction; verify color = sum w c + T bg via a
  // constant-color probe: render the same scene with all colors equal.
  GaussianCloud flat = g;
  const Vec3 c0(0.5, 0.5, 0.5);
  for (auto& sh : flat.colors_sh) sh = GaussianCloud::rgb_to_sh(c0);
  const auto ctx2 = render(flat, Pose::identity(), tiny_intr(wh, wh), wh, wh, opts);
  for (int px = 0; px < wh * wh; ++px) {
    const double a = ctx2.out.alpha[px];
    const Vec3 expect = a * c0 + (1 - a) * opts.background;
    for (int c = 0; c < 3; ++c)
      REQUIRE(ctx2.out.color[px * 3 + c] == Catch::Approx(expect(c)).margin(1e-6));
    REQUIRE(ctx.out.alpha[px] >= 0.0);
    REQUIRE(ctx.out.alpha[px] <= 1.0);
  }
}

TEST_CASE("gaussian order does not change the image") {
  Rng rng(82);
  const auto g = random_cloud(30, rng);
  const int wh = 16;
  const auto a = render(g, Pose::identity(), tiny_intr(wh, wh), wh, wh);

  // reverse the cloud
  GaussianCloud rev;
  rev.resize(g.size());
  for (size_t i = 0; i < g.size(); ++i) {
    const size_t j = g.size() - 1 - i;
    rev.centers[i] = g.centers[j];
    rev.scales[i] = g.scales[j];
    rev.rotations[i] = g.rotations[j];
    rev.opacities[i] = g.opacities[j];
    rev.colors_sh[i] = g.colors_sh[j];
  }
  const auto b = render(rev, Pose::identity(), tiny_intr(wh, wh), wh, wh);
  for (size_t i = 0; i < a.out.color.size(); ++i)
    REQUIRE(a.out.color[i] == b.out.color[i]);
  for (size_t i = 0; i < a.out.depth.size(); ++i)
    REQUIRE(a.out.depth[i] == b.out.depth[i]);
}

TEST_CASE("rendering is translation equivariant") {
  Rng rng(83);
  const auto g = random_cloud(25, rng);
  const int wh = 16;
  Pose cam;
  cam.t = Vec3(0.1, -0.2, -0.5);
  const auto a = render(g, cam, tiny_intr(wh, wh), wh, wh);

  const Vec3 shift(3.0, -2.0, 1.0);
  GaussianCloud moved = g;
  for (auto& c : moved.centers) c += shift;
  Pose cam2 = cam;
  cam2.t += shift;
  const auto b = render(moved, cam2, tiny_intr(wh, wh), wh, wh);
  for (size_t i = 0; i < a.out.color.size(); ++i)
    REQUIRE(std::abs(a.out.color[i] - b.out.color[i]) < 1e-6);
}

TEST_CASE("near-plane culling") {
  GaussianCloud g;
  g.resize(1);
  g.centers[0] = Vec3(0, 0, 0.005);  // behind the near plane
  g.scales[0] = Vec3(0.1, 0.1, 0.1);
  g.opacities[0] = 0.9;
  const auto ctx = render(g, Pose::identity(), tiny_intr(8, 8), 8, 8);
  for (double a : ctx.out.alpha) REQUIRE(a == 0.0);
}

TEST_CASE("splat gradients match central finite differences") {
  Rng rng(84);
  const int n = 5, wh = 16;
  const auto cloud = random_cloud(n, rng);
  Pose cam;
  cam.R = axis_angle_to_matrix(Vec3(0.02, -0.03, 0.01));
  cam.t = Vec3(0.05, 0.02, -0.1);
  const Intrinsics intr = tiny_intr(wh, wh);
  RenderOptions opts;
  opts.background = Vec3(0.1, 0.2, 0.3);

  // probe: fixed random weights over color, depth and alpha outputs
  Rng pr(85);
  RenderGrads up;
  up.d_color.resize(wh * wh * 3);
  up.d_depth.resize(wh * wh);
  up.d_alpha.resize(wh * wh);
  for (auto& v : up.d_color) v = pr.normal();
  for (auto& v : up.d_depth) v = 0.3 * pr.normal();
  for (auto& v : up.d_alpha) v = 0.3 * pr.normal();

  auto loss_of = [&](const GaussianCloud& c, const Pose& p) {
    const auto ctx = render(c, p, intr, wh, wh, opts);
    double v = 0.0;
    for (size_t i = 0; i < ctx.out.color.size(); ++i) v += up.d_color[i] * ctx.out.color[i];
    for (size_t i = 0; i < ctx.out.depth.size(); ++i) v += up.d_depth[i] * ctx.out.depth[i];
    for (size_t i = 0; i < ctx.out.alpha.size(); ++i) v += up.d_alpha[i] * ctx.out.alpha[i];
    return v;
  };

  const auto ctx = render(cloud, cam, intr, wh, wh, opts);
  CloudGrads grads;
  render_backward(ctx, up, grads);

  int checked = 0, ok = 0;
  auto check_one = [&](double analytic, double fd) {
    const double denom = std::max({std::abs(analytic), std::abs(fd), 1e-6});
    ++checked;
    if (std::abs(analytic - fd) / denom < 1e-3) ++ok;
  };
  const double h = 1e-6;

  for (int i = 0; i < n; ++i) {
    for (int c = 0; c < 3; ++c) {
      GaussianCloud cp = cloud, cm = cloud;
      cp.centers[i](c) += h;
      cm.centers[i](c) -= h;
      check_one(grads.centers[i](c), (loss_of(cp, cam) - loss_of(cm, cam)) / (2 * h));

      cp = cloud; cm = cloud;
      cp.scales[i](c) += h;
      cm.scales[i](c) -= h;
      check_one(grads.scales[i](c), (loss_of(cp, cam) - loss_of(cm, cam)) / (2 * h));

      cp = cloud; cm = cloud;
      cp.colors_sh[i](c) += h;
      cm.colors_sh[i](c) -= h;
      check_one(grads.colors_sh[i](c), (loss_of(cp, cam) - loss_of(cm, cam)) / (2 * h));
    }
    {
      GaussianCloud cp = cloud, cm = cloud;
      cp.opacities[i] += h;
      cm.opacities[i] -= h;
      check_one(grads.opacities[i], (loss_of(cp, cam) - loss_of(cm, cam)) / (2 * h));
    }
    for (int c = 0; c < 4; ++c) {
      GaussianCloud cp = cloud, cm = cloud;
      auto bump = [&](GaussianCloud& cl, double delta) {
        Quat q = cl.rotations[i];
        if (c == 0) q.w += delta;
        if (c == 1) q.x += delta;
        if (c == 2) q.y += delta;
        if (c == 3) q.z += delta;
        cl.rotations[i] = q;  // renderer normalizes internally
      };
      bump(cp, h);
      bump(cm, -h);
      check_one(grads.rotations[i](c), (loss_of(cp, cam) - loss_of(cm, cam)) / (2 * h));
    }
  }

  // camera pose gradients: t += delta and R <- R exp(omega^)
  for (int c = 0; c < 3; ++c) {
    Pose pp = cam, pm = cam;
    pp.t(c) += h;
    pm.t(c) -= h;
    check_one(grads.pose_trans(c), (loss_of(cloud, pp) - loss_of(cloud, pm)) / (2 * h));

    Vec3 w = Vec3::Zero();
    w(c) = h;
    Pose rp = cam, rm = cam;
    rp.R = cam.R * axis_angle_to_matrix(w);
    rm.R = cam.R * axis_angle_to_matrix(-w);
    check_one(grads.pose_rot(c), (loss_of(cloud, rp) - loss_of(cloud, rm)) / (2 * h));
  }

  REQUIRE(checked == n * 14 + 6);  // 3+3+3 vec params, 1 opacity, 4 quat, 6 pose
  REQUIRE(ok >= checked * 95 / 100);
}

TEST_CASE("zero upstream gradient gives zero parameter gradients") {
  Rng rng(86);
  const auto cloud = random_cloud(4, rng);
  const auto ctx = render(cloud, Pose::identity(), tiny_intr(8, 8), 8, 8);
  CloudGrads grads;
  render_backward(ctx, RenderGrads{}, grads);
  for (size_t i = 0; i < cloud.size(); ++i) {
    REQUIRE(grads.centers[i].norm() == 0.0);
    REQUIRE(grads.scales[i].norm() == 0.0);
    REQUIRE(grads.rotations[i].norm() == 0.0);
    REQUIRE(grads.opacities[i] == 0.0);
    REQUIRE(grads.colors_sh[i].norm() == 0.0);
  }
  REQUIRE(grads.pose_rot.norm() == 0.0);
  REQUIRE(grads.pose_trans.norm() == 0.0);
}

TEST_CASE("opacity gradient has the helpful sign") {
  // one gaussian whose color matches the target better than the background:
  // increasing its opacity must decrease the L1 loss.
  GaussianCloud g;
  g.resize(1);
  g.centers[0] = Vec3(0, 0, 2);
  g.scales[0] = Vec3(0.5, 0.5, 0.5);
  g.opacities[0] = 0.4;
  const Vec3 target_color(0.9, 0.9, 0.9);
  g.colors_sh[0] = GaussianCloud::rgb_to_sh(target_color);

  const int wh = 8;
  RenderOptions opts;  // black background, far from target
  const auto ctx = render(g, Pose::identity(), tiny_intr(wh, wh), wh, wh, opts);

  // L1 toward a bright target: dL/dcolor = -sign(target - render)/N
  RenderGrads up;
  up.d_color.assign(wh * wh * 3, 0.0);
  for (int i = 0; i < wh * wh * 3; ++i) {
    const double diff = ctx.out.color[i] - target_color(i % 3);
    up.d_color[i] = (diff > 0 ? 1.0 : -1.0) / (wh * wh * 3);
  }
  CloudGrads grads;
  render_backward(ctx, up, grads);
  REQUIRE(grads.opacities[0] < 0.0);  // pushing opacity up lowers the loss
}
