#include "liftcore/image_ops.hpp"

#include <catch2/catch_amalgamated.hpp>

using namespace liftcore;

namespace {

std::vector<double> random_image(int w, int h, int c, Rng& rng) {
  std::vector<double> img(static_cast<size_t>(w) * h * c);
  for (auto& v : img) v = rng.uniform(0.05, 0.95);
  return img;
}

}  // namespace

TEST_CASE("l1 loss and gradient") {
  Rng rng(91);
  const auto x = random_image(8, 8, 3, rng);
  auto y = x;
  REQUIRE(l1_loss(x, y) == 0.0);

  y = random_image(8, 8, 3, rng);
  std::vector<double> grad;
  const double base = l1_loss(x, y, &grad);
  REQUIRE(base > 0.0);
  const double h = 1e-7;
  for (size_t i = 0; i < x.size(); i += 37) {
    auto xp = x, xm = x;
    xp[i] += h;
    xm[i] -= h;
    const double fd = (l1_loss(xp, y) - l1_loss(xm, y)) / (2 * h);
    REQUIRE(grad[i] == Catch::Approx(fd).margin(1e-9));
  }
}

TEST_CASE("ssim equals one on identical images") {
  Rng rng(92);
  const auto x = random_image(16, 16, 3, rng);
  REQUIRE(ssim(x, x, 16, 16, 3) == Catch::Approx(1.0).margin(1e-12));
}

TEST_CASE("ssim decreases with noise") {
  Rng rng(93);
  const auto x = random_image(24, 24, 1, rng);
  auto y = x;
  for (auto& v : y) v = std::clamp(v + 0.1 * rng.normal(), 0.0, 1.0);
  const double s = ssim(x, y, 24, 24, 1);
  REQUIRE(s < 0.999);
  REQUIRE(s > 0.0);
}

TEST_CASE("ssim gradient matches finite differences") {
  Rng rng(94);
  const int wh = 12;
  const auto y = random_image(wh, wh, 1, rng);
  auto x = y;
  for (auto& v : x) v = std::clamp(v + 0.05 * rng.normal(), 0.0, 1.0);

  std::vector<double> grad;
  ssim(x, y, wh, wh, 1, &grad);
  const double h = 1e-6;
  for (size_t i = 0; i < x.size(); i += 11) {
    auto xp = x, xm = x;
    xp[i] += h;
    xm[i] -= h;
    const double fd = (ssim(xp, y, wh, wh, 1) - ssim(xm, y, wh, wh, 1)) / (2 * h);
    REQUIRE(grad[i] == Catch::Approx(fd).margin(1e-6));
  }
}

TEST_CASE("psnr caps at 99 and matches the definition") {
  Rng rng(95);
  const auto x = random_image(8, 8, 3, rng);
  REQUIRE(psnr(x, x) == 99.0);

  auto y = x;
  for (auto& v : y) v = std::clamp(v + 0.1, 0.0, 1.0);
  double mse = 0.0;
  for (size_t i = 0; i < x.size(); ++i) {
    const double d = x[i] - y[i];
    mse += d * d;
  }
  mse /= x.size();
  REQUIRE(psnr(x, y) == Catch::Approx(10.0 * std::log10(1.0 / mse)).margin(1e-9));
}
