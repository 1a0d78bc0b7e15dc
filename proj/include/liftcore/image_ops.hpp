#pragma once

// Image-space losses and metrics: mean L1, SSIM (Gaussian window 11,
// sigma 1.5, zero-padded) with analytic input gradients, and PSNR capped at
// 99 dB for exact matches.

#include "liftcore/core.hpp"

namespace liftcore {

namespace imgdetail {

inline const std::array<double, 11>& ssim_kernel() {
  static const std::array<double, 11> k = [] {
    std::array<double, 11> a{};
    double sum = 0.0;
    for (int i = 0; i < 11; ++i) {
      const double d = i - 5.0;
      a[i] = std::exp(-d * d / (2.0 * 1.5 * 1.5));
      sum += a[i];
    }
    for (auto& v : a) v /= sum;
    return a;
  }();
  return k;
}

// Separable zero-padded convolution with the SSIM kernel, per channel.
inline std::vector<double> conv_gauss(const std::vector<double>& img, int w, int h, int c) {
  const auto& k = ssim_kernel();
  std::vector<double> tmp(img.size(), 0.0), out(img.size(), 0.0);
  // horizontal
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x)
      for (int ch = 0; ch < c; ++ch) {
        double acc = 0.0;
        for (int t = -5; t <= 5; ++t) {
          const int xx = x + t;
          if (xx < 0 || xx >= w) continue;
          acc += k[t + 5] * img[(static_cast<size_t>(y) * w + xx) * c + ch];
        }
        tmp[(static_cast<size_t>(y) * w + x) * c + ch] = acc;
      }
  // vertical
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x)
      for (int ch = 0; ch < c; ++ch) {
        double acc = 0.0;
        for (int t = -5; t <= 5; ++t) {
          const int yy = y + t;
          if (yy < 0 || yy >= h) continue;
          acc += k[t + 5] * tmp[(static_cast<size_t>(yy) * w + x) * c + ch];
        }
        out[(static_cast<size_t>(y) * w + x) * c + ch] = acc;
      }
  return out;
}

}  // namespace imgdetail

// Mean absolute difference; optional gradient w.r.t. x.
inline double l1_loss(const std::vector<double>& x, const std::vector<double>& y,
                      std::vector<double>* grad_x = nullptr) {
  check(x.size() == y.size() && !x.empty(), "l1: size mismatch");
  const double inv = 1.0 / static_cast<double>(x.size());
  if (grad_x) grad_x->assign(x.size(), 0.0);
  double total = 0.0;
  for (size_t i = 0; i < x.size(); ++i) {
    const double d = x[i] - y[i];
    total += std::abs(d);
    if (grad_x && d != 0.0) (*grad_x)[i] = (d > 0 ? 1.0 : -1.0) * inv;
  }
  return total * inv;
}

// SSIM between two images (flat W*H*C buffers); optional gradient w.r.t. x.
inline double ssim(const std::vector<double>& x, const std::vector<double>& y,
                   int w, int h, int c, std::vector<double>* grad_x = nullptr) {
  check(x.size() == y.size() && x.size() == static_cast<size_t>(w) * h * c,
        "ssim: size mismatch");
  constexpr double C1 = 0.01 * 0.01, C2 = 0.03 * 0.03;
  using imgdetail::conv_gauss;

  std::vector<double> xx(x.size()), yy(x.size()), xy(x.size());
  for (size_t i = 0; i < x.size(); ++i) {
    xx[i] = x[i] * x[i];
    yy[i] = y[i] * y[i];
    xy[i] = x[i] * y[i];
  }
  const auto mu_x = conv_gauss(x, w, h, c);
  const auto mu_y = conv_gauss(y, w, h, c);
  const auto m_xx = conv_gauss(xx, w, h, c);
  const auto m_yy = conv_gauss(yy, w, h, c);
  const auto m_xy = conv_gauss(xy, w, h, c);

  const double inv_n = 1.0 / static_cast<double>(x.size());
  double total = 0.0;
  std::vector<double> A, B, Cg;  // dssim/dmu_x, dssim/dsigma_x2, dssim/dsigma_xy
  if (grad_x) {
    A.assign(x.size(), 0.0);
    B.assign(x.size(), 0.0);
    Cg.assign(x.size(), 0.0);
  }
  for (size_t i = 0; i < x.size(); ++i) {
    const double sx = m_xx[i] - mu_x[i] * mu_x[i];
    const double sy = m_yy[i] - mu_y[i] * mu_y[i];
    const double sxy = m_xy[i] - mu_x[i] * mu_y[i];
    const double num_l = 2.0 * mu_x[i] * mu_y[i] + C1;
    const double den_l = mu_x[i] * mu_x[i] + mu_y[i] * mu_y[i] + C1;
    const double num_cs = 2.0 * sxy + C2;
    const double den_cs = sx + sy + C2;
    const double l = num_l / den_l;
    const double cs = num_cs / den_cs;
    total += l * cs;
    if (grad_x) {
      A[i] = cs * 2.0 * (mu_y[i] * den_l - mu_x[i] * num_l) / (den_l * den_l);
      B[i] = -l * cs / den_cs;
      Cg[i] = l * 2.0 / den_cs;
    }
  }
  const double value = total * inv_n;

  if (grad_x) {
    std::vector<double> b_mu(x.size()), c_mu(x.size());
    for (size_t i = 0; i < x.size(); ++i) {
      b_mu[i] = B[i] * mu_x[i];
      c_mu[i] = Cg[i] * mu_y[i];
    }
    const auto cA = conv_gauss(A, w, h, c);
    const auto cB = conv_gauss(B, w, h, c);
    const auto cBmu = conv_gauss(b_mu, w, h, c);
    const auto cC = conv_gauss(Cg, w, h, c);
    const auto cCmu = conv_gauss(c_mu, w, h, c);
    grad_x->assign(x.size(), 0.0);
    for (size_t i = 0; i < x.size(); ++i)
      (*grad_x)[i] = inv_n * (cA[i] + 2.0 * x[i] * cB[i] - 2.0 * cBmu[i] +
                              y[i] * cC[i] - cCmu[i]);
  }
  return value;
}

// PSNR over clamped [0,1] images, capped at 99 dB.
inline double psnr(const std::vector<double>& x, const std::vector<double>& y) {
  check(x.size() == y.size() && !x.empty(), "psnr: size mismatch");
  double mse = 0.0;
  for (size_t i = 0; i < x.size(); ++i) {
    const double a = std::clamp(x[i], 0.0, 1.0);
    const double b = std::clamp(y[i], 0.0, 1.0);
    mse += (a - b) * (a - b);
  }
  mse /= static_cast<double>(x.size());
  if (mse <= 0.0) return 99.0;
  return std::min(99.0, 10.0 * std::log10(1.0 / mse));
}

}  // namespace liftcore
