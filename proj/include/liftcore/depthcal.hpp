#pragma once

// Depth prior injection: align fine relative monocular depth to coarse
// absolute matching depth with a robust median scale and shift, then apply
// d = Scale * d_r + Shift.
//
// Scale uses median-centered depths; Shift is computed on the uncentered
// maps so that the final affine map actually lands on the absolute scale
// (a centered shift is ~0 by construction and cannot).

#include "liftcore/core.hpp"

#include <algorithm>

namespace liftcore {

struct CalibrationResult {
  double scale = 1.0;
  double shift = 0.0;  // world-length units
  size_t valid_pixel_count = 0;
};

namespace detail {

// Median with even counts resolved to the lower of the two middles, so
// ratio medians stay deterministic.
inline double median_lower(std::vector<double> v) {
  check(!v.empty(), "median of empty set");
  const size_t k = (v.size() - 1) / 2;
  std::nth_element(v.begin(), v.begin() + k, v.end());
  return v[k];
}

}  // namespace detail

// mask: per-pixel validity (non-zero = valid), same resolution as the maps;
// empty mask means every pixel is valid.
inline std::pair<CalibrationResult, DepthMap> calibrate(
    const DepthMap& d_a, const DepthMap& d_r,
    const std::vector<std::uint8_t>& mask = {}) {
  check(d_a.width == d_r.width && d_a.height == d_r.height,
        "calibrate: depth map resolutions differ");
  const size_t n = d_a.data.size();
  check(mask.empty() || mask.size() == n, "calibrate: mask size mismatch");

  std::vector<size_t> valid;
  for (size_t i = 0; i < n; ++i)
    if (mask.empty() || mask[i]) valid.push_back(i);
  check(valid.size() >= 2, "calibrate: fewer than 2 valid shared pixels");

  std::vector<double> va(valid.size()), vr(valid.size());
  for (size_t k = 0; k < valid.size(); ++k) {
    va[k] = d_a.data[valid[k]];
    vr[k] = d_r.data[valid[k]];
  }
  const double med_a = detail::median_lower(va);
  const double med_r = detail::median_lower(vr);

  const auto [r_min, r_max] = std::minmax_element(vr.begin(), vr.end());
  const double eps = 1e-6 * (*r_max - *r_min);

  std::vector<double> ratios;
  ratios.reserve(valid.size());
  for (size_t k = 0; k < valid.size(); ++k) {
    const double rc = vr[k] - med_r;
    if (std::abs(rc) > eps) ratios.push_back((va[k] - med_a) / rc);
  }
  check(!ratios.empty(), "calibrate: flat relative depth");

  CalibrationResult result;
  result.scale = detail::median_lower(std::move(ratios));
  check(std::isfinite(result.scale) && result.scale != 0.0,
        "calibrate: degenerate scale");
  result.valid_pixel_count = valid.size();

  std::vector<double> shifts(valid.size());
  for (size_t k = 0; k < valid.size(); ++k) shifts[k] = va[k] - result.scale * vr[k];
  result.shift = detail::median_lower(std::move(shifts));

  DepthMap out(d_r.width, d_r.height, DepthKind::calibrated);
  for (size_t i = 0; i < n; ++i) out.data[i] = result.scale * d_r.data[i] + result.shift;
  return {result, out};
}

}  // namespace liftcore
