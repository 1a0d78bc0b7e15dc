#pragma once

// Distortion field F: (G, t) -> dG. A 5D multi-resolution K-Planes encoder
// (9 axis-pair planes over x, y, z, t_i, t_j — no (t_i, t_j) plane) feeds a
// small merge MLP and three decoder heads producing per-Gaussian position,
// rotation and scale deformations for a frame stamp.
//
// Forward and backward passes are hand-rolled; gradients cover plane
// features, every MLP weight, and the query centers (through the bilinear
// grid lookup), and are finite-difference checked in the tests.

#include "liftcore/core.hpp"

#include <array>

namespace liftcore {

struct Deformation {
  std::vector<Vec3> dx;   // position deltas
  std::vector<Vec4> dr;   // quaternion deltas (w, x, y, z)
  std::vector<Vec3> ds;   // scale deltas (log-space when multiplicative)

  size_t size() const { return dx.size(); }
  void resize(size_t n) {
    dx.assign(n, Vec3::Zero());
    dr.assign(n, Vec4::Zero());
    ds.assign(n, Vec3::Zero());
  }
};

struct FieldConfig {
  int hidden_dim = 16;            // h: features per plane vertex
  int base_res_i = 32;            // N_i: base cells along a plane's first axis
  int base_res_j = 32;            // N_j: base cells along the second axis
  std::vector<int> levels = {1, 2};  // multi-resolution upsampling factors N_l
  int mlp_hidden = 32;            // hidden width of the merge MLP and heads
  bool multiplicative_scale = true;  // s' = s*exp(ds); false: s' = s + ds
  double init_noise = 1e-2;       // plane init: 1.0 + noise
  Vec3 bbox_min = Vec3::Constant(-1.0);  // spatial normalization box
  Vec3 bbox_max = Vec3::Constant(1.0);

  int feature_dim() const { return hidden_dim * static_cast<int>(levels.size()); }
};

// The 9 axis pairs over (x, y, z, t_i, t_j); indices 3 and 4 are the stamp
// axes. (t_i, t_j) is deliberately absent.
inline const std::array<std::pair<int, int>, 9>& kplane_axis_pairs() {
  static const std::array<std::pair<int, int>, 9> pairs = {{
      {0, 1}, {0, 2}, {1, 2},
      {0, 3}, {1, 3}, {2, 3},
      {0, 4}, {1, 4}, {2, 4},
  }};
  return pairs;
}

namespace fielddetail {

struct PlaneLayout {
  size_t offset = 0;  // into the flat parameter vector
  int cells_a = 0;    // cells along the pair's first axis
  int cells_b = 0;
  int h = 0;
  size_t vertex_index(int ia, int ib) const {
    return offset + (static_cast<size_t>(ia) * (cells_b + 1) + ib) * h;
  }
  size_t count() const {
    return static_cast<size_t>(cells_a + 1) * (cells_b + 1) * h;
  }
};

struct MlpLayout {
  size_t w1 = 0, b1 = 0, w2 = 0, b2 = 0;
  int in = 0, hidden = 0, out = 0;
  size_t count() const {
    return static_cast<size_t>(hidden) * in + hidden +
           static_cast<size_t>(out) * hidden + out;
  }
};

}  // namespace fielddetail

// Per-query cache of everything the backward pass needs.
struct FieldCache {
  size_t n = 0;
  FrameStamp stamp;
  std::vector<double> coords;       // n x 5, normalized, post-clamp
  std::vector<double> coord_scale;  // n x 5, d(coord)/d(raw input), 0 when clamped
  std::vector<int> cell_ia, cell_ib;   // n x planes
  std::vector<double> frac_a, frac_b;  // n x planes
  std::vector<double> plane_vec;    // n x planes x h: bilinear vectors
  std::vector<double> level_feat;   // n x levels x h: per-level products
  std::vector<double> merge_hidden; // n x mlp_hidden (post-tanh)
  std::vector<double> merged;       // n x h
  std::vector<double> head_hidden;  // n x 3 x mlp_hidden (post-tanh)
};

class DistortionField {
 public:
  DistortionField() = default;

  DistortionField(const FieldConfig& cfg, Rng& rng) : cfg_(cfg) { init(rng); }

  const FieldConfig& config() const { return cfg_; }
  std::vector<double>& params() { return params_; }
  const std::vector<double>& params() const { return params_; }
  size_t param_count() const { return params_.size(); }

  // Rebuilds layout for externally loaded parameters (checkpoint path).
  static DistortionField from_params(const FieldConfig& cfg, std::vector<double> params) {
    DistortionField f;
    f.cfg_ = cfg;
    f.build_layout();
    check(params.size() == f.expected_param_count_, "field: parameter count mismatch");
    f.params_ = std::move(params);
    return f;
  }

  // -------------------------------------------------------------------------
  // Encoder: concatenation over levels of the elementwise product of the 9
  // bilinearly interpolated plane features. Returns n x feature_dim().
  std::vector<double> encode(const std::vector<Vec3>& centers, FrameStamp stamp) const {
    FieldCache cache;
    encode_forward(centers, stamp, cache);
    const int L = static_cast<int>(cfg_.levels.size());
    const int h = cfg_.hidden_dim;
    std::vector<double> out(centers.size() * L * h);
    for (size_t g = 0; g < centers.size(); ++g)
      for (int l = 0; l < L; ++l)
        for (int c = 0; c < h; ++c)
          out[(g * L + l) * h + c] = cache.level_feat[(g * L + l) * h + c];
    return out;
  }

  // Deformation deltas for a batch of centers at one stamp.
  Deformation deltas(const std::vector<Vec3>& centers, FrameStamp stamp,
                     FieldCache* cache_out = nullptr) const {
    FieldCache local;
    FieldCache& cache = cache_out ? *cache_out : local;
    encode_forward(centers, stamp, cache);
    return decode_forward(cache);
  }

  // Full deformation of a cloud: X' = X + dX, r' = normalize(r + dr),
  // s' = s.*exp(ds) (or s + ds in additive mode). Opacity and SH untouched.
  GaussianCloud deform(const GaussianCloud& g, FrameStamp stamp,
                       Deformation* deltas_out = nullptr,
                       FieldCache* cache_out = nullptr) const {
    Deformation d = deltas(g.centers, stamp, cache_out);
    GaussianCloud out = g;
    for (size_t i = 0; i < g.size(); ++i) {
      out.centers[i] = g.centers[i] + d.dx[i];
      const Vec4 q(g.rotations[i].w + d.dr[i](0), g.rotations[i].x + d.dr[i](1),
                   g.rotations[i].y + d.dr[i](2), g.rotations[i].z + d.dr[i](3));
      const double qn = q.norm();
      check(qn > 1e-12, "deform: quaternion collapsed to zero");
      out.rotations[i] = Quat(q(0) / qn, q(1) / qn, q(2) / qn, q(3) / qn);
      if (cfg_.multiplicative_scale)
        out.scales[i] = g.scales[i].cwiseProduct(d.ds[i].array().exp().matrix());
      else
        out.scales[i] = g.scales[i] + d.ds[i];
    }
    if (deltas_out) *deltas_out = std::move(d);
    return out;
  }

  // Gradients of the deformed cloud w.r.t. everything. `upstream` holds
  // dL/d(deformed X, r, s); `delta_upstream` (optional) holds direct
  // dL/d(dX, dr, ds) terms such as the distortion penalty. Accumulates into
  // `param_grad` (same size as params()) and optionally into canonical
  // parameter gradients.
  struct Upstream {
    const std::vector<Vec3>* d_centers = nullptr;
    const std::vector<Vec4>* d_rotations = nullptr;  // w,x,y,z of deformed quat
    const std::vector<Vec3>* d_scales = nullptr;
  };
  struct DeltaUpstream {
    const std::vector<Vec3>* d_dx = nullptr;
    const std::vector<Vec4>* d_dr = nullptr;
    const std::vector<Vec3>* d_ds = nullptr;
  };
  struct CanonicalGrads {
    std::vector<Vec3>* centers = nullptr;
    std::vector<Vec4>* rotations = nullptr;
    std::vector<Vec3>* scales = nullptr;
  };

  void deform_backward(const GaussianCloud& canonical, const Deformation& d,
                       const FieldCache& cache, const Upstream& up,
                       const DeltaUpstream& dup, std::vector<double>& param_grad,
                       const CanonicalGrads& cg) const {
    check(param_grad.size() == params_.size(), "field: gradient buffer size mismatch");
    const size_t n = cache.n;
    std::vector<double> g_dx(n * 3, 0.0), g_dr(n * 4, 0.0), g_ds(n * 3, 0.0);

    for (size_t i = 0; i < n; ++i) {
      // Position: X' = X + dX.
      if (up.d_centers) {
        const Vec3& gx = (*up.d_centers)[i];
        for (int c = 0; c < 3; ++c) g_dx[i * 3 + c] += gx(c);
        if (cg.centers) (*cg.centers)[i] += gx;
      }
      // Rotation: r' = (r + dr) / |r + dr|.
      if (up.d_rotations) {
        const Vec4 q(canonical.rotations[i].w + d.dr[i](0),
                     canonical.rotations[i].x + d.dr[i](1),
                     canonical.rotations[i].y + d.dr[i](2),
                     canonical.rotations[i].z + d.dr[i](3));
        const double qn = q.norm();
        const Vec4 y = q / qn;
        const Vec4 gq = ((*up.d_rotations)[i] - y * y.dot((*up.d_rotations)[i])) / qn;
        for (int c = 0; c < 4; ++c) g_dr[i * 4 + c] += gq(c);
        if (cg.rotations) (*cg.rotations)[i] += gq;
      }
      // Scale: s' = s .* exp(ds) or s + ds.
      if (up.d_scales) {
        const Vec3& gs = (*up.d_scales)[i];
        if (cfg_.multiplicative_scale) {
          const Vec3 e = d.ds[i].array().exp().matrix();
          for (int c = 0; c < 3; ++c) {
            g_ds[i * 3 + c] += gs(c) * canonical.scales[i](c) * e(c);
            if (cg.scales) (*cg.scales)[i](c) += gs(c) * e(c);
          }
        } else {
          for (int c = 0; c < 3; ++c) g_ds[i * 3 + c] += gs(c);
          if (cg.scales) (*cg.scales)[i] += gs;
        }
      }
      if (dup.d_dx)
        for (int c = 0; c < 3; ++c) g_dx[i * 3 + c] += (*dup.d_dx)[i](c);
      if (dup.d_dr)
        for (int c = 0; c < 4; ++c) g_dr[i * 4 + c] += (*dup.d_dr)[i](c);
      if (dup.d_ds)
        for (int c = 0; c < 3; ++c) g_ds[i * 3 + c] += (*dup.d_ds)[i](c);
    }

    decode_encode_backward(cache, g_dx, g_dr, g_ds, param_grad, cg.centers);
  }

  // L1 total variation over every plane's vertex features, both axes.
  double tv(std::vector<double>* param_grad = nullptr) const {
    double total = 0.0;
    for (const auto& pl : planes_) {
      for (int ia = 0; ia <= pl.cells_a; ++ia) {
        for (int ib = 0; ib <= pl.cells_b; ++ib) {
          for (int c = 0; c < pl.h; ++c) {
            const size_t idx = pl.vertex_index(ia, ib) + c;
            if (ia < pl.cells_a) {
              const size_t up = pl.vertex_index(ia + 1, ib) + c;
              const double dlt = params_[up] - params_[idx];
              total += std::abs(dlt);
              if (param_grad && dlt != 0.0) {
                const double s = dlt > 0 ? 1.0 : -1.0;
                (*param_grad)[up] += s;
                (*param_grad)[idx] -= s;
              }
            }
            if (ib < pl.cells_b) {
              const size_t rt = pl.vertex_index(ia, ib + 1) + c;
              const double dlt = params_[rt] - params_[idx];
              total += std::abs(dlt);
              if (param_grad && dlt != 0.0) {
                const double s = dlt > 0 ? 1.0 : -1.0;
                (*param_grad)[rt] += s;
                (*param_grad)[idx] -= s;
              }
            }
          }
        }
      }
    }
    return total;
  }

 private:
  void build_layout() {
    planes_.clear();
    size_t off = 0;
    for (int lvl : cfg_.levels) {
      for (int p = 0; p < 9; ++p) {
        fielddetail::PlaneLayout pl;
        pl.offset = off;
        pl.cells_a = cfg_.base_res_i * lvl;
        pl.cells_b = cfg_.base_res_j * lvl;
        pl.h = cfg_.hidden_dim;
        off += pl.count();
        planes_.push_back(pl);
      }
    }
    auto mlp = [&off](int in, int hidden, int out) {
      fielddetail::MlpLayout m;
      m.in = in; m.hidden = hidden; m.out = out;
      m.w1 = off; off += static_cast<size_t>(hidden) * in;
      m.b1 = off; off += hidden;
      m.w2 = off; off += static_cast<size_t>(out) * hidden;
      m.b2 = off; off += out;
      return m;
    };
    merge_ = mlp(cfg_.feature_dim(), cfg_.mlp_hidden, cfg_.hidden_dim);
    head_x_ = mlp(cfg_.hidden_dim, cfg_.mlp_hidden, 3);
    head_r_ = mlp(cfg_.hidden_dim, cfg_.mlp_hidden, 4);
    head_s_ = mlp(cfg_.hidden_dim, cfg_.mlp_hidden, 3);
    expected_param_count_ = off;
  }

  void init(Rng& rng) {
    build_layout();
    params_.assign(expected_param_count_, 0.0);
    // Plane features start at the multiplicative identity plus small noise.
    for (const auto& pl : planes_)
      for (size_t i = 0; i < pl.count(); ++i)
        params_[pl.offset + i] = 1.0 + cfg_.init_noise * rng.normal();
    // Hidden layers: scaled uniform init. Head output layers stay zero so
    // training starts from the canonical (zero-deformation) state.
    auto init_mlp = [&](const fielddetail::MlpLayout& m, bool zero_out) {
      const double a1 = std::sqrt(6.0 / (m.in + m.hidden));
      for (int i = 0; i < m.hidden * m.in; ++i)
        params_[m.w1 + i] = rng.uniform(-a1, a1);
      if (!zero_out) {
        const double a2 = std::sqrt(6.0 / (m.hidden + m.out));
        for (int i = 0; i < m.out * m.hidden; ++i)
          params_[m.w2 + i] = rng.uniform(-a2, a2);
      }
    };
    init_mlp(merge_, false);
    init_mlp(head_x_, true);
    init_mlp(head_r_, true);
    init_mlp(head_s_, true);
  }

  static double clamp_unit(double v, double* dscale) {
    if (v < -1.0) { if (dscale) *dscale = 0.0; return -1.0; }
    if (v > 1.0) { if (dscale) *dscale = 0.0; return 1.0; }
    return v;
  }

  void encode_forward(const std::vector<Vec3>& centers, FrameStamp stamp,
                      FieldCache& cache) const {
    const size_t n = centers.size();
    const int L = static_cast<int>(cfg_.levels.size());
    const int h = cfg_.hidden_dim;
    const size_t np = planes_.size();

    cache.n = n;
    cache.stamp = stamp;
    cache.coords.assign(n * 5, 0.0);
    cache.coord_scale.assign(n * 5, 0.0);
    cache.cell_ia.assign(n * np, 0);
    cache.cell_ib.assign(n * np, 0);
    cache.frac_a.assign(n * np, 0.0);
    cache.frac_b.assign(n * np, 0.0);
    cache.plane_vec.assign(n * np * h, 0.0);
    cache.level_feat.assign(n * static_cast<size_t>(L) * h, 0.0);

    for (int k = 0; k < 3; ++k)
      check(cfg_.bbox_max(k) > cfg_.bbox_min(k), "field: empty normalization box");

    const auto& pairs = kplane_axis_pairs();
    parallel_for(0, static_cast<std::int64_t>(n), [&](std::int64_t gi, int) {
      const size_t g = static_cast<size_t>(gi);
      double* u = &cache.coords[g * 5];
      double* us = &cache.coord_scale[g * 5];
      for (int k = 0; k < 3; ++k) {
        const double span = cfg_.bbox_max(k) - cfg_.bbox_min(k);
        us[k] = 2.0 / span;
        u[k] = clamp_unit(2.0 * (centers[g](k) - cfg_.bbox_min(k)) / span - 1.0, &us[k]);
      }
      us[3] = 1.0; us[4] = 1.0;
      u[3] = clamp_unit(stamp.ti, &us[3]);
      u[4] = clamp_unit(stamp.tj, &us[4]);

      for (size_t p = 0; p < np; ++p) {
        const auto& pl = planes_[p];
        const auto [axa, axb] = pairs[p % 9];
        const double ga = (u[axa] + 1.0) * 0.5 * pl.cells_a;
        const double gb = (u[axb] + 1.0) * 0.5 * pl.cells_b;
        int ia = std::min(static_cast<int>(ga), pl.cells_a - 1);
        int ib = std::min(static_cast<int>(gb), pl.cells_b - 1);
        ia = std::max(ia, 0);
        ib = std::max(ib, 0);
        const double fa = ga - ia, fb = gb - ib;
        cache.cell_ia[g * np + p] = ia;
        cache.cell_ib[g * np + p] = ib;
        cache.frac_a[g * np + p] = fa;
        cache.frac_b[g * np + p] = fb;
        const double* f00 = &params_[pl.vertex_index(ia, ib)];
        const double* f10 = &params_[pl.vertex_index(ia + 1, ib)];
        const double* f01 = &params_[pl.vertex_index(ia, ib + 1)];
        const double* f11 = &params_[pl.vertex_index(ia + 1, ib + 1)];
        double* vec = &cache.plane_vec[(g * np + p) * h];
        for (int c = 0; c < h; ++c)
          vec[c] = (1 - fa) * (1 - fb) * f00[c] + fa * (1 - fb) * f10[c] +
                   (1 - fa) * fb * f01[c] + fa * fb * f11[c];
      }
      for (int l = 0; l < L; ++l) {
        double* feat = &cache.level_feat[(g * L + l) * h];
        for (int c = 0; c < h; ++c) feat[c] = 1.0;
        for (int p = 0; p < 9; ++p) {
          const double* vec = &cache.plane_vec[(g * np + l * 9 + p) * h];
          for (int c = 0; c < h; ++c) feat[c] *= vec[c];
        }
      }
    });
  }

  void mlp_forward(const fielddetail::MlpLayout& m, const double* in, double* hidden,
                   double* out) const {
    for (int i = 0; i < m.hidden; ++i) {
      double acc = params_[m.b1 + i];
      const double* row = &params_[m.w1 + static_cast<size_t>(i) * m.in];
      for (int j = 0; j < m.in; ++j) acc += row[j] * in[j];
      hidden[i] = std::tanh(acc);
    }
    for (int o = 0; o < m.out; ++o) {
      double acc = params_[m.b2 + o];
      const double* row = &params_[m.w2 + static_cast<size_t>(o) * m.hidden];
      for (int i = 0; i < m.hidden; ++i) acc += row[i] * hidden[i];
      out[o] = acc;
    }
  }

  // dL/dout -> accumulate weight grads, return dL/din.
  void mlp_backward(const fielddetail::MlpLayout& m, const double* in, const double* hidden,
                    const double* dout, std::vector<double>& pg, double* din) const {
    std::vector<double> dhid(m.hidden, 0.0);
    for (int o = 0; o < m.out; ++o) {
      pg[m.b2 + o] += dout[o];
      double* wrow_g = &pg[m.w2 + static_cast<size_t>(o) * m.hidden];
      const double* wrow = &params_[m.w2 + static_cast<size_t>(o) * m.hidden];
      for (int i = 0; i < m.hidden; ++i) {
        wrow_g[i] += dout[o] * hidden[i];
        dhid[i] += dout[o] * wrow[i];
      }
    }
    for (int i = 0; i < m.hidden; ++i) {
      const double da = dhid[i] * (1.0 - hidden[i] * hidden[i]);  // tanh'
      pg[m.b1 + i] += da;
      double* wrow_g = &pg[m.w1 + static_cast<size_t>(i) * m.in];
      const double* wrow = &params_[m.w1 + static_cast<size_t>(i) * m.in];
      for (int j = 0; j < m.in; ++j) {
        wrow_g[j] += da * in[j];
        if (din) din[j] += da * wrow[j];
      }
    }
  }

  Deformation decode_forward(FieldCache& cache) const {
    const size_t n = cache.n;
    const int L = static_cast<int>(cfg_.levels.size());
    const int h = cfg_.hidden_dim;
    Deformation d;
    d.resize(n);
    cache.merge_hidden.assign(n * cfg_.mlp_hidden, 0.0);
    cache.merged.assign(n * h, 0.0);
    cache.head_hidden.assign(n * 3 * cfg_.mlp_hidden, 0.0);

    parallel_for(0, static_cast<std::int64_t>(n), [&](std::int64_t gi, int) {
      const size_t g = static_cast<size_t>(gi);
      const double* fh = &cache.level_feat[g * L * h];
      double* mh = &cache.merge_hidden[g * cfg_.mlp_hidden];
      double* fd = &cache.merged[g * h];
      mlp_forward(merge_, fh, mh, fd);
      double out3[4];
      mlp_forward(head_x_, fd, &cache.head_hidden[(g * 3 + 0) * cfg_.mlp_hidden], out3);
      d.dx[g] = Vec3(out3[0], out3[1], out3[2]);
      mlp_forward(head_r_, fd, &cache.head_hidden[(g * 3 + 1) * cfg_.mlp_hidden], out3);
      d.dr[g] = Vec4(out3[0], out3[1], out3[2], out3[3]);
      mlp_forward(head_s_, fd, &cache.head_hidden[(g * 3 + 2) * cfg_.mlp_hidden], out3);
      d.ds[g] = Vec3(out3[0], out3[1], out3[2]);
    });
    return d;
  }

  void decode_encode_backward(const FieldCache& cache, const std::vector<double>& g_dx,
                              const std::vector<double>& g_dr, const std::vector<double>& g_ds,
                              std::vector<double>& pg, std::vector<Vec3>* g_centers) const {
    const size_t n = cache.n;
    const int L = static_cast<int>(cfg_.levels.size());
    const int h = cfg_.hidden_dim;
    const size_t np = planes_.size();
    const auto& pairs = kplane_axis_pairs();

    const int workers = std::min(thread_count(), std::max(1, static_cast<int>(n)));
    std::vector<std::vector<double>> pg_local(workers, std::vector<double>(pg.size(), 0.0));

    parallel_for(0, static_cast<std::int64_t>(n), [&](std::int64_t gi, int w) {
      const size_t g = static_cast<size_t>(gi);
      std::vector<double>& lpg = pg_local[w];
      const double* fh = &cache.level_feat[g * L * h];
      const double* mh = &cache.merge_hidden[g * cfg_.mlp_hidden];
      const double* fd = &cache.merged[g * h];

      std::vector<double> dfd(h, 0.0);
      mlp_backward(head_x_, fd, &cache.head_hidden[(g * 3 + 0) * cfg_.mlp_hidden],
                   &g_dx[g * 3], lpg, dfd.data());
      mlp_backward(head_r_, fd, &cache.head_hidden[(g * 3 + 1) * cfg_.mlp_hidden],
                   &g_dr[g * 4], lpg, dfd.data());
      mlp_backward(head_s_, fd, &cache.head_hidden[(g * 3 + 2) * cfg_.mlp_hidden],
                   &g_ds[g * 3], lpg, dfd.data());

      std::vector<double> dfh(static_cast<size_t>(L) * h, 0.0);
      mlp_backward(merge_, fh, mh, dfd.data(), lpg, dfh.data());

      // Through the per-level products and bilinear lookups.
      double du[5] = {0, 0, 0, 0, 0};
      for (int l = 0; l < L; ++l) {
        const double* dfeat = &dfh[static_cast<size_t>(l) * h];
        // prefix/suffix products across the 9 planes, per channel
        std::array<const double*, 9> vecs;
        for (int p = 0; p < 9; ++p)
          vecs[p] = &cache.plane_vec[(g * np + static_cast<size_t>(l) * 9 + p) * h];
        for (int c = 0; c < h; ++c) {
          double prefix[10];
          prefix[0] = 1.0;
          for (int p = 0; p < 9; ++p) prefix[p + 1] = prefix[p] * vecs[p][c];
          double suffix = 1.0;
          for (int p = 8; p >= 0; --p) {
            const double dvec = dfeat[c] * prefix[p] * suffix;  // d feat / d vec_p[c]
            suffix *= vecs[p][c];

            const size_t pidx = static_cast<size_t>(l) * 9 + p;
            const auto& pl = planes_[pidx];
            const int ia = cache.cell_ia[g * np + pidx];
            const int ib = cache.cell_ib[g * np + pidx];
            const double fa = cache.frac_a[g * np + pidx];
            const double fb = cache.frac_b[g * np + pidx];
            lpg[pl.vertex_index(ia, ib) + c] += dvec * (1 - fa) * (1 - fb);
            lpg[pl.vertex_index(ia + 1, ib) + c] += dvec * fa * (1 - fb);
            lpg[pl.vertex_index(ia, ib + 1) + c] += dvec * (1 - fa) * fb;
            lpg[pl.vertex_index(ia + 1, ib + 1) + c] += dvec * fa * fb;

            if (g_centers) {
              const double* f00 = &params_[pl.vertex_index(ia, ib)];
              const double* f10 = &params_[pl.vertex_index(ia + 1, ib)];
              const double* f01 = &params_[pl.vertex_index(ia, ib + 1)];
              const double* f11 = &params_[pl.vertex_index(ia + 1, ib + 1)];
              const double dv_dga = (1 - fb) * (f10[c] - f00[c]) + fb * (f11[c] - f01[c]);
              const double dv_dgb = (1 - fa) * (f01[c] - f00[c]) + fa * (f11[c] - f10[c]);
              const auto [axa, axb] = pairs[p];
              du[axa] += dvec * dv_dga * 0.5 * pl.cells_a;
              du[axb] += dvec * dv_dgb * 0.5 * pl.cells_b;
            }
          }
        }
      }
      if (g_centers) {
        const double* us = &cache.coord_scale[g * 5];
        for (int k = 0; k < 3; ++k) (*g_centers)[g](k) += du[k] * us[k];
      }
    }, workers);

    for (int w = 0; w < workers; ++w)
      for (size_t i = 0; i < pg.size(); ++i) pg[i] += pg_local[w][i];
  }

  FieldConfig cfg_;
  std::vector<double> params_;
  std::vector<fielddetail::PlaneLayout> planes_;  // levels x 9, level-major
  fielddetail::MlpLayout merge_, head_x_, head_r_, head_s_;
  size_t expected_param_count_ = 0;
};

// The canonical parameters are simply the Gaussians with all deformation
// discarded; exposed for API symmetry with deform().
inline const GaussianCloud& canonical(const GaussianCloud& g) { return g; }

}  // namespace liftcore
