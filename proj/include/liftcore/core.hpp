#pragma once

// Core domain types and geometry conventions shared by every module.
//
// Conventions: poses are camera-to-world, right-handed, x right / y down /
// z forward. A single shared pinhole focal with the principal point at the
// image center. Pixel (i, j) has its center at the continuous image
// coordinate (i + 0.5, j + 0.5); the image-centered coordinate of that
// pixel is (i + 0.5 - W/2, j + 0.5 - H/2).

#include <Eigen/Dense>

#include <cmath>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <thread>
#include <vector>

namespace liftcore {

using Vec2 = Eigen::Vector2d;
using Vec3 = Eigen::Vector3d;
using Vec4 = Eigen::Vector4d;
using Mat2 = Eigen::Matrix2d;
using Mat3 = Eigen::Matrix3d;
using Mat4 = Eigen::Matrix4d;

class Error : public std::runtime_error {
 public:
  explicit Error(const std::string& msg) : std::runtime_error(msg) {}
};

inline void check(bool cond, const std::string& msg) {
  if (!cond) throw Error(msg);
}

// ---------------------------------------------------------------------------
// Deterministic PRNG (splitmix64 core). All stochastic steps in the pipeline
// draw from this so that a fixed seed reproduces runs bit-for-bit.

class Rng {
 public:
  explicit Rng(std::uint64_t seed = 0x9e3779b97f4a7c15ull) : state_(seed) {}

  std::uint64_t next_u64() {
    std::uint64_t z = (state_ += 0x9e3779b97f4a7c15ull);
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
    return z ^ (z >> 31);
  }

  // Uniform in [0, 1) with 53 random bits.
  double uniform() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  // Uniform integer in [0, n).
  std::uint64_t uniform_index(std::uint64_t n) {
    return n == 0 ? 0 : next_u64() % n;
  }

  // Standard normal via Box-Muller; draws exactly two uniforms per call.
  double normal() {
    double u1 = uniform();
    double u2 = uniform();
    if (u1 < 1e-300) u1 = 1e-300;
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * M_PI * u2);
  }

  Vec3 normal3() {
    const double a = normal(), b = normal(), c = normal();
    return Vec3(a, b, c);
  }

  // Independent substream; decorrelated from the parent by a fixed mix.
  Rng fork(std::uint64_t stream) {
    return Rng(next_u64() ^ (stream * 0xd1342543de82ef95ull + 0x2545f4914f6cdd1dull));
  }

 private:
  std::uint64_t state_;
};

// ---------------------------------------------------------------------------
// Threading. LIFTCORE_THREADS caps the worker count; results must not depend
// on the split, so parallel regions write disjoint outputs or reduce their
// per-worker buffers in worker order.

inline int thread_count() {
  if (const char* env = std::getenv("LIFTCORE_THREADS")) {
    const int n = std::atoi(env);
    if (n >= 1) return n;
  }
  const unsigned hw = std::thread::hardware_concurrency();
  return hw == 0 ? 1 : static_cast<int>(hw);
}

// Chunked parallel for over [begin, end). fn(index, worker) is called with
// worker in [0, workers); chunk boundaries depend only on the worker count.
template <typename Fn>
void parallel_for(std::int64_t begin, std::int64_t end, Fn&& fn, int workers = 0) {
  if (workers <= 0) workers = thread_count();
  const std::int64_t n = end - begin;
  if (n <= 0) return;
  if (workers == 1 || n == 1) {
    for (std::int64_t i = begin; i < end; ++i) fn(i, 0);
    return;
  }
  if (workers > n) workers = static_cast<int>(n);
  std::vector<std::thread> pool;
  pool.reserve(workers);
  const std::int64_t chunk = (n + workers - 1) / workers;
  for (int w = 0; w < workers; ++w) {
    const std::int64_t lo = begin + w * chunk;
    const std::int64_t hi = std::min(end, lo + chunk);
    if (lo >= hi) break;
    pool.emplace_back([lo, hi, w, &fn] {
      for (std::int64_t i = lo; i < hi; ++i) fn(i, w);
    });
  }
  for (auto& t : pool) t.join();
}

// ---------------------------------------------------------------------------
// Images and depth.

struct Image {
  int width = 0;
  int height = 0;
  int channels = 0;  // 1 or 3
  std::vector<double> data;  // row-major, top-left origin, values in [0, 1]

  Image() = default;
  Image(int w, int h, int c, double fill = 0.0)
      : width(w), height(h), channels(c),
        data(static_cast<size_t>(w) * h * c, fill) {}

  double& at(int x, int y, int c) {
    return data[(static_cast<size_t>(y) * width + x) * channels + c];
  }
  double at(int x, int y, int c) const {
    return data[(static_cast<size_t>(y) * width + x) * channels + c];
  }
  size_t pixel_count() const { return static_cast<size_t>(width) * height; }

  void validate() const {
    check(channels == 1 || channels == 3, "image: channels must be 1 or 3");
    check(data.size() == pixel_count() * channels, "image: data length mismatch");
    for (double v : data)
      check(std::isfinite(v) && v >= 0.0 && v <= 1.0, "image: value outside [0,1]");
  }
};

enum class DepthKind { absolute, relative, calibrated };

struct DepthMap {
  int width = 0;
  int height = 0;
  std::vector<double> data;
  DepthKind kind = DepthKind::relative;

  DepthMap() = default;
  DepthMap(int w, int h, DepthKind k, double fill = 0.0)
      : width(w), height(h), data(static_cast<size_t>(w) * h, fill), kind(k) {}

  double& at(int x, int y) { return data[static_cast<size_t>(y) * width + x]; }
  double at(int x, int y) const { return data[static_cast<size_t>(y) * width + x]; }

  void validate() const {
    check(data.size() == static_cast<size_t>(width) * height, "depth: size mismatch");
    for (double v : data) {
      check(std::isfinite(v), "depth: non-finite value");
      if (kind != DepthKind::relative) check(v > 0.0, "depth: absolute value <= 0");
    }
  }
};

// Per-pixel 3D points with confidence, expressed in a named camera frame.
// Confidence 0 marks an invalid pixel.
struct PointMap {
  int width = 0;
  int height = 0;
  std::string frame;  // label of the camera frame the points live in
  std::vector<Vec3> points;
  std::vector<double> confidence;

  PointMap() = default;
  PointMap(int w, int h, std::string frame_label = "")
      : width(w), height(h), frame(std::move(frame_label)),
        points(static_cast<size_t>(w) * h, Vec3::Zero()),
        confidence(static_cast<size_t>(w) * h, 0.0) {}

  size_t size() const { return points.size(); }
  Vec3& at(int x, int y) { return points[static_cast<size_t>(y) * width + x]; }
  const Vec3& at(int x, int y) const { return points[static_cast<size_t>(y) * width + x]; }
  double& conf(int x, int y) { return confidence[static_cast<size_t>(y) * width + x]; }
  double conf(int x, int y) const { return confidence[static_cast<size_t>(y) * width + x]; }

  void validate() const {
    const size_t n = static_cast<size_t>(width) * height;
    check(points.size() == n && confidence.size() == n, "pointmap: size mismatch");
    for (double c : confidence) check(std::isfinite(c) && c >= 0.0, "pointmap: bad confidence");
  }
};

struct Intrinsics {
  double focal = 0.0;  // pixels, shared by all frames
  double cx = 0.0;     // principal point, W/2
  double cy = 0.0;     // principal point, H/2

  Intrinsics() = default;
  Intrinsics(double f, int width, int height)
      : focal(f), cx(width / 2.0), cy(height / 2.0) {}

  void validate() const { check(focal > 0.0, "intrinsics: focal must be positive"); }
};

// ---------------------------------------------------------------------------
// Rotations and poses.

struct Quat {
  double w = 1.0, x = 0.0, y = 0.0, z = 0.0;

  Quat() = default;
  Quat(double w_, double x_, double y_, double z_) : w(w_), x(x_), y(y_), z(z_) {}

  double norm() const { return std::sqrt(w * w + x * x + y * y + z * z); }

  Quat normalized() const {
    const double n = norm();
    check(n > 0.0, "quat: zero quaternion");
    return Quat(w / n, x / n, y / n, z / n);
  }

  // Hamilton product.
  friend Quat operator*(const Quat& a, const Quat& b) {
    return Quat(a.w * b.w - a.x * b.x - a.y * b.y - a.z * b.z,
                a.w * b.x + a.x * b.w + a.y * b.z - a.z * b.y,
                a.w * b.y - a.x * b.z + a.y * b.w + a.z * b.x,
                a.w * b.z + a.x * b.y - a.y * b.x + a.z * b.w);
  }

  Quat conjugate() const { return Quat(w, -x, -y, -z); }

  // Sandwich product q v q* on a pure-imaginary quaternion.
  Vec3 rotate(const Vec3& v) const {
    const Quat p(0.0, v.x(), v.y(), v.z());
    const Quat r = (*this) * p * conjugate();
    return Vec3(r.x, r.y, r.z);
  }
};

// Rotation matrix from a quaternion; normalizes internally, errors on zero.
inline Mat3 quat_to_matrix(const Quat& q_in) {
  const Quat q = q_in.normalized();
  const double w = q.w, x = q.x, y = q.y, z = q.z;
  Mat3 r;
  r << 1 - 2 * (y * y + z * z), 2 * (x * y - w * z), 2 * (x * z + w * y),
       2 * (x * y + w * z), 1 - 2 * (x * x + z * z), 2 * (y * z - w * x),
       2 * (x * z - w * y), 2 * (y * z + w * x), 1 - 2 * (x * x + y * y);
  return r;
}

// Shepperd's method; returns the representative with w >= 0.
inline Quat matrix_to_quat(const Mat3& m) {
  Quat q;
  const double tr = m.trace();
  if (tr > 0.0) {
    double s = std::sqrt(tr + 1.0) * 2.0;
    q.w = 0.25 * s;
    q.x = (m(2, 1) - m(1, 2)) / s;
    q.y = (m(0, 2) - m(2, 0)) / s;
    q.z = (m(1, 0) - m(0, 1)) / s;
  } else if (m(0, 0) > m(1, 1) && m(0, 0) > m(2, 2)) {
    double s = std::sqrt(1.0 + m(0, 0) - m(1, 1) - m(2, 2)) * 2.0;
    q.w = (m(2, 1) - m(1, 2)) / s;
    q.x = 0.25 * s;
    q.y = (m(0, 1) + m(1, 0)) / s;
    q.z = (m(0, 2) + m(2, 0)) / s;
  } else if (m(1, 1) > m(2, 2)) {
    double s = std::sqrt(1.0 + m(1, 1) - m(0, 0) - m(2, 2)) * 2.0;
    q.w = (m(0, 2) - m(2, 0)) / s;
    q.x = (m(0, 1) + m(1, 0)) / s;
    q.y = 0.25 * s;
    q.z = (m(1, 2) + m(2, 1)) / s;
  } else {
    double s = std::sqrt(1.0 + m(2, 2) - m(0, 0) - m(1, 1)) * 2.0;
    q.w = (m(1, 0) - m(0, 1)) / s;
    q.x = (m(0, 2) + m(2, 0)) / s;
    q.y = (m(1, 2) + m(2, 1)) / s;
    q.z = 0.25 * s;
  }
  if (q.w < 0.0) { q.w = -q.w; q.x = -q.x; q.y = -q.y; q.z = -q.z; }
  return q.normalized();
}

// Rodrigues' formula.
inline Mat3 axis_angle_to_matrix(const Vec3& omega) {
  const double theta = omega.norm();
  if (theta < 1e-12) {
    Mat3 k = Mat3::Identity();
    k(0, 1) = -omega.z(); k(1, 0) = omega.z();
    k(0, 2) = omega.y();  k(2, 0) = -omega.y();
    k(1, 2) = -omega.x(); k(2, 1) = omega.x();
    return k;
  }
  const Vec3 a = omega / theta;
  Mat3 k;
  k << 0, -a.z(), a.y(),
       a.z(), 0, -a.x(),
       -a.y(), a.x(), 0;
  return Mat3::Identity() + std::sin(theta) * k + (1.0 - std::cos(theta)) * k * k;
}

// Rigid camera-to-world transform.
struct Pose {
  Mat3 R = Mat3::Identity();
  Vec3 t = Vec3::Zero();

  static Pose identity() { return Pose(); }

  Vec3 apply(const Vec3& p) const { return R * p + t; }

  Pose inverse() const {
    Pose inv;
    inv.R = R.transpose();
    inv.t = -(R.transpose() * t);
    return inv;
  }

  Mat4 matrix() const {
    Mat4 m = Mat4::Identity();
    m.block<3, 3>(0, 0) = R;
    m.block<3, 1>(0, 3) = t;
    return m;
  }

  static Pose from_matrix(const Mat4& m) {
    Pose p;
    p.R = m.block<3, 3>(0, 0);
    p.t = m.block<3, 1>(0, 3);
    return p;
  }

  void validate(double tol = 1e-9) const {
    check((R.transpose() * R - Mat3::Identity()).cwiseAbs().maxCoeff() <= tol,
          "pose: rotation not orthonormal");
    check(std::abs(R.determinant() - 1.0) <= tol, "pose: det(R) != +1");
    check(t.allFinite(), "pose: non-finite translation");
  }
};

// Pose mapping b's camera frame through a: (a o b)(p) = a(b(p)).
inline Pose compose(const Pose& a, const Pose& b) {
  Pose out;
  out.R = a.R * b.R;
  out.t = a.R * b.t + a.t;
  return out;
}

// Similarity transform x -> s * (R x) + t. Scale composes multiplicatively.
struct Sim3 {
  double s = 1.0;
  Mat3 R = Mat3::Identity();
  Vec3 t = Vec3::Zero();

  static Sim3 identity() { return Sim3(); }

  Vec3 apply(const Vec3& p) const { return s * (R * p) + t; }

  Sim3 inverse() const {
    Sim3 inv;
    inv.s = 1.0 / s;
    inv.R = R.transpose();
    inv.t = -(R.transpose() * t) / s;
    return inv;
  }

  friend Sim3 operator*(const Sim3& a, const Sim3& b) {
    Sim3 out;
    out.s = a.s * b.s;
    out.R = a.R * b.R;
    out.t = a.s * (a.R * b.t) + a.t;
    return out;
  }

  Pose pose() const { return Pose{R, t}; }
};

// Two-axis frame stamp: t_i along left-right, t_j along up-down, both in
// [-1, 1]. The input image carries (0, 0).
struct FrameStamp {
  double ti = 0.0;
  double tj = 0.0;

  bool operator==(const FrameStamp& o) const { return ti == o.ti && tj == o.tj; }
};

// ---------------------------------------------------------------------------
// Gaussian scene.

inline constexpr double kShC0 = 0.28209479177387814;  // Y_0^0

struct GaussianCloud {
  std::vector<Vec3> centers;
  std::vector<Vec3> scales;      // per-axis, positive
  std::vector<Quat> rotations;   // unit quaternions
  std::vector<double> opacities; // in (0, 1)
  std::vector<Vec3> colors_sh;   // degree-0 SH coefficients

  size_t size() const { return centers.size(); }

  void resize(size_t n) {
    centers.resize(n, Vec3::Zero());
    scales.resize(n, Vec3::Ones());
    rotations.resize(n);
    opacities.resize(n, 0.1);
    colors_sh.resize(n, Vec3::Zero());
  }

  static Vec3 sh_to_rgb(const Vec3& sh) { return Vec3::Constant(0.5) + kShC0 * sh; }
  static Vec3 rgb_to_sh(const Vec3& rgb) { return (rgb - Vec3::Constant(0.5)) / kShC0; }

  void validate() const {
    const size_t n = size();
    check(scales.size() == n && rotations.size() == n && opacities.size() == n &&
              colors_sh.size() == n, "cloud: field sizes differ");
    for (size_t i = 0; i < n; ++i) {
      check(centers[i].allFinite(), "cloud: non-finite center");
      check(scales[i].minCoeff() > 0.0, "cloud: non-positive scale");
      check(std::abs(rotations[i].norm() - 1.0) <= 1e-6, "cloud: non-unit quaternion");
      check(opacities[i] > 0.0 && opacities[i] < 1.0, "cloud: opacity outside (0,1)");
      check(colors_sh[i].allFinite(), "cloud: non-finite color");
    }
  }
};

}  // namespace liftcore
