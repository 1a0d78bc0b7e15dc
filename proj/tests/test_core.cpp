#include "liftcore/core.hpp"

#include <catch2/catch_amalgamated.hpp>

using namespace liftcore;

namespace {

Pose rot_z(double deg, const Vec3& t = Vec3::Zero()) {
  Pose p;
  p.R = axis_angle_to_matrix(Vec3(0, 0, deg * M_PI / 180.0));
  p.t = t;
  return p;
}

Quat random_unit_quat(Rng& rng) {
  Quat q(rng.normal(), rng.normal(), rng.normal(), rng.normal());
  return q.normalized();
}

}  // namespace

TEST_CASE("compose identity and inverse") {
  Rng rng(7);
  const Pose p = rot_z(37.0, Vec3(0.3, -1.2, 2.0));
  const Pose id = Pose::identity();

  const Pose a = compose(id, p);
  REQUIRE((a.R - p.R).cwiseAbs().maxCoeff() == 0.0);
  REQUIRE((a.t - p.t).cwiseAbs().maxCoeff() == 0.0);

  const Pose b = compose(p, p.inverse());
  REQUIRE((b.R - Mat3::Identity()).cwiseAbs().maxCoeff() < 1e-12);
  REQUIRE(b.t.cwiseAbs().maxCoeff() < 1e-12);
}

TEST_CASE("compose matches 4x4 homogeneous product") {
  const Pose a = rot_z(30.0, Vec3(1, 0, 0));
  const Pose b = rot_z(60.0, Vec3(0, 1, 0));
  const Pose c = compose(a, b);

  const Mat4 oracle = a.matrix() * b.matrix();
  REQUIRE((c.matrix() - oracle).cwiseAbs().maxCoeff() < 1e-14);
  // rotation part is Rz(90)
  const Mat3 rz90 = axis_angle_to_matrix(Vec3(0, 0, M_PI / 2.0));
  REQUIRE((c.R - rz90).cwiseAbs().maxCoeff() < 1e-14);
}

TEST_CASE("compose is associative") {
  Rng rng(11);
  for (int i = 0; i < 50; ++i) {
    Pose a, b, c;
    a.R = quat_to_matrix(random_unit_quat(rng));
    b.R = quat_to_matrix(random_unit_quat(rng));
    c.R = quat_to_matrix(random_unit_quat(rng));
    a.t = rng.normal3();
    b.t = rng.normal3();
    c.t = rng.normal3();
    const Pose lhs = compose(compose(a, b), c);
    const Pose rhs = compose(a, compose(b, c));
    REQUIRE((lhs.R - rhs.R).cwiseAbs().maxCoeff() < 1e-10);
    REQUIRE((lhs.t - rhs.t).cwiseAbs().maxCoeff() < 1e-10);
  }
}

TEST_CASE("quat_to_matrix basics") {
  REQUIRE((quat_to_matrix(Quat(1, 0, 0, 0)) - Mat3::Identity()).cwiseAbs().maxCoeff() == 0.0);

  // (0,0,0,1): 180 degrees about z
  Mat3 expect;
  expect << -1, 0, 0, 0, -1, 0, 0, 0, 1;
  REQUIRE((quat_to_matrix(Quat(0, 0, 0, 1)) - expect).cwiseAbs().maxCoeff() < 1e-15);

  REQUIRE_THROWS_AS(quat_to_matrix(Quat(0, 0, 0, 0)), Error);
}

TEST_CASE("quat_to_matrix matches sandwich product") {
  Rng rng(3);
  const Quat q = random_unit_quat(rng);
  const Mat3 m = quat_to_matrix(q);
  for (int i = 0; i < 100; ++i) {
    const Vec3 v = rng.normal3();
    REQUIRE((m * v - q.rotate(v)).cwiseAbs().maxCoeff() < 1e-12);
  }
}

TEST_CASE("quaternion double cover is exact") {
  Rng rng(5);
  for (int i = 0; i < 20; ++i) {
    const Quat q = random_unit_quat(rng);
    const Quat nq(-q.w, -q.x, -q.y, -q.z);
    const Mat3 a = quat_to_matrix(q);
    const Mat3 b = quat_to_matrix(nq);
    REQUIRE((a - b).cwiseAbs().maxCoeff() == 0.0);
  }
}

TEST_CASE("matrix->quat->matrix round trip") {
  Rng rng(13);
  for (int i = 0; i < 100; ++i) {
    const Mat3 m = quat_to_matrix(random_unit_quat(rng));
    const Mat3 back = quat_to_matrix(matrix_to_quat(m));
    REQUIRE((m - back).cwiseAbs().maxCoeff() < 1e-9);
  }
}

TEST_CASE("sim3 compose and inverse") {
  Rng rng(17);
  Sim3 a{1.7, quat_to_matrix(random_unit_quat(rng)), rng.normal3()};
  Sim3 b{0.4, quat_to_matrix(random_unit_quat(rng)), rng.normal3()};
  const Vec3 p = rng.normal3();
  REQUIRE(((a * b).apply(p) - a.apply(b.apply(p))).norm() < 1e-12);
  REQUIRE((a.inverse().apply(a.apply(p)) - p).norm() < 1e-12);
}

TEST_CASE("rng is deterministic and seeded") {
  Rng a(42), b(42), c(43);
  for (int i = 0; i < 10; ++i) {
    const double va = a.uniform();
    REQUIRE(va == b.uniform());
    REQUIRE(va >= 0.0);
    REQUIRE(va < 1.0);
  }
  REQUIRE(a.uniform() != c.uniform());
}

TEST_CASE("pose validate rejects non-rotation") {
  Pose p;
  p.R(0, 0) = 2.0;
  REQUIRE_THROWS_AS(p.validate(), Error);
}

TEST_CASE("cloud validation") {
  GaussianCloud g;
  g.resize(2);
  g.centers[0] = Vec3(0, 0, 1);
  g.centers[1] = Vec3(1, 0, 2);
  REQUIRE_NOTHROW(g.validate());
  g.scales[1] = Vec3(1, -1, 1);
  REQUIRE_THROWS_AS(g.validate(), Error);
}
