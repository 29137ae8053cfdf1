#include "mentalsim/geometry.hpp"

#include <gtest/gtest.h>

#include <cmath>
#include <random>

using namespace mentalsim;

namespace {

// Independent oracle: homogeneous matrices built from axis-angle rotations.
Eigen::Matrix4d homogeneous(const Eigen::Matrix3d& r, const Vec3& t) {
  Eigen::Matrix4d m = Eigen::Matrix4d::Identity();
  m.block<3, 3>(0, 0) = r;
  m.block<3, 1>(0, 3) = t;
  return m;
}

Eigen::Matrix3d rot(const Vec3& axis, double angle) { return Eigen::AngleAxisd(angle, axis.normalized()).matrix(); }

Pose random_pose(std::mt19937_64& rng) {
  std::uniform_real_distribution<double> u(-5.0, 5.0);
  std::normal_distribution<double> n;
  Quat q(n(rng), n(rng), n(rng), n(rng));
  return Pose(Vec3(u(rng), u(rng), u(rng)), q.normalized());
}

void expect_vec(const Vec3& a, const Vec3& b, double tol) {
  EXPECT_NEAR(a.x(), b.x(), tol);
  EXPECT_NEAR(a.y(), b.y(), tol);
  EXPECT_NEAR(a.z(), b.z(), tol);
}

}  // namespace

TEST(Compose, IdentityLeavesPoseUnchanged) {
  const Pose p(Vec3(1, -2, 3), Quat(Eigen::AngleAxisd(0.3, Vec3(1, 2, 3).normalized())));
  EXPECT_TRUE(approx_equal(compose(Pose::identity(), p), p, 1e-12));
}

TEST(Compose, TranslationsAdd) {
  const Pose p = compose(Pose::translation(1, 0, 0), Pose::translation(0, 2, 0));
  expect_vec(p.position, Vec3(1, 2, 0), 1e-12);
}

TEST(Compose, RotationThenTranslationMatchesMatrixProduct) {
  const Pose p = compose(Pose::rot_z(kPi / 2), Pose::translation(1, 0, 0));
  const Eigen::Matrix4d oracle =
      homogeneous(rot(Vec3::UnitZ(), kPi / 2), Vec3::Zero()) * homogeneous(Eigen::Matrix3d::Identity(), Vec3(1, 0, 0));
  EXPECT_TRUE(p.matrix().isApprox(oracle, 1e-12));
  expect_vec(p.position, Vec3(0, 1, 0), 1e-12);
  EXPECT_NEAR(p.orientation.angularDistance(Quat(Eigen::AngleAxisd(kPi / 2, Vec3::UnitZ()))), 0.0, 1e-12);
}

TEST(Compose, Associative) {
  std::mt19937_64 rng(3);
  for (int i = 0; i < 200; ++i) {
    const Pose a = random_pose(rng), b = random_pose(rng), c = random_pose(rng);
    EXPECT_TRUE(approx_equal(compose(compose(a, b), c), compose(a, compose(b, c)), 1e-9));
  }
}

TEST(Pose, RandomInvariants) {
  std::mt19937_64 rng(11);
  std::uniform_real_distribution<double> u(-3.0, 3.0);
  for (int i = 0; i < 1000; ++i) {
    const Pose p = random_pose(rng), q = random_pose(rng);
    const Vec3 v(u(rng), u(rng), u(rng));
    EXPECT_NEAR(compose(p, q).orientation.norm(), 1.0, 1e-9);
    EXPECT_TRUE(approx_equal(compose(p, inverse(p)), Pose::identity(), 1e-9));
    expect_vec(transform_point(inverse(p), transform_point(p, v)), v, 1e-9);
    expect_vec(rotate_vector(p, v), p.orientation.toRotationMatrix() * v, 1e-9);
  }
}

TEST(TransformPoint, Examples) {
  expect_vec(transform_point(Pose::identity(), Vec3(1, 2, 3)), Vec3(1, 2, 3), 1e-12);
  expect_vec(transform_point(Pose::rot_z(kPi / 2), Vec3(1, 0, 0)), Vec3(0, 1, 0), 1e-12);
  const Pose p = compose(Pose::translation(1, 1, 1), Pose::rot_z(kPi));
  const Eigen::Vector4d oracle = homogeneous(rot(Vec3::UnitZ(), kPi), Vec3(1, 1, 1)) * Eigen::Vector4d(1, 0, 0, 1);
  expect_vec(transform_point(p, Vec3(1, 0, 0)), oracle.head<3>(), 1e-12);
  expect_vec(transform_point(p, Vec3(1, 0, 0)), Vec3(0, 1, 1), 1e-12);
}

TEST(Pose, RollPitchYawIsFixedAxisXyz) {
  const double r = 0.3, p = -0.7, y = 1.1;
  const Pose pose = Pose::from_xyz_rpy(1, 2, 3, r, p, y);
  const Eigen::Matrix3d oracle = rot(Vec3::UnitZ(), y) * rot(Vec3::UnitY(), p) * rot(Vec3::UnitX(), r);
  EXPECT_TRUE(pose.orientation.toRotationMatrix().isApprox(oracle, 1e-12));
  const auto back = pose.to_xyz_rpy();
  EXPECT_NEAR(back[3], r, 1e-12);
  EXPECT_NEAR(back[4], p, 1e-12);
  EXPECT_NEAR(back[5], y, 1e-12);
}

TEST(WrapAngle, HalfOpenInterval) {
  EXPECT_DOUBLE_EQ(wrap_angle(kPi), kPi);
  EXPECT_DOUBLE_EQ(wrap_angle(-kPi), kPi);
  EXPECT_NEAR(wrap_angle(3 * kPi / 2), -kPi / 2, 1e-12);
}

TEST(RayCast, HitsFrontFace) {
  const Aabb box{Vec3(-1, -1, -1), Vec3(1, 1, 1)};
  const auto t = ray_cast_aabb(Ray(Vec3(-2, 0, 0), Vec3(1, 0, 0)), box);
  ASSERT_TRUE(t);
  EXPECT_DOUBLE_EQ(*t, 1.0);
}

TEST(RayCast, FromInsideReturnsExitFace) {
  const Aabb box{Vec3(-1, -1, -1), Vec3(1, 1, 1)};
  const auto t = ray_cast_aabb(Ray(Vec3(0, 0, 0), Vec3(1, 0, 0)), box);
  ASSERT_TRUE(t);
  EXPECT_DOUBLE_EQ(*t, 1.0);
  // Slab oracle on an oblique direction: exit where the first slab is left.
  const Vec3 d = Vec3(1, 2, 0).normalized();
  const auto t2 = ray_cast_aabb(Ray(Vec3(0, 0, 0), d), box);
  ASSERT_TRUE(t2);
  EXPECT_NEAR(*t2, std::min(1.0 / d.x(), 1.0 / d.y()), 1e-12);
}

TEST(RayCast, PointingAwayMisses) {
  const Aabb box{Vec3(-1, -1, -1), Vec3(1, 1, 1)};
  EXPECT_FALSE(ray_cast_aabb(Ray(Vec3(-2, 0, 0), Vec3(-1, 0, 0)), box));
  EXPECT_FALSE(ray_cast_aabb(Ray(Vec3(-2, 3, 0), Vec3(1, 0, 0)), box));
}

TEST(RayCast, TranslationEquivariantExactly) {
  std::mt19937_64 rng(5);
  std::uniform_int_distribution<int> k(-64, 64);
  const Aabb box{Vec3(-1, -0.5, -2), Vec3(1.5, 0.5, 2)};
  for (int i = 0; i < 500; ++i) {
    const Vec3 origin(k(rng) / 8.0, k(rng) / 8.0, k(rng) / 8.0);
    const Vec3 dir = box.center() - origin + Vec3(0.25, -0.125, 0.0625);
    const Vec3 shift(k(rng), k(rng), k(rng));
    const auto a = ray_cast_aabb(Ray(origin, dir), box);
    const auto b = ray_cast_aabb(Ray(origin + shift, dir), box.translated(shift));
    ASSERT_EQ(a.has_value(), b.has_value());
    if (a) EXPECT_EQ(*a, *b);
  }
}

TEST(Ray, DirectionIsUnit) {
  const Ray r(Vec3::Zero(), Vec3(3, 4, 12));
  EXPECT_NEAR(r.direction().norm(), 1.0, 1e-12);
}

TEST(Shapes, SphereRayCastIsExact) {
  const auto t = ray_cast_shape(Ray(Vec3(-3, 0, 0), Vec3(1, 0, 0)), Shape::sphere(0.5), Pose::translation(0, 0, 0));
  ASSERT_TRUE(t);
  EXPECT_NEAR(*t, 2.5, 1e-12);
}

TEST(Aabb, OverlapDepthIsSmallestAxis) {
  const Aabb a{Vec3(0, 0, 0), Vec3(1, 1, 1)};
  EXPECT_NEAR(overlap_depth(a, a.translated(Vec3(0.8, 0, 0))), 0.2, 1e-12);
  EXPECT_EQ(overlap_depth(a, a.translated(Vec3(3, 0, 0))), 0.0);
}
