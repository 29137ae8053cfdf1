#include "mentalsim/geometry.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace mentalsim {

double wrap_angle(double a) {
  double r = std::remainder(a, 2.0 * kPi);  // [-pi, pi]
  if (r <= -kPi) r += 2.0 * kPi;
  return r;
}

Pose::Pose(const Vec3& p, const Quat& q) : position(p), orientation(q.normalized()) {}

Pose Pose::translation(double x, double y, double z) { return {Vec3(x, y, z), Quat::Identity()}; }

Pose Pose::rot_z(double angle) { return axis_angle(Vec3::UnitZ(), angle); }

Pose Pose::axis_angle(const Vec3& axis, double angle) {
  return {Vec3::Zero(), Quat(Eigen::AngleAxisd(angle, axis.normalized()))};
}

Pose Pose::from_xyz_rpy(double x, double y, double z, double roll, double pitch, double yaw) {
  Quat q = Eigen::AngleAxisd(yaw, Vec3::UnitZ()) * Eigen::AngleAxisd(pitch, Vec3::UnitY()) *
           Eigen::AngleAxisd(roll, Vec3::UnitX());
  return {Vec3(x, y, z), q};
}

Eigen::Matrix4d Pose::matrix() const {
  Eigen::Matrix4d m = Eigen::Matrix4d::Identity();
  m.topLeftCorner<3, 3>() = orientation.toRotationMatrix();
  m.topRightCorner<3, 1>() = position;
  return m;
}

std::array<double, 6> Pose::to_xyz_rpy() const {
  const Mat3 r = orientation.toRotationMatrix();
  const double pitch = std::asin(std::clamp(-r(2, 0), -1.0, 1.0));
  double roll = 0.0;
  double yaw = 0.0;
  if (std::abs(std::cos(pitch)) > 1e-12) {
    roll = std::atan2(r(2, 1), r(2, 2));
    yaw = std::atan2(r(1, 0), r(0, 0));
  } else {
    // gimbal lock: fold everything into yaw
    yaw = std::atan2(-r(0, 1), r(1, 1));
  }
  return {position.x(), position.y(), position.z(), wrap_angle(roll), pitch, wrap_angle(yaw)};
}

Pose compose(const Pose& a, const Pose& b) {
  return {a.position + a.orientation * b.position, a.orientation * b.orientation};
}

Pose inverse(const Pose& p) {
  const Quat qi = p.orientation.conjugate();
  return {-(qi * p.position), qi};
}

Vec3 transform_point(const Pose& p, const Vec3& v) { return p.position + p.orientation * v; }

Vec3 rotate_vector(const Pose& p, const Vec3& v) { return p.orientation * v; }

double pose_distance(const Pose& a, const Pose& b) {
  const double dp = (a.position - b.position).norm();
  const double dq = a.orientation.angularDistance(b.orientation);
  return std::max(dp, dq);
}

bool approx_equal(const Pose& a, const Pose& b, double tol) { return pose_distance(a, b) <= tol; }

Aabb Aabb::from_center(const Vec3& center, const Vec3& half_extents) {
  return {center - half_extents, center + half_extents};
}

Aabb Aabb::empty() {
  constexpr double inf = std::numeric_limits<double>::infinity();
  return {Vec3::Constant(inf), Vec3::Constant(-inf)};
}

bool Aabb::contains(const Vec3& p, double eps) const {
  return (p.array() >= min.array() - eps).all() && (p.array() <= max.array() + eps).all();
}

Aabb Aabb::merged(const Aabb& other) const {
  return {min.cwiseMin(other.min), max.cwiseMax(other.max)};
}

std::array<Vec3, 8> Aabb::corners() const {
  std::array<Vec3, 8> out;
  for (int i = 0; i < 8; ++i) {
    out[i] = Vec3((i & 1) ? max.x() : min.x(), (i & 2) ? max.y() : min.y(),
                  (i & 4) ? max.z() : min.z());
  }
  return out;
}

double overlap_depth(const Aabb& a, const Aabb& b) {
  double depth = std::numeric_limits<double>::infinity();
  for (int i = 0; i < 3; ++i) {
    const double o = std::min(a.max[i], b.max[i]) - std::max(a.min[i], b.min[i]);
    if (o <= 0.0) return 0.0;
    depth = std::min(depth, o);
  }
  return depth;
}

Ray::Ray(const Vec3& origin, const Vec3& direction)
    : origin_(origin), direction_(direction.normalized()) {}

std::optional<double> ray_cast_aabb(const Ray& r, const Aabb& box) {
  double t_near = -std::numeric_limits<double>::infinity();
  double t_far = std::numeric_limits<double>::infinity();
  const Vec3& o = r.origin();
  const Vec3& d = r.direction();
  for (int i = 0; i < 3; ++i) {
    if (d[i] == 0.0) {
      if (o[i] < box.min[i] || o[i] > box.max[i]) return std::nullopt;
      continue;
    }
    double t0 = (box.min[i] - o[i]) / d[i];
    double t1 = (box.max[i] - o[i]) / d[i];
    if (t0 > t1) std::swap(t0, t1);
    t_near = std::max(t_near, t0);
    t_far = std::min(t_far, t1);
    if (t_near > t_far) return std::nullopt;
  }
  if (t_far < 0.0) return std::nullopt;
  return t_near >= 0.0 ? t_near : t_far;
}

Shape Shape::box(double sx, double sy, double sz) {
  Shape s;
  s.kind = Kind::box;
  s.size = Vec3(sx, sy, sz);
  return s;
}

Shape Shape::cylinder(double radius, double length) {
  Shape s;
  s.kind = Kind::cylinder;
  s.radius = radius;
  s.length = length;
  return s;
}

Shape Shape::sphere(double radius) {
  Shape s;
  s.kind = Kind::sphere;
  s.radius = radius;
  return s;
}

Vec3 Shape::half_extents() const {
  switch (kind) {
    case Kind::box:
      return 0.5 * size;
    case Kind::cylinder:
      return Vec3(radius, radius, 0.5 * length);
    case Kind::sphere:
      return Vec3::Constant(radius);
  }
  return Vec3::Zero();
}

bool Shape::has_positive_size() const {
  switch (kind) {
    case Kind::box:
      return (size.array() > 0.0).all();
    case Kind::cylinder:
      return radius > 0.0 && length > 0.0;
    case Kind::sphere:
      return radius > 0.0;
  }
  return false;
}

const char* to_string(Shape::Kind k) {
  switch (k) {
    case Shape::Kind::box:
      return "box";
    case Shape::Kind::cylinder:
      return "cylinder";
    case Shape::Kind::sphere:
      return "sphere";
  }
  return "?";
}

Aabb world_aabb(const Shape& shape, const Pose& pose) {
  const Vec3 h = shape.half_extents();
  if (shape.kind == Shape::Kind::sphere) return Aabb::from_center(pose.position, h);
  // |R| * h bounds the rotated box
  const Mat3 r = pose.orientation.toRotationMatrix().cwiseAbs();
  return Aabb::from_center(pose.position, r * h);
}

std::optional<double> ray_cast_shape(const Ray& r, const Shape& shape, const Pose& pose) {
  if (shape.kind == Shape::Kind::sphere) {
    const Vec3 oc = r.origin() - pose.position;
    const double b = oc.dot(r.direction());
    const double c = oc.squaredNorm() - shape.radius * shape.radius;
    const double disc = b * b - c;
    if (disc < 0.0) return std::nullopt;
    const double s = std::sqrt(disc);
    const double t0 = -b - s;
    const double t1 = -b + s;
    if (t1 < 0.0) return std::nullopt;
    return t0 >= 0.0 ? t0 : t1;
  }
  const Pose inv = inverse(pose);
  const Ray local(transform_point(inv, r.origin()), rotate_vector(inv, r.direction()));
  const Vec3 h = shape.half_extents();
  return ray_cast_aabb(local, Aabb{-h, h});
}

Pose Pose2d::to_pose(double z) const {
  return compose(Pose::translation(x, y, z), Pose::rot_z(theta));
}

Pose2d Pose2d::from_pose(const Pose& p) {
  const Vec3 fwd = p.orientation * Vec3::UnitX();
  return {p.position.x(), p.position.y(), std::atan2(fwd.y(), fwd.x())};
}

}  // namespace mentalsim
