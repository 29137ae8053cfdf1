#pragma once

#include <Eigen/Geometry>

#include <array>
#include <optional>

namespace mentalsim {

using Vec3 = Eigen::Vector3d;
using Quat = Eigen::Quaterniond;
using Mat3 = Eigen::Matrix3d;

inline constexpr double kPi = 3.14159265358979323846;

/// Wraps an angle into (-pi, pi].
double wrap_angle(double a);

/// Rigid transform: rotate by `orientation`, then translate by `position`.
/// Quaternions are (w, x, y, z) and kept at unit norm.
struct Pose {
  Vec3 position = Vec3::Zero();
  Quat orientation = Quat::Identity();

  Pose() = default;
  Pose(const Vec3& p, const Quat& q);

  static Pose identity() { return {}; }
  static Pose translation(double x, double y, double z);
  static Pose rot_z(double angle);
  static Pose axis_angle(const Vec3& axis, double angle);
  /// SDF convention: roll about fixed x, then pitch about fixed y, then yaw
  /// about fixed z, i.e. R = Rz(yaw) * Ry(pitch) * Rx(roll).
  static Pose from_xyz_rpy(double x, double y, double z, double roll, double pitch, double yaw);

  Eigen::Matrix4d matrix() const;
  /// Inverse of from_xyz_rpy (angles in (-pi, pi]).
  std::array<double, 6> to_xyz_rpy() const;
};

/// a * b: b expressed in a's frame.
Pose compose(const Pose& a, const Pose& b);
Pose inverse(const Pose& p);
Vec3 transform_point(const Pose& p, const Vec3& v);
Vec3 rotate_vector(const Pose& p, const Vec3& v);

/// Max of position distance and rotation angle between two poses.
double pose_distance(const Pose& a, const Pose& b);
bool approx_equal(const Pose& a, const Pose& b, double tol);

struct Aabb {
  Vec3 min = Vec3::Zero();
  Vec3 max = Vec3::Zero();

  static Aabb from_center(const Vec3& center, const Vec3& half_extents);
  static Aabb empty();

  bool valid() const { return (min.array() <= max.array()).all(); }
  Vec3 center() const { return 0.5 * (min + max); }
  Vec3 extents() const { return max - min; }
  bool contains(const Vec3& p, double eps = 0.0) const;
  Aabb merged(const Aabb& other) const;
  Aabb translated(const Vec3& offset) const { return {min + offset, max + offset}; }
  std::array<Vec3, 8> corners() const;
};

/// Depth of AABB overlap: the smallest per-axis overlap, or 0 if disjoint.
double overlap_depth(const Aabb& a, const Aabb& b);

class Ray {
 public:
  /// Direction is normalized on construction.
  Ray(const Vec3& origin, const Vec3& direction);

  const Vec3& origin() const { return origin_; }
  const Vec3& direction() const { return direction_; }
  Vec3 at(double t) const { return origin_ + t * direction_; }

 private:
  Vec3 origin_;
  Vec3 direction_;
};

/// Smallest t >= 0 where the ray meets the box surface; from inside the box
/// this is the exit face.
std::optional<double> ray_cast_aabb(const Ray& r, const Aabb& box);

struct Shape {
  enum class Kind { box, cylinder, sphere };

  Kind kind = Kind::box;
  Vec3 size = Vec3::Zero();  // box only
  double radius = 0.0;       // cylinder, sphere
  double length = 0.0;       // cylinder (along local z)

  static Shape box(double sx, double sy, double sz);
  static Shape cylinder(double radius, double length);
  static Shape sphere(double radius);

  Vec3 half_extents() const;
  bool has_positive_size() const;
  bool operator==(const Shape&) const = default;
};

const char* to_string(Shape::Kind k);

/// World-frame AABB of a shape placed at `pose`.
Aabb world_aabb(const Shape& shape, const Pose& pose);

/// Ray test against a placed shape. Boxes and cylinders use the shape-frame
/// bounding box; spheres are exact.
std::optional<double> ray_cast_shape(const Ray& r, const Shape& shape, const Pose& pose);

struct Pose2d {
  double x = 0.0;
  double y = 0.0;
  double theta = 0.0;

  Pose to_pose(double z = 0.0) const;
  static Pose2d from_pose(const Pose& p);
  bool operator==(const Pose2d&) const = default;
};

}  // namespace mentalsim
