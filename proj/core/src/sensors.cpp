#include "mentalsim/sensors.hpp"

#include "mentalsim/error.hpp"
#include "mentalsim/physics.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace mentalsim {

namespace {

struct Occluder {
  NodeId id;
  NodeId model;
  const Shape* shape;
  Pose pose;
};

std::vector<Occluder> occluders(const SceneSnapshot& snap, NodeId ignore_model, NodeId ignore_subtree) {
  std::vector<Occluder> out;
  for (const auto& n : snap.topology().nodes) {
    if (n.kind != NodeKind::shape || !n.shape) continue;
    const NodeId model = snap.top_model_of(n.id);
    if (model == ignore_model) continue;
    if (ignore_subtree >= 0 && (n.id == ignore_subtree || snap.is_ancestor(ignore_subtree, n.id))) continue;
    out.push_back({n.id, model, &*n.shape, snap.world_pose(n.id)});
  }
  return out;
}

}  // namespace

std::size_t LaserConfig::beam_count() const {
  return static_cast<std::size_t>(std::floor((angle_max - angle_min) / angle_increment)) + 1;
}

bool LaserConfig::valid() const {
  return angle_min < angle_max && angle_increment > 0.0 && range_min < range_max;
}

std::vector<double> scan(const SceneSnapshot& snap, const LaserConfig& cfg) {
  if (!cfg.valid()) throw Error(Errc::InvalidArgument, "invalid laser configuration");
  const Pose sensor = snap.world_pose(cfg.frame);
  const auto shapes = occluders(snap, snap.top_model_of(cfg.frame), -1);
  const std::size_t n = cfg.beam_count();
  std::vector<double> ranges(n);
  for (std::size_t i = 0; i < n; ++i) {
    const double a = cfg.angle_min + static_cast<double>(i) * cfg.angle_increment;
    const Ray ray(sensor.position, rotate_vector(sensor, Vec3(std::cos(a), std::sin(a), 0.0)));
    double best = std::numeric_limits<double>::infinity();
    for (const auto& s : shapes)
      if (auto t = ray_cast_shape(ray, *s.shape, s.pose); t && *t < best) best = *t;
    ranges[i] = best > cfg.range_max ? cfg.range_max + 1.0 : std::clamp(best, cfg.range_min, cfg.range_max);
  }
  return ranges;
}

bool CameraConfig::valid() const {
  return hfov > 0.0 && hfov < kPi && vfov > 0.0 && vfov < kPi && near > 0.0 && near < far;
}

VisibilityReport visibility_from(const SceneSnapshot& snap, const Pose& camera, const CameraConfig& cam,
                                 NodeId target, NodeId ignore_model, double threshold) {
  snap.node(target);
  VisibilityReport report;
  report.target = target;
  const Aabb box = snap.subtree_aabb(target);
  if (!box.valid()) return report;

  std::vector<Vec3> samples;
  for (const auto& c : box.corners()) samples.push_back(c);
  samples.push_back(box.center());

  const auto shapes = occluders(snap, ignore_model, target);
  const Pose to_cam = inverse(camera);
  int seen = 0;
  for (const auto& p : samples) {
    const Vec3 local = transform_point(to_cam, p);
    if (local.x() < cam.near || local.x() > cam.far) continue;
    if (std::abs(std::atan2(local.y(), local.x())) > 0.5 * cam.hfov + 1e-12) continue;
    if (std::abs(std::atan2(local.z(), local.x())) > 0.5 * cam.vfov + 1e-12) continue;

    const Vec3 diff = p - camera.position;
    const double dist = diff.norm();
    if (dist < 1e-12) {
      ++seen;
      continue;
    }
    const Ray ray(camera.position, diff);
    double first = std::numeric_limits<double>::infinity();
    NodeId blocker = -1;
    for (const auto& s : shapes) {
      auto t = ray_cast_shape(ray, *s.shape, s.pose);
      if (t && *t < dist - 1e-6 && *t < first) {
        first = *t;
        blocker = s.model;
      }
    }
    if (blocker < 0) {
      ++seen;
    } else if (std::find(report.blocked_by.begin(), report.blocked_by.end(), blocker) ==
               report.blocked_by.end()) {
      report.blocked_by.push_back(blocker);
    }
  }
  report.fraction = static_cast<double>(seen) / static_cast<double>(samples.size());
  report.visible = report.fraction >= threshold;
  return report;
}

VisibilityReport visibility(const SceneSnapshot& snap, const CameraConfig& cam, NodeId target,
                            double threshold) {
  return visibility_from(snap, snap.world_pose(cam.frame), cam, target, snap.top_model_of(cam.frame),
                         threshold);
}

Pose camera_pose_at(const SceneSnapshot& snap, const ViewRig& rig, const CameraConfig& cam,
                    const Pose2d& base, const Vec3& target) {
  const Pose base_now = snap.world_pose(rig.base);
  const Vec3 mount = transform_point(inverse(base_now), snap.world_pose(cam.frame).position);
  const Pose base_then = base.to_pose(base_now.position.z());
  const Pose head_base(transform_point(base_then, mount), base_then.orientation);
  PanTilt pt;
  if ((target - head_base.position).norm() >= 1e-6) pt = rig.head.clamp(point_head(head_base, target));
  const Quat q = base_then.orientation * Quat(Eigen::AngleAxisd(pt.pan, Vec3::UnitZ())) *
                 Quat(Eigen::AngleAxisd(pt.tilt, Vec3::UnitY()));
  return {head_base.position, q};
}

bool footprint_collides(const SceneSnapshot& snap, const Aabb& footprint, const Pose2d& base,
                        NodeId robot_model) {
  const Vec3 e = footprint.extents();
  const Pose placed = compose(base.to_pose(), Pose(footprint.center(), Quat::Identity()));
  return !shapes_overlapping(snap, world_aabb(Shape::box(e.x(), e.y(), e.z()), placed), robot_model).empty();
}

std::vector<Pose2d> view_pose_candidates(const Vec3& target) {
  std::vector<Pose2d> out;
  for (double r : {0.6, 0.9, 1.2}) {
    for (int k = 0; k < 16; ++k) {
      const double a = 2.0 * kPi * k / 16.0;
      out.push_back({target.x() + r * std::cos(a), target.y() + r * std::sin(a), wrap_angle(a + kPi)});
    }
  }
  return out;
}

std::optional<Pose2d> find_view_pose(const SceneSnapshot& snap, NodeId target, const CameraConfig& cam,
                                     const Aabb& footprint, const ViewRig& rig, double threshold) {
  const Aabb box = snap.subtree_aabb(target);
  if (!box.valid()) return std::nullopt;
  const NodeId robot = snap.top_model_of(rig.base);
  for (const Pose2d& candidate : view_pose_candidates(box.center())) {
    if (footprint_collides(snap, footprint, candidate, robot)) continue;
    const Pose camera = camera_pose_at(snap, rig, cam, candidate, box.center());
    if (visibility_from(snap, camera, cam, target, robot, threshold).visible) return candidate;
  }
  return std::nullopt;
}

std::vector<PerceivedObject> trigger_camera(const SceneSnapshot& snap, const CameraConfig& cam,
                                            double threshold) {
  const Pose camera = snap.world_pose(cam.frame);
  const NodeId self = snap.top_model_of(cam.frame);
  std::vector<PerceivedObject> out;
  for (const auto& n : snap.topology().nodes) {
    if (n.role != NodeRole::model || n.id == self || (self >= 0 && snap.is_ancestor(self, n.id))) continue;
    const auto report = visibility_from(snap, camera, cam, n.id, self, threshold);
    if (report.visible) out.push_back({n.id, n.name, snap.world_pose(n.id), report.fraction});
  }
  return out;
}

}  // namespace mentalsim
