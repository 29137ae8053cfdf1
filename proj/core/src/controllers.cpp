#include "mentalsim/controllers.hpp"

#include "mentalsim/error.hpp"

#include <algorithm>
#include <cmath>

namespace mentalsim {

Pose2d step_base(const Pose2d& pose, const BaseCommand& cmd, double dt) {
  const double c = std::cos(pose.theta);
  const double s = std::sin(pose.theta);
  Pose2d out;
  out.x = pose.x + dt * (cmd.vx * c - cmd.vy * s);
  out.y = pose.y + dt * (cmd.vx * s + cmd.vy * c);
  out.theta = wrap_angle(pose.theta + dt * cmd.wz);
  return out;
}

double step_joint_toward(const JointSpec& joint, double current, double target, JointDriveMode mode,
                         double dt) {
  const double goal = limit_position(joint, target);
  if (mode == JointDriveMode::kinematic) return goal;
  double delta = goal - current;
  if (joint.kind == JointKind::continuous) delta = wrap_angle(delta);
  const double max_step = joint.limits.max_velocity * dt;
  // snap when within rounding of one step so n*step lands exactly on the goal
  if (std::abs(delta) <= max_step + 1e-12) return goal;
  return limit_position(joint, current + std::copysign(max_step, delta));
}

void JointTrajectory::validate() const {
  if (points.empty()) throw Error(Errc::EmptyTrajectory, "trajectory has no waypoints");
  for (std::size_t i = 0; i < points.size(); ++i) {
    if (points[i].positions.size() != joint_names.size())
      throw Error(Errc::InvalidArgument, "waypoint " + std::to_string(i) + " has wrong joint count");
    if (i > 0 && !(points[i].time_from_start > points[i - 1].time_from_start))
      throw Error(Errc::InvalidArgument, "waypoint times must strictly increase");
  }
}

TrajectorySample sample_trajectory(const JointTrajectory& traj, double t) {
  traj.validate();
  const auto& pts = traj.points;
  if (t <= pts.front().time_from_start) return {pts.front().positions, pts.size() == 1 && t >= pts.front().time_from_start};
  if (t >= pts.back().time_from_start) return {pts.back().positions, true};
  const auto hi = std::upper_bound(pts.begin(), pts.end(), t, [](double v, const TrajectoryPoint& p) {
    return v < p.time_from_start;
  });
  const auto lo = hi - 1;
  const double s = (t - lo->time_from_start) / (hi->time_from_start - lo->time_from_start);
  TrajectorySample out;
  out.positions.resize(lo->positions.size());
  for (std::size_t j = 0; j < out.positions.size(); ++j)
    out.positions[j] = lo->positions[j] + s * (hi->positions[j] - lo->positions[j]);
  return out;
}

PanTilt HeadLimits::clamp(const PanTilt& pt) const {
  return {std::clamp(pt.pan, pan_min, pan_max), std::clamp(pt.tilt, tilt_min, tilt_max)};
}

PanTilt point_head(const Pose& head_base, const Vec3& target) {
  const Vec3 d = transform_point(inverse(head_base), target);
  if (d.norm() < 1e-6) throw Error(Errc::DegenerateTarget, "target coincides with the head origin");
  return {std::atan2(d.y(), d.x()), std::atan2(-d.z(), std::hypot(d.x(), d.y()))};
}

GripperStep step_gripper(double width, double target, const GripperConfig& cfg, double dt,
                         std::optional<double> object_width) {
  target = std::clamp(target, 0.0, cfg.max_width);
  const double max_step = cfg.max_velocity * dt;
  double next = target;
  if (std::abs(target - width) > max_step + 1e-12) next = width + std::copysign(max_step, target - width);
  if (next < width && object_width && next <= *object_width) {
    return {std::min(width, *object_width), true};
  }
  return {next, false};
}

}  // namespace mentalsim
