#pragma once

#include "mentalsim/geometry.hpp"
#include "mentalsim/sdf.hpp"

#include <optional>
#include <string>
#include <vector>

namespace mentalsim {

/// Holonomic base twist in the base frame. Zeroed once sim time passes
/// `expiry`.
struct BaseCommand {
  double vx = 0.0;
  double vy = 0.0;
  double wz = 0.0;
  double expiry = 0.0;
};

inline constexpr double kBaseCommandTimeout = 0.5;

/// One explicit step: translation uses the heading at the start of the step,
/// heading advances by wz*dt and is wrapped.
Pose2d step_base(const Pose2d& pose, const BaseCommand& cmd, double dt);

enum class JointDriveMode { kinematic, dynamic };

/// kinematic: jump to the (limited) target. dynamic: move toward it by at
/// most max_velocity*dt.
double step_joint_toward(const JointSpec& joint, double current, double target, JointDriveMode mode,
                         double dt);

struct TrajectoryPoint {
  double time_from_start = 0.0;
  std::vector<double> positions;
};

struct JointTrajectory {
  std::vector<std::string> joint_names;
  std::vector<TrajectoryPoint> points;

  /// Throws EmptyTrajectory / InvalidArgument.
  void validate() const;
};

struct TrajectorySample {
  std::vector<double> positions;
  bool done = false;
};

/// Piecewise-linear setpoints at `t` seconds since the trajectory started.
TrajectorySample sample_trajectory(const JointTrajectory& traj, double t);

struct PanTilt {
  double pan = 0.0;
  double tilt = 0.0;  // positive looks down
};

struct HeadLimits {
  double pan_min = -kPi;
  double pan_max = kPi;
  double tilt_min = -0.5;
  double tilt_max = 1.4;

  PanTilt clamp(const PanTilt& pt) const;
};

/// Pan/tilt that aims the head's x axis at `target` (world), with the pan
/// axis at `head_base`. Throws DegenerateTarget if target is at the origin.
PanTilt point_head(const Pose& head_base, const Vec3& target);

struct GripperConfig {
  double max_width = 0.08;
  double max_velocity = 0.08;  // width change per second
};

struct GripperStep {
  double width = 0.0;
  bool contact = false;  // stopped on an object
};

/// Moves the finger separation toward `target`. While closing, an object of
/// width `object_width` between the fingers stops the motion at that width.
GripperStep step_gripper(double width, double target, const GripperConfig& cfg, double dt,
                         std::optional<double> object_width);

struct TickConfig {
  double dt = 0.01;
  double realtime_factor = 0.0;  // 0 = as fast as possible
};

}  // namespace mentalsim
