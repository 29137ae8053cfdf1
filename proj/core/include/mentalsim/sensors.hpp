#pragma once

#include "mentalsim/controllers.hpp"
#include "mentalsim/scene_graph.hpp"

#include <optional>
#include <string>
#include <vector>

namespace mentalsim {

struct LaserConfig {
  NodeId frame = -1;
  double angle_min = -kPi / 2;
  double angle_max = kPi / 2;
  double angle_increment = kPi / 180.0;
  double range_min = 0.05;
  double range_max = 10.0;
  double rate = 10.0;

  std::size_t beam_count() const;
  bool valid() const;
};

/// Planar scan in the sensor's x-y plane against every shape outside the
/// sensor's own model. Misses read range_max + 1.
std::vector<double> scan(const SceneSnapshot& snap, const LaserConfig& cfg);

struct CameraConfig {
  NodeId frame = -1;
  double hfov = 1.0;
  double vfov = 0.8;
  double near = 0.05;
  double far = 8.0;

  bool valid() const;
};

inline constexpr double kVisibilityThreshold = 0.5;

struct VisibilityReport {
  NodeId target = -1;
  double fraction = 0.0;
  bool visible = false;
  std::vector<NodeId> blocked_by;  // top-level models, first-occluder per sample
};

/// Samples the 8 corners and the center of the target's AABB from the camera
/// node's current pose.
VisibilityReport visibility(const SceneSnapshot& snap, const CameraConfig& cam, NodeId target,
                            double threshold = kVisibilityThreshold);

/// Same as visibility() from an explicit camera pose. Shapes of
/// `ignore_model` (the observer's own body) never occlude.
VisibilityReport visibility_from(const SceneSnapshot& snap, const Pose& camera, const CameraConfig& cam,
                                 NodeId target, NodeId ignore_model,
                                 double threshold = kVisibilityThreshold);

/// How a camera rides on a holonomic base: the base node, and pan/tilt
/// limits of the head that carries the camera.
struct ViewRig {
  NodeId base = -1;
  HeadLimits head;
};

/// Camera pose for the robot standing at `base` with the head aimed at
/// `target`, keeping the camera's current offset from the base.
Pose camera_pose_at(const SceneSnapshot& snap, const ViewRig& rig, const CameraConfig& cam,
                    const Pose2d& base, const Vec3& target);

/// True when the footprint (base frame) placed at `base` overlaps any shape
/// outside the robot's own model.
bool footprint_collides(const SceneSnapshot& snap, const Aabb& footprint, const Pose2d& base,
                        NodeId robot_model);

/// Candidate base poses around the target: radii {0.6, 0.9, 1.2}, 16
/// headings each, facing the target, radius-major ascending order.
std::vector<Pose2d> view_pose_candidates(const Vec3& target);

/// First candidate that is collision-free and sees the target.
std::optional<Pose2d> find_view_pose(const SceneSnapshot& snap, NodeId target, const CameraConfig& cam,
                                     const Aabb& footprint, const ViewRig& rig,
                                     double threshold = kVisibilityThreshold);

struct PerceivedObject {
  NodeId node = -1;
  std::string name;
  Pose pose;
  double fraction = 0.0;
};

/// Geometric stand-in for a segmented image: every top-level model (other
/// than the observer) that passes the visibility threshold.
std::vector<PerceivedObject> trigger_camera(const SceneSnapshot& snap, const CameraConfig& cam,
                                            double threshold = kVisibilityThreshold);

}  // namespace mentalsim
