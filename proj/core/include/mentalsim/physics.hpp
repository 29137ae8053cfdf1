#pragma once

#include "mentalsim/scene_graph.hpp"

#include <optional>
#include <string>
#include <vector>

namespace mentalsim {

/// Overlaps shallower than this count as touching, not colliding.
inline constexpr double kContactEpsilon = 1e-9;
inline constexpr double kGraspTolerance = 0.05;

struct CollisionPair {
  NodeId a = -1;  // a < b
  NodeId b = -1;
  double depth = 0.0;
  bool operator==(const CollisionPair&) const = default;
};

struct CollisionReport {
  std::vector<CollisionPair> pairs;
  double time = 0.0;
};

/// World-AABB overlaps between shapes of different top-level models where at
/// least one side can move. Shapes under one top-level model are joined by
/// joints or attachments and never reported against each other.
CollisionReport check_collisions(const SceneSnapshot& snap);

/// Shapes not under `exclude_model` that overlap `box` deeper than the
/// contact epsilon, ordered by id.
std::vector<NodeId> shapes_overlapping(const SceneSnapshot& snap, const Aabb& box, NodeId exclude_model);

struct SettleResult {
  NodeId node = -1;
  Pose final_pose;
  std::optional<NodeId> supporter;  // link node; empty = ground
};

/// Where `node` comes to rest when dropped straight down: the highest top
/// face under its footprint that is not above its bottom, or the ground.
SettleResult predict_settle(const SceneSnapshot& snap, NodeId node);

/// Applies predict_settle to the graph and records the support relation.
/// Throws InvalidArgument if the node is attached or articulated.
SettleResult settle(SceneGraph& g, NodeId node);

/// Nearest node tagged "graspable" whose AABB center is within `tolerance`
/// of the tool frame; ties go to the lower id.
std::optional<NodeId> grasp_check(const SceneSnapshot& snap, const Pose& tool_frame,
                                  double tolerance = kGraspTolerance);

/// Detaches a grasped node and settles it. Throws NotGrasped.
SettleResult release(SceneGraph& g, NodeId node);

/// Overlaps between shapes under `moving` and shapes of other top-level
/// models, ordered by (a, b).
std::vector<CollisionPair> subtree_contacts(const SceneSnapshot& snap, NodeId moving);

struct PushResult {
  double achieved = 0.0;
  bool blocked = false;
  std::vector<CollisionPair> contacts;  // the contact that stopped the motion
  int ticks = 0;
};

/// Drives an articulation toward `target` at its max velocity, one `dt` per
/// step, stopping before the moving subtree would hit another model.
PushResult push_articulation(SceneGraph& g, std::string_view joint, double target, double dt);

}  // namespace mentalsim
