#include "mentalsim/physics.hpp"

#include "mentalsim/controllers.hpp"
#include "mentalsim/error.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace mentalsim {

namespace {

struct PlacedShape {
  NodeId id;
  NodeId model;
  bool is_static;
  Aabb box;
};

std::vector<PlacedShape> placed_shapes(const SceneSnapshot& snap) {
  std::vector<PlacedShape> out;
  for (const auto& n : snap.topology().nodes) {
    if (n.kind != NodeKind::shape) continue;
    out.push_back({n.id, snap.top_model_of(n.id), n.is_static, snap.shape_aabb(n.id)});
  }
  return out;
}

bool footprints_overlap(const Aabb& a, const Aabb& b) {
  for (int i = 0; i < 2; ++i)
    if (std::min(a.max[i], b.max[i]) - std::max(a.min[i], b.min[i]) <= kContactEpsilon) return false;
  return true;
}

}  // namespace

CollisionReport check_collisions(const SceneSnapshot& snap) {
  CollisionReport report;
  report.time = snap.sim_time();
  const auto shapes = placed_shapes(snap);
  for (std::size_t i = 0; i < shapes.size(); ++i) {
    for (std::size_t k = i + 1; k < shapes.size(); ++k) {
      const auto& a = shapes[i];
      const auto& b = shapes[k];
      if (a.model == b.model || (a.is_static && b.is_static)) continue;
      const double depth = overlap_depth(a.box, b.box);
      if (depth > kContactEpsilon) report.pairs.push_back({a.id, b.id, depth});
    }
  }
  std::sort(report.pairs.begin(), report.pairs.end(),
            [](const auto& x, const auto& y) { return std::tie(x.a, x.b) < std::tie(y.a, y.b); });
  return report;
}

std::vector<NodeId> shapes_overlapping(const SceneSnapshot& snap, const Aabb& box, NodeId exclude_model) {
  std::vector<NodeId> out;
  for (const auto& s : placed_shapes(snap)) {
    if (s.model == exclude_model) continue;
    if (overlap_depth(s.box, box) > kContactEpsilon) out.push_back(s.id);
  }
  return out;
}

SettleResult predict_settle(const SceneSnapshot& snap, NodeId node) {
  const Aabb body = snap.subtree_aabb(node);
  SettleResult result;
  result.node = node;
  result.final_pose = snap.world_pose(node);
  if (!body.valid()) return result;

  const double bottom = body.min.z();
  double best_top = bottom >= 0.0 ? 0.0 : -std::numeric_limits<double>::infinity();
  std::optional<NodeId> best;
  for (const auto& s : placed_shapes(snap)) {
    if (s.id == node || snap.is_ancestor(node, s.id)) continue;
    if (!footprints_overlap(s.box, body)) continue;
    const double top = s.box.max.z();
    if (top > bottom + kContactEpsilon) continue;
    if (top > best_top) {
      best_top = top;
      best = s.id;
    }
  }
  const double drop = std::min(0.0, best_top - bottom);
  if (std::isfinite(drop)) result.final_pose.position.z() += drop;
  if (best) result.supporter = snap.link_of(*best) >= 0 ? snap.link_of(*best) : *best;
  return result;
}

SettleResult settle(SceneGraph& g, NodeId node) {
  const SceneNode& n = g.node(node);
  if (n.relation == Relation::attachment || n.relation == Relation::articulation)
    throw Error(Errc::InvalidArgument, n.name + " is grasped or articulated");
  const SettleResult r = predict_settle(g.snapshot(0.0), node);
  g.set_world_pose(node, r.final_pose);
  g.record_support(node, r.supporter.value_or(g.root()));
  return r;
}

std::optional<NodeId> grasp_check(const SceneSnapshot& snap, const Pose& tool_frame, double tolerance) {
  std::optional<NodeId> best;
  double best_d = std::numeric_limits<double>::infinity();
  for (const auto& n : snap.topology().nodes) {
    if (std::find(n.classes.begin(), n.classes.end(), "graspable") == n.classes.end()) continue;
    const Aabb box = snap.subtree_aabb(n.id);
    if (!box.valid()) continue;
    const double d = (box.center() - tool_frame.position).norm();
    if (d <= tolerance && d < best_d) {  // ids ascend, so ties keep the lower id
      best_d = d;
      best = n.id;
    }
  }
  return best;
}

SettleResult release(SceneGraph& g, NodeId node) {
  if (g.node(node).relation != Relation::attachment)
    throw Error(Errc::NotGrasped, g.node(node).name + " is not held");
  g.detach(node);
  return settle(g, node);
}

std::vector<CollisionPair> subtree_contacts(const SceneSnapshot& snap, NodeId moving) {
  const NodeId model = snap.top_model_of(moving);
  std::vector<CollisionPair> contacts;
  for (NodeId s : snap.shapes_under(moving)) {
    const Aabb box = snap.shape_aabb(s);
    for (NodeId other : shapes_overlapping(snap, box, model))
      contacts.push_back({std::min(s, other), std::max(s, other), overlap_depth(box, snap.shape_aabb(other))});
  }
  std::sort(contacts.begin(), contacts.end(),
            [](const auto& x, const auto& y) { return std::tie(x.a, x.b) < std::tie(y.a, y.b); });
  return contacts;
}

PushResult push_articulation(SceneGraph& g, std::string_view joint, double target, double dt) {
  const std::size_t index = g.require_joint(joint);
  const JointRuntime& j = g.joint(index);
  const double goal = limit_position(j.spec, target);
  const NodeId moving = j.child_node;

  PushResult result;
  result.achieved = j.position;
  const double span = std::abs(goal - j.position);
  const int max_steps = static_cast<int>(std::ceil(span / (j.spec.limits.max_velocity * dt))) + 2;
  for (int step = 0; step < max_steps && g.joint(index).position != goal; ++step) {
    const double prev = g.joint(index).position;
    const double next = step_joint_toward(j.spec, prev, goal, JointDriveMode::dynamic, dt);
    g.set_joint_position(index, next, (next - prev) / dt);
    ++result.ticks;

    auto contacts = subtree_contacts(g.snapshot(0.0), moving);
    if (!contacts.empty()) {
      g.set_joint_position(index, prev, 0.0);
      result.blocked = true;
      result.contacts = std::move(contacts);
      break;
    }
  }
  g.set_joint_position(index, g.joint(index).position, 0.0);
  result.achieved = g.joint(index).position;
  return result;
}

}  // namespace mentalsim
