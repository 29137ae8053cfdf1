#pragma once

#include "mentalsim/geometry.hpp"
#include "mentalsim/sdf.hpp"

#include <cstdint>
#include <memory>
#include <optional>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

namespace mentalsim {

using NodeId = std::int32_t;

enum class NodeKind { group, shape, joint_frame };
enum class Relation { rigid_child, attachment, support, articulation };
/// What a group node stands for. Shapes and joint frames are `part`.
enum class NodeRole { world, model, link, part };

const char* to_string(NodeKind k);
const char* to_string(Relation r);

struct SceneNode {
  NodeId id = 0;
  std::string name;
  Pose local_pose;
  NodeKind kind = NodeKind::group;
  NodeRole role = NodeRole::part;
  std::optional<Shape> shape;   // kind == shape
  int joint = -1;               // joint_frame nodes and articulated children
  std::optional<NodeId> parent;
  std::vector<NodeId> children;
  Relation relation = Relation::rigid_child;
  NodeId model = -1;            // owning model node, -1 for the world root
  bool is_static = false;
  std::vector<std::string> classes;
  std::vector<std::string> stores;
};

struct JointRuntime {
  JointSpec spec;
  std::string model;
  NodeId frame_node = -1;
  NodeId child_node = -1;
  Vec3 axis = Vec3::UnitZ();  // joint-frame coordinates
  double position = 0.0;
  double velocity = 0.0;
};

/// Motion contributed by a joint at position q (rotation about or
/// translation along the axis).
Pose joint_motion(const JointRuntime& joint, double q);

/// Node structure shared between snapshots until the tree changes.
struct SceneTopology {
  std::vector<SceneNode> nodes;
  std::vector<std::string> joint_names;
  std::vector<JointSpec> joint_specs;
};

struct JointValue {
  double position = 0.0;
  double velocity = 0.0;
};

class JointState {
 public:
  JointState() = default;
  JointState(std::shared_ptr<const SceneTopology> topo, std::vector<JointValue> values)
      : topo_(std::move(topo)), values_(std::move(values)) {}

  std::size_t size() const { return values_.size(); }
  const std::string& name(std::size_t i) const { return topo_->joint_names[i]; }
  const JointValue& value(std::size_t i) const { return values_[i]; }
  std::optional<JointValue> find(std::string_view joint) const;

 private:
  std::shared_ptr<const SceneTopology> topo_;
  std::vector<JointValue> values_;
};

/// Immutable read-side view of the graph at one instant.
class SceneSnapshot {
 public:
  SceneSnapshot() = default;
  SceneSnapshot(double sim_time, std::shared_ptr<const SceneTopology> topo, std::vector<Pose> world,
                JointState joints, std::vector<std::pair<NodeId, NodeId>> supports);

  double sim_time() const { return sim_time_; }
  std::size_t size() const { return world_.size(); }
  const SceneNode& node(NodeId id) const;
  const Pose& world_pose(NodeId id) const;
  const JointState& joints() const { return joints_; }
  const SceneTopology& topology() const { return *topo_; }

  std::optional<NodeId> find(std::string_view name) const;
  /// (child, parent) for every node currently held by an attachment relation.
  std::vector<std::pair<NodeId, NodeId>> attachments() const;
  /// (supportee, supporter) pairs.
  const std::vector<std::pair<NodeId, NodeId>>& supports() const { return supports_; }

  /// Shape nodes in the subtree rooted at `id` (including `id`).
  std::vector<NodeId> shapes_under(NodeId id) const;
  bool is_ancestor(NodeId ancestor, NodeId node) const;
  Aabb shape_aabb(NodeId shape_node) const;
  /// Union of shape AABBs under `id`; empty() if there are none.
  Aabb subtree_aabb(NodeId id) const;
  /// Nearest ancestor-or-self with the `link` role, or -1.
  NodeId link_of(NodeId id) const;
  /// Top-level model node (direct child of the world root) containing `id`.
  NodeId top_model_of(NodeId id) const;

 private:
  double sim_time_ = 0.0;
  std::shared_ptr<const SceneTopology> topo_;
  std::vector<Pose> world_;
  JointState joints_;
  std::vector<std::pair<NodeId, NodeId>> supports_;
};

struct ContainerInfo {
  NodeId node = -1;
  std::string name;
  std::string joint;
  JointKind kind = JointKind::fixed;
  Vec3 axis = Vec3::UnitZ();
  JointLimits limits;
  double position = 0.0;
};

/// Tree of subscenes: world root -> model -> link -> {shapes, joint frames}
/// with articulated child links hanging below their joint frame.
class SceneGraph {
 public:
  SceneGraph();

  /// One subtree per model; every joint becomes an articulation at q = 0
  /// (clamped into limits). Semantic tags are attached to the named nodes.
  static SceneGraph build(const WorldSpec& world);

  NodeId root() const { return 0; }
  std::size_t size() const { return nodes_.size(); }
  const SceneNode& node(NodeId id) const;
  std::optional<NodeId> find(std::string_view name) const;
  NodeId require(std::string_view name) const;

  /// Adds a model under the root (or replaces nothing: names must be new).
  NodeId add_model(const ModelSpec& model);
  void tag(NodeId id, const SemanticTag& tag);

  Pose world_pose(NodeId id) const;
  void set_local_pose(NodeId id, const Pose& local);
  /// Sets the local pose so that the world pose becomes `world`.
  void set_world_pose(NodeId id, const Pose& world);

  /// Re-parents `child` under `new_parent` keeping its world pose.
  void attach(NodeId child, NodeId new_parent, Relation relation);
  /// Moves `child` back under the root keeping its world pose.
  void detach(NodeId child);
  bool is_ancestor(NodeId ancestor, NodeId node) const;

  void record_support(NodeId supportee, NodeId supporter);
  void clear_support(NodeId supportee);
  const std::vector<std::pair<NodeId, NodeId>>& supports() const { return supports_; }

  std::size_t joint_count() const { return joints_.size(); }
  const JointRuntime& joint(std::size_t index) const { return joints_.at(index); }
  std::optional<std::size_t> find_joint(std::string_view name) const;
  std::size_t require_joint(std::string_view name) const;
  /// Clamped/wrapped into limits. Returns the stored value.
  double set_joint_position(std::string_view name, double q);
  double set_joint_position(std::size_t index, double q, double velocity = 0.0);

  std::vector<ContainerInfo> query_containers() const;
  std::vector<NodeId> query_storage_location(std::string_view cls) const;
  std::vector<NodeId> nodes_with_class(std::string_view cls) const;

  /// Tree property: one root, parent/child links consistent, no cycles,
  /// shapes are leaves, articulated joints within limits.
  bool check_invariants(std::string* why = nullptr) const;

  SceneSnapshot snapshot(double sim_time) const;

 private:
  NodeId add_node(SceneNode n, NodeId parent);
  void reparent(NodeId child, NodeId new_parent, Relation relation);
  Pose parent_frame(NodeId id) const;
  std::shared_ptr<const SceneTopology> topology() const;

  std::vector<SceneNode> nodes_;
  std::vector<JointRuntime> joints_;
  std::vector<std::pair<NodeId, NodeId>> supports_;
  mutable std::shared_ptr<const SceneTopology> topo_cache_;
};

}  // namespace mentalsim
