#include "mentalsim/scene_graph.hpp"

#include "mentalsim/error.hpp"

#include <algorithm>
#include <deque>
#include <map>
#include <set>

namespace mentalsim {

const char* to_string(NodeKind k) {
  switch (k) {
    case NodeKind::group: return "group";
    case NodeKind::shape: return "shape";
    case NodeKind::joint_frame: return "joint_frame";
  }
  return "?";
}

const char* to_string(Relation r) {
  switch (r) {
    case Relation::rigid_child: return "rigid_child";
    case Relation::attachment: return "attachment";
    case Relation::support: return "support";
    case Relation::articulation: return "articulation";
  }
  return "?";
}

Pose joint_motion(const JointRuntime& joint, double q) {
  switch (joint.spec.kind) {
    case JointKind::revolute:
    case JointKind::continuous:
      return Pose::axis_angle(joint.axis, q);
    case JointKind::prismatic:
      return {joint.axis * q, Quat::Identity()};
    case JointKind::fixed:
      break;
  }
  return Pose::identity();
}

std::optional<JointValue> JointState::find(std::string_view joint) const {
  if (!topo_) return std::nullopt;
  for (std::size_t i = 0; i < values_.size(); ++i)
    if (topo_->joint_names[i] == joint) return values_[i];
  return std::nullopt;
}

// ---------------------------------------------------------------------------
// SceneSnapshot

SceneSnapshot::SceneSnapshot(double sim_time, std::shared_ptr<const SceneTopology> topo,
                             std::vector<Pose> world, JointState joints,
                             std::vector<std::pair<NodeId, NodeId>> supports)
    : sim_time_(sim_time),
      topo_(std::move(topo)),
      world_(std::move(world)),
      joints_(std::move(joints)),
      supports_(std::move(supports)) {}

const SceneNode& SceneSnapshot::node(NodeId id) const {
  if (id < 0 || static_cast<std::size_t>(id) >= world_.size())
    throw Error(Errc::UnknownNode, "node id " + std::to_string(id));
  return topo_->nodes[id];
}

const Pose& SceneSnapshot::world_pose(NodeId id) const {
  node(id);
  return world_[id];
}

std::optional<NodeId> SceneSnapshot::find(std::string_view name) const {
  for (const auto& n : topo_->nodes)
    if (n.name == name) return n.id;
  return std::nullopt;
}

std::vector<std::pair<NodeId, NodeId>> SceneSnapshot::attachments() const {
  std::vector<std::pair<NodeId, NodeId>> out;
  for (const auto& n : topo_->nodes)
    if (n.relation == Relation::attachment && n.parent) out.emplace_back(n.id, *n.parent);
  return out;
}

std::vector<NodeId> SceneSnapshot::shapes_under(NodeId id) const {
  std::vector<NodeId> out;
  std::vector<NodeId> stack{id};
  while (!stack.empty()) {
    const NodeId cur = stack.back();
    stack.pop_back();
    const SceneNode& n = node(cur);
    if (n.kind == NodeKind::shape) out.push_back(cur);
    for (auto it = n.children.rbegin(); it != n.children.rend(); ++it) stack.push_back(*it);
  }
  return out;
}

bool SceneSnapshot::is_ancestor(NodeId ancestor, NodeId id) const {
  std::optional<NodeId> cur = node(id).parent;
  while (cur) {
    if (*cur == ancestor) return true;
    cur = topo_->nodes[*cur].parent;
  }
  return false;
}

Aabb SceneSnapshot::shape_aabb(NodeId shape_node) const {
  const SceneNode& n = node(shape_node);
  if (!n.shape) return Aabb::empty();
  return world_aabb(*n.shape, world_[shape_node]);
}

Aabb SceneSnapshot::subtree_aabb(NodeId id) const {
  Aabb box = Aabb::empty();
  for (NodeId s : shapes_under(id)) box = box.merged(shape_aabb(s));
  return box;
}

NodeId SceneSnapshot::link_of(NodeId id) const {
  std::optional<NodeId> cur = id;
  while (cur) {
    const SceneNode& n = topo_->nodes[*cur];
    if (n.role == NodeRole::link) return n.id;
    cur = n.parent;
  }
  return -1;
}

NodeId SceneSnapshot::top_model_of(NodeId id) const {
  NodeId cur = id;
  while (true) {
    const SceneNode& n = node(cur);
    if (!n.parent) return -1;
    if (*n.parent == 0) return cur;
    cur = *n.parent;
  }
}

// ---------------------------------------------------------------------------
// SceneGraph

SceneGraph::SceneGraph() {
  SceneNode root;
  root.id = 0;
  root.name = "world";
  root.role = NodeRole::world;
  root.is_static = true;
  nodes_.push_back(std::move(root));
}

SceneGraph SceneGraph::build(const WorldSpec& world) {
  SceneGraph g;
  for (const auto& m : world.models) g.add_model(m);
  for (const auto& t : world.semantics) g.tag(g.require(t.name), t);
  return g;
}

const SceneNode& SceneGraph::node(NodeId id) const {
  if (id < 0 || static_cast<std::size_t>(id) >= nodes_.size())
    throw Error(Errc::UnknownNode, "node id " + std::to_string(id));
  return nodes_[id];
}

std::optional<NodeId> SceneGraph::find(std::string_view name) const {
  for (const auto& n : nodes_)
    if (n.name == name) return n.id;
  return std::nullopt;
}

NodeId SceneGraph::require(std::string_view name) const {
  if (auto id = find(name)) return *id;
  throw Error(Errc::UnknownNode, "no node named '" + std::string(name) + "'");
}

NodeId SceneGraph::add_node(SceneNode n, NodeId parent) {
  n.id = static_cast<NodeId>(nodes_.size());
  n.parent = parent;
  nodes_.push_back(std::move(n));
  nodes_[parent].children.push_back(nodes_.back().id);
  topo_cache_.reset();
  return nodes_.back().id;
}

NodeId SceneGraph::add_model(const ModelSpec& model) {
  if (find(model.name)) throw Error(Errc::InvalidArgument, "model '" + model.name + "' already exists");

  SceneNode mn;
  mn.name = model.name;
  mn.role = NodeRole::model;
  mn.local_pose = model.root_pose;
  mn.is_static = model.is_static;
  const NodeId model_id = add_node(std::move(mn), root());
  nodes_[model_id].model = model_id;

  std::map<std::string, NodeId> link_nodes;
  std::map<std::string, const JointSpec*> parent_joint;
  for (const auto& j : model.joints) parent_joint[j.child] = &j;

  auto add_link = [&](const LinkSpec& link, NodeId parent, const Pose& local, Relation rel, int joint) {
    SceneNode ln;
    ln.name = model.name + "::" + link.name;
    ln.role = NodeRole::link;
    ln.local_pose = local;
    ln.relation = rel;
    ln.joint = joint;
    ln.model = model_id;
    ln.is_static = model.is_static;
    const NodeId id = add_node(std::move(ln), parent);
    link_nodes[link.name] = id;
    for (std::size_t c = 0; c < link.collisions.size(); ++c) {
      const auto& col = link.collisions[c];
      SceneNode sn;
      sn.name = model.name + "::" + link.name + "::" +
                (col.name.empty() ? "collision" + std::to_string(c) : col.name);
      sn.kind = NodeKind::shape;
      sn.shape = col.shape;
      sn.local_pose = col.pose;
      sn.model = model_id;
      sn.is_static = model.is_static;
      add_node(std::move(sn), id);
    }
  };

  for (const auto& l : model.links)
    if (!parent_joint.count(l.name)) add_link(l, model_id, l.pose, Relation::rigid_child, -1);

  // Breadth-first over joints so parents exist before children.
  std::deque<std::string> frontier;
  for (const auto& l : model.links)
    if (link_nodes.count(l.name)) frontier.push_back(l.name);
  std::set<const JointSpec*> done;
  while (!frontier.empty()) {
    const std::string parent_name = frontier.front();
    frontier.pop_front();
    for (const auto& j : model.joints) {
      if (j.parent != parent_name || done.count(&j)) continue;
      done.insert(&j);
      const LinkSpec* parent = model.find_link(j.parent);
      const LinkSpec* child = model.find_link(j.child);
      if (!parent || !child)
        throw Error(Errc::DanglingLinkReference, model.name + "::" + j.name);

      JointRuntime rt;
      rt.spec = j;
      rt.model = model.name;
      rt.axis = j.origin.orientation.conjugate() * j.axis;
      rt.position = limit_position(j, 0.0);
      const int joint_index = static_cast<int>(joints_.size());

      SceneNode jf;
      jf.name = model.name + "::" + j.name;
      jf.kind = NodeKind::joint_frame;
      jf.joint = joint_index;
      jf.local_pose = compose(inverse(parent->pose), compose(child->pose, j.origin));
      jf.model = model_id;
      jf.is_static = model.is_static;
      rt.frame_node = add_node(std::move(jf), link_nodes.at(j.parent));
      joints_.push_back(rt);

      add_link(*child, joints_.back().frame_node, inverse(j.origin), Relation::articulation,
               joint_index);
      joints_.back().child_node = link_nodes.at(j.child);
      frontier.push_back(j.child);
    }
  }
  topo_cache_.reset();
  return model_id;
}

void SceneGraph::tag(NodeId id, const SemanticTag& tag) {
  SceneNode& n = nodes_.at(id);
  for (const auto& c : tag.classes)
    if (std::find(n.classes.begin(), n.classes.end(), c) == n.classes.end()) n.classes.push_back(c);
  for (const auto& s : tag.stores)
    if (std::find(n.stores.begin(), n.stores.end(), s) == n.stores.end()) n.stores.push_back(s);
  topo_cache_.reset();
}

Pose SceneGraph::parent_frame(NodeId id) const {
  const SceneNode& n = node(id);
  if (!n.parent) return Pose::identity();
  Pose frame = world_pose(*n.parent);
  if (n.relation == Relation::articulation && n.joint >= 0) {
    const JointRuntime& j = joints_[n.joint];
    frame = compose(frame, joint_motion(j, j.position));
  }
  return frame;
}

Pose SceneGraph::world_pose(NodeId id) const { return compose(parent_frame(id), node(id).local_pose); }

void SceneGraph::set_local_pose(NodeId id, const Pose& local) {
  node(id);
  nodes_[id].local_pose = local;
}

void SceneGraph::set_world_pose(NodeId id, const Pose& world) {
  set_local_pose(id, compose(inverse(parent_frame(id)), world));
}

bool SceneGraph::is_ancestor(NodeId ancestor, NodeId id) const {
  std::optional<NodeId> cur = node(id).parent;
  while (cur) {
    if (*cur == ancestor) return true;
    cur = nodes_[*cur].parent;
  }
  return false;
}

void SceneGraph::reparent(NodeId child, NodeId new_parent, Relation relation) {
  const Pose world = world_pose(child);
  SceneNode& c = nodes_[child];
  auto& siblings = nodes_[*c.parent].children;
  siblings.erase(std::remove(siblings.begin(), siblings.end(), child), siblings.end());
  c.parent = new_parent;
  c.relation = relation;
  nodes_[new_parent].children.push_back(child);
  c.local_pose = compose(inverse(world_pose(new_parent)), world);
  topo_cache_.reset();
}

void SceneGraph::attach(NodeId child, NodeId new_parent, Relation relation) {
  node(child);
  node(new_parent);
  if (relation != Relation::attachment && relation != Relation::support)
    throw Error(Errc::InvalidArgument, "attach expects attachment or support");
  if (child == root()) throw Error(Errc::WouldCreateCycle, "cannot attach the world root");
  if (child == new_parent || is_ancestor(child, new_parent))
    throw Error(Errc::WouldCreateCycle,
                nodes_[child].name + " is an ancestor of " + nodes_[new_parent].name);
  if (nodes_[child].relation == Relation::articulation)
    throw Error(Errc::InvalidArgument, nodes_[child].name + " is held by a joint");
  clear_support(child);
  reparent(child, new_parent, relation);
  if (relation == Relation::support) supports_.emplace_back(child, new_parent);
}

void SceneGraph::detach(NodeId child) {
  node(child);
  if (child == root()) throw Error(Errc::InvalidArgument, "cannot detach the world root");
  if (nodes_[child].relation == Relation::articulation)
    throw Error(Errc::InvalidArgument, nodes_[child].name + " is held by a joint");
  clear_support(child);
  reparent(child, root(), Relation::rigid_child);
}

void SceneGraph::record_support(NodeId supportee, NodeId supporter) {
  node(supportee);
  node(supporter);
  clear_support(supportee);
  supports_.emplace_back(supportee, supporter);
}

void SceneGraph::clear_support(NodeId supportee) {
  supports_.erase(std::remove_if(supports_.begin(), supports_.end(),
                                 [&](const auto& p) { return p.first == supportee; }),
                  supports_.end());
}

std::optional<std::size_t> SceneGraph::find_joint(std::string_view name) const {
  for (std::size_t i = 0; i < joints_.size(); ++i)
    if (joints_[i].spec.name == name) return i;
  // qualified "model::joint"
  for (std::size_t i = 0; i < joints_.size(); ++i)
    if (joints_[i].model.size() + 2 + joints_[i].spec.name.size() == name.size() &&
        name.substr(0, joints_[i].model.size()) == joints_[i].model &&
        name.substr(joints_[i].model.size(), 2) == "::" &&
        name.substr(joints_[i].model.size() + 2) == joints_[i].spec.name)
      return i;
  return std::nullopt;
}

std::size_t SceneGraph::require_joint(std::string_view name) const {
  if (auto i = find_joint(name)) return *i;
  throw Error(Errc::UnknownJoint, "no joint named '" + std::string(name) + "'");
}

double SceneGraph::set_joint_position(std::string_view name, double q) {
  return set_joint_position(require_joint(name), q);
}

double SceneGraph::set_joint_position(std::size_t index, double q, double velocity) {
  JointRuntime& j = joints_.at(index);
  j.position = limit_position(j.spec, q);
  j.velocity = velocity;
  return j.position;
}

std::vector<ContainerInfo> SceneGraph::query_containers() const {
  std::vector<ContainerInfo> out;
  for (const auto& n : nodes_) {
    if (std::find(n.classes.begin(), n.classes.end(), "container") == n.classes.end()) continue;
    ContainerInfo info;
    info.node = n.id;
    info.name = n.name;
    for (const auto& j : joints_) {
      if (j.spec.kind == JointKind::fixed) continue;
      const bool owns = n.role == NodeRole::model ? is_ancestor(n.id, j.child_node) : j.child_node == n.id;
      if (!owns) continue;
      info.joint = j.spec.name;
      info.kind = j.spec.kind;
      info.axis = j.spec.axis;
      info.limits = j.spec.limits;
      info.position = j.position;
      break;
    }
    out.push_back(std::move(info));
  }
  return out;
}

std::vector<NodeId> SceneGraph::query_storage_location(std::string_view cls) const {
  std::vector<NodeId> out;
  for (const auto& n : nodes_)
    if (std::find(n.stores.begin(), n.stores.end(), cls) != n.stores.end()) out.push_back(n.id);
  return out;
}

std::vector<NodeId> SceneGraph::nodes_with_class(std::string_view cls) const {
  std::vector<NodeId> out;
  for (const auto& n : nodes_)
    if (std::find(n.classes.begin(), n.classes.end(), cls) != n.classes.end()) out.push_back(n.id);
  return out;
}

bool SceneGraph::check_invariants(std::string* why) const {
  auto fail = [&](const std::string& msg) {
    if (why) *why = msg;
    return false;
  };
  if (nodes_.empty() || nodes_[0].parent) return fail("root missing or has a parent");
  for (const auto& n : nodes_) {
    if (n.id == 0) continue;
    if (!n.parent) return fail(n.name + " has no parent");
    const auto& sib = nodes_[*n.parent].children;
    if (std::count(sib.begin(), sib.end(), n.id) != 1) return fail(n.name + " not listed once by parent");
    if (n.kind == NodeKind::shape && !n.children.empty()) return fail(n.name + " is a shape with children");
    std::size_t steps = 0;
    for (auto cur = n.parent; cur; cur = nodes_[*cur].parent)
      if (++steps > nodes_.size()) return fail(n.name + " is on a cycle");
    for (NodeId c : n.children)
      if (nodes_[c].parent != n.id) return fail(n.name + " lists a child it does not own");
    if (n.relation == Relation::articulation) {
      const JointRuntime& j = joints_.at(n.joint);
      if (limit_position(j.spec, j.position) != j.position) return fail(j.spec.name + " outside limits");
    }
  }
  return true;
}

std::shared_ptr<const SceneTopology> SceneGraph::topology() const {
  if (!topo_cache_) {
    auto t = std::make_shared<SceneTopology>();
    t->nodes = nodes_;
    for (const auto& j : joints_) {
      t->joint_names.push_back(j.spec.name);
      t->joint_specs.push_back(j.spec);
    }
    topo_cache_ = std::move(t);
  }
  return topo_cache_;
}

SceneSnapshot SceneGraph::snapshot(double sim_time) const {
  std::vector<Pose> world(nodes_.size());
  std::vector<NodeId> stack{root()};
  while (!stack.empty()) {
    const NodeId id = stack.back();
    stack.pop_back();
    const SceneNode& n = nodes_[id];
    if (!n.parent) {
      world[id] = n.local_pose;
    } else {
      Pose frame = world[*n.parent];
      if (n.relation == Relation::articulation && n.joint >= 0) {
        const JointRuntime& j = joints_[n.joint];
        frame = compose(frame, joint_motion(j, j.position));
      }
      world[id] = compose(frame, n.local_pose);
    }
    for (NodeId c : n.children) stack.push_back(c);
  }
  std::vector<JointValue> values;
  values.reserve(joints_.size());
  for (const auto& j : joints_) values.push_back({j.position, j.velocity});
  auto topo = topology();
  return SceneSnapshot(sim_time, topo, std::move(world), JointState(topo, std::move(values)), supports_);
}

}  // namespace mentalsim
