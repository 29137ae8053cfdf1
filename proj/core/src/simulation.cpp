#include "mentalsim/simulation.hpp"

#include "mentalsim/error.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <ctime>

namespace mentalsim {

using nlohmann::json;

namespace {

std::string wall_clock_now() {
  const std::time_t now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&now, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

Relation relation_from_string(const std::string& s) {
  if (s == "support") return Relation::support;
  if (s == "attachment") return Relation::attachment;
  throw Error(Errc::InvalidArgument, "placement relation must be support or attachment, got '" + s + "'");
}

}  // namespace

RobotBinding RobotBinding::from_json(const json& j) {
  RobotBinding b;
  auto str = [&](const char* key, std::string& field) {
    if (j.contains(key)) field = j.at(key).get<std::string>();
  };
  str("model", b.model);
  str("base_link", b.base_link);
  str("camera_link", b.camera_link);
  str("laser_link", b.laser_link);
  str("tool_link", b.tool_link);
  str("head_pan_joint", b.head_pan_joint);
  str("head_tilt_joint", b.head_tilt_joint);
  str("torso_joint", b.torso_joint);
  str("shoulder_joint", b.shoulder_joint);
  str("extend_joint", b.extend_joint);
  if (j.contains("finger_joints")) b.finger_joints = j.at("finger_joints").get<std::vector<std::string>>();
  if (j.contains("footprint")) {
    const auto f = j.at("footprint").get<std::vector<double>>();
    if (f.size() != 6) throw Error(Errc::InvalidArgument, "footprint needs [cx, cy, cz, sx, sy, sz]");
    b.footprint = Aabb::from_center(Vec3(f[0], f[1], f[2]), 0.5 * Vec3(f[3], f[4], f[5]));
  }
  return b;
}

Scenario Scenario::from_json(const json& j) {
  Scenario s;
  try {
    if (j.contains("robot")) s.robot = RobotBinding::from_json(j.at("robot"));
    if (j.contains("joints"))
      for (const auto& [name, q] : j.at("joints").items()) s.joints.emplace_back(name, q.get<double>());
    if (j.contains("placements"))
      for (const auto& p : j.at("placements"))
        s.placements.push_back({p.at("object").get<std::string>(), p.at("parent").get<std::string>(),
                                relation_from_string(p.value("relation", "support"))});
  } catch (const json::exception& e) {
    throw Error(Errc::InvalidArgument, std::string("scenario: ") + e.what());
  }
  for (const auto& [key, value] : j.items())
    if (key != "robot" && key != "joints" && key != "placements") s.extra[key] = value;
  return s;
}

Simulation::Simulation(const WorldSpec& world, SimulationOptions opts)
    : world_(world), opts_(std::move(opts)), graph_(SceneGraph::build(world)), rng_(opts_.seed) {
  if (!(opts_.tick.dt > 0.0)) throw Error(Errc::InvalidArgument, "dt must be positive");
  bind_robot();
  last_ = snapshot();
}

void Simulation::bind_robot() {
  const RobotBinding& r = opts_.robot;
  targets_.assign(graph_.joint_count(), std::nullopt);
  finger_joints_.clear();
  pan_joint_.reset();
  tilt_joint_.reset();
  robot_model_ = base_node_ = tool_node_ = opts_.laser.frame = opts_.camera.frame = -1;

  const auto model = graph_.find(r.model);
  if (!model) return;
  robot_model_ = *model;
  auto link = [&](const std::string& name) { return graph_.find(r.model + "::" + name).value_or(-1); };
  base_node_ = link(r.base_link);
  tool_node_ = link(r.tool_link);
  opts_.laser.frame = link(r.laser_link);
  opts_.camera.frame = link(r.camera_link);
  if (base_node_ < 0) base_node_ = robot_model_;
  pan_joint_ = graph_.find_joint(robot_joint_name(r.head_pan_joint));
  tilt_joint_ = graph_.find_joint(robot_joint_name(r.head_tilt_joint));
  for (const auto& f : r.finger_joints)
    if (auto i = graph_.find_joint(robot_joint_name(f))) finger_joints_.push_back(*i);
}

void Simulation::apply(const Scenario& scenario) {
  opts_.robot = scenario.robot;
  bind_robot();
  for (const auto& [name, q] : scenario.joints) graph_.set_joint_position(name, q);
  for (const auto& p : scenario.placements) {
    const NodeId object = graph_.require(p.object);
    const NodeId parent = graph_.require(p.parent);
    graph_.attach(object, parent, p.relation);
    if (p.relation == Relation::attachment && parent == tool_node_) {
      held_ = object;
      held_width_ = gripper_width();
    }
  }
  last_ = snapshot();
  contacts_.clear();
  for (const auto& c : check_collisions(last_).pairs) contacts_.insert({c.a, c.b});
}

void Simulation::enqueue(Command cmd) {
  std::lock_guard lock(queue_mutex_);
  queue_.push_back(std::move(cmd));
}

const SceneSnapshot& Simulation::tick() {
  std::deque<Command> pending;
  {
    std::lock_guard lock(queue_mutex_);
    pending.swap(queue_);
  }
  for (auto& cmd : pending) cmd(*this);

  step_controllers();
  ++ticks_;

  last_ = graph_.snapshot(sim_time());
  if (recorder_ || !event_listeners_.empty()) detect_collision_onsets(last_);
  for (const auto& l : tick_listeners_) l(*this, last_);
  if (recorder_) sample_transforms(last_);
  return last_;
}

void Simulation::run_for(double seconds) {
  const auto n = static_cast<std::uint64_t>(std::llround(seconds / dt()));
  for (std::uint64_t i = 0; i < n; ++i) tick();
}

bool Simulation::run_until(const std::function<bool(const Simulation&)>& done, double timeout) {
  const auto limit = static_cast<std::uint64_t>(std::llround(timeout / dt()));
  for (std::uint64_t i = 0; i < limit; ++i) {
    if (done(*this)) return true;
    tick();
  }
  return done(*this);
}

void Simulation::step_controllers() {
  const double now = sim_time();
  const double dt = opts_.tick.dt;

  if (base_cmd_ && now >= base_cmd_->expiry) base_cmd_.reset();
  if (base_cmd_ && robot_model_ >= 0) {
    const Pose current = graph_.world_pose(robot_model_);
    const Pose2d next = step_base(Pose2d::from_pose(current), *base_cmd_, dt);
    graph_.set_world_pose(robot_model_, next.to_pose(current.position.z()));
  }

  if (trajectory_) {
    const auto s = sample_trajectory(trajectory_->traj, now + dt - trajectory_->start);
    for (std::size_t k = 0; k < trajectory_->indices.size(); ++k)
      targets_[trajectory_->indices[k]] = JointTarget{s.positions[k], trajectory_->mode};
    if (s.done) trajectory_.reset();
  }

  aim_head();

  for (std::size_t i = 0; i < targets_.size(); ++i) {
    const JointRuntime& j = graph_.joint(i);
    if (!targets_[i]) {
      if (j.velocity != 0.0) graph_.set_joint_position(i, j.position, 0.0);
      continue;
    }
    const double prev = j.position;
    const double next = step_joint_toward(j.spec, prev, targets_[i]->target, targets_[i]->mode, dt);
    if (next == prev) {
      if (j.velocity != 0.0) graph_.set_joint_position(i, prev, 0.0);
      continue;
    }
    const bool world_joint = graph_.node(j.child_node).model != robot_model_ || robot_model_ < 0;
    std::vector<CollisionPair> before;
    if (world_joint) before = subtree_contacts(graph_.snapshot(now), j.child_node);
    graph_.set_joint_position(i, next, (next - prev) / dt);
    if (!world_joint) continue;

    const SceneSnapshot moved = graph_.snapshot(now);
    for (const auto& c : subtree_contacts(moved, j.child_node)) {
      const bool fresh = std::none_of(before.begin(), before.end(),
                                      [&](const CollisionPair& b) { return b.a == c.a && b.b == c.b; });
      if (!fresh) continue;
      graph_.set_joint_position(i, prev, 0.0);
      targets_[i].reset();
      contacts_.insert({c.a, c.b});
      emit(EventKind::Collision, moved.node(j.child_node).name,
           {moved.node(c.a).name, moved.node(c.b).name}, std::nullopt,
           {{"depth", c.depth}, {"blocked", true}, {"joint", j.model + "::" + j.spec.name}, {"position", prev}});
      break;
    }
  }

  step_gripper_controller();
}

void Simulation::aim_head() {
  if (!head_target_ || !pan_joint_ || !tilt_joint_) return;
  const Pose head_base = graph_.world_pose(graph_.joint(*pan_joint_).frame_node);
  if ((*head_target_ - head_base.position).norm() < 1e-6) return;
  const PanTilt pt = opts_.head.clamp(point_head(head_base, *head_target_));
  targets_[*pan_joint_] = JointTarget{pt.pan, JointDriveMode::dynamic};
  targets_[*tilt_joint_] = JointTarget{pt.tilt, JointDriveMode::dynamic};
}

void Simulation::step_gripper_controller() {
  if (!gripper_target_ || finger_joints_.empty()) return;
  const double width = gripper_width();
  std::optional<double> object_width;
  NodeId candidate = -1;
  if (held_) {
    object_width = held_width_;
  } else if (*gripper_target_ < width && tool_node_ >= 0) {
    const SceneSnapshot snap = graph_.snapshot(sim_time());
    const Pose tool = snap.world_pose(tool_node_);
    if (const auto near = grasp_check(snap, tool)) {
      const Vec3 across = rotate_vector(tool, Vec3::UnitY()).cwiseAbs();
      const double w = across.dot(snap.subtree_aabb(*near).extents());
      if (w < opts_.gripper.max_width) {
        candidate = *near;
        object_width = w;
      }
    }
  }

  const GripperStep st = step_gripper(width, *gripper_target_, opts_.gripper, opts_.tick.dt, object_width);
  const double half = 0.5 * st.width;
  for (std::size_t f : finger_joints_) {
    const double prev = graph_.joint(f).position;
    graph_.set_joint_position(f, half, (half - prev) / opts_.tick.dt);
  }

  if (!held_ && st.contact && candidate >= 0) {
    attach_held(candidate, *object_width);
  } else if (held_ && st.width > held_width_ + 1e-6) {
    release_held();
  }
  if (st.contact || st.width == *gripper_target_) gripper_target_.reset();
}

void Simulation::attach_held(NodeId object, double width) {
  if (tool_node_ < 0) throw Error(Errc::UnknownName, "robot has no tool frame");
  if (held_) throw Error(Errc::InvalidArgument, "already holding " + graph_.node(*held_).name);
  graph_.attach(object, tool_node_, Relation::attachment);
  held_ = object;
  held_width_ = width;
  emit(EventKind::Grasp, graph_.node(tool_node_).name, {graph_.node(object).name}, Outcome::ok(),
       {{"width", gripper_width()}});
}

SettleResult Simulation::release_held() {
  if (!held_) throw Error(Errc::NotGrasped, "nothing is held");
  const NodeId object = *held_;
  held_.reset();
  const std::string name = graph_.node(object).name;
  emit(EventKind::Release, graph_.node(tool_node_).name, {name}, Outcome::ok(), {{"width", gripper_width()}});
  const SettleResult r = release(graph_, object);
  const Vec3& p = r.final_pose.position;
  json payload = {{"position", {p.x(), p.y(), p.z()}}};
  std::vector<std::string> participants{name};
  if (r.supporter) {
    payload["supporter"] = graph_.node(*r.supporter).name;
    participants.push_back(graph_.node(*r.supporter).name);
  }
  emit(EventKind::Settle, name, std::move(participants), Outcome::ok(), std::move(payload));
  return r;
}

void Simulation::detect_collision_onsets(const SceneSnapshot& snap) {
  std::set<std::pair<NodeId, NodeId>> now;
  for (const auto& c : check_collisions(snap).pairs) {
    now.insert({c.a, c.b});
    if (contacts_.count({c.a, c.b})) continue;
    emit(EventKind::Collision, snap.node(c.a).name, {snap.node(c.a).name, snap.node(c.b).name}, std::nullopt,
         {{"depth", c.depth}});
  }
  contacts_.swap(now);
}

void Simulation::sample_transforms(const SceneSnapshot& snap) {
  if (opts_.transform_rate <= 0.0 || !recorder_->is_open()) return;
  const auto every = std::max<std::uint64_t>(1, std::llround(1.0 / (opts_.transform_rate * dt())));
  if (ticks_ % every != 0) return;
  for (const auto& n : snap.topology().nodes) {
    const bool tracked = (n.role == NodeRole::model && !n.is_static) || n.id == tool_node_;
    if (tracked) recorder_->sample({snap.sim_time(), n.name, snap.world_pose(n.id)});
  }
}

void Simulation::command_base(double vx, double vy, double wz) {
  if (!std::isfinite(vx) || !std::isfinite(vy) || !std::isfinite(wz))
    throw Error(Errc::InvalidArgument, "base command must be finite");
  base_cmd_ = BaseCommand{vx, vy, wz, sim_time() + kBaseCommandTimeout};
}

void Simulation::stop_base() { base_cmd_.reset(); }

void Simulation::command_joint(std::string_view joint, double target, JointDriveMode mode) {
  if (!std::isfinite(target)) throw Error(Errc::InvalidArgument, "joint target must be finite");
  const std::size_t i = graph_.require_joint(joint);
  if (trajectory_) {
    auto& idx = trajectory_->indices;
    if (std::find(idx.begin(), idx.end(), i) != idx.end()) trajectory_.reset();
  }
  if ((pan_joint_ && i == *pan_joint_) || (tilt_joint_ && i == *tilt_joint_)) head_target_.reset();
  targets_[i] = JointTarget{target, mode};
}

void Simulation::command_trajectory(JointTrajectory traj, JointDriveMode mode) {
  traj.validate();
  ActiveTrajectory active;
  for (const auto& name : traj.joint_names) active.indices.push_back(graph_.require_joint(name));
  active.traj = std::move(traj);
  active.start = sim_time();
  active.mode = mode;
  trajectory_ = std::move(active);
}

void Simulation::command_head(const Vec3& target) {
  if (!pan_joint_ || !tilt_joint_) throw Error(Errc::UnknownJoint, "robot has no pan/tilt head");
  if (!target.allFinite()) throw Error(Errc::InvalidArgument, "head target must be finite");
  head_target_ = target;
  aim_head();
}

void Simulation::command_gripper(double width) {
  if (finger_joints_.empty()) throw Error(Errc::UnknownJoint, "robot has no gripper");
  if (!std::isfinite(width)) throw Error(Errc::InvalidArgument, "gripper width must be finite");
  gripper_target_ = std::clamp(width, 0.0, opts_.gripper.max_width);
}

bool Simulation::joints_settled(double tol) const {
  if (trajectory_ || gripper_target_) return false;
  for (std::size_t i = 0; i < targets_.size(); ++i) {
    if (!targets_[i]) continue;
    const JointRuntime& j = graph_.joint(i);
    if (std::abs(limit_position(j.spec, targets_[i]->target) - j.position) > tol) return false;
  }
  return true;
}

Pose2d Simulation::base_pose() const {
  if (robot_model_ < 0) throw Error(Errc::UnknownName, "no robot model '" + opts_.robot.model + "'");
  return Pose2d::from_pose(graph_.world_pose(robot_model_));
}

void Simulation::teleport_base(const Pose2d& pose) {
  if (robot_model_ < 0) throw Error(Errc::UnknownName, "no robot model '" + opts_.robot.model + "'");
  graph_.set_world_pose(robot_model_, pose.to_pose(graph_.world_pose(robot_model_).position.z()));
}

double Simulation::gripper_width() const {
  double w = 0.0;
  for (std::size_t f : finger_joints_) w += graph_.joint(f).position;
  return w;
}

std::size_t Simulation::robot_joint(const std::string& local) const {
  return graph_.require_joint(robot_joint_name(local));
}

double Simulation::joint_position(std::string_view robot_joint_local) const {
  return graph_.joint(robot_joint(std::string(robot_joint_local))).position;
}

void Simulation::start_episode(const std::string& episode_id, const std::optional<std::filesystem::path>& dir,
                               const std::string& world_hash) {
  if (recorder_) recorder_->close();
  EpisodeMeta meta{episode_id, world_hash, opts_.seed, opts_.tick.dt, wall_clock_now()};
  recorder_ = std::make_unique<EpisodeRecorder>(std::move(meta), dir);
  last_ = graph_.snapshot(sim_time());
  sample_transforms(last_);
}

std::optional<Episode> Simulation::end_episode() {
  if (!recorder_) return std::nullopt;
  recorder_->close();
  Episode ep = recorder_->episode();
  recorder_.reset();
  return ep;
}

NeemEvent Simulation::emit(NeemEvent ev) {
  ev.sim_time = sim_time();
  if (recorder_ && recorder_->is_open()) ev = recorder_->record(std::move(ev));
  for (const auto& l : event_listeners_) l(ev);
  return ev;
}

NeemEvent Simulation::emit(EventKind kind, std::string actor, std::vector<std::string> participants,
                           std::optional<Outcome> outcome, json payload) {
  NeemEvent ev;
  ev.kind = kind;
  ev.actor = std::move(actor);
  ev.participants = std::move(participants);
  ev.outcome = std::move(outcome);
  ev.payload = std::move(payload);
  return emit(std::move(ev));
}

}  // namespace mentalsim
