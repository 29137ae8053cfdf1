#include "mentalsim/wire.hpp"

#include "mentalsim/error.hpp"
#include "mentalsim/physics.hpp"
#include "mentalsim/sensors.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>

namespace mentalsim::wire {

using nlohmann::json;

namespace {

void write_canonical(const json& j, std::string& out) {
  switch (j.type()) {
    case json::value_t::object: {
      out += '{';
      bool first = true;
      for (const auto& [key, value] : j.items()) {
        if (!first) out += ',';
        first = false;
        out += json(key).dump();
        out += ':';
        write_canonical(value, out);
      }
      out += '}';
      break;
    }
    case json::value_t::array: {
      out += '[';
      for (std::size_t i = 0; i < j.size(); ++i) {
        if (i) out += ',';
        write_canonical(j[i], out);
      }
      out += ']';
      break;
    }
    case json::value_t::number_float: {
      double d = j.get<double>();
      if (!std::isfinite(d)) {
        out += "null";
        break;
      }
      if (d == 0.0) d = 0.0;
      char buf[32];
      std::snprintf(buf, sizeof buf, "%.9g", d);
      out += buf;
      break;
    }
    default:
      out += j.dump();
  }
}

json vec_json(const Vec3& v) { return {v.x(), v.y(), v.z()}; }

json pose_json(const Pose& p) {
  const Quat& q = p.orientation;
  return {{"position", vec_json(p.position)}, {"orientation", {q.w(), q.x(), q.y(), q.z()}}};
}

json pose2d_json(const Pose2d& p) { return {{"x", p.x}, {"y", p.y}, {"theta", p.theta}}; }

json header(double stamp, const std::string& frame) { return {{"stamp", stamp}, {"frame_id", frame}}; }

double number(const json& msg, const char* key) {
  if (!msg.contains(key)) throw Error(Errc::InvalidArgument, std::string("missing field '") + key + "'");
  const json& v = msg.at(key);
  if (!v.is_number()) throw Error(Errc::InvalidArgument, std::string("field '") + key + "' must be a number");
  const double d = v.get<double>();
  if (!std::isfinite(d)) throw Error(Errc::InvalidArgument, std::string("field '") + key + "' must be finite");
  return d;
}

double number_or(const json& msg, const char* key, double fallback) {
  return msg.contains(key) ? number(msg, key) : fallback;
}

std::string text(const json& msg, const char* key) {
  if (!msg.contains(key) || !msg.at(key).is_string())
    throw Error(Errc::InvalidArgument, std::string("field '") + key + "' must be a string");
  return msg.at(key).get<std::string>();
}

std::vector<double> numbers(const json& v, const char* what) {
  if (!v.is_array()) throw Error(Errc::InvalidArgument, std::string(what) + " must be an array of numbers");
  std::vector<double> out;
  for (const auto& x : v) {
    if (!x.is_number() || !std::isfinite(x.get<double>()))
      throw Error(Errc::InvalidArgument, std::string(what) + " must be an array of finite numbers");
    out.push_back(x.get<double>());
  }
  return out;
}

std::vector<std::string> strings(const json& v, const char* what) {
  if (!v.is_array()) throw Error(Errc::InvalidArgument, std::string(what) + " must be an array of strings");
  std::vector<std::string> out;
  for (const auto& x : v) {
    if (!x.is_string()) throw Error(Errc::InvalidArgument, std::string(what) + " must be an array of strings");
    out.push_back(x.get<std::string>());
  }
  return out;
}

Vec3 vec3(const json& v, const char* what) {
  const auto n = numbers(v, what);
  if (n.size() != 3) throw Error(Errc::InvalidArgument, std::string(what) + " needs 3 numbers");
  return {n[0], n[1], n[2]};
}

Pose pose_from(const json& v) {
  if (!v.is_object() || !v.contains("position")) throw Error(Errc::InvalidArgument, "pose needs a position");
  Pose p;
  p.position = vec3(v.at("position"), "pose.position");
  if (v.contains("orientation")) {
    const auto q = numbers(v.at("orientation"), "pose.orientation");
    if (q.size() != 4) throw Error(Errc::InvalidArgument, "pose.orientation needs [w, x, y, z]");
    Quat quat(q[0], q[1], q[2], q[3]);
    if (quat.norm() < 1e-9) throw Error(Errc::InvalidArgument, "pose.orientation has zero norm");
    p.orientation = quat.normalized();
  }
  return p;
}

Pose2d pose2d_from(const json& v) {
  if (!v.is_object()) throw Error(Errc::InvalidArgument, "base pose must be {x, y, theta}");
  return {number(v, "x"), number(v, "y"), number_or(v, "theta", 0.0)};
}

JointDriveMode mode_from(const json& msg) {
  if (!msg.contains("mode")) return JointDriveMode::dynamic;
  const std::string m = text(msg, "mode");
  if (m == "dynamic") return JointDriveMode::dynamic;
  if (m == "kinematic") return JointDriveMode::kinematic;
  throw Error(Errc::InvalidArgument, "mode must be dynamic or kinematic");
}

void require_object(const json& msg) {
  if (!msg.is_object()) throw Error(Errc::InvalidArgument, "msg must be an object");
}

}  // namespace

std::string canonical(const json& j) {
  std::string out;
  write_canonical(j, out);
  return out;
}

Hub::Hub(Simulation& sim, WireConfig cfg)
    : sim_(sim), cfg_(cfg), alive_(std::make_shared<std::atomic<bool>>(true)) {
  topics_ = {
      {"/joint_states", Direction::published, cfg_.joint_state_rate, "mentalsim/JointState"},
      {"/odom", Direction::published, cfg_.odom_rate, "mentalsim/Odometry"},
      {"/scan", Direction::published, cfg_.scan_rate, "mentalsim/LaserScan"},
      {"/camera/visible_objects", Direction::published, cfg_.camera_rate, "mentalsim/VisibleObjects"},
      {"/neem/events", Direction::published, 0.0, "mentalsim/NeemEvent"},
      {"/base_controller/command", Direction::consumed, 0.0, "mentalsim/BaseTwist"},
      {"/joint_command", Direction::consumed, 0.0, "mentalsim/JointCommand"},
      {"/joint_trajectory", Direction::consumed, 0.0, "mentalsim/JointTrajectory"},
      {"/head_controller/point_head", Direction::consumed, 0.0, "mentalsim/PointHead"},
      {"/gripper_controller/command", Direction::consumed, 0.0, "mentalsim/GripperCommand"},
  };
  if (cfg_.mode == Mode::belief) {
    topics_.push_back({"/belief/joint_states", Direction::consumed, 0.0, "mentalsim/JointState"});
    topics_.push_back({"/belief/object_detected", Direction::consumed, 0.0, "mentalsim/ObjectDetection"});
    topics_.push_back({"/belief/grasped", Direction::consumed, 0.0, "mentalsim/Grasped"});
    topics_.push_back({"/belief/released", Direction::consumed, 0.0, "mentalsim/Released"});
  }
  for (const auto& t : topics_)
    if (t.direction == Direction::published) counters_[t.name] = 0;
  register_services();
  latest_ = std::make_shared<const SceneSnapshot>(sim_.snapshot());

  auto alive = alive_;
  sim_.on_event([this, alive](const NeemEvent& ev) {
    if (*alive) fan_out("/neem/events", [&] { return to_json(ev); });
  });
}

Hub::~Hub() { *alive_ = false; }

const TopicSchema* Hub::topic(std::string_view name) const {
  for (const auto& t : topics_)
    if (t.name == name) return &t;
  return nullptr;
}

std::vector<std::string> Hub::services() const {
  std::vector<std::string> out;
  for (const auto& [name, h] : services_) out.push_back(name);
  return out;
}

std::map<std::string, std::uint64_t> Hub::counters() const {
  std::lock_guard lock(mutex_);
  return counters_;
}

ConnId Hub::connect(Sink sink) {
  std::lock_guard lock(mutex_);
  const ConnId id = next_conn_++;
  conns_[id].sink = std::move(sink);
  return id;
}

void Hub::disconnect(ConnId conn) {
  std::lock_guard lock(mutex_);
  conns_.erase(conn);
}

void Hub::send(ConnId conn, const json& msg) {
  const std::string frame = canonical(msg);
  std::lock_guard lock(mutex_);
  if (auto it = conns_.find(conn); it != conns_.end() && it->second.sink) it->second.sink(frame);
}

void Hub::status(ConnId conn, const std::string& level, const std::string& msg, const json& id) {
  json s = {{"op", "status"}, {"level", level}, {"msg", msg}};
  if (!id.is_null()) s["id"] = id;
  send(conn, s);
}

void Hub::handle(ConnId conn, std::string_view frame) {
  json id;
  try {
    const json f = json::parse(frame.begin(), frame.end(), nullptr, false);
    if (f.is_discarded()) return status(conn, "error", "malformed frame: not valid JSON", id);
    if (!f.is_object()) return status(conn, "error", "malformed frame: expected an object", id);
    if (f.contains("id")) id = f.at("id");
    if (!f.contains("op") || !f.at("op").is_string()) return status(conn, "error", "missing op", id);
    {
      std::lock_guard lock(mutex_);
      if (!conns_.count(conn)) return;
    }
    const std::string op = f.at("op").get<std::string>();
    if (op == "advertise") on_advertise(conn, f);
    else if (op == "unadvertise") on_unadvertise(conn, f);
    else if (op == "publish") on_publish(conn, f);
    else if (op == "subscribe") on_subscribe(conn, f);
    else if (op == "unsubscribe") on_unsubscribe(conn, f);
    else if (op == "call_service") on_call_service(conn, f);
    else if (op == "service_response" || op == "status")
      status(conn, "error", "op '" + op + "' is server-to-client only", id);
    else
      status(conn, "error", "unknown op '" + op + "'", id);
  } catch (const std::exception& e) {
    status(conn, "error", e.what(), id);
  }
}

namespace {

std::string topic_of(const json& f) {
  if (!f.contains("topic") || !f.at("topic").is_string()) throw Error(Errc::InvalidArgument, "missing topic");
  return f.at("topic").get<std::string>();
}

}  // namespace

void Hub::on_advertise(ConnId conn, const json& f) {
  const json id = f.value("id", json());
  const std::string name = topic_of(f);
  const TopicSchema* t = topic(name);
  if (!t) return status(conn, "error", "unknown topic " + name, id);
  if (t->direction != Direction::consumed)
    return status(conn, "error", "topic " + name + " is published by the simulator", id);
  if (f.contains("type") && (!f.at("type").is_string() || f.at("type").get<std::string>() != t->type))
    return status(conn, "error", "topic " + name + " has type " + t->type, id);
  std::lock_guard lock(mutex_);
  conns_[conn].advertised.insert(name);
}

void Hub::on_unadvertise(ConnId conn, const json& f) {
  const std::string name = topic_of(f);
  bool had = false;
  {
    std::lock_guard lock(mutex_);
    had = conns_[conn].advertised.erase(name) > 0;
  }
  if (!had) status(conn, "warning", "topic " + name + " was not advertised", f.value("id", json()));
}

void Hub::on_subscribe(ConnId conn, const json& f) {
  const json id = f.value("id", json());
  const std::string name = topic_of(f);
  const TopicSchema* t = topic(name);
  if (!t) return status(conn, "error", "unknown topic " + name, id);
  if (t->direction != Direction::published)
    return status(conn, "error", "topic " + name + " is consumed by the simulator", id);
  std::lock_guard lock(mutex_);
  conns_[conn].subscribed.insert(name);
}

void Hub::on_unsubscribe(ConnId conn, const json& f) {
  const std::string name = topic_of(f);
  bool had = false;
  {
    std::lock_guard lock(mutex_);
    had = conns_[conn].subscribed.erase(name) > 0;
  }
  if (!had) status(conn, "warning", "not subscribed to " + name, f.value("id", json()));
}

void Hub::on_publish(ConnId conn, const json& f) {
  const json id = f.value("id", json());
  const std::string name = topic_of(f);
  const TopicSchema* t = topic(name);
  if (!t) return status(conn, "error", "unknown topic " + name, id);
  bool advertised = false;
  {
    std::lock_guard lock(mutex_);
    advertised = conns_[conn].advertised.count(name) > 0;
  }
  if (!advertised) return status(conn, "error", "publish to " + name + " without advertise", id);
  if (!f.contains("msg")) return status(conn, "error", "publish to " + name + " has no msg", id);
  Simulation::Command cmd;
  try {
    cmd = command_for(name, f.at("msg"));
  } catch (const std::exception& e) {
    return status(conn, "error", name + ": " + e.what(), id);
  }
  auto alive = alive_;
  sim_.enqueue([this, alive, conn, name, id, cmd = std::move(cmd)](Simulation& sim) {
    try {
      cmd(sim);
    } catch (const std::exception& e) {
      if (*alive) status(conn, "error", name + ": " + e.what(), id);
    }
  });
}

void Hub::on_call_service(ConnId conn, const json& f) {
  const json id = f.value("id", json());
  std::string name;
  if (f.contains("service") && f.at("service").is_string()) name = f.at("service").get<std::string>();
  json response = {{"op", "service_response"}, {"service", name}, {"id", id}};

  const auto it = services_.find(name);
  if (it == services_.end()) {
    status(conn, "error", name.empty() ? std::string("missing service") : "unknown service " + name, id);
    response["result"] = false;
    response["values"] = {{"success", false}, {"message", "unknown service"}};
    return send(conn, response);
  }
  const json args = f.contains("args") ? f.at("args") : json::object();
  if (!args.is_object()) {
    response["result"] = false;
    response["values"] = {{"success", false}, {"message", "args must be an object"}};
    return send(conn, response);
  }
  auto alive = alive_;
  const Handler handler = it->second;
  sim_.enqueue([this, alive, conn, handler, args, response](Simulation&) mutable {
    if (!*alive) return;
    try {
      json values = handler(args);
      if (!values.contains("success")) values["success"] = true;
      response["result"] = values.at("success").get<bool>();
      response["values"] = std::move(values);
    } catch (const std::exception& e) {
      response["result"] = false;
      response["values"] = {{"success", false}, {"message", e.what()}};
    }
    send(conn, response);
  });
}

Simulation::Command Hub::command_for(const std::string& topic, const json& msg) const {
  require_object(msg);
  std::shared_ptr<const SceneSnapshot> snap;
  {
    std::lock_guard lock(mutex_);
    snap = latest_;
  }
  auto check_joint = [&](const std::string& name) {
    if (!snap->joints().find(name)) throw Error(Errc::UnknownJoint, "unknown joint '" + name + "'");
  };
  auto check_node = [&](const std::string& name) {
    if (!snap->find(name)) throw Error(Errc::UnknownNode, "unknown object '" + name + "'");
  };

  if (topic == "/base_controller/command") {
    const double vx = number_or(msg, "vx", 0.0), vy = number_or(msg, "vy", 0.0), wz = number_or(msg, "wz", 0.0);
    return [vx, vy, wz](Simulation& sim) { sim.command_base(vx, vy, wz); };
  }
  if (topic == "/joint_command") {
    if (!msg.contains("name") || !msg.contains("position"))
      throw Error(Errc::InvalidArgument, "needs name and position arrays");
    const auto names = strings(msg.at("name"), "name");
    const auto pos = numbers(msg.at("position"), "position");
    if (names.size() != pos.size()) throw Error(Errc::InvalidArgument, "name and position differ in length");
    for (const auto& n : names) check_joint(n);
    const JointDriveMode mode = mode_from(msg);
    return [names, pos, mode](Simulation& sim) {
      for (std::size_t i = 0; i < names.size(); ++i) sim.command_joint(names[i], pos[i], mode);
    };
  }
  if (topic == "/joint_trajectory") {
    JointTrajectory traj;
    if (!msg.contains("joint_names") || !msg.contains("points") || !msg.at("points").is_array())
      throw Error(Errc::InvalidArgument, "needs joint_names and points");
    traj.joint_names = strings(msg.at("joint_names"), "joint_names");
    for (const auto& p : msg.at("points")) {
      require_object(p);
      if (!p.contains("positions")) throw Error(Errc::InvalidArgument, "point needs positions");
      traj.points.push_back({number(p, "time_from_start"), numbers(p.at("positions"), "positions")});
    }
    traj.validate();
    for (const auto& n : traj.joint_names) check_joint(n);
    const JointDriveMode mode = mode_from(msg);
    return [traj, mode](Simulation& sim) { sim.command_trajectory(traj, mode); };
  }
  if (topic == "/head_controller/point_head") {
    if (!msg.contains("target")) throw Error(Errc::InvalidArgument, "missing field 'target'");
    const Vec3 target = vec3(msg.at("target"), "target");
    return [target](Simulation& sim) { sim.command_head(target); };
  }
  if (topic == "/gripper_controller/command") {
    const double width = number(msg, "width");
    if (width < 0.0) throw Error(Errc::InvalidArgument, "width must be non-negative");
    return [width](Simulation& sim) { sim.command_gripper(width); };
  }
  if (topic == "/belief/joint_states") {
    if (!msg.contains("name") || !msg.contains("position"))
      throw Error(Errc::InvalidArgument, "needs name and position arrays");
    const auto names = strings(msg.at("name"), "name");
    const auto pos = numbers(msg.at("position"), "position");
    if (names.size() != pos.size()) throw Error(Errc::InvalidArgument, "name and position differ in length");
    for (const auto& n : names) check_joint(n);
    return [names, pos](Simulation& sim) {
      for (std::size_t i = 0; i < names.size(); ++i) sim.graph().set_joint_position(names[i], pos[i]);
    };
  }
  if (topic == "/belief/object_detected") {
    const std::string name = text(msg, "name");
    const std::string cls = text(msg, "class");
    if (!msg.contains("pose")) throw Error(Errc::InvalidArgument, "missing field 'pose'");
    const Pose pose = pose_from(msg.at("pose"));
    Vec3 size(0.1, 0.1, 0.1);
    if (msg.contains("size")) size = vec3(msg.at("size"), "size");
    if ((size.array() <= 0.0).any()) throw Error(Errc::InvalidArgument, "size must be positive");
    bool known = false;
    for (const auto& n : snap->topology().nodes)
      if (std::find(n.classes.begin(), n.classes.end(), cls) != n.classes.end()) known = true;
    if (!known) throw Error(Errc::InvalidArgument, "unknown object class '" + cls + "'");
    if (name.empty() || name.find("::") != std::string::npos)
      throw Error(Errc::InvalidArgument, "object name must be a plain model name");
    return [name, cls, pose, size](Simulation& sim) {
      SceneGraph& g = sim.graph();
      if (const auto id = g.find(name)) {
        const SceneNode& n = g.node(*id);
        if (n.relation == Relation::support) {
          g.detach(*id);
          g.clear_support(*id);
        }
        g.set_world_pose(*id, pose);
        return;
      }
      ModelSpec m;
      m.name = name;
      m.root_pose = pose;
      m.links.push_back({"body", Pose{}, {{"shape", Pose{}, Shape::box(size.x(), size.y(), size.z())}}, 1.0});
      const NodeId id = g.add_model(m);
      g.tag(id, SemanticTag{name, {cls}, {}});
    };
  }
  if (topic == "/belief/grasped") {
    const std::string object = text(msg, "object");
    const std::string gripper = text(msg, "gripper");
    check_node(object);
    const std::string tool_link = sim_.options().robot.tool_link;
    const std::string tool_full = sim_.robot_joint_name(tool_link);
    if (gripper != tool_link && gripper != tool_full) throw Error(Errc::UnknownName, "unknown gripper '" + gripper + "'");
    return [object](Simulation& sim) { sim.attach_held(sim.graph().require(object), sim.gripper_width()); };
  }
  if (topic == "/belief/released") {
    const std::string object = text(msg, "object");
    check_node(object);
    return [object](Simulation& sim) {
      if (sim.held() != sim.graph().require(object)) throw Error(Errc::NotGrasped, object + " is not held");
      sim.release_held();
    };
  }
  throw Error(Errc::InvalidArgument, "topic " + topic + " takes no messages");
}

void Hub::tick() {
  const SceneSnapshot& snap = sim_.tick();
  {
    std::lock_guard lock(mutex_);
    latest_ = std::make_shared<const SceneSnapshot>(snap);
  }
  publish_cycle(snap);
}

bool Hub::due(double rate) const {
  if (!(rate > 0.0)) return false;
  const auto every = std::max<std::uint64_t>(1, std::llround(1.0 / (rate * sim_.dt())));
  return sim_.ticks() % every == 0;
}

void Hub::fan_out(const std::string& topic, const std::function<json()>& make) {
  std::vector<Sink> sinks;
  {
    std::lock_guard lock(mutex_);
    for (const auto& [id, c] : conns_)
      if (c.subscribed.count(topic)) sinks.push_back(c.sink);
  }
  if (sinks.empty()) return;
  const std::string frame = canonical({{"op", "publish"}, {"topic", topic}, {"msg", make()}});
  std::lock_guard lock(mutex_);
  ++counters_[topic];
  for (const auto& s : sinks)
    if (s) s(frame);
}

void Hub::publish_cycle(const SceneSnapshot& snap) {
  const double t = snap.sim_time();
  if (due(cfg_.joint_state_rate)) {
    fan_out("/joint_states", [&] {
      json names = json::array(), pos = json::array(), vel = json::array();
      const JointState& js = snap.joints();
      for (std::size_t i = 0; i < js.size(); ++i) {
        names.push_back(js.name(i));
        pos.push_back(js.value(i).position);
        vel.push_back(js.value(i).velocity);
      }
      return json{{"header", header(t, "")}, {"name", names}, {"position", pos}, {"velocity", vel}};
    });
  }
  if (due(cfg_.odom_rate) && sim_.robot_model() >= 0) {
    fan_out("/odom", [&] {
      const BaseCommand tw = sim_.base_twist();
      return json{{"header", header(t, "odom")},
                  {"child_frame_id", snap.node(sim_.base_node()).name},
                  {"pose", pose2d_json(Pose2d::from_pose(snap.world_pose(sim_.robot_model())))},
                  {"twist", {{"vx", tw.vx}, {"vy", tw.vy}, {"wz", tw.wz}}}};
    });
  }
  const LaserConfig& laser = sim_.options().laser;
  if (due(cfg_.scan_rate) && laser.frame >= 0) {
    fan_out("/scan", [&] {
      return json{{"header", header(t, snap.node(laser.frame).name)},
                  {"angle_min", laser.angle_min},
                  {"angle_max", laser.angle_max},
                  {"angle_increment", laser.angle_increment},
                  {"range_min", laser.range_min},
                  {"range_max", laser.range_max},
                  {"ranges", scan(snap, laser)}};
    });
  }
  const CameraConfig& cam = sim_.options().camera;
  if (due(cfg_.camera_rate) && cam.frame >= 0) {
    fan_out("/camera/visible_objects", [&] {
      json objects = json::array();
      for (const auto& o : trigger_camera(snap, cam))
        objects.push_back({{"name", o.name}, {"pose", pose_json(o.pose)}, {"fraction", o.fraction}});
      return json{{"header", header(t, snap.node(cam.frame).name)}, {"objects", objects}};
    });
  }
}

void Hub::register_services() {
  Simulation& sim = sim_;
  auto node_of = [&sim](const json& args, const char* key) {
    const std::string name = text(args, key);
    const auto id = sim.graph().find(name);
    if (!id) throw Error(Errc::UnknownNode, "unknown node '" + name + "'");
    return *id;
  };

  services_["/sim/spawn_model"] = [&sim](const json& args) {
    SceneGraph& g = sim.graph();
    std::vector<ModelSpec> models;
    if (args.contains("sdf")) {
      const std::string xml = "<sdf version=\"1.7\"><world name=\"spawn\">" + text(args, "sdf") + "</world></sdf>";
      models = parse_sdf(xml).world.models;
      if (models.empty()) throw Error(Errc::InvalidArgument, "sdf holds no model");
    } else {
      ModelSpec m;
      m.name = text(args, "name");
      if (args.contains("pose")) m.root_pose = pose_from(args.at("pose"));
      const Vec3 size = args.contains("size") ? vec3(args.at("size"), "size") : Vec3(0.1, 0.1, 0.1);
      if ((size.array() <= 0.0).any()) throw Error(Errc::InvalidArgument, "size must be positive");
      m.is_static = args.value("static", false);
      m.links.push_back({"body", Pose{}, {{"shape", Pose{}, Shape::box(size.x(), size.y(), size.z())}}, 1.0});
      models.push_back(std::move(m));
    }
    json names = json::array();
    for (const auto& m : models) {
      if (m.name.empty() || g.find(m.name)) throw Error(Errc::InvalidArgument, "model name '" + m.name + "' is taken");
    }
    for (const auto& m : models) {
      const NodeId id = g.add_model(m);
      if (args.contains("classes") || args.contains("stores")) {
        SemanticTag tag{m.name, {}, {}};
        if (args.contains("classes")) tag.classes = strings(args.at("classes"), "classes");
        if (args.contains("stores")) tag.stores = strings(args.at("stores"), "stores");
        g.tag(id, tag);
      }
      names.push_back(m.name);
    }
    return json{{"models", names}};
  };

  services_["/sim/get_object_pose"] = [&sim, node_of](const json& args) {
    const NodeId id = node_of(args, "name");
    const SceneGraph& g = sim.graph();
    const SceneNode& n = g.node(id);
    json out = {{"name", n.name}, {"pose", pose_json(g.world_pose(id))}, {"relation", to_string(n.relation)}};
    if (n.parent) out["parent"] = g.node(*n.parent).name;
    for (const auto& [supportee, supporter] : g.supports())
      if (supportee == id) out["supported_by"] = g.node(supporter).name;
    return out;
  };

  services_["/sim/settle"] = [&sim, node_of](const json& args) {
    const NodeId id = node_of(args, "node");
    if (sim.held() == id) throw Error(Errc::InvalidArgument, sim.graph().node(id).name + " is held by the gripper");
    const SettleResult r = settle(sim.graph(), id);
    json out = {{"node", sim.graph().node(id).name}, {"pose", pose_json(r.final_pose)}};
    if (r.supporter) out["supporter"] = sim.graph().node(*r.supporter).name;
    return out;
  };

  services_["/sim/visibility"] = [&sim, node_of](const json& args) {
    const NodeId target = node_of(args, "object");
    const SceneSnapshot snap = sim.snapshot();
    const CameraConfig& cam = sim.options().camera;
    if (cam.frame < 0) throw Error(Errc::UnknownName, "robot has no camera");
    VisibilityReport r;
    if (args.contains("base")) {
      const Pose2d base = pose2d_from(args.at("base"));
      const Vec3 center = snap.subtree_aabb(target).center();
      const Pose camera = camera_pose_at(snap, sim.view_rig(), cam, base, center);
      r = visibility_from(snap, camera, cam, target, sim.robot_model());
    } else {
      r = visibility(snap, cam, target);
    }
    json blocked = json::array();
    for (NodeId b : r.blocked_by) blocked.push_back(snap.node(b).name);
    return json{{"object", snap.node(target).name}, {"visible", r.visible}, {"fraction", r.fraction},
                {"blocked_by", blocked}};
  };

  services_["/sim/find_view_pose"] = [&sim, node_of](const json& args) {
    const NodeId target = node_of(args, "object");
    const SceneSnapshot snap = sim.snapshot();
    const auto pose =
        find_view_pose(snap, target, sim.options().camera, sim.options().robot.footprint, sim.view_rig());
    json out = {{"object", snap.node(target).name}, {"found", pose.has_value()}};
    if (pose) out["base"] = pose2d_json(*pose);
    return out;
  };

  services_["/sim/query_containers"] = [&sim](const json&) {
    json out = json::array();
    for (const auto& c : sim.graph().query_containers()) {
      json e = {{"name", c.name}, {"joint", c.joint}, {"kind", to_string(c.kind)}, {"axis", vec_json(c.axis)},
                {"lower", c.limits.lower}, {"upper", c.limits.upper}, {"position", c.position}};
      const double span = c.limits.upper - c.limits.lower;
      e["open_fraction"] = span > 0.0 ? (c.position - c.limits.lower) / span : 0.0;
      out.push_back(std::move(e));
    }
    return json{{"containers", out}};
  };

  services_["/sim/query_storage"] = [&sim](const json& args) {
    const std::string cls = text(args, "class");
    json out = json::array();
    for (NodeId id : sim.graph().query_storage_location(cls)) out.push_back(sim.graph().node(id).name);
    return json{{"class", cls}, {"locations", out}};
  };

  services_["/sim/neem/query"] = [&sim](const json& args) {
    EpisodeRecorder* rec = sim.recorder();
    if (!rec) throw Error(Errc::EpisodeClosed, "no episode is being recorded");
    EventFilter f;
    if (args.contains("kind")) {
      const std::string k = text(args, "kind");
      f.kind = event_kind_from_string(k);
      if (!f.kind) throw Error(Errc::InvalidArgument, "unknown event kind '" + k + "'");
    }
    if (args.contains("participant")) f.participant = text(args, "participant");
    if (args.contains("outcome")) f.outcome = text(args, "outcome");
    if (args.contains("t_min") || args.contains("t_max"))
      f.time_range = {number_or(args, "t_min", -1e300), number_or(args, "t_max", 1e300)};
    const Episode ep = rec->episode();
    json events = json::array();
    for (const auto& ev : query_events(ep, f)) events.push_back(to_json(ev));
    return json{{"episode_id", ep.meta.episode_id}, {"events", events}};
  };
}

}  // namespace mentalsim::wire
