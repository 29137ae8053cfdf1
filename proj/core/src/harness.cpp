#include "mentalsim/harness.hpp"

#include "mentalsim/error.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <fstream>

namespace mentalsim {

using nlohmann::json;

namespace {

constexpr double kBaseSpeed = 2.0;       // m/s
constexpr double kBaseTurnRate = 4.0;    // rad/s
constexpr double kNavigationTimeout = 20.0;
constexpr double kMotionTimeout = 10.0;
constexpr double kArrivalTolerance = 1e-6;
constexpr double kArmTolerance = 1e-3;

json pose2d_json(const Pose2d& p) { return {{"x", p.x}, {"y", p.y}, {"theta", p.theta}}; }

json vec_json(const Vec3& v) { return {v.x(), v.y(), v.z()}; }

Vec3 vec_from(const json& j) {
  const auto v = j.get<std::vector<double>>();
  if (v.size() != 3) throw Error(Errc::PlanValidation, "expected [x, y, z]");
  return {v[0], v[1], v[2]};
}

Pose2d pose2d_from(const json& j) {
  if (j.is_array()) {
    const auto v = j.get<std::vector<double>>();
    if (v.size() != 3) throw Error(Errc::PlanValidation, "expected [x, y, theta]");
    return {v[0], v[1], v[2]};
  }
  return {j.at("x").get<double>(), j.at("y").get<double>(), j.value("theta", 0.0)};
}

JointDriveMode mode_from(const json& params) {
  const std::string m = params.value("mode", "dynamic");
  if (m == "dynamic") return JointDriveMode::dynamic;
  if (m == "kinematic") return JointDriveMode::kinematic;
  throw Error(Errc::PlanValidation, "mode must be kinematic or dynamic");
}

JointTrajectory trajectory_from(const json& j) {
  JointTrajectory t;
  t.joint_names = j.at("joint_names").get<std::vector<std::string>>();
  for (const auto& p : j.at("points"))
    t.points.push_back({p.at("time_from_start").get<double>(), p.at("positions").get<std::vector<double>>()});
  return t;
}

std::vector<std::pair<std::string, double>> targets_from(const json& j) {
  std::vector<std::pair<std::string, double>> out;
  for (const auto& [name, q] : j.items()) out.emplace_back(name, q.get<double>());
  return out;
}

bool has_class(const SceneNode& n, std::string_view c) {
  return std::find(n.classes.begin(), n.classes.end(), c) != n.classes.end();
}

}  // namespace

namespace {

std::string read_file(const std::filesystem::path& file) {
  std::ifstream in(file, std::ios::binary);
  if (!in) throw Error(Errc::StorageFailure, "cannot read " + file.string());
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

}  // namespace

WorldBundle load_world_bundle(const std::filesystem::path& sdf) {
  const std::string xml = read_file(sdf);
  ParsedWorld parsed = parse_sdf(xml);
  WorldBundle b;
  b.world = std::move(parsed.world);
  b.warnings = std::move(parsed.warnings);
  b.hash = content_hash(xml);

  auto sidecar = [&](const char* suffix) {
    std::filesystem::path p = sdf;
    p.replace_extension(suffix);
    return p;
  };
  if (const auto sem = sidecar(".semantics.json"); std::filesystem::exists(sem))
    b.world.semantics = parse_semantics(read_file(sem), b.world);
  if (const auto scn = sidecar(".scenario.json"); std::filesystem::exists(scn)) {
    const json j = json::parse(read_file(scn), nullptr, false);
    if (j.is_discarded() || !j.is_object()) throw Error(Errc::InvalidArgument, scn.string() + ": not a JSON object");
    b.scenario = Scenario::from_json(j);
  }
  for (const auto& w : validate(b.world)) b.warnings.push_back(w);
  return b;
}

Plan Plan::from_json(const json& j) {
  if (!j.is_object() || !j.contains("steps") || !j.at("steps").is_array())
    throw Error(Errc::PlanValidation, "plan must be an object with a \"steps\" array");
  Plan plan;
  for (const auto& s : j.at("steps")) {
    if (!s.is_object() || !s.contains("type") || !s.at("type").is_string())
      throw Error(Errc::PlanValidation, "step " + std::to_string(plan.steps.size()) + ": missing \"type\"");
    PlanStep step;
    step.type = s.at("type").get<std::string>();
    for (const auto& [key, value] : s.items())
      if (key != "type") step.params[key] = value;
    plan.steps.push_back(std::move(step));
  }
  return plan;
}

Plan load_plan(const std::filesystem::path& file) {
  std::ifstream in(file);
  if (!in) throw Error(Errc::PlanValidation, "cannot read plan " + file.string());
  const json j = json::parse(in, nullptr, false);
  if (j.is_discarded()) throw Error(Errc::PlanValidation, file.string() + ": not valid JSON");
  return Plan::from_json(j);
}

void Plan::validate(const Simulation& sim) const {
  const SceneGraph& g = sim.graph();
  for (std::size_t i = 0; i < steps.size(); ++i) {
    const PlanStep& s = steps[i];
    const json& p = s.params;
    const std::string where = "step " + std::to_string(i) + " (" + s.type + "): ";
    auto need = [&](const char* key) {
      if (!p.contains(key)) throw Error(Errc::PlanValidation, where + "missing \"" + key + "\"");
      return p.at(key);
    };
    auto node = [&](const json& name) {
      if (!name.is_string() || !g.find(name.get<std::string>()))
        throw Error(Errc::PlanValidation, where + "unknown node " + name.dump());
    };
    auto joint = [&](const std::string& name) {
      if (!g.find_joint(name)) throw Error(Errc::PlanValidation, where + "unknown joint '" + name + "'");
    };
    auto robot = [&] {
      if (sim.robot_model() < 0) throw Error(Errc::PlanValidation, where + "world has no robot");
    };
    try {
      if (s.type == "move_base_to") {
        robot();
        pose2d_from(p);
      } else if (s.type == "move_joints") {
        if (p.contains("trajectory")) {
          const JointTrajectory t = trajectory_from(p.at("trajectory"));
          t.validate();
          for (const auto& n : t.joint_names) joint(n);
        } else {
          for (const auto& [name, q] : need("targets").items()) {
            joint(name);
            q.get<double>();
          }
        }
        mode_from(p);
      } else if (s.type == "point_head") {
        robot();
        const json& t = need("target");
        if (t.is_string()) node(t);
        else vec_from(t);
      } else if (s.type == "open_container") {
        joint(need("joint").get<std::string>());
        need("q").get<double>();
      } else if (s.type == "perceive" || s.type == "grasp") {
        robot();
        node(need("object"));
      } else if (s.type == "release") {
        robot();
      } else if (s.type == "sample_base_pose") {
        robot();
        node(need("object"));
        make_sampler(p.value("sampler", "uniform"), p.value("r_min", 0.5), p.value("r_max", 1.4));
      } else if (s.type == "deliver") {
        robot();
        vec_from(need("point"));
        if (p.contains("target")) node(p.at("target"));
        if (p.contains("base")) pose2d_from(p.at("base"));
      } else if (s.type == "fetch") {
        robot();
        const FetchTask t = FetchTask::from_json(p);
        node(t.object);
        node(t.deliver_to);
        make_sampler(p.value("sampler", "uniform"), t.r_min, t.r_max);
      } else {
        throw Error(Errc::PlanValidation, where + "unknown step type");
      }
    } catch (const json::exception& e) {
      throw Error(Errc::PlanValidation, where + e.what());
    } catch (const Error& e) {
      if (e.code() == Errc::PlanValidation) throw;
      throw Error(Errc::PlanValidation, where + e.what());
    }
  }
}

UniformAnnulusSampler::UniformAnnulusSampler(double r_min, double r_max) : r_min_(r_min), r_max_(r_max) {
  if (!(r_min >= 0.0 && r_max > r_min)) throw Error(Errc::InvalidArgument, "annulus needs 0 <= r_min < r_max");
}

Pose2d UniformAnnulusSampler::sample(const Vec3& object, std::mt19937_64& rng) const {
  std::uniform_real_distribution<double> area(r_min_ * r_min_, r_max_ * r_max_);
  std::uniform_real_distribution<double> heading(-kPi, kPi);
  const double r = std::sqrt(area(rng));
  const double a = heading(rng);
  return {object.x() + r * std::cos(a), object.y() + r * std::sin(a), wrap_angle(a + kPi)};
}

GaussianPoseSampler::GaussianPoseSampler(GaussianModel model, std::string label)
    : model_(std::move(model)), label_(std::move(label)) {
  if (model_.dim != 2) throw Error(Errc::DimensionMismatch, "base pose model must be 2-D (x, y)");
}

Pose2d GaussianPoseSampler::sample(const Vec3& object, std::mt19937_64& rng) const {
  const Eigen::VectorXd xy = mentalsim::sample(model_, rng);
  return {xy[0], xy[1], std::atan2(object.y() - xy[1], object.x() - xy[0])};
}

std::unique_ptr<BasePoseSampler> make_sampler(const std::string& spec, double r_min, double r_max) {
  if (spec == "uniform") return std::make_unique<UniformAnnulusSampler>(r_min, r_max);
  if (spec.rfind("model:", 0) == 0) {
    const std::string file = spec.substr(6);
    return std::make_unique<GaussianPoseSampler>(load_model(file), "model:" + file);
  }
  throw Error(Errc::InvalidArgument, "sampler must be 'uniform' or 'model:<file>', got '" + spec + "'");
}

FetchTask FetchTask::from_json(const json& j) {
  FetchTask t;
  t.object = j.value("object", t.object);
  t.deliver_to = j.value("deliver_to", t.deliver_to);
  if (j.contains("deliver_point")) t.deliver_point = vec_from(j.at("deliver_point"));
  if (j.contains("deliver_base")) t.deliver_base = pose2d_from(j.at("deliver_base"));
  t.r_min = j.value("r_min", t.r_min);
  t.r_max = j.value("r_max", t.r_max);
  t.max_retries = j.value("max_retries", t.max_retries);
  if (t.max_retries < 1) throw Error(Errc::InvalidArgument, "max_retries must be at least 1");
  return t;
}

Executor::Executor(Simulation& sim) : sim_(sim) {}

std::uint64_t Executor::begin(const std::string& action, json payload) {
  const std::uint64_t token = next_token_++;
  payload["action"] = action;
  payload["token"] = token;
  sim_.emit(EventKind::ActionStart, sim_.options().robot.model, {}, std::nullopt, std::move(payload));
  return token;
}

Outcome Executor::end(const std::string& action, std::uint64_t token, Outcome outcome, json payload) {
  payload["action"] = action;
  payload["token"] = token;
  sim_.emit(EventKind::ActionEnd, sim_.options().robot.model, {}, outcome, std::move(payload));
  return outcome;
}

Vec3 Executor::object_center(const std::string& object) const {
  const SceneSnapshot snap = sim_.snapshot();
  const Aabb box = snap.subtree_aabb(sim_.graph().require(object));
  return box.valid() ? box.center() : snap.world_pose(sim_.graph().require(object)).position;
}

Outcome Executor::run_step(const PlanStep& step) {
  const json& p = step.params;
  if (step.type == "move_base_to") return move_base_to(pose2d_from(p));
  if (step.type == "move_joints") {
    if (p.contains("trajectory")) return follow_trajectory(trajectory_from(p.at("trajectory")));
    return move_joints(targets_from(p.at("targets")), mode_from(p));
  }
  if (step.type == "point_head") {
    const json& t = p.at("target");
    return point_head(t.is_string() ? object_center(t.get<std::string>()) : vec_from(t));
  }
  if (step.type == "open_container") return open_container(p.at("joint").get<std::string>(), p.at("q").get<double>());
  if (step.type == "perceive") return perceive(p.at("object").get<std::string>());
  if (step.type == "grasp") return grasp(p.at("object").get<std::string>());
  if (step.type == "release") return release();
  if (step.type == "sample_base_pose") {
    const auto sampler = make_sampler(p.value("sampler", "uniform"), p.value("r_min", 0.5), p.value("r_max", 1.4));
    return sample_base_pose(p.at("object").get<std::string>(), *sampler);
  }
  if (step.type == "deliver") {
    std::optional<Pose2d> base;
    if (p.contains("base")) base = pose2d_from(p.at("base"));
    return deliver(p.value("target", ""), vec_from(p.at("point")), base);
  }
  if (step.type == "fetch") {
    const FetchTask task = FetchTask::from_json(p);
    const auto sampler = make_sampler(p.value("sampler", "uniform"), task.r_min, task.r_max);
    return fetch(*sampler, task).outcome;
  }
  throw Error(Errc::PlanValidation, "unknown step type '" + step.type + "'");
}

Outcome Executor::move_base_to(const Pose2d& goal) {
  const std::uint64_t token = begin("move_base_to", {{"target", pose2d_json(goal)}});
  perceived_.reset();
  sim_.emit(EventKind::CommandIssued, "base_controller", {}, std::nullopt, {{"goal", pose2d_json(goal)}});
  const double dt = sim_.dt();
  const auto limit = static_cast<int>(std::llround(kNavigationTimeout / dt));
  bool arrived = false;
  for (int i = 0; i <= limit; ++i) {
    const Pose2d p = sim_.base_pose();
    const double ex = goal.x - p.x;
    const double ey = goal.y - p.y;
    const double et = wrap_angle(goal.theta - p.theta);
    const double dist = std::hypot(ex, ey);
    if (dist <= kArrivalTolerance && std::abs(et) <= kArrivalTolerance) {
      arrived = true;
      break;
    }
    if (i == limit) break;
    const double scale = dist > kBaseSpeed * dt ? kBaseSpeed * dt / dist : 1.0;
    const double vx_w = ex * scale / dt;
    const double vy_w = ey * scale / dt;
    const double wz = std::clamp(et / dt, -kBaseTurnRate, kBaseTurnRate);
    const double c = std::cos(p.theta), s = std::sin(p.theta);
    sim_.command_base(c * vx_w + s * vy_w, -s * vx_w + c * vy_w, wz);
    sim_.tick();
  }
  sim_.stop_base();
  const Pose2d at = sim_.base_pose();
  json payload = {{"base_pose", pose2d_json(at)}};
  if (!arrived) return end("move_base_to", token, Outcome::fail(failure::kNavigationTimeout), payload);
  if (footprint_collides(sim_.snapshot(), sim_.options().robot.footprint, at, sim_.robot_model()))
    return end("move_base_to", token, Outcome::fail(failure::kBaseInCollision), payload);
  return end("move_base_to", token, Outcome::ok(), payload);
}

Outcome Executor::move_joints(const std::vector<std::pair<std::string, double>>& targets, JointDriveMode mode) {
  json goal = json::object();
  for (const auto& [name, q] : targets) goal[name] = q;
  const std::uint64_t token = begin("move_joints", {{"targets", goal}});
  sim_.emit(EventKind::CommandIssued, "joint_controller", {}, std::nullopt, {{"targets", goal}});
  for (const auto& [name, q] : targets) sim_.command_joint(name, q, mode);
  const bool ok = sim_.run_until([](const Simulation& s) { return s.joints_settled(); }, kMotionTimeout * 3);
  bool reached = ok;
  for (const auto& [name, q] : targets) {
    const JointRuntime& j = sim_.graph().joint(sim_.graph().require_joint(name));
    reached = reached && std::abs(j.position - limit_position(j.spec, q)) <= 1e-9;
  }
  return end("move_joints", token, reached ? Outcome::ok() : Outcome::fail(failure::kUnreachable));
}

Outcome Executor::follow_trajectory(const JointTrajectory& traj) {
  const std::uint64_t token = begin("move_joints", {{"trajectory", traj.joint_names}});
  sim_.emit(EventKind::CommandIssued, "joint_controller", traj.joint_names, std::nullopt,
            {{"points", traj.points.size()}});
  sim_.command_trajectory(traj);
  const double span = traj.points.back().time_from_start + kMotionTimeout;
  const bool ok = sim_.run_until([](const Simulation& s) { return s.joints_settled(); }, span);
  return end("move_joints", token, ok ? Outcome::ok() : Outcome::fail(failure::kUnreachable));
}

Outcome Executor::point_head(const Vec3& target) {
  const std::uint64_t token = begin("point_head", {{"target", vec_json(target)}});
  sim_.emit(EventKind::CommandIssued, "head_controller", {}, std::nullopt, {{"target", vec_json(target)}});
  sim_.command_head(target);
  const bool ok = sim_.run_until([](const Simulation& s) { return s.joints_settled(1e-9); }, kMotionTimeout);
  return end("point_head", token, ok ? Outcome::ok() : Outcome::fail(failure::kUnreachable));
}

Outcome Executor::open_container(const std::string& joint, double q) {
  const std::uint64_t token = begin("open_container", {{"joint", joint}, {"q", q}});
  sim_.emit(EventKind::CommandIssued, "joint_controller", {joint}, std::nullopt, {{"q", q}});
  const std::size_t index = sim_.graph().require_joint(joint);
  sim_.command_joint(joint, q, JointDriveMode::dynamic);
  sim_.run_until([](const Simulation& s) { return s.joints_settled(); }, kMotionTimeout * 3);
  const JointRuntime& j = sim_.graph().joint(index);
  const bool reached = std::abs(j.position - limit_position(j.spec, q)) <= 1e-9;
  return end("open_container", token, reached ? Outcome::ok() : Outcome::fail(failure::kContainerBlocked),
             {{"position", j.position}});
}

Outcome Executor::perceive(const std::string& object) {
  const std::uint64_t token = begin("perceive", {{"object", object}});
  const CameraConfig& cam = sim_.options().camera;
  const std::string camera = cam.frame >= 0 ? sim_.graph().node(cam.frame).name : "camera";
  sim_.emit(EventKind::PerceiveRequest, camera, {object});
  const SceneSnapshot snap = sim_.snapshot();
  const VisibilityReport report = visibility(snap, cam, sim_.graph().require(object));
  json blocked = json::array();
  for (NodeId b : report.blocked_by) blocked.push_back(snap.node(b).name);
  const Outcome outcome = report.visible ? Outcome::ok() : Outcome::fail(failure::kObjectNotFound);
  sim_.emit(EventKind::PerceiveResult, camera, {object}, outcome,
            {{"fraction", report.fraction}, {"blocked_by", blocked}});
  if (report.visible) perceived_ = object;
  else perceived_.reset();
  return end("perceive", token, outcome, {{"fraction", report.fraction}});
}

std::optional<Executor::ArmSolution> Executor::solve_arm(const Vec3& target, const Pose2d& base) const {
  const SceneGraph& g = sim_.graph();
  const RobotBinding& r = sim_.options().robot;
  const auto torso_i = g.find_joint(sim_.robot_joint_name(r.torso_joint));
  const auto pan_i = g.find_joint(sim_.robot_joint_name(r.shoulder_joint));
  const auto ext_i = g.find_joint(sim_.robot_joint_name(r.extend_joint));
  if (!torso_i || !pan_i || !ext_i || sim_.tool_node() < 0) return std::nullopt;
  const JointRuntime& torso = g.joint(*torso_i);
  const JointRuntime& pan = g.joint(*pan_i);
  const JointRuntime& ext = g.joint(*ext_i);

  // The arm is a vertical lift, a pan about z and a slide along the panned x
  // axis, with the tool on that axis.
  const Pose base_now = g.world_pose(sim_.robot_model());
  const Pose to_base = inverse(base_now);
  const Vec3 shoulder = transform_point(to_base, g.world_pose(pan.frame_node).position);
  const Vec3 tool = transform_point(to_base, g.world_pose(sim_.tool_node()).position);
  const Vec3 rel = tool - shoulder;
  const double offset = std::hypot(rel.x(), rel.y()) - ext.position;

  const Vec3 t = transform_point(inverse(base.to_pose(base_now.position.z())), target);
  const Vec3 d = t - shoulder;
  ArmSolution s;
  s.pan = std::atan2(d.y(), d.x());
  s.extend = std::hypot(d.x(), d.y()) - offset;
  s.torso = torso.position + (t.z() - tool.z());
  auto within = [](const JointSpec& j, double q) {
    return j.kind == JointKind::continuous || (q >= j.limits.lower - 1e-9 && q <= j.limits.upper + 1e-9);
  };
  if (!within(torso.spec, s.torso) || !within(pan.spec, s.pan) || !within(ext.spec, s.extend)) return std::nullopt;
  return s;
}

bool Executor::reachable(const Vec3& target) const { return solve_arm(target, sim_.base_pose()).has_value(); }

Outcome Executor::move_arm_to(const Vec3& target) {
  const auto sol = solve_arm(target, sim_.base_pose());
  if (!sol) return Outcome::fail(failure::kUnreachable);
  const RobotBinding& r = sim_.options().robot;
  sim_.emit(EventKind::CommandIssued, "joint_controller", {}, std::nullopt,
            {{"torso", sol->torso}, {"pan", sol->pan}, {"extend", sol->extend}});
  sim_.command_joint(sim_.robot_joint_name(r.torso_joint), sol->torso);
  sim_.command_joint(sim_.robot_joint_name(r.shoulder_joint), sol->pan);
  sim_.command_joint(sim_.robot_joint_name(r.extend_joint), sol->extend);
  sim_.run_until([](const Simulation& s) { return s.joints_settled(); }, kMotionTimeout);
  const Vec3 tool = sim_.graph().world_pose(sim_.tool_node()).position;
  return (tool - target).norm() <= kArmTolerance ? Outcome::ok() : Outcome::fail(failure::kUnreachable);
}

Outcome Executor::retract_arm() {
  const RobotBinding& r = sim_.options().robot;
  const auto ext = sim_.graph().find_joint(sim_.robot_joint_name(r.extend_joint));
  if (!ext) return Outcome::fail(failure::kUnreachable);
  sim_.command_joint(sim_.robot_joint_name(r.extend_joint), sim_.graph().joint(*ext).spec.limits.lower);
  sim_.run_until([](const Simulation& s) { return s.joints_settled(); }, kMotionTimeout);
  return Outcome::ok();
}

Outcome Executor::grasp(const std::string& object) {
  const std::uint64_t token = begin("grasp", {{"object", object}});
  if (perceived_ != object) return end("grasp", token, Outcome::fail(failure::kObjectNotFound));
  const NodeId node = sim_.graph().require(object);
  const Vec3 center = object_center(object);
  if (!reachable(center)) return end("grasp", token, Outcome::fail(failure::kUnreachable));

  const double open = sim_.options().gripper.max_width;
  sim_.emit(EventKind::CommandIssued, "gripper_controller", {}, std::nullopt, {{"width", open}});
  sim_.command_gripper(open);
  sim_.run_until([](const Simulation& s) { return s.joints_settled(); }, kMotionTimeout);
  if (Outcome o = move_arm_to(center); !o.success) {
    retract_arm();
    return end("grasp", token, o);
  }
  sim_.emit(EventKind::CommandIssued, "gripper_controller", {}, std::nullopt, {{"width", 0.0}});
  sim_.command_gripper(0.0);
  sim_.run_until([](const Simulation& s) { return s.joints_settled(); }, kMotionTimeout);
  if (sim_.held() != node) {
    sim_.command_gripper(open);
    sim_.run_until([](const Simulation& s) { return s.joints_settled(); }, kMotionTimeout);
    retract_arm();
    return end("grasp", token, Outcome::fail(failure::kGraspFailed));
  }
  retract_arm();
  return end("grasp", token, Outcome::ok(), {{"width", sim_.gripper_width()}});
}

Outcome Executor::release() {
  const std::uint64_t token = begin("release");
  const auto held = sim_.held();
  if (!held) return end("release", token, Outcome::fail(failure::kNotHolding));
  const double open = sim_.options().gripper.max_width;
  sim_.emit(EventKind::CommandIssued, "gripper_controller", {}, std::nullopt, {{"width", open}});
  sim_.command_gripper(open);
  sim_.run_until([](const Simulation& s) { return s.joints_settled(); }, kMotionTimeout);
  if (sim_.held()) return end("release", token, Outcome::fail(failure::kGraspFailed));
  const Vec3 p = sim_.graph().world_pose(*held).position;
  return end("release", token, Outcome::ok(), {{"object", sim_.graph().node(*held).name}, {"position", vec_json(p)}});
}

Outcome Executor::deliver(const std::string& target_model, const Vec3& point, std::optional<Pose2d> base) {
  const std::uint64_t token = begin("deliver", {{"target", target_model}, {"point", vec_json(point)}});
  const auto held = sim_.held();
  if (!held) return end("deliver", token, Outcome::fail(failure::kNotHolding));

  if (!base) {
    const SceneSnapshot snap = sim_.snapshot();
    for (const Pose2d& c : view_pose_candidates(point)) {
      if (footprint_collides(snap, sim_.options().robot.footprint, c, sim_.robot_model())) continue;
      if (solve_arm(point, c)) {
        base = c;
        break;
      }
    }
    if (!base) return end("deliver", token, Outcome::fail(failure::kUnreachable));
  }
  if (Outcome o = move_base_to(*base); !o.success) return end("deliver", token, o);
  if (Outcome o = move_arm_to(point); !o.success) return end("deliver", token, o);
  if (Outcome o = release(); !o.success) return end("deliver", token, o);
  retract_arm();

  if (!target_model.empty()) {
    const SceneGraph& g = sim_.graph();
    const SceneSnapshot snap = sim_.snapshot();
    bool on_target = false;
    for (const auto& [supportee, supporter] : g.supports())
      if (supportee == *held && supporter != g.root() && snap.node(snap.top_model_of(supporter)).name == target_model)
        on_target = true;
    if (!on_target) return end("deliver", token, Outcome::fail(failure::kDeliveryMissed));
  }
  return end("deliver", token, Outcome::ok());
}

Outcome Executor::sample_base_pose(const std::string& object, const BasePoseSampler& sampler) {
  const std::uint64_t token = begin("sample_base_pose", {{"object", object}, {"sampler", sampler.name()}});
  const Pose2d pose = sampler.sample(object_center(object), sim_.rng());
  const Outcome moved = move_base_to(pose);
  return end("sample_base_pose", token, moved, {{"base_pose", pose2d_json(pose)}});
}

EpisodeResult Executor::fetch(const BasePoseSampler& sampler, const FetchTask& task) {
  EpisodeResult result;
  const std::uint64_t token = begin("fetch", {{"object", task.object}, {"sampler", sampler.name()}});
  if (!sim_.graph().find(task.object) || !has_class(sim_.graph().node(sim_.graph().require(task.object)), "graspable")) {
    result.outcome = end("fetch", token, Outcome::fail(failure::kGraspFailed), {{"retries", 0}});
    return result;
  }

  Pose2d pose;
  while (true) {
    const Vec3 center = object_center(task.object);
    pose = sampler.sample(center, sim_.rng());
    Outcome o = move_base_to(pose);
    if (o.success) o = point_head(center);
    if (o.success) o = perceive(task.object);
    if (o.success) o = grasp(task.object);
    if (o.success) break;
    if (++result.retries >= task.max_retries) {
      result.outcome = end("fetch", token, Outcome::fail(failure::kMaxRetries), {{"retries", result.retries}});
      return result;
    }
  }

  result.base_pose = pose;
  const json done = {{"base_pose", pose2d_json(pose)}, {"retries", result.retries}};
  const Outcome delivered = deliver(task.deliver_to, task.deliver_point, task.deliver_base);
  result.outcome = end("fetch", token, delivered, done);
  return result;
}

namespace {

struct EpisodeRun {
  Simulation sim;
  Executor exec;

  EpisodeRun(const WorldSpec& world, const Scenario& scenario, std::uint64_t seed, const RunOptions& opts)
      : sim(world, with_seed(opts.sim, seed)), exec(sim) {
    sim.apply(scenario);
    sim.start_episode(opts.episode_id, opts.neem_dir, opts.world_hash);
  }

  static SimulationOptions with_seed(SimulationOptions o, std::uint64_t seed) {
    o.seed = seed;
    return o;
  }

  void finish(EpisodeResult& r, Episode* episode) {
    r.episode_id = sim.recorder()->id();
    r.duration = sim.sim_time();
    auto ep = sim.end_episode();
    if (episode && ep) *episode = std::move(*ep);
  }
};

}  // namespace

EpisodeResult run_plan(const WorldSpec& world, const Scenario& scenario, const Plan& plan, std::uint64_t seed,
                       const RunOptions& opts, Episode* episode) {
  EpisodeRun run(world, scenario, seed, opts);
  plan.validate(run.sim);
  EpisodeResult result;
  for (const PlanStep& step : plan.steps) {
    if (step.type == "fetch") {
      const FetchTask task = FetchTask::from_json(step.params);
      const auto sampler = make_sampler(step.params.value("sampler", "uniform"), task.r_min, task.r_max);
      const EpisodeResult f = run.exec.fetch(*sampler, task);
      result.retries += f.retries;
      result.base_pose = f.base_pose;
      result.outcome = f.outcome;
    } else {
      result.outcome = run.exec.run_step(step);
    }
    if (!result.outcome.success) break;
  }
  run.finish(result, episode);
  return result;
}

EpisodeResult fetch_with_retries(const WorldSpec& world, const Scenario& scenario, const BasePoseSampler& sampler,
                                 const FetchTask& task, std::uint64_t seed, const RunOptions& opts,
                                 Episode* episode) {
  EpisodeRun run(world, scenario, seed, opts);
  EpisodeResult result = run.exec.fetch(sampler, task);
  run.finish(result, episode);
  return result;
}

RetryStats retry_stats(const std::vector<EpisodeResult>& results) {
  RetryStats s;
  s.n = static_cast<int>(results.size());
  if (s.n == 0) return s;
  for (const auto& r : results) {
    s.mean += r.retries;
    if (!r.outcome.success) ++s.failures;
  }
  s.mean /= s.n;
  if (s.n >= 2) {
    double ss = 0.0;
    for (const auto& r : results) ss += (r.retries - s.mean) * (r.retries - s.mean);
    s.sd = std::sqrt(ss / (s.n - 1));
    s.sd_defined = true;
  }
  return s;
}

std::uint64_t seed_from_env(std::uint64_t fallback) {
  const char* env = std::getenv("MENTALSIM_SEED");
  if (!env || !*env) return fallback;
  const std::string v(env);
  if (v.find_first_not_of("0123456789") != std::string::npos || v.size() > 20)
    throw Error(Errc::InvalidArgument, "MENTALSIM_SEED must be an unsigned integer, got '" + v + "'");
  try {
    return std::stoull(v);
  } catch (const std::out_of_range&) {
    throw Error(Errc::InvalidArgument, "MENTALSIM_SEED out of range: " + v);
  }
}

std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t index) {
  std::uint64_t z = seed + 0x9E3779B97F4A7C15ULL * (index + 1);
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
  return z ^ (z >> 31);
}

namespace {

EpisodeResult experiment_episode(const WorldSpec& world, const Scenario& scenario, const BasePoseSampler& sampler,
                                 const FetchTask& task, int i, std::uint64_t seed, const RunOptions& opts,
                                 const std::string& prefix) {
  RunOptions o = opts;
  char id[32];
  std::snprintf(id, sizeof id, "-%04d", i);
  o.episode_id = prefix + id;
  return fetch_with_retries(world, scenario, sampler, task, derive_seed(seed, static_cast<std::uint64_t>(i)), o);
}

}  // namespace

ExperimentResult run_experiment(const WorldSpec& world, const Scenario& scenario, const BasePoseSampler& sampler,
                                const FetchTask& task, int n, std::uint64_t seed, const RunOptions& opts,
                                const std::string& prefix) {
  if (n < 1) throw Error(Errc::InvalidArgument, "need at least one episode");
  ExperimentResult out;
  out.episodes.reserve(static_cast<std::size_t>(n));
  for (int i = 0; i < n; ++i)
    out.episodes.push_back(experiment_episode(world, scenario, sampler, task, i, seed, opts, prefix));
  out.stats = retry_stats(out.episodes);
  return out;
}

ExperimentResult collect_successes(const WorldSpec& world, const Scenario& scenario, const BasePoseSampler& sampler,
                                   const FetchTask& task, int successes, int max_episodes, std::uint64_t seed,
                                   const RunOptions& opts, const std::string& prefix) {
  if (successes < 1 || max_episodes < successes)
    throw Error(Errc::InvalidArgument, "need 1 <= successes <= max_episodes");
  ExperimentResult out;
  int ok = 0;
  for (int i = 0; i < max_episodes && ok < successes; ++i) {
    out.episodes.push_back(experiment_episode(world, scenario, sampler, task, i, seed, opts, prefix));
    if (out.episodes.back().outcome.success) ++ok;
  }
  out.stats = retry_stats(out.episodes);
  return out;
}

double improvement(double baseline_mean, double learned_mean) {
  if (!(baseline_mean > 0.0)) throw Error(Errc::ZeroBaseline, "baseline mean retries must be positive");
  return 100.0 * (baseline_mean - learned_mean) / baseline_mean;
}

double improvement(const RetryStats& baseline, const RetryStats& learned) {
  return improvement(baseline.mean, learned.mean);
}

bool grasps_follow_perception(const Episode& ep, std::string* why) {
  std::optional<std::string> seen;
  for (const auto& ev : ep.events) {
    switch (ev.kind) {
      case EventKind::PerceiveResult:
        seen.reset();
        if (ev.outcome && ev.outcome->success && !ev.participants.empty()) seen = ev.participants.front();
        break;
      case EventKind::ActionStart: {
        const std::string action = ev.payload.value("action", "");
        if (action == "move_base_to" || action == "sample_base_pose") seen.reset();
        break;
      }
      case EventKind::Grasp:
        if (ev.participants.empty() || seen != ev.participants.front()) {
          if (why)
            *why = ep.meta.episode_id + ": grasp event " + std::to_string(ev.event_id) +
                   " without a fresh successful perception";
          return false;
        }
        break;
      default:
        break;
    }
  }
  return true;
}

}  // namespace mentalsim
