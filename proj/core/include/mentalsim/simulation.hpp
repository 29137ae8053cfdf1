#pragma once

#include "mentalsim/controllers.hpp"
#include "mentalsim/neem.hpp"
#include "mentalsim/physics.hpp"
#include "mentalsim/scene_graph.hpp"
#include "mentalsim/sensors.hpp"

#include <nlohmann/json.hpp>

#include <cstdint>
#include <deque>
#include <filesystem>
#include <functional>
#include <memory>
#include <mutex>
#include <optional>
#include <random>
#include <set>
#include <string>
#include <vector>

namespace mentalsim {

/// Names of the robot parts the controllers drive. Link and joint names are
/// local to `model`.
struct RobotBinding {
  std::string model = "pr2";
  std::string base_link = "base_link";
  std::string camera_link = "head_camera_link";
  std::string laser_link = "base_laser_link";
  std::string tool_link = "tool_frame";
  std::string head_pan_joint = "head_pan_joint";
  std::string head_tilt_joint = "head_tilt_joint";
  std::string torso_joint = "torso_lift_joint";
  std::string shoulder_joint = "shoulder_pan_joint";
  std::string extend_joint = "arm_extend_joint";
  std::vector<std::string> finger_joints = {"l_gripper_finger_joint", "r_gripper_finger_joint"};
  /// Base footprint in the base frame, used for placement checks.
  Aabb footprint = Aabb::from_center(Vec3(0.0, 0.0, 0.15), Vec3(0.3, 0.3, 0.15));

  static RobotBinding from_json(const nlohmann::json& j);
};

/// World edits applied after loading: initial joint positions and objects
/// resting on (or held by) other nodes.
struct Scenario {
  struct Placement {
    std::string object;
    std::string parent;
    Relation relation = Relation::support;
  };
  std::vector<std::pair<std::string, double>> joints;
  std::vector<Placement> placements;
  RobotBinding robot;
  nlohmann::json extra = nlohmann::json::object();  // consumers' own sections

  static Scenario from_json(const nlohmann::json& j);
};

struct SimulationOptions {
  TickConfig tick;
  RobotBinding robot;
  std::uint64_t seed = 0;
  double transform_rate = 10.0;
  LaserConfig laser;
  CameraConfig camera;
  GripperConfig gripper;
  HeadLimits head;
};

/// The fixed-step world. All mutation happens on the thread calling tick();
/// other threads hand work over through enqueue().
class Simulation {
 public:
  using Command = std::function<void(Simulation&)>;
  using TickListener = std::function<void(const Simulation&, const SceneSnapshot&)>;
  using EventListener = std::function<void(const NeemEvent&)>;

  Simulation(const WorldSpec& world, SimulationOptions opts);

  void apply(const Scenario& scenario);

  SceneGraph& graph() { return graph_; }
  const SceneGraph& graph() const { return graph_; }
  const SimulationOptions& options() const { return opts_; }
  const WorldSpec& world() const { return world_; }
  double dt() const { return opts_.tick.dt; }
  double sim_time() const { return static_cast<double>(ticks_) * opts_.tick.dt; }
  std::uint64_t ticks() const { return ticks_; }
  std::mt19937_64& rng() { return rng_; }

  /// Thread-safe; commands run in arrival order at the start of the next tick.
  void enqueue(Command cmd);

  /// Advances one dt and returns the resulting snapshot.
  const SceneSnapshot& tick();
  void run_for(double seconds);
  /// Ticks until `done` holds or `timeout` seconds pass. True if done.
  bool run_until(const std::function<bool(const Simulation&)>& done, double timeout);
  SceneSnapshot snapshot() const { return graph_.snapshot(sim_time()); }
  const SceneSnapshot& last_snapshot() const { return last_; }

  // Controller inputs (tick thread).
  void command_base(double vx, double vy, double wz);
  void stop_base();
  void command_joint(std::string_view joint, double target, JointDriveMode mode = JointDriveMode::dynamic);
  void command_trajectory(JointTrajectory traj, JointDriveMode mode = JointDriveMode::dynamic);
  void command_head(const Vec3& target);
  void command_gripper(double width);
  bool joints_settled(double tol = 1e-9) const;

  // Robot state.
  NodeId robot_model() const { return robot_model_; }
  NodeId base_node() const { return base_node_; }
  NodeId tool_node() const { return tool_node_; }
  Pose2d base_pose() const;
  /// Active base command, zero once it expired or was stopped.
  BaseCommand base_twist() const { return base_cmd_.value_or(BaseCommand{}); }
  void teleport_base(const Pose2d& pose);
  double gripper_width() const;
  std::optional<NodeId> held() const { return held_; }
  /// Puts `object` in the gripper as if closed on it (emits Grasp).
  void attach_held(NodeId object, double width);
  /// Lets go of the held object and settles it (emits Release, Settle).
  SettleResult release_held();
  double joint_position(std::string_view robot_joint) const;
  std::string robot_joint_name(const std::string& local) const { return opts_.robot.model + "::" + local; }
  ViewRig view_rig() const { return {base_node_, opts_.head}; }

  // Episodes. Events emitted with no open episode still reach listeners.
  void start_episode(const std::string& episode_id, const std::optional<std::filesystem::path>& dir,
                     const std::string& world_hash = "");
  std::optional<Episode> end_episode();
  EpisodeRecorder* recorder() { return recorder_.get(); }
  NeemEvent emit(NeemEvent ev);
  NeemEvent emit(EventKind kind, std::string actor, std::vector<std::string> participants,
                 std::optional<Outcome> outcome = std::nullopt,
                 nlohmann::json payload = nlohmann::json::object());

  void on_tick(TickListener l) { tick_listeners_.push_back(std::move(l)); }
  void on_event(EventListener l) { event_listeners_.push_back(std::move(l)); }

 private:
  struct JointTarget {
    double target = 0.0;
    JointDriveMode mode = JointDriveMode::dynamic;
  };
  struct ActiveTrajectory {
    JointTrajectory traj;
    std::vector<std::size_t> indices;
    double start = 0.0;
    JointDriveMode mode = JointDriveMode::dynamic;
  };

  void bind_robot();
  std::size_t robot_joint(const std::string& local) const;
  void step_controllers();
  void aim_head();
  void step_gripper_controller();
  void detect_collision_onsets(const SceneSnapshot& snap);
  void sample_transforms(const SceneSnapshot& snap);

  WorldSpec world_;
  SimulationOptions opts_;
  SceneGraph graph_;
  std::mt19937_64 rng_;
  std::uint64_t ticks_ = 0;
  SceneSnapshot last_;

  std::mutex queue_mutex_;
  std::deque<Command> queue_;

  NodeId robot_model_ = -1;
  NodeId base_node_ = -1;
  NodeId tool_node_ = -1;
  std::vector<std::size_t> finger_joints_;
  std::optional<std::size_t> pan_joint_, tilt_joint_;
  std::optional<BaseCommand> base_cmd_;
  std::vector<std::optional<JointTarget>> targets_;
  std::optional<ActiveTrajectory> trajectory_;
  std::optional<Vec3> head_target_;
  std::optional<double> gripper_target_;
  std::optional<NodeId> held_;
  double held_width_ = 0.0;
  std::set<std::pair<NodeId, NodeId>> contacts_;

  std::unique_ptr<EpisodeRecorder> recorder_;
  std::vector<TickListener> tick_listeners_;
  std::vector<EventListener> event_listeners_;
};

}  // namespace mentalsim
