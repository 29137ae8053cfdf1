#pragma once

#include "mentalsim/learning.hpp"
#include "mentalsim/neem.hpp"
#include "mentalsim/simulation.hpp"

#include <nlohmann/json.hpp>

#include <cstdint>
#include <filesystem>
#include <functional>
#include <memory>
#include <optional>
#include <random>
#include <string>
#include <vector>

namespace mentalsim {

/// A world file with its optional sidecars: <stem>.semantics.json and
/// <stem>.scenario.json next to it.
struct WorldBundle {
  WorldSpec world;
  Scenario scenario;
  std::string hash;  // of the world file bytes
  std::vector<std::string> warnings;
};

WorldBundle load_world_bundle(const std::filesystem::path& sdf);

struct PlanStep {
  std::string type;
  nlohmann::json params = nlohmann::json::object();
};

struct Plan {
  std::vector<PlanStep> steps;

  /// {"steps": [{"type": ..., ...params}, ...]}. Throws PlanValidation.
  static Plan from_json(const nlohmann::json& j);
  /// Checks step types, required parameters and that names resolve against
  /// the simulation. Throws PlanValidation naming the step index.
  void validate(const Simulation& sim) const;
};

Plan load_plan(const std::filesystem::path& file);

/// Source of candidate base poses around an object. Every pose faces the
/// object.
class BasePoseSampler {
 public:
  virtual ~BasePoseSampler() = default;
  virtual Pose2d sample(const Vec3& object, std::mt19937_64& rng) const = 0;
  virtual std::string name() const = 0;
};

/// Uniform by area over the annulus r_min <= r <= r_max around the object.
class UniformAnnulusSampler final : public BasePoseSampler {
 public:
  UniformAnnulusSampler(double r_min, double r_max);
  Pose2d sample(const Vec3& object, std::mt19937_64& rng) const override;
  std::string name() const override { return "uniform"; }

 private:
  double r_min_, r_max_;
};

/// Draws (x, y) from a 2-D Gaussian over base positions.
class GaussianPoseSampler final : public BasePoseSampler {
 public:
  explicit GaussianPoseSampler(GaussianModel model, std::string label = "model");
  Pose2d sample(const Vec3& object, std::mt19937_64& rng) const override;
  std::string name() const override { return label_; }

 private:
  GaussianModel model_;
  std::string label_;
};

/// Always the same pose.
class FixedPoseSampler final : public BasePoseSampler {
 public:
  explicit FixedPoseSampler(Pose2d pose) : pose_(pose) {}
  Pose2d sample(const Vec3&, std::mt19937_64&) const override { return pose_; }
  std::string name() const override { return "fixed"; }

 private:
  Pose2d pose_;
};

/// "uniform" (annulus from the fetch task) or "model:<file>".
std::unique_ptr<BasePoseSampler> make_sampler(const std::string& spec, double r_min, double r_max);

struct FetchTask {
  std::string object = "milk";
  std::string deliver_to = "counter";
  Vec3 deliver_point = Vec3(0.0, 0.0, 1.0);
  std::optional<Pose2d> deliver_base;
  double r_min = 0.5;
  double r_max = 1.4;
  int max_retries = 25;

  static FetchTask from_json(const nlohmann::json& j);
};

struct EpisodeResult {
  std::string episode_id;
  Outcome outcome;
  int retries = 0;
  double duration = 0.0;
  std::optional<Pose2d> base_pose;  // pose of the successful fetch attempt
};

/// Executes plan steps on a simulation, bracketing each in ActionStart /
/// ActionEnd events. Step failures come back as outcomes.
class Executor {
 public:
  explicit Executor(Simulation& sim);

  Outcome run_step(const PlanStep& step);

  Outcome move_base_to(const Pose2d& goal);
  Outcome move_joints(const std::vector<std::pair<std::string, double>>& targets, JointDriveMode mode);
  Outcome follow_trajectory(const JointTrajectory& traj);
  Outcome point_head(const Vec3& target);
  Outcome open_container(const std::string& joint, double q);
  Outcome perceive(const std::string& object);
  Outcome grasp(const std::string& object);
  Outcome release();
  Outcome deliver(const std::string& target_model, const Vec3& point, std::optional<Pose2d> base);
  Outcome sample_base_pose(const std::string& object, const BasePoseSampler& sampler);
  EpisodeResult fetch(const BasePoseSampler& sampler, const FetchTask& task);

  Simulation& sim() { return sim_; }
  /// Tool position the arm can reach for `target` from the current base pose.
  bool reachable(const Vec3& target) const;

 private:
  struct ArmSolution {
    double torso, pan, extend;
  };
  std::optional<ArmSolution> solve_arm(const Vec3& target, const Pose2d& base) const;
  Outcome move_arm_to(const Vec3& target);
  Outcome retract_arm();

  std::uint64_t begin(const std::string& action, nlohmann::json payload = nlohmann::json::object());
  Outcome end(const std::string& action, std::uint64_t token, Outcome outcome,
              nlohmann::json payload = nlohmann::json::object());
  Vec3 object_center(const std::string& object) const;

  Simulation& sim_;
  std::uint64_t next_token_ = 1;
  std::optional<std::string> perceived_;
};

struct RunOptions {
  std::optional<std::filesystem::path> neem_dir;
  std::string episode_id = "episode";
  std::string world_hash;
  SimulationOptions sim;
};

EpisodeResult run_plan(const WorldSpec& world, const Scenario& scenario, const Plan& plan, std::uint64_t seed,
                       const RunOptions& opts, Episode* episode = nullptr);

/// One fetch-and-deliver episode in a fresh simulation.
EpisodeResult fetch_with_retries(const WorldSpec& world, const Scenario& scenario, const BasePoseSampler& sampler,
                                 const FetchTask& task, std::uint64_t seed, const RunOptions& opts,
                                 Episode* episode = nullptr);

struct RetryStats {
  int n = 0;
  double mean = 0.0;
  double sd = 0.0;
  bool sd_defined = false;  // false for n < 2, where sd is reported as 0
  int failures = 0;
};

RetryStats retry_stats(const std::vector<EpisodeResult>& results);

struct ExperimentResult {
  RetryStats stats;
  std::vector<EpisodeResult> episodes;
};

/// MENTALSIM_SEED when set, else `fallback`. Throws InvalidArgument on a
/// value that is not an unsigned integer.
std::uint64_t seed_from_env(std::uint64_t fallback);

/// splitmix64 of (seed, index).
std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t index);

/// n independent fetch episodes with seeds derive_seed(seed, i). Episodes are
/// named <prefix>-NNNN and written to opts.neem_dir when set.
ExperimentResult run_experiment(const WorldSpec& world, const Scenario& scenario, const BasePoseSampler& sampler,
                                const FetchTask& task, int n, std::uint64_t seed, const RunOptions& opts,
                                const std::string& prefix = "fetch");

/// Runs episodes as run_experiment does until `successes` of them succeed.
/// Stops after `max_episodes` regardless.
ExperimentResult collect_successes(const WorldSpec& world, const Scenario& scenario, const BasePoseSampler& sampler,
                                   const FetchTask& task, int successes, int max_episodes, std::uint64_t seed,
                                   const RunOptions& opts, const std::string& prefix = "fetch");

/// 100 * (baseline - learned) / baseline. Throws ZeroBaseline.
double improvement(const RetryStats& baseline, const RetryStats& learned);
double improvement(double baseline_mean, double learned_mean);

/// Every Grasp is preceded by a successful PerceiveResult for the same object
/// with no base motion or other perception in between.
bool grasps_follow_perception(const Episode& ep, std::string* why = nullptr);

}  // namespace mentalsim
