#pragma once

#include "mentalsim/geometry.hpp"

#include <Eigen/Core>
#include <nlohmann/json.hpp>

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <functional>
#include <mutex>
#include <optional>
#include <string>
#include <utility>
#include <vector>

namespace mentalsim {

enum class EventKind {
  ActionStart,
  ActionEnd,
  Grasp,
  Release,
  Collision,
  Settle,
  PerceiveRequest,
  PerceiveResult,
  CommandIssued,
};

const char* to_string(EventKind k);
std::optional<EventKind> event_kind_from_string(std::string_view s);

/// Documented failure reasons.
namespace failure {
inline constexpr const char* kObjectNotFound = "perception-object-not-found";
inline constexpr const char* kBaseInCollision = "base-in-collision";
inline constexpr const char* kGraspFailed = "grasp-failed";
inline constexpr const char* kUnreachable = "target-unreachable";
inline constexpr const char* kNavigationTimeout = "navigation-timeout";
inline constexpr const char* kMaxRetries = "max-retries-exceeded";
inline constexpr const char* kNotHolding = "not-holding-object";
inline constexpr const char* kContainerBlocked = "container-blocked";
inline constexpr const char* kDeliveryMissed = "delivery-missed";
}  // namespace failure

struct Outcome {
  bool success = true;
  std::string reason;  // failures only

  static Outcome ok() { return {true, {}}; }
  static Outcome fail(std::string why) { return {false, std::move(why)}; }
  bool operator==(const Outcome&) const = default;
};

/// ActionStart/ActionEnd carry {"action": name, "token": n} in the payload;
/// a matching pair shares both.
struct NeemEvent {
  std::string episode_id;
  std::uint64_t event_id = 0;
  double sim_time = 0.0;
  EventKind kind = EventKind::CommandIssued;
  std::string actor;
  std::vector<std::string> participants;
  std::optional<Outcome> outcome;
  nlohmann::json payload = nlohmann::json::object();

  bool operator==(const NeemEvent&) const = default;
};

nlohmann::json to_json(const NeemEvent& ev);
NeemEvent event_from_json(const nlohmann::json& j);

struct TransformSample {
  double sim_time = 0.0;
  std::string node;
  Pose world_pose;
};

bool operator==(const TransformSample& a, const TransformSample& b);

struct EpisodeMeta {
  std::string episode_id;
  std::string world_hash;
  std::uint64_t seed = 0;
  double dt = 0.01;
  std::string start_wall_clock;  // stored beside the episode, not in it
};

struct Episode {
  EpisodeMeta meta;
  std::vector<NeemEvent> events;
  std::vector<TransformSample> transforms;
};

/// Stable 64-bit FNV-1a digest as 16 hex digits.
std::string content_hash(std::string_view bytes);

/// Append-only episode sink. Events get consecutive ids starting at 1. With a
/// directory, every event and sample is written as one JSON line to
/// <id>.events.jsonl / <id>.transforms.jsonl, flushed on ActionEnd and close.
class EpisodeRecorder {
 public:
  using Listener = std::function<void(const NeemEvent&)>;

  explicit EpisodeRecorder(EpisodeMeta meta, std::optional<std::filesystem::path> dir = std::nullopt);
  ~EpisodeRecorder();
  EpisodeRecorder(const EpisodeRecorder&) = delete;
  EpisodeRecorder& operator=(const EpisodeRecorder&) = delete;

  /// Fills in episode_id and event_id. Throws EpisodeClosed / StorageFailure.
  NeemEvent record(NeemEvent ev);
  void sample(TransformSample s);
  void close();
  bool is_open() const;

  void add_listener(Listener l);
  /// Copy of everything recorded so far.
  Episode episode() const;
  const std::string& id() const { return meta_.episode_id; }

 private:
  void write_line(std::ofstream& out, const nlohmann::json& j);

  EpisodeMeta meta_;
  mutable std::mutex mutex_;
  bool open_ = true;
  std::uint64_t next_id_ = 1;
  std::vector<NeemEvent> events_;
  std::vector<TransformSample> transforms_;
  std::vector<Listener> listeners_;
  std::optional<std::filesystem::path> dir_;
  std::ofstream events_out_;
  std::ofstream transforms_out_;
};

std::filesystem::path events_file(const std::filesystem::path& dir, const std::string& episode_id);
std::filesystem::path transforms_file(const std::filesystem::path& dir, const std::string& episode_id);

/// Loads an episode from its events file (transforms and metadata sidecars
/// are picked up when present).
Episode load_episode(const std::filesystem::path& events_path);
/// All episodes in a directory, ordered by file name.
std::vector<Episode> load_episodes(const std::filesystem::path& dir);

struct EventFilter {
  std::optional<EventKind> kind;
  std::optional<std::string> participant;
  /// "success", "failure", or a specific failure reason.
  std::optional<std::string> outcome;
  std::optional<std::pair<double, double>> time_range;  // inclusive
};

std::vector<NeemEvent> query_events(const Episode& ep, const EventFilter& filter);

/// Interpolated world pose of a sampled node (lerp position, slerp
/// orientation). Throws UnknownNode / OutOfRange.
Pose pose_at(const Episode& ep, const std::string& node, double t);

/// Parameter vectors of every successful action of kind `action`, read from
/// the ActionEnd payload (or its ActionStart) at a dotted `path`. A last path
/// component like "xy" gathers the keys x and y. Throws UnknownPath.
std::vector<Eigen::VectorXd> successful_action_params(const std::vector<Episode>& episodes,
                                                      const std::string& action, const std::string& path);

/// Every ActionEnd closes an earlier, still-open ActionStart with the same
/// action and token; ids strictly increase; time never goes back.
bool check_episode_invariants(const Episode& ep, std::string* why = nullptr);

}  // namespace mentalsim
