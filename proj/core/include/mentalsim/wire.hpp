#pragma once

#include "mentalsim/simulation.hpp"

#include <nlohmann/json.hpp>

#include <atomic>
#include <cstdint>
#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <set>
#include <string>
#include <string_view>
#include <vector>

namespace mentalsim::wire {

/// Sorted keys, no whitespace, floats as %.9g, -0 as 0, non-finite as null.
std::string canonical(const nlohmann::json& j);

enum class Mode { sim, belief };

enum class Direction { published, consumed };

struct TopicSchema {
  std::string name;
  Direction direction = Direction::published;
  double rate = 0.0;  // Hz, published topics; 0 = every event
  std::string type;
};

struct WireConfig {
  Mode mode = Mode::sim;
  double joint_state_rate = 50.0;
  double odom_rate = 50.0;
  double scan_rate = 10.0;
  double camera_rate = 2.0;
};

using ConnId = std::uint64_t;

/// Protocol state machine between clients and one simulation. Frames come in
/// through handle() on any thread; everything that reads or changes the world
/// runs as a queued command on the tick thread. Outbound frames go to the
/// connection's sink, which must not block.
class Hub {
 public:
  using Sink = std::function<void(const std::string&)>;

  Hub(Simulation& sim, WireConfig cfg = {});
  ~Hub();
  Hub(const Hub&) = delete;
  Hub& operator=(const Hub&) = delete;

  ConnId connect(Sink sink);
  void disconnect(ConnId conn);
  void handle(ConnId conn, std::string_view frame);

  /// Advances the simulation one tick and publishes what is due.
  void tick();

  const std::vector<TopicSchema>& topics() const { return topics_; }
  const TopicSchema* topic(std::string_view name) const;
  std::vector<std::string> services() const;
  /// Messages serialized per published topic since start.
  std::map<std::string, std::uint64_t> counters() const;
  Mode mode() const { return cfg_.mode; }

 private:
  struct Connection {
    Sink sink;
    std::set<std::string> advertised;
    std::set<std::string> subscribed;
  };
  using Handler = std::function<nlohmann::json(const nlohmann::json& args)>;

  void send(ConnId conn, const nlohmann::json& msg);
  void status(ConnId conn, const std::string& level, const std::string& msg, const nlohmann::json& id);
  void on_advertise(ConnId conn, const nlohmann::json& f);
  void on_unadvertise(ConnId conn, const nlohmann::json& f);
  void on_publish(ConnId conn, const nlohmann::json& f);
  void on_subscribe(ConnId conn, const nlohmann::json& f);
  void on_unsubscribe(ConnId conn, const nlohmann::json& f);
  void on_call_service(ConnId conn, const nlohmann::json& f);

  /// Checks the message against the topic schema and the latest snapshot,
  /// returning the command to run on the tick thread. Throws on violations.
  Simulation::Command command_for(const std::string& topic, const nlohmann::json& msg) const;

  void publish_cycle(const SceneSnapshot& snap);
  void fan_out(const std::string& topic, const std::function<nlohmann::json()>& make);
  bool due(double rate) const;
  void register_services();

  Simulation& sim_;
  WireConfig cfg_;
  std::vector<TopicSchema> topics_;
  std::map<std::string, Handler, std::less<>> services_;

  mutable std::mutex mutex_;
  std::map<ConnId, Connection> conns_;
  ConnId next_conn_ = 1;
  std::map<std::string, std::uint64_t> counters_;
  std::shared_ptr<const SceneSnapshot> latest_;
  std::shared_ptr<std::atomic<bool>> alive_;
};

/// Websocket transport for a Hub. The server owns its I/O threads; the
/// caller keeps ticking the hub.
class Server {
 public:
  /// Binds host:port (port 0 picks a free port). Throws BindFailure.
  Server(Hub& hub, const std::string& host, unsigned short port);
  ~Server();
  Server(const Server&) = delete;
  Server& operator=(const Server&) = delete;

  unsigned short port() const;
  void stop();

 private:
  struct Impl;
  std::unique_ptr<Impl> impl_;
};

}  // namespace mentalsim::wire
