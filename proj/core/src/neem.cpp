#include "mentalsim/neem.hpp"

#include "mentalsim/error.hpp"

#include <algorithm>
#include <cstdio>
#include <map>
#include <set>
#include <sstream>

namespace mentalsim {

using nlohmann::json;

namespace {

constexpr std::pair<EventKind, const char*> kKindNames[] = {
    {EventKind::ActionStart, "ActionStart"},
    {EventKind::ActionEnd, "ActionEnd"},
    {EventKind::Grasp, "Grasp"},
    {EventKind::Release, "Release"},
    {EventKind::Collision, "Collision"},
    {EventKind::Settle, "Settle"},
    {EventKind::PerceiveRequest, "PerceiveRequest"},
    {EventKind::PerceiveResult, "PerceiveResult"},
    {EventKind::CommandIssued, "CommandIssued"},
};

}  // namespace

const char* to_string(EventKind k) {
  for (const auto& [kind, name] : kKindNames)
    if (kind == k) return name;
  return "?";
}

std::optional<EventKind> event_kind_from_string(std::string_view s) {
  for (const auto& [kind, name] : kKindNames)
    if (s == name) return kind;
  return std::nullopt;
}

json to_json(const NeemEvent& ev) {
  json j;
  j["episode_id"] = ev.episode_id;
  j["event_id"] = ev.event_id;
  j["sim_time"] = ev.sim_time;
  j["kind"] = to_string(ev.kind);
  j["actor"] = ev.actor;
  j["participants"] = ev.participants;
  if (ev.outcome) {
    j["outcome"] = {{"success", ev.outcome->success}};
    if (!ev.outcome->success) j["outcome"]["reason"] = ev.outcome->reason;
  }
  j["payload"] = ev.payload;
  return j;
}

NeemEvent event_from_json(const json& j) {
  NeemEvent ev;
  ev.episode_id = j.at("episode_id").get<std::string>();
  ev.event_id = j.at("event_id").get<std::uint64_t>();
  ev.sim_time = j.at("sim_time").get<double>();
  const auto kind = event_kind_from_string(j.at("kind").get<std::string>());
  if (!kind) throw Error(Errc::InvalidArgument, "unknown event kind " + j.at("kind").dump());
  ev.kind = *kind;
  ev.actor = j.at("actor").get<std::string>();
  ev.participants = j.at("participants").get<std::vector<std::string>>();
  if (j.contains("outcome")) {
    const auto& o = j.at("outcome");
    ev.outcome = Outcome{o.at("success").get<bool>(), o.value("reason", std::string())};
  }
  ev.payload = j.value("payload", json::object());
  return ev;
}

bool operator==(const TransformSample& a, const TransformSample& b) {
  return a.sim_time == b.sim_time && a.node == b.node && a.world_pose.position == b.world_pose.position &&
         a.world_pose.orientation.coeffs() == b.world_pose.orientation.coeffs();
}

std::string content_hash(std::string_view bytes) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : bytes) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

namespace {

json sample_to_json(const TransformSample& s) {
  const auto& p = s.world_pose.position;
  const auto& q = s.world_pose.orientation;
  return {{"t", s.sim_time}, {"node", s.node}, {"p", {p.x(), p.y(), p.z()}}, {"q", {q.w(), q.x(), q.y(), q.z()}}};
}

TransformSample sample_from_json(const json& j) {
  TransformSample s;
  s.sim_time = j.at("t").get<double>();
  s.node = j.at("node").get<std::string>();
  const auto p = j.at("p").get<std::vector<double>>();
  const auto q = j.at("q").get<std::vector<double>>();
  if (p.size() != 3 || q.size() != 4) throw Error(Errc::InvalidArgument, "bad transform sample");
  // assign directly: re-normalizing would break bit-exact round trips
  s.world_pose.position = Vec3(p[0], p[1], p[2]);
  s.world_pose.orientation = Quat(q[0], q[1], q[2], q[3]);
  return s;
}

}  // namespace

std::filesystem::path events_file(const std::filesystem::path& dir, const std::string& episode_id) {
  return dir / (episode_id + ".events.jsonl");
}

std::filesystem::path transforms_file(const std::filesystem::path& dir, const std::string& episode_id) {
  return dir / (episode_id + ".transforms.jsonl");
}

EpisodeRecorder::EpisodeRecorder(EpisodeMeta meta, std::optional<std::filesystem::path> dir)
    : meta_(std::move(meta)), dir_(std::move(dir)) {
  if (!dir_) return;
  std::error_code ec;
  std::filesystem::create_directories(*dir_, ec);
  events_out_.open(events_file(*dir_, meta_.episode_id), std::ios::trunc);
  transforms_out_.open(transforms_file(*dir_, meta_.episode_id), std::ios::trunc);
  if (!events_out_ || !transforms_out_)
    throw Error(Errc::StorageFailure, "cannot open episode files in " + dir_->string());
  write_line(events_out_, {{"type", "header"},
                           {"episode_id", meta_.episode_id},
                           {"world_hash", meta_.world_hash},
                           {"seed", meta_.seed},
                           {"dt", meta_.dt}});
  std::ofstream side(*dir_ / (meta_.episode_id + ".meta.json"), std::ios::trunc);
  side << json{{"start_wall_clock", meta_.start_wall_clock}}.dump() << '\n';
}

EpisodeRecorder::~EpisodeRecorder() {
  try {
    close();
  } catch (...) {
  }
}

void EpisodeRecorder::write_line(std::ofstream& out, const json& j) {
  out << j.dump() << '\n';
  if (!out) throw Error(Errc::StorageFailure, "write failed for episode " + meta_.episode_id);
}

NeemEvent EpisodeRecorder::record(NeemEvent ev) {
  std::vector<Listener> listeners;
  {
    std::lock_guard lock(mutex_);
    if (!open_) throw Error(Errc::EpisodeClosed, "episode " + meta_.episode_id + " is closed");
    ev.episode_id = meta_.episode_id;
    ev.event_id = next_id_++;
    if (dir_) {
      json line = to_json(ev);
      line["type"] = "event";
      write_line(events_out_, line);
      if (ev.kind == EventKind::ActionEnd) events_out_.flush();
    }
    events_.push_back(ev);
    listeners = listeners_;
  }
  for (const auto& l : listeners) l(ev);
  return ev;
}

void EpisodeRecorder::sample(TransformSample s) {
  std::lock_guard lock(mutex_);
  if (!open_) throw Error(Errc::EpisodeClosed, "episode " + meta_.episode_id + " is closed");
  if (dir_) write_line(transforms_out_, sample_to_json(s));
  transforms_.push_back(std::move(s));
}

void EpisodeRecorder::close() {
  std::lock_guard lock(mutex_);
  if (!open_) return;
  open_ = false;
  if (dir_) {
    events_out_.flush();
    transforms_out_.flush();
    events_out_.close();
    transforms_out_.close();
  }
}

bool EpisodeRecorder::is_open() const {
  std::lock_guard lock(mutex_);
  return open_;
}

void EpisodeRecorder::add_listener(Listener l) {
  std::lock_guard lock(mutex_);
  listeners_.push_back(std::move(l));
}

Episode EpisodeRecorder::episode() const {
  std::lock_guard lock(mutex_);
  return {meta_, events_, transforms_};
}

Episode load_episode(const std::filesystem::path& events_path) {
  std::ifstream in(events_path);
  if (!in) throw Error(Errc::StorageFailure, "cannot read " + events_path.string());
  Episode ep;
  std::string line;
  bool header = false;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    json j;
    try {
      j = json::parse(line);
    } catch (const json::exception& e) {
      throw Error(Errc::StorageFailure, events_path.string() + ":" + std::to_string(lineno) + ": " + e.what());
    }
    const std::string type = j.value("type", "");
    if (type == "header") {
      ep.meta.episode_id = j.at("episode_id").get<std::string>();
      ep.meta.world_hash = j.at("world_hash").get<std::string>();
      ep.meta.seed = j.at("seed").get<std::uint64_t>();
      ep.meta.dt = j.at("dt").get<double>();
      header = true;
    } else if (type == "event") {
      ep.events.push_back(event_from_json(j));
    }
  }
  if (!header) throw Error(Errc::StorageFailure, events_path.string() + ": missing header");

  const auto dir = events_path.parent_path();
  if (std::ifstream tf(transforms_file(dir, ep.meta.episode_id)); tf) {
    while (std::getline(tf, line))
      if (!line.empty()) ep.transforms.push_back(sample_from_json(json::parse(line)));
  }
  if (std::ifstream mf(dir / (ep.meta.episode_id + ".meta.json")); mf) {
    const json m = json::parse(mf, nullptr, false);
    if (m.is_object()) ep.meta.start_wall_clock = m.value("start_wall_clock", "");
  }
  return ep;
}

std::vector<Episode> load_episodes(const std::filesystem::path& dir) {
  std::vector<std::filesystem::path> files;
  std::error_code ec;
  for (const auto& entry : std::filesystem::directory_iterator(dir, ec)) {
    const std::string name = entry.path().filename().string();
    if (name.size() > 13 && name.ends_with(".events.jsonl")) files.push_back(entry.path());
  }
  std::sort(files.begin(), files.end());
  std::vector<Episode> out;
  out.reserve(files.size());
  for (const auto& f : files) out.push_back(load_episode(f));
  return out;
}

std::vector<NeemEvent> query_events(const Episode& ep, const EventFilter& filter) {
  std::vector<NeemEvent> out;
  for (const auto& ev : ep.events) {
    if (filter.kind && ev.kind != *filter.kind) continue;
    if (filter.participant && std::find(ev.participants.begin(), ev.participants.end(),
                                        *filter.participant) == ev.participants.end())
      continue;
    if (filter.outcome) {
      if (!ev.outcome) continue;
      const std::string& want = *filter.outcome;
      if (want == "success") {
        if (!ev.outcome->success) continue;
      } else if (want == "failure") {
        if (ev.outcome->success) continue;
      } else if (ev.outcome->success || ev.outcome->reason != want) {
        continue;
      }
    }
    if (filter.time_range &&
        (ev.sim_time < filter.time_range->first || ev.sim_time > filter.time_range->second))
      continue;
    out.push_back(ev);
  }
  return out;
}

Pose pose_at(const Episode& ep, const std::string& node, double t) {
  std::vector<const TransformSample*> samples;
  for (const auto& s : ep.transforms)
    if (s.node == node) samples.push_back(&s);
  if (samples.empty()) throw Error(Errc::UnknownNode, "no samples for '" + node + "'");
  std::stable_sort(samples.begin(), samples.end(),
                   [](const auto* a, const auto* b) { return a->sim_time < b->sim_time; });
  if (t < samples.front()->sim_time || t > samples.back()->sim_time)
    throw Error(Errc::OutOfRange, "t=" + std::to_string(t) + " outside sampled span of '" + node + "'");
  const auto hi = std::lower_bound(samples.begin(), samples.end(), t,
                                   [](const auto* s, double v) { return s->sim_time < v; });
  if ((*hi)->sim_time == t || hi == samples.begin()) return (*hi)->world_pose;
  const TransformSample& a = **(hi - 1);
  const TransformSample& b = **hi;
  const double s = (t - a.sim_time) / (b.sim_time - a.sim_time);
  return {a.world_pose.position + s * (b.world_pose.position - a.world_pose.position),
          a.world_pose.orientation.slerp(s, b.world_pose.orientation)};
}

namespace {

std::vector<std::string> split_path(const std::string& path) {
  std::vector<std::string> parts;
  std::stringstream ss(path);
  std::string part;
  while (std::getline(ss, part, '.')) parts.push_back(part);
  return parts;
}

std::optional<Eigen::VectorXd> resolve(const json& payload, const std::vector<std::string>& parts) {
  const json* cur = &payload;
  for (std::size_t i = 0; i < parts.size(); ++i) {
    const std::string& key = parts[i];
    const bool last = i + 1 == parts.size();
    if (cur->is_object() && cur->contains(key)) {
      cur = &cur->at(key);
      continue;
    }
    // "xy" style gather over single-letter keys
    if (last && cur->is_object() && key.size() > 1) {
      Eigen::VectorXd v(static_cast<Eigen::Index>(key.size()));
      for (std::size_t c = 0; c < key.size(); ++c) {
        const std::string k(1, key[c]);
        if (!cur->contains(k) || !cur->at(k).is_number()) return std::nullopt;
        v[static_cast<Eigen::Index>(c)] = cur->at(k).get<double>();
      }
      return v;
    }
    return std::nullopt;
  }
  if (cur->is_number()) return Eigen::VectorXd::Constant(1, cur->get<double>());
  if (cur->is_array() && !cur->empty()) {
    Eigen::VectorXd v(static_cast<Eigen::Index>(cur->size()));
    for (std::size_t c = 0; c < cur->size(); ++c) {
      if (!(*cur)[c].is_number()) return std::nullopt;
      v[static_cast<Eigen::Index>(c)] = (*cur)[c].get<double>();
    }
    return v;
  }
  return std::nullopt;
}

}  // namespace

std::vector<Eigen::VectorXd> successful_action_params(const std::vector<Episode>& episodes,
                                                      const std::string& action, const std::string& path) {
  const auto parts = split_path(path);
  if (parts.empty()) throw Error(Errc::UnknownPath, "empty parameter path");
  std::vector<Eigen::VectorXd> out;
  for (const auto& ep : episodes) {
    std::map<json, const NeemEvent*> starts;
    for (const auto& ev : ep.events) {
      if (ev.payload.value("action", "") != action) continue;
      const json token = ev.payload.value("token", json());
      if (ev.kind == EventKind::ActionStart) {
        starts[token] = &ev;
        continue;
      }
      if (ev.kind != EventKind::ActionEnd || !ev.outcome || !ev.outcome->success) continue;
      auto v = resolve(ev.payload, parts);
      if (!v) {
        const auto it = starts.find(token);
        if (it != starts.end()) v = resolve(it->second->payload, parts);
      }
      if (!v)
        throw Error(Errc::UnknownPath, "'" + path + "' not found in " + ep.meta.episode_id + " event " +
                                           std::to_string(ev.event_id));
      out.push_back(*v);
    }
  }
  return out;
}

bool check_episode_invariants(const Episode& ep, std::string* why) {
  auto fail = [&](const std::string& msg) {
    if (why) *why = msg;
    return false;
  };
  std::set<std::pair<std::string, std::string>> open;
  for (std::size_t i = 0; i < ep.events.size(); ++i) {
    const auto& ev = ep.events[i];
    if (i > 0) {
      if (ev.event_id <= ep.events[i - 1].event_id) return fail("event ids not increasing at " + std::to_string(i));
      if (ev.sim_time < ep.events[i - 1].sim_time) return fail("time went back at " + std::to_string(i));
    }
    if (ev.kind != EventKind::ActionStart && ev.kind != EventKind::ActionEnd) continue;
    const auto key = std::make_pair(ev.payload.value("action", ""), ev.payload.value("token", json()).dump());
    if (ev.kind == EventKind::ActionStart) {
      if (!open.insert(key).second) return fail("token reused while open: " + key.first + "#" + key.second);
    } else if (open.erase(key) == 0) {
      return fail("ActionEnd without ActionStart: " + key.first + "#" + key.second);
    }
  }
  return true;
}

}  // namespace mentalsim
