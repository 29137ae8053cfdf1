#include "mentalsim/error.hpp"
#include "mentalsim/harness.hpp"
#include "mentalsim/learning.hpp"
#include "mentalsim/wire.hpp"

#include <CLI11.hpp>

#include <atomic>
#include <chrono>
#include <csignal>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <thread>

using namespace mentalsim;
using nlohmann::json;

namespace {

std::atomic<bool> g_stop{false};

void on_signal(int) { g_stop = true; }

FetchTask fetch_task(const Scenario& s) {
  return s.extra.contains("fetch") ? FetchTask::from_json(s.extra.at("fetch")) : FetchTask{};
}

int cmd_parse(const std::string& file, const std::string& semantics, bool serialize) {
  WorldBundle b = load_world_bundle(file);
  if (!semantics.empty()) {
    std::ifstream in(semantics);
    if (!in) throw Error(Errc::StorageFailure, "cannot read " + semantics);
    const std::string text{std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
    b.world.semantics = parse_semantics(text, b.world);
  }
  for (const auto& w : b.warnings) std::cerr << "warning: " << w << "\n";
  if (serialize) {
    std::cout << serialize_sdf(b.world);
    return 0;
  }
  std::size_t links = 0, joints = 0;
  for (const auto& m : b.world.models) {
    links += m.links.size();
    joints += m.joints.size();
  }
  std::cout << "world " << b.world.name << ": " << b.world.models.size() << " models, " << links << " links, "
            << joints << " joints, " << b.world.semantics.size() << " semantic tags, hash " << b.hash << "\n";
  for (const auto& m : b.world.models)
    std::cout << "  " << m.name << (m.is_static ? " (static)" : "") << ": " << m.links.size() << " links, "
              << m.joints.size() << " joints\n";
  return 0;
}

struct ServeArgs {
  std::string world;
  std::string host = "127.0.0.1";
  unsigned short port = 9090;
  std::string mode = "sim";
  std::string neem_dir;
  double duration = 0.0;
  double speed = 1.0;
  std::uint64_t seed = 0;
};

int cmd_serve(const ServeArgs& a) {
  const WorldBundle b = load_world_bundle(a.world);
  for (const auto& w : b.warnings) std::cerr << "warning: " << w << "\n";
  SimulationOptions opts;
  opts.seed = seed_from_env(a.seed);
  Simulation sim(b.world, opts);
  sim.apply(b.scenario);
  if (!a.neem_dir.empty()) std::filesystem::create_directories(a.neem_dir);
  sim.start_episode("session", a.neem_dir.empty() ? std::nullopt : std::optional<std::filesystem::path>(a.neem_dir),
                    b.hash);

  wire::WireConfig cfg;
  cfg.mode = a.mode == "belief" ? wire::Mode::belief : wire::Mode::sim;
  wire::Hub hub(sim, cfg);
  wire::Server server(hub, a.host, a.port);
  std::cerr << "serving " << a.world << " on ws://" << a.host << ":" << server.port() << " (" << a.mode
            << " mode)\n";

  std::signal(SIGINT, on_signal);
  std::signal(SIGTERM, on_signal);
  const auto period = std::chrono::duration<double>(sim.dt() / a.speed);
  auto next = std::chrono::steady_clock::now();
  while (!g_stop && (a.duration <= 0.0 || sim.sim_time() < a.duration)) {
    hub.tick();
    next += std::chrono::duration_cast<std::chrono::steady_clock::duration>(period);
    std::this_thread::sleep_until(next);
  }
  server.stop();
  sim.end_episode();
  return 0;
}

int cmd_run(const std::string& world, const std::string& plan_file, std::uint64_t seed, const std::string& neem_dir,
            const std::string& episode_id) {
  const WorldBundle b = load_world_bundle(world);
  for (const auto& w : b.warnings) std::cerr << "warning: " << w << "\n";
  const Plan plan = load_plan(plan_file);
  RunOptions opts;
  opts.episode_id = episode_id;
  opts.world_hash = b.hash;
  if (!neem_dir.empty()) {
    std::filesystem::create_directories(neem_dir);
    opts.neem_dir = neem_dir;
  }
  const EpisodeResult r = run_plan(b.world, b.scenario, plan, seed_from_env(seed), opts);
  json out = {{"episode_id", r.episode_id}, {"success", r.outcome.success}, {"retries", r.retries},
              {"duration", r.duration}};
  if (!r.outcome.success) out["reason"] = r.outcome.reason;
  std::cout << wire::canonical(out) << "\n";
  return r.outcome.success ? 0 : 3;
}

int cmd_learn(const std::string& dir, const std::string& action, const std::string& path, const std::string& out) {
  const GaussianModel m = train_from_neems(dir, action, path);
  save_model(m, out);
  std::cerr << "fitted " << m.dim << "-d model on " << m.n_samples << " points -> " << out << "\n";
  return 0;
}

struct EvalArgs {
  std::string world;
  int episodes = 200;
  int successes = 0;
  std::string sampler = "uniform";
  std::string baseline;
  std::uint64_t seed = 42;
  std::string format = "table";
  std::string neem_dir;
};

json stats_json(const std::string& sampler, const RetryStats& s) {
  return {{"sampler", sampler}, {"n", s.n},           {"mean", s.mean},
          {"sd", s.sd},         {"sd_defined", s.sd_defined}, {"failures", s.failures}};
}

int cmd_eval(const EvalArgs& a) {
  const WorldBundle b = load_world_bundle(a.world);
  for (const auto& w : b.warnings) std::cerr << "warning: " << w << "\n";
  const FetchTask task = fetch_task(b.scenario);
  const std::uint64_t seed = seed_from_env(a.seed);

  auto arm = [&](const std::string& spec, const std::string& prefix) {
    const auto sampler = make_sampler(spec, task.r_min, task.r_max);
    RunOptions opts;
    opts.world_hash = b.hash;
    if (!a.neem_dir.empty()) {
      std::filesystem::create_directories(a.neem_dir);
      opts.neem_dir = a.neem_dir;
    }
    if (a.successes > 0)
      return collect_successes(b.world, b.scenario, *sampler, task, a.successes, a.episodes, seed, opts, prefix).stats;
    return run_experiment(b.world, b.scenario, *sampler, task, a.episodes, seed, opts, prefix).stats;
  };

  std::vector<json> rows;
  std::optional<RetryStats> base;
  if (!a.baseline.empty()) {
    base = arm(a.baseline, "baseline");
    rows.push_back(stats_json(a.baseline, *base));
  }
  const RetryStats s = arm(a.sampler, "eval");
  json row = stats_json(a.sampler, s);
  if (base) {
    row["baseline"] = a.baseline;
    row["improvement"] = improvement(*base, s);
  }
  rows.push_back(row);

  if (a.format == "records") {
    for (const auto& r : rows) std::cout << wire::canonical(r) << "\n";
    return 0;
  }
  std::printf("%-28s %6s %8s %8s %9s %12s\n", "sampler", "n", "mean", "sd", "failures", "improvement");
  for (const auto& r : rows) {
    char imp[32] = "-";
    if (r.contains("improvement")) std::snprintf(imp, sizeof imp, "%.2f%%", r.at("improvement").get<double>());
    std::printf("%-28s %6d %8.3f %8.3f %9d %12s\n", r.at("sampler").get<std::string>().c_str(), r.at("n").get<int>(),
                r.at("mean").get<double>(), r.at("sd").get<double>(), r.at("failures").get<int>(), imp);
  }
  return 0;
}

struct QueryArgs {
  std::string source;
  std::string world;
  std::string kind, participant, outcome;
  std::optional<double> t_min, t_max;
  std::string pose_node;
  double at = 0.0;
  std::string storage;
  bool containers = false;
};

int cmd_query(const QueryArgs& a) {
  if (!a.world.empty()) {
    const WorldBundle b = load_world_bundle(a.world);
    Simulation sim(b.world, {});
    sim.apply(b.scenario);
    const SceneGraph& g = sim.graph();
    if (a.containers) {
      for (const auto& c : g.query_containers())
        std::cout << wire::canonical({{"name", c.name},
                                      {"joint", c.joint},
                                      {"kind", to_string(c.kind)},
                                      {"position", c.position},
                                      {"lower", c.limits.lower},
                                      {"upper", c.limits.upper}})
                  << "\n";
    }
    if (!a.storage.empty())
      for (NodeId id : g.query_storage_location(a.storage)) std::cout << g.node(id).name << "\n";
    return 0;
  }

  std::vector<Episode> episodes;
  if (std::filesystem::is_directory(a.source)) episodes = load_episodes(a.source);
  else episodes.push_back(load_episode(a.source));

  if (!a.pose_node.empty()) {
    for (const auto& ep : episodes) {
      const Pose p = pose_at(ep, a.pose_node, a.at);
      const Quat& q = p.orientation;
      std::cout << wire::canonical({{"episode_id", ep.meta.episode_id},
                                    {"node", a.pose_node},
                                    {"t", a.at},
                                    {"p", {p.position.x(), p.position.y(), p.position.z()}},
                                    {"q", {q.w(), q.x(), q.y(), q.z()}}})
                << "\n";
    }
    return 0;
  }

  EventFilter f;
  if (!a.kind.empty()) {
    f.kind = event_kind_from_string(a.kind);
    if (!f.kind) throw Error(Errc::InvalidArgument, "unknown event kind '" + a.kind + "'");
  }
  if (!a.participant.empty()) f.participant = a.participant;
  if (!a.outcome.empty()) f.outcome = a.outcome;
  if (a.t_min || a.t_max) f.time_range = {a.t_min.value_or(-1e300), a.t_max.value_or(1e300)};
  for (const auto& ep : episodes)
    for (const auto& ev : query_events(ep, f)) std::cout << wire::canonical(to_json(ev)) << "\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Robot mental simulation: worlds, plans, episodic memories and learned samplers"};
  app.require_subcommand(1);

  std::string parse_file, parse_semantics;
  bool serialize = false;
  auto* parse = app.add_subcommand("parse", "Load a world file and print its structure");
  parse->add_option("world", parse_file, "SDF world file")->required();
  parse->add_option("--semantics", parse_semantics, "Semantics sidecar (default: <stem>.semantics.json)");
  parse->add_flag("--serialize", serialize, "Print the world back as SDF");

  ServeArgs serve_args;
  auto* serve = app.add_subcommand("serve", "Run the simulation behind a websocket");
  serve->add_option("world", serve_args.world, "SDF world file")->required();
  serve->add_option("--host", serve_args.host, "Address to bind")->capture_default_str();
  serve->add_option("--port", serve_args.port, "Port to bind, 0 for any")->capture_default_str();
  serve->add_option("--mode", serve_args.mode, "sim or belief")
      ->check(CLI::IsMember({"sim", "belief"}))
      ->capture_default_str();
  serve->add_option("--neem-dir", serve_args.neem_dir, "Record the session here");
  serve->add_option("--duration", serve_args.duration, "Stop after this much simulated time (s)");
  serve->add_option("--speed", serve_args.speed, "Simulated seconds per wall second")
      ->check(CLI::PositiveNumber)
      ->capture_default_str();
  serve->add_option("--seed", serve_args.seed, "Random seed")->capture_default_str();

  std::string run_world, run_plan_file, run_neem, run_id = "run";
  std::uint64_t run_seed = 0;
  auto* run = app.add_subcommand("run", "Execute a plan in a fresh simulation");
  run->add_option("world", run_world, "SDF world file")->required();
  run->add_option("plan", run_plan_file, "Plan JSON file")->required();
  run->add_option("--seed", run_seed, "Random seed")->capture_default_str();
  run->add_option("--neem-dir", run_neem, "Write the episode here");
  run->add_option("--episode-id", run_id, "Episode id")->capture_default_str();

  std::string learn_dir, learn_action = "fetch", learn_path = "base_pose.xy", learn_out = "model.json";
  auto* learn = app.add_subcommand("learn", "Fit a Gaussian to successful action parameters");
  learn->add_option("neem_dir", learn_dir, "Directory of recorded episodes")->required();
  learn->add_option("--action", learn_action, "Action name")->capture_default_str();
  learn->add_option("--param,--path", learn_path, "Parameter path in the action payload")->capture_default_str();
  learn->add_option("-o,--out", learn_out, "Model file")->capture_default_str();

  EvalArgs eval_args;
  auto* eval = app.add_subcommand("eval", "Run fetch-and-deliver episodes and report retry statistics");
  eval->add_option("world", eval_args.world, "SDF world file")->required();
  eval->add_option("--episodes", eval_args.episodes, "Episodes per sampler")
      ->check(CLI::PositiveNumber)
      ->capture_default_str();
  eval->add_option("--successes", eval_args.successes,
                   "Stop each arm once this many episodes succeeded (--episodes caps the total)")
      ->check(CLI::NonNegativeNumber);
  eval->add_option("--sampler", eval_args.sampler, "uniform or model:<file>")->capture_default_str();
  eval->add_option("--baseline", eval_args.baseline, "Sampler to compare against");
  eval->add_option("--seed", eval_args.seed, "Experiment seed")->capture_default_str();
  eval->add_option("--format", eval_args.format, "table or records")
      ->check(CLI::IsMember({"table", "records"}))
      ->capture_default_str();
  eval->add_option("--neem-dir", eval_args.neem_dir, "Write every episode here");

  QueryArgs q;
  auto* query = app.add_subcommand("query", "Query recorded episodes or a world's semantics");
  query->add_option("source", q.source, "Episode directory or .events.jsonl file");
  query->add_option("--world", q.world, "Query this world instead of episodes");
  query->add_flag("--containers", q.containers, "List containers and how they open (with --world)");
  query->add_option("--storage", q.storage, "Where items of this class are stored (with --world)");
  query->add_option("--kind", q.kind, "Event kind");
  query->add_option("--participant", q.participant, "Event participant");
  query->add_option("--outcome", q.outcome, "success, failure or a failure reason");
  query->add_option("--t-min", q.t_min, "Earliest sim time");
  query->add_option("--t-max", q.t_max, "Latest sim time");
  query->add_option("--pose", q.pose_node, "Interpolated pose of this node");
  query->add_option("--at", q.at, "Time for --pose");

  CLI11_PARSE(app, argc, argv);

  try {
    if (*parse) return cmd_parse(parse_file, parse_semantics, serialize);
    if (*serve) return cmd_serve(serve_args);
    if (*run) return cmd_run(run_world, run_plan_file, run_seed, run_neem, run_id);
    if (*learn) return cmd_learn(learn_dir, learn_action, learn_path, learn_out);
    if (*eval) return cmd_eval(eval_args);
    if (*query) {
      if (q.world.empty() && q.source.empty()) throw Error(Errc::InvalidArgument, "query needs a source or --world");
      return cmd_query(q);
    }
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
