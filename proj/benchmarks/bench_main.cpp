#include "mentalsim/harness.hpp"
#include "mentalsim/physics.hpp"
#include "mentalsim/sensors.hpp"
#include "mentalsim/wire.hpp"

#include <benchmark/benchmark.h>

#include <string>

using namespace mentalsim;

namespace {

const WorldBundle& kitchen() {
  static const WorldBundle b = load_world_bundle(std::string(MENTALSIM_SOURCE_DIR) + "/fixtures/kitchen.sdf");
  return b;
}

void BM_Tick(benchmark::State& state) {
  Simulation sim(kitchen().world, {});
  sim.apply(kitchen().scenario);
  for (auto _ : state) {
    sim.command_base(0.2, 0.0, 0.1);
    benchmark::DoNotOptimize(sim.tick());
  }
}
BENCHMARK(BM_Tick);

void BM_HubTick(benchmark::State& state) {
  Simulation sim(kitchen().world, {});
  sim.apply(kitchen().scenario);
  wire::Hub hub(sim);
  std::size_t bytes = 0;
  const auto conn = hub.connect([&](const std::string& f) { bytes += f.size(); });
  for (const char* topic : {"/joint_states", "/odom", "/scan", "/camera/visible_objects"})
    hub.handle(conn, std::string(R"({"op":"subscribe","topic":")") + topic + "\"}");
  for (auto _ : state) hub.tick();
  state.SetBytesProcessed(static_cast<std::int64_t>(bytes));
}
BENCHMARK(BM_HubTick);

void BM_Scan(benchmark::State& state) {
  Simulation sim(kitchen().world, {});
  sim.apply(kitchen().scenario);
  const SceneSnapshot snap = sim.snapshot();
  for (auto _ : state) benchmark::DoNotOptimize(scan(snap, sim.options().laser));
}
BENCHMARK(BM_Scan);

void BM_Visibility(benchmark::State& state) {
  Simulation sim(kitchen().world, {});
  sim.apply(kitchen().scenario);
  const SceneSnapshot snap = sim.snapshot();
  const NodeId milk = sim.graph().require("milk");
  for (auto _ : state) benchmark::DoNotOptimize(visibility(snap, sim.options().camera, milk));
}
BENCHMARK(BM_Visibility);

void BM_FindViewPose(benchmark::State& state) {
  Simulation sim(kitchen().world, {});
  sim.apply(kitchen().scenario);
  const SceneSnapshot snap = sim.snapshot();
  const NodeId milk = sim.graph().require("milk");
  for (auto _ : state)
    benchmark::DoNotOptimize(
        find_view_pose(snap, milk, sim.options().camera, sim.options().robot.footprint, sim.view_rig()));
}
BENCHMARK(BM_FindViewPose);

void BM_Collisions(benchmark::State& state) {
  Simulation sim(kitchen().world, {});
  sim.apply(kitchen().scenario);
  const SceneSnapshot snap = sim.snapshot();
  for (auto _ : state) benchmark::DoNotOptimize(check_collisions(snap));
}
BENCHMARK(BM_Collisions);

void BM_Canonical(benchmark::State& state) {
  nlohmann::json msg = {{"op", "publish"}, {"topic", "/scan"}};
  for (int i = 0; i < 181; ++i) msg["msg"]["ranges"].push_back(1.0 + i * 0.0137);
  for (auto _ : state) benchmark::DoNotOptimize(wire::canonical(msg));
}
BENCHMARK(BM_Canonical);

void BM_FetchEpisode(benchmark::State& state) {
  const FetchTask task = FetchTask::from_json(kitchen().scenario.extra.at("fetch"));
  const UniformAnnulusSampler sampler(task.r_min, task.r_max);
  std::uint64_t seed = 0;
  for (auto _ : state)
    benchmark::DoNotOptimize(fetch_with_retries(kitchen().world, kitchen().scenario, sampler, task, seed++, {}));
}
BENCHMARK(BM_FetchEpisode)->Unit(benchmark::kMillisecond);

}  // namespace

BENCHMARK_MAIN();
