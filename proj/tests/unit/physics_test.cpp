#include "mentalsim/error.hpp"
#include "mentalsim/harness.hpp"
#include "mentalsim/physics.hpp"
#include "mentalsim/simulation.hpp"

#include "support/worlds.hpp"

#include <gtest/gtest.h>

#include <random>

using namespace mentalsim;
using mentalsim::testing::box_model;
using mentalsim::testing::fixture;
using mentalsim::testing::slurp;

namespace {

WorldSpec table_world() {
  WorldSpec w;
  w.models.push_back(box_model("table", Vec3(0, 0, 0.375), Vec3(1.0, 1.0, 0.75), true));
  w.models.push_back(box_model("box", Vec3(0.1, -0.2, 1.5), Vec3(0.1, 0.1, 0.2)));
  w.semantics.push_back({"box", {"graspable"}, {}});
  return w;
}

double bottom_of(const SceneSnapshot& snap, NodeId id) { return snap.subtree_aabb(id).min.z(); }

}  // namespace

TEST(Collisions, FarApartBoxes) {
  WorldSpec w;
  w.models.push_back(box_model("a", Vec3(0, 0, 0.5), Vec3(1, 1, 1)));
  w.models.push_back(box_model("b", Vec3(3, 0, 0.5), Vec3(1, 1, 1)));
  EXPECT_TRUE(check_collisions(SceneGraph::build(w).snapshot(0)).pairs.empty());
}

TEST(Collisions, OverlapDepth) {
  WorldSpec w;
  w.models.push_back(box_model("a", Vec3(0, 0, 0.5), Vec3(1, 1, 1)));
  w.models.push_back(box_model("b", Vec3(0.8, 0, 0.5), Vec3(1, 1, 1)));
  const auto g = SceneGraph::build(w);
  const auto report = check_collisions(g.snapshot(0));
  ASSERT_EQ(report.pairs.size(), 1u);
  EXPECT_NEAR(report.pairs[0].depth, 0.2, 1e-12);
  EXPECT_LT(report.pairs[0].a, report.pairs[0].b);
  EXPECT_EQ(report.pairs[0].a, g.require("a::body::shape"));
}

TEST(Collisions, AttachedPairExcluded) {
  WorldSpec w;
  w.models.push_back(box_model("gripper", Vec3(0, 0, 1), Vec3(0.1, 0.1, 0.1)));
  w.models.push_back(box_model("milk", Vec3(0.05, 0, 1), Vec3(0.06, 0.06, 0.2)));
  auto g = SceneGraph::build(w);
  EXPECT_EQ(check_collisions(g.snapshot(0)).pairs.size(), 1u);
  g.attach(g.require("milk"), g.require("gripper::body"), Relation::attachment);
  EXPECT_TRUE(check_collisions(g.snapshot(0)).pairs.empty());
}

TEST(Settle, OntoTable) {
  auto g = SceneGraph::build(table_world());
  const NodeId box = g.require("box");
  const auto r = settle(g, box);
  EXPECT_NEAR(r.final_pose.position.z(), 0.85, 1e-9);
  EXPECT_NEAR(g.world_pose(box).position.z(), 0.85, 1e-9);
  ASSERT_TRUE(r.supporter);
  EXPECT_EQ(*r.supporter, g.require("table::body"));
  ASSERT_EQ(g.supports().size(), 1u);
  EXPECT_EQ(g.supports()[0].first, box);
}

TEST(Settle, EmptyFloor) {
  WorldSpec w;
  w.models.push_back(box_model("box", Vec3(5, 5, 2.0), Vec3(0.1, 0.1, 0.2)));
  auto g = SceneGraph::build(w);
  const auto r = settle(g, g.require("box"));
  EXPECT_FALSE(r.supporter);
  EXPECT_NEAR(bottom_of(g.snapshot(0), g.require("box")), 0.0, 1e-12);
}

TEST(Settle, IntoOpenDrawer) {
  auto w = parse_sdf(slurp(fixture("kitchen.sdf"))).world;
  w.models.push_back(box_model("spoon", Vec3(-0.1, -1.7, 1.2), Vec3(0.04, 0.04, 0.1)));
  auto g = SceneGraph::build(w);
  g.set_joint_position("cabinet::drawer_joint", 0.4);
  // Drawer bottom plate: 0.02 thick, centered 0.08 below the drawer frame at z 0.6.
  const double top = 0.6 - 0.08 + 0.01;
  const auto r = settle(g, g.require("spoon"));
  ASSERT_TRUE(r.supporter);
  EXPECT_EQ(*r.supporter, g.require("cabinet::drawer"));
  EXPECT_NEAR(r.final_pose.position.z(), top + 0.05, 1e-9);
}

TEST(Settle, NeverRaisesOrShiftsAndLeavesNoPenetration) {
  std::mt19937_64 rng(41);
  std::uniform_real_distribution<double> xy(-1.5, 1.5), z(0.2, 3.0), s(0.05, 0.4);
  for (int i = 0; i < 300; ++i) {
    WorldSpec w;
    w.models.push_back(box_model("table", Vec3(0, 0, 0.375), Vec3(1.0, 1.0, 0.75), true));
    w.models.push_back(box_model("shelf", Vec3(0.6, 0.6, 1.2), Vec3(0.6, 0.4, 0.05), true));
    w.models.push_back(box_model("box", Vec3(xy(rng), xy(rng), 0), Vec3(s(rng), s(rng), s(rng))));
    auto g = SceneGraph::build(w);
    const NodeId box = g.require("box");
    // Start the drop clear of every other shape.
    Pose start = g.world_pose(box);
    start.position.z() = 1.3 + z(rng);
    g.set_world_pose(box, start);
    const auto r = settle(g, box);
    EXPECT_LE(r.final_pose.position.z(), start.position.z());
    EXPECT_EQ(r.final_pose.position.x(), start.position.x());
    EXPECT_EQ(r.final_pose.position.y(), start.position.y());
    EXPECT_TRUE(r.final_pose.orientation.isApprox(start.orientation, 0.0));
    for (const auto& p : check_collisions(g.snapshot(0)).pairs) {
      const bool involves = g.snapshot(0).top_model_of(p.a) == box || g.snapshot(0).top_model_of(p.b) == box;
      if (involves) EXPECT_LE(p.depth, 1e-6);
    }
  }
}

TEST(Grasp, WithinTolerance) {
  auto g = SceneGraph::build(table_world());
  const auto snap = g.snapshot(0);
  const Vec3 c = snap.subtree_aabb(g.require("box")).center();
  EXPECT_EQ(grasp_check(snap, Pose::translation(c.x() + 0.02, c.y(), c.z())), g.require("box"));
  EXPECT_FALSE(grasp_check(snap, Pose::translation(c.x() + 0.2, c.y(), c.z())));
}

TEST(Grasp, NearestThenLowerId) {
  WorldSpec w;
  w.models.push_back(box_model("a", Vec3(0.04, 0, 1), Vec3(0.02, 0.02, 0.02)));
  w.models.push_back(box_model("b", Vec3(-0.02, 0, 1), Vec3(0.02, 0.02, 0.02)));
  w.models.push_back(box_model("c", Vec3(0, 0.02, 1), Vec3(0.02, 0.02, 0.02)));
  for (const char* n : {"a", "b", "c"}) w.semantics.push_back({n, {"graspable"}, {}});
  const auto g = SceneGraph::build(w);
  // b and c are both 0.02 away; b was added first.
  EXPECT_EQ(grasp_check(g.snapshot(0), Pose::translation(0, 0, 1)), g.require("b"));
}

TEST(Release, SettlesOnTable) {
  WorldSpec w = table_world();
  w.models.push_back(box_model("gripper", Vec3(0.1, -0.2, 1.7), Vec3(0.02, 0.02, 0.02)));
  auto g = SceneGraph::build(w);
  const NodeId box = g.require("box");
  g.attach(box, g.require("gripper::body"), Relation::attachment);
  const auto r = release(g, box);
  EXPECT_NEAR(r.final_pose.position.z(), 0.85, 1e-9);
  EXPECT_EQ(*r.supporter, g.require("table::body"));
  EXPECT_EQ(g.node(box).parent, g.root());
}

TEST(Release, IntoTrashBinInOpenDrawer) {
  const auto bundle = load_world_bundle(fixture("kitchen.sdf"));
  auto w = bundle.world;
  w.models.push_back(box_model("gripper", Vec3(0, 0, 1.3), Vec3(0.02, 0.02, 0.02)));
  w.models.push_back(box_model("wrapper", Vec3(0, 0, 1.2), Vec3(0.05, 0.05, 0.04)));
  Simulation sim(w, {});
  sim.apply(bundle.scenario);
  auto& g = sim.graph();
  // The bin rides in the drawer; pull it out from under the cabinet top.
  EXPECT_NEAR(push_articulation(g, "cabinet::drawer_joint", 0.4, 0.01).achieved, 0.4, 1e-12);
  const Vec3 bin = g.world_pose(g.require("trash_bin")).position;
  const NodeId wrapper = g.require("wrapper");
  g.set_world_pose(g.require("gripper"), Pose::translation(bin.x(), bin.y(), 1.3));
  g.set_world_pose(wrapper, Pose::translation(bin.x(), bin.y(), 1.2));
  g.attach(wrapper, g.require("gripper::body"), Relation::attachment);
  const auto r = release(g, wrapper);
  ASSERT_TRUE(r.supporter);
  EXPECT_EQ(*r.supporter, g.require("trash_bin::bin"));
  // Bin bottom plate is 0.01 thick at the bin origin.
  EXPECT_NEAR(r.final_pose.position.z(), bin.z() + 0.01 + 0.02, 1e-9);
}

TEST(Release, NotGrasped) {
  auto g = SceneGraph::build(table_world());
  try {
    release(g, g.require("box"));
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), Errc::NotGrasped);
  }
}

TEST(Release, GraspReleaseReturnsToSupport) {
  WorldSpec w = table_world();
  w.models.push_back(box_model("gripper", Vec3(0.1, -0.2, 1.7), Vec3(0.02, 0.02, 0.02)));
  auto g = SceneGraph::build(w);
  const NodeId box = g.require("box");
  const auto first = settle(g, box);
  g.attach(box, g.require("gripper::body"), Relation::attachment);
  Pose lifted = g.world_pose(box);
  lifted.position.z() += 0.3;
  g.set_world_pose(box, lifted);
  const auto r = release(g, box);
  EXPECT_TRUE(approx_equal(r.final_pose, first.final_pose, 1e-9));
  EXPECT_EQ(r.supporter, first.supporter);
}

TEST(Push, DrawerUnobstructed) {
  const auto bundle = load_world_bundle(fixture("kitchen.sdf"));
  Simulation sim(bundle.world, {});
  sim.apply(bundle.scenario);
  const auto r = push_articulation(sim.graph(), "cabinet::drawer_joint", 0.3, 0.01);
  EXPECT_FALSE(r.blocked);
  EXPECT_NEAR(r.achieved, 0.3, 1e-12);
}

TEST(Push, LooseBinBlocksDrawer) {
  // Without the scenario the bin is a separate body the drawer's back wall runs into.
  auto g = SceneGraph::build(parse_sdf(slurp(fixture("kitchen.sdf"))).world);
  const auto r = push_articulation(g, "cabinet::drawer_joint", 0.3, 0.01);
  EXPECT_TRUE(r.blocked);
  EXPECT_LT(r.achieved, 0.3);
}

TEST(Push, TargetClampedToLimit) {
  auto g = SceneGraph::build(parse_sdf(slurp(fixture("fridge.sdf"))).world);
  const auto r = push_articulation(g, "fridge::door_hinge", 5.0, 0.01);
  EXPECT_NEAR(r.achieved, 1.6, 1e-12);
}

TEST(Push, DoorBlockedByCrate) {
  auto g = SceneGraph::build(parse_sdf(slurp(fixture("door_block.sdf"))).world);
  const auto r = push_articulation(g, "cupboard::hinge", 1.6, 0.01);
  EXPECT_TRUE(r.blocked);
  EXPECT_LE(r.achieved, 0.8);
  EXPECT_GT(r.achieved, 0.6);
  ASSERT_FALSE(r.contacts.empty());
  // Sweep oracle: the panel's far corner first reaches the crate's near face
  // (y = 0.36) where 0.5*sin(q) + 0.01*cos(q) = 0.36.
  double q_hit = 0.0;
  for (double q = 0.0; q < 1.6; q += 1e-5)
    if (0.5 * std::sin(q) + 0.01 * std::cos(q) >= 0.36) {
      q_hit = q;
      break;
    }
  EXPECT_LE(r.achieved, q_hit);
  EXPECT_GT(r.achieved, q_hit - 0.05);
}

TEST(Push, UnknownJoint) {
  auto g = SceneGraph::build(parse_sdf(slurp(fixture("door_block.sdf"))).world);
  try {
    push_articulation(g, "cupboard::nope", 1.0, 0.01);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), Errc::UnknownJoint);
  }
}

TEST(Push, SimulationEmitsBlockedCollision) {
  const auto w = parse_sdf(slurp(fixture("door_block.sdf"))).world;
  Simulation sim(w, {});
  std::vector<NeemEvent> events;
  sim.on_event([&](const NeemEvent& e) { events.push_back(e); });
  sim.command_joint("cupboard::hinge", 1.6, JointDriveMode::dynamic);
  sim.run_for(3.0);
  const double q = sim.graph().joint(sim.graph().require_joint("cupboard::hinge")).position;
  EXPECT_LE(q, 0.8);
  EXPECT_GT(q, 0.6);
  const auto hit = std::find_if(events.begin(), events.end(), [](const NeemEvent& e) {
    return e.kind == EventKind::Collision && e.payload.value("blocked", false);
  });
  ASSERT_NE(hit, events.end());
  EXPECT_EQ(hit->payload.at("joint"), "cupboard::hinge");
}
