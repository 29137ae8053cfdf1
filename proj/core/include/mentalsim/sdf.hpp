#pragma once

#include "mentalsim/geometry.hpp"

#include <string>
#include <string_view>
#include <vector>

namespace mentalsim {

/// Collision geometry attached to a link. A link may carry several, which is
/// how fixtures build hollow containers (shelves, drawers, bins).
struct CollisionSpec {
  std::string name;
  Pose pose;  // link frame
  Shape shape;
};

struct LinkSpec {
  std::string name;
  Pose pose;  // model frame
  std::vector<CollisionSpec> collisions;
  double mass = 1.0;
};

enum class JointKind { revolute, prismatic, continuous, fixed };

const char* to_string(JointKind k);

struct JointLimits {
  double lower = 0.0;
  double upper = 0.0;
  double max_velocity = 1.0;
};

struct JointSpec {
  std::string name;
  JointKind kind = JointKind::fixed;
  std::string parent;
  std::string child;
  Vec3 axis = Vec3::UnitZ();  // child frame
  JointLimits limits;
  Pose origin;  // child link frame
};

/// Clamps (revolute/prismatic), wraps (continuous) or zeroes (fixed) a
/// joint position.
double limit_position(const JointSpec& joint, double q);

struct ModelSpec {
  std::string name;
  std::vector<LinkSpec> links;
  std::vector<JointSpec> joints;
  Pose root_pose;
  bool is_static = false;

  const LinkSpec* find_link(std::string_view link) const;
};

struct SemanticTag {
  std::string name;  // model name, or "model::link"
  std::vector<std::string> classes;
  std::vector<std::string> stores;

  bool has_class(std::string_view c) const;
  bool stores_class(std::string_view c) const;
};

struct WorldSpec {
  std::string name = "default";
  std::vector<ModelSpec> models;
  Vec3 gravity = Vec3(0.0, 0.0, -9.81);
  std::vector<SemanticTag> semantics;

  const ModelSpec* find_model(std::string_view model) const;
  /// Resolves "model" or "model::link".
  bool has_name(std::string_view name) const;
};

struct ParsedWorld {
  WorldSpec world;
  std::vector<std::string> warnings;
};

/// Parses the supported SDF subset (1.6/1.7 element names). Throws Error with
/// MalformedXml, UnsupportedJointType, DanglingLinkReference or
/// CyclicJointGraph; messages carry the offending element path.
ParsedWorld parse_sdf(std::string_view xml);

/// Semantics sidecar: a JSON object mapping names to {"classes": [...],
/// "stores": [...]}. Throws Error(UnknownName) for names not in `world`.
std::vector<SemanticTag> parse_semantics(std::string_view text, const WorldSpec& world);

/// Invariant checks over a parsed world. Empty result iff all hold.
std::vector<std::string> validate(const WorldSpec& world);

/// Emits SDF 1.7 that parse_sdf reads back to an equal world (semantics are
/// not part of SDF and are dropped).
std::string serialize_sdf(const WorldSpec& world);

/// Structural equality with a tolerance for poses and numbers.
bool structurally_equal(const WorldSpec& a, const WorldSpec& b, double tol = 1e-12);

}  // namespace mentalsim
