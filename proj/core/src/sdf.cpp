#include "mentalsim/sdf.hpp"

#include "mentalsim/error.hpp"

#include <boost/property_tree/ptree.hpp>
#include <boost/property_tree/xml_parser.hpp>
#include <nlohmann/json.hpp>

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <map>
#include <set>
#include <sstream>

namespace mentalsim {

namespace pt = boost::property_tree;

const char* to_string(JointKind k) {
  switch (k) {
    case JointKind::revolute: return "revolute";
    case JointKind::prismatic: return "prismatic";
    case JointKind::continuous: return "continuous";
    case JointKind::fixed: return "fixed";
  }
  return "?";
}

double limit_position(const JointSpec& joint, double q) {
  switch (joint.kind) {
    case JointKind::continuous:
      return wrap_angle(q);
    case JointKind::fixed:
      return 0.0;
    default:
      return std::clamp(q, joint.limits.lower, joint.limits.upper);
  }
}

const LinkSpec* ModelSpec::find_link(std::string_view link) const {
  for (const auto& l : links)
    if (l.name == link) return &l;
  return nullptr;
}

bool SemanticTag::has_class(std::string_view c) const {
  return std::find(classes.begin(), classes.end(), c) != classes.end();
}

bool SemanticTag::stores_class(std::string_view c) const {
  return std::find(stores.begin(), stores.end(), c) != stores.end();
}

const ModelSpec* WorldSpec::find_model(std::string_view model) const {
  for (const auto& m : models)
    if (m.name == model) return &m;
  return nullptr;
}

bool WorldSpec::has_name(std::string_view name) const {
  const auto sep = name.find("::");
  if (sep == std::string_view::npos) return find_model(name) != nullptr;
  const ModelSpec* m = find_model(name.substr(0, sep));
  return m != nullptr && m->find_link(name.substr(sep + 2)) != nullptr;
}

namespace {

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r\n");
  if (b == std::string::npos) return {};
  const auto e = s.find_last_not_of(" \t\r\n");
  return s.substr(b, e - b + 1);
}

std::string attr(const pt::ptree& node, const char* name) {
  return node.get<std::string>(std::string("<xmlattr>.") + name, "");
}

bool is_meta(const std::string& key) { return key == "<xmlattr>" || key == "<xmlcomment>"; }

std::string child_path(const std::string& parent, const std::string& key, const pt::ptree& node) {
  const std::string name = attr(node, "name");
  return parent + "/" + key + (name.empty() ? "" : "[" + name + "]");
}

std::vector<double> parse_numbers(const std::string& text, std::size_t expected,
                                  const std::string& path) {
  std::vector<double> out;
  std::istringstream in(text);
  std::string tok;
  while (in >> tok) {
    double v = 0.0;
    const auto [ptr, ec] = std::from_chars(tok.data(), tok.data() + tok.size(), v);
    if (ec != std::errc() || ptr != tok.data() + tok.size())
      throw Error(Errc::MalformedXml, path + ": not a number '" + tok + "'");
    out.push_back(v);
  }
  if (out.size() != expected)
    throw Error(Errc::MalformedXml, path + ": expected " + std::to_string(expected) +
                                        " numbers, got " + std::to_string(out.size()));
  return out;
}

double parse_number(const pt::ptree& node, const std::string& path) {
  return parse_numbers(trim(node.data()), 1, path)[0];
}

Vec3 parse_vec3(const pt::ptree& node, const std::string& path) {
  const auto v = parse_numbers(trim(node.data()), 3, path);
  return {v[0], v[1], v[2]};
}

Pose parse_pose(const pt::ptree& node, const std::string& path) {
  const auto v = parse_numbers(trim(node.data()), 6, path);
  return Pose::from_xyz_rpy(v[0], v[1], v[2], v[3], v[4], v[5]);
}

/// Best-effort path of the element a broken document leaves open: the first
/// element closed by a mismatched end tag, else the innermost one still open.
std::string unclosed_element(std::string_view xml) {
  struct Open {
    std::string tag, path;
  };
  std::vector<Open> stack;
  auto path = [&] { return stack.empty() ? std::string("/") : stack.back().path; };
  std::size_t i = 0;
  while ((i = xml.find('<', i)) != std::string_view::npos) {
    if (xml.substr(i, 4) == "<!--") {
      i = xml.find("-->", i);
      if (i == std::string_view::npos) break;
      continue;
    }
    const std::size_t end = xml.find('>', i);
    if (end == std::string_view::npos) break;
    const std::string_view tag = xml.substr(i + 1, end - i - 1);
    i = end + 1;
    if (tag.empty() || tag[0] == '?' || tag[0] == '!') continue;
    if (tag[0] == '/') {
      const std::string_view name = tag.substr(1, tag.find_first_of(" \t\r\n", 1) - 1);
      if (stack.empty() || stack.back().tag != name) return path();
      stack.pop_back();
      continue;
    }
    const std::string name(tag.substr(0, tag.find_first_of(" \t\r\n/")));
    std::string label;
    if (const auto a = tag.find("name=\""); a != std::string_view::npos) {
      const auto b = tag.find('"', a + 6);
      if (b != std::string_view::npos) label = "[" + std::string(tag.substr(a + 6, b - a - 6)) + "]";
    }
    if (tag.back() == '/') continue;
    stack.push_back({name, (stack.empty() ? "" : stack.back().path) + "/" + name + label});
  }
  return path();
}

bool parse_bool(const pt::ptree& node) {
  const std::string t = trim(node.data());
  return t == "1" || t == "true";
}

class Parser {
 public:
  ParsedWorld run(std::string_view xml) {
    pt::ptree doc;
    try {
      std::istringstream in{std::string(xml)};
      pt::read_xml(in, doc);
    } catch (const pt::xml_parser_error& e) {
      throw Error(Errc::MalformedXml,
                  unclosed_element(xml) + ": line " + std::to_string(e.line()) + ": " + e.message());
    }
    const auto sdf = doc.get_child_optional("sdf");
    if (!sdf) throw Error(Errc::MalformedXml, "/: missing <sdf> root element");
    for (const auto& [key, child] : doc)
      if (!is_meta(key) && key != "sdf") warn("/" + key);

    const std::string root = "/sdf";
    for (const auto& [key, child] : *sdf) {
      if (is_meta(key)) continue;
      const std::string path = child_path(root, key, child);
      if (key == "world") {
        parse_world(child, path);
      } else if (key == "model") {
        result_.world.models.push_back(parse_model(child, path));
      } else {
        warn(path);
      }
    }
    return std::move(result_);
  }

 private:
  void warn(const std::string& path) { result_.warnings.push_back("ignored element " + path); }

  void parse_world(const pt::ptree& node, const std::string& path) {
    const std::string name = attr(node, "name");
    if (!name.empty()) result_.world.name = name;
    for (const auto& [key, child] : node) {
      if (is_meta(key)) continue;
      const std::string p = child_path(path, key, child);
      if (key == "model") {
        result_.world.models.push_back(parse_model(child, p));
      } else if (key == "gravity") {
        result_.world.gravity = parse_vec3(child, p);
      } else {
        warn(p);
      }
    }
  }

  ModelSpec parse_model(const pt::ptree& node, const std::string& path) {
    ModelSpec model;
    model.name = attr(node, "name");
    if (model.name.empty()) throw Error(Errc::MalformedXml, path + ": model without name");
    std::vector<std::pair<std::string, const pt::ptree*>> joint_nodes;
    for (const auto& [key, child] : node) {
      if (is_meta(key)) continue;
      const std::string p = child_path(path, key, child);
      if (key == "static") {
        model.is_static = parse_bool(child);
      } else if (key == "pose") {
        model.root_pose = parse_pose(child, p);
      } else if (key == "link") {
        model.links.push_back(parse_link(child, p));
      } else if (key == "joint") {
        joint_nodes.emplace_back(p, &child);
      } else {
        warn(p);
      }
    }
    for (const auto& [p, child] : joint_nodes) model.joints.push_back(parse_joint(*child, p, model));
    check_tree(model, path);
    return model;
  }

  LinkSpec parse_link(const pt::ptree& node, const std::string& path) {
    LinkSpec link;
    link.name = attr(node, "name");
    if (link.name.empty()) throw Error(Errc::MalformedXml, path + ": link without name");
    std::vector<CollisionSpec> visuals;
    for (const auto& [key, child] : node) {
      if (is_meta(key)) continue;
      const std::string p = child_path(path, key, child);
      if (key == "pose") {
        link.pose = parse_pose(child, p);
      } else if (key == "collision") {
        if (auto c = parse_geometry_holder(child, p)) link.collisions.push_back(*c);
      } else if (key == "visual") {
        if (auto c = parse_geometry_holder(child, p)) visuals.push_back(*c);
      } else if (key == "inertial") {
        for (const auto& [ikey, ichild] : child) {
          if (is_meta(ikey)) continue;
          if (ikey == "mass")
            link.mass = parse_number(ichild, p + "/mass");
          else
            warn(p + "/" + ikey);
        }
      } else {
        warn(p);
      }
    }
    if (link.collisions.empty()) link.collisions = std::move(visuals);
    return link;
  }

  std::optional<CollisionSpec> parse_geometry_holder(const pt::ptree& node, const std::string& path) {
    CollisionSpec c;
    c.name = attr(node, "name");
    std::optional<Shape> shape;
    for (const auto& [key, child] : node) {
      if (is_meta(key)) continue;
      const std::string p = child_path(path, key, child);
      if (key == "pose") {
        c.pose = parse_pose(child, p);
      } else if (key == "geometry") {
        shape = parse_geometry(child, p);
      } else if (key != "material") {  // visual-only, silently dropped
        warn(p);
      }
    }
    if (!shape) return std::nullopt;
    c.shape = *shape;
    return c;
  }

  std::optional<Shape> parse_geometry(const pt::ptree& node, const std::string& path) {
    for (const auto& [key, child] : node) {
      if (is_meta(key)) continue;
      const std::string p = path + "/" + key;
      if (key == "box") {
        const auto size = child.get_child_optional("size");
        if (!size) throw Error(Errc::MalformedXml, p + ": box without <size>");
        const Vec3 s = parse_vec3(*size, p + "/size");
        return Shape::box(s.x(), s.y(), s.z());
      }
      if (key == "cylinder") {
        const auto r = child.get_child_optional("radius");
        const auto l = child.get_child_optional("length");
        if (!r || !l) throw Error(Errc::MalformedXml, p + ": cylinder needs <radius> and <length>");
        return Shape::cylinder(parse_number(*r, p + "/radius"), parse_number(*l, p + "/length"));
      }
      if (key == "sphere") {
        const auto r = child.get_child_optional("radius");
        if (!r) throw Error(Errc::MalformedXml, p + ": sphere without <radius>");
        return Shape::sphere(parse_number(*r, p + "/radius"));
      }
      if (key == "mesh") {
        const auto bb = child.get_child_optional("bounding_box");
        if (!bb) {
          result_.warnings.push_back("mesh without <bounding_box> skipped at " + p);
          return std::nullopt;
        }
        const Vec3 s = parse_vec3(*bb, p + "/bounding_box");
        return Shape::box(s.x(), s.y(), s.z());
      }
      warn(p);
    }
    return std::nullopt;
  }

  JointSpec parse_joint(const pt::ptree& node, const std::string& path, const ModelSpec& model) {
    JointSpec j;
    j.name = attr(node, "name");
    const std::string type = attr(node, "type");
    if (type == "revolute") {
      j.kind = JointKind::revolute;
      j.limits = {-kPi, kPi, 1.0};
    } else if (type == "prismatic") {
      j.kind = JointKind::prismatic;
      j.limits = {0.0, 1.0, 1.0};
    } else if (type == "continuous") {
      j.kind = JointKind::continuous;
      j.limits = {-kPi, kPi, 1.0};
    } else if (type == "fixed") {
      j.kind = JointKind::fixed;
      j.limits = {0.0, 0.0, 1.0};
    } else {
      throw Error(Errc::UnsupportedJointType, path + ": type '" + type + "'");
    }
    bool have_parent = false;
    bool have_child = false;
    for (const auto& [key, child] : node) {
      if (is_meta(key)) continue;
      const std::string p = path + "/" + key;
      if (key == "parent") {
        j.parent = trim(child.data());
        have_parent = true;
        if (!model.find_link(j.parent))
          throw Error(Errc::DanglingLinkReference, p + ": no link '" + j.parent + "'");
      } else if (key == "child") {
        j.child = trim(child.data());
        have_child = true;
        if (!model.find_link(j.child))
          throw Error(Errc::DanglingLinkReference, p + ": no link '" + j.child + "'");
      } else if (key == "pose") {
        j.origin = parse_pose(child, p);
      } else if (key == "axis") {
        parse_axis(child, p, j);
      } else {
        warn(p);
      }
    }
    if (!have_parent) throw Error(Errc::DanglingLinkReference, path + "/parent: missing");
    if (!have_child) throw Error(Errc::DanglingLinkReference, path + "/child: missing");
    return j;
  }

  void parse_axis(const pt::ptree& node, const std::string& path, JointSpec& j) {
    for (const auto& [key, child] : node) {
      if (is_meta(key)) continue;
      const std::string p = path + "/" + key;
      if (key == "xyz") {
        const Vec3 a = parse_vec3(child, p);
        j.axis = a.norm() > 0.0 ? Vec3(a.normalized()) : a;
      } else if (key == "limit") {
        for (const auto& [lkey, lchild] : child) {
          if (is_meta(lkey)) continue;
          const std::string lp = p + "/" + lkey;
          if (lkey == "lower") {
            if (j.kind != JointKind::continuous) j.limits.lower = parse_number(lchild, lp);
          } else if (lkey == "upper") {
            if (j.kind != JointKind::continuous) j.limits.upper = parse_number(lchild, lp);
          } else if (lkey == "velocity") {
            j.limits.max_velocity = parse_number(lchild, lp);
          } else if (lkey != "effort") {
            warn(lp);
          }
        }
      } else if (key != "dynamics") {
        warn(p);
      }
    }
  }

  // Every link has at most one parent joint and following parents terminates.
  static void check_tree(const ModelSpec& model, const std::string& path) {
    std::map<std::string, const JointSpec*> parent_of;
    for (const auto& j : model.joints) {
      const std::string jp = path + "/joint[" + j.name + "]";
      if (j.parent == j.child)
        throw Error(Errc::CyclicJointGraph, jp + ": link '" + j.child + "' is its own parent");
      if (!parent_of.emplace(j.child, &j).second)
        throw Error(Errc::CyclicJointGraph, jp + ": link '" + j.child + "' has two parent joints");
    }
    for (const auto& j : model.joints) {
      std::set<std::string> seen{j.child};
      std::string cur = j.parent;
      while (true) {
        if (!seen.insert(cur).second)
          throw Error(Errc::CyclicJointGraph,
                      path + "/joint[" + j.name + "]: cycle through link '" + cur + "'");
        const auto it = parent_of.find(cur);
        if (it == parent_of.end()) break;
        cur = it->second->parent;
      }
    }
  }

  ParsedWorld result_;
};

}  // namespace

ParsedWorld parse_sdf(std::string_view xml) { return Parser{}.run(xml); }

std::vector<SemanticTag> parse_semantics(std::string_view text, const WorldSpec& world) {
  nlohmann::ordered_json doc;
  try {
    doc = nlohmann::ordered_json::parse(text);
  } catch (const nlohmann::json::exception& e) {
    throw Error(Errc::InvalidArgument, std::string("semantics: ") + e.what());
  }
  if (!doc.is_object()) throw Error(Errc::InvalidArgument, "semantics: top level must be an object");
  std::vector<SemanticTag> tags;
  for (const auto& [name, entry] : doc.items()) {
    if (!world.has_name(name)) throw Error(Errc::UnknownName, "semantics: '" + name + "'");
    if (!entry.is_object()) throw Error(Errc::InvalidArgument, "semantics: '" + name + "' not an object");
    SemanticTag tag;
    tag.name = name;
    auto read_set = [&](const char* field, std::vector<std::string>& out) {
      if (!entry.contains(field)) return;
      for (const auto& v : entry.at(field)) {
        if (!v.is_string()) throw Error(Errc::InvalidArgument, "semantics: '" + name + "'." + field);
        const auto s = v.get<std::string>();
        if (std::find(out.begin(), out.end(), s) == out.end()) out.push_back(s);
      }
    };
    read_set("classes", tag.classes);
    read_set("stores", tag.stores);
    tags.push_back(std::move(tag));
  }
  return tags;
}

std::vector<std::string> validate(const WorldSpec& world) {
  std::vector<std::string> warnings;
  std::set<std::string> model_names;
  for (const auto& m : world.models) {
    if (!model_names.insert(m.name).second) warnings.push_back("duplicate model name '" + m.name + "'");
    std::set<std::string> link_names;
    for (const auto& l : m.links) {
      if (!link_names.insert(l.name).second)
        warnings.push_back(m.name + ": duplicate link name '" + l.name + "'");
      for (const auto& c : l.collisions)
        if (!c.shape.has_positive_size())
          warnings.push_back(m.name + "::" + l.name + ": " + to_string(c.shape.kind) +
                             " with non-positive size");
      if (!(l.mass > 0.0)) warnings.push_back(m.name + "::" + l.name + ": non-positive mass");
    }
    std::set<std::string> children;
    for (const auto& j : m.joints) {
      const std::string where = m.name + "::" + j.name;
      if (j.parent == j.child) warnings.push_back(where + ": parent equals child");
      if ((j.kind == JointKind::revolute || j.kind == JointKind::prismatic) &&
          j.limits.lower > j.limits.upper)
        warnings.push_back(where + ": lower limit above upper limit");
      if (std::abs(j.axis.norm() - 1.0) > 1e-9) warnings.push_back(where + ": axis is not unit length");
      if (!(j.limits.max_velocity > 0.0)) warnings.push_back(where + ": non-positive max velocity");
      if (!m.find_link(j.parent) || !m.find_link(j.child))
        warnings.push_back(where + ": references a missing link");
      children.insert(j.child);
    }
    std::size_t roots = 0;
    for (const auto& l : m.links)
      if (!children.count(l.name)) ++roots;
    if (!m.links.empty() && roots != 1)
      warnings.push_back(m.name + ": joint graph has " + std::to_string(roots) + " root links");
  }
  for (const auto& t : world.semantics)
    if (!world.has_name(t.name)) warnings.push_back("semantic tag for unknown name '" + t.name + "'");
  return warnings;
}

namespace {

std::string num(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

std::string pose_text(const Pose& p) {
  const auto v = p.to_xyz_rpy();
  std::string out;
  for (std::size_t i = 0; i < v.size(); ++i) out += (i ? " " : "") + num(v[i]);
  return out;
}

std::string vec_text(const Vec3& v) { return num(v.x()) + " " + num(v.y()) + " " + num(v.z()); }

void write_shape(std::ostringstream& o, const Shape& s, const std::string& ind) {
  o << ind << "<geometry>";
  switch (s.kind) {
    case Shape::Kind::box:
      o << "<box><size>" << vec_text(s.size) << "</size></box>";
      break;
    case Shape::Kind::cylinder:
      o << "<cylinder><radius>" << num(s.radius) << "</radius><length>" << num(s.length)
        << "</length></cylinder>";
      break;
    case Shape::Kind::sphere:
      o << "<sphere><radius>" << num(s.radius) << "</radius></sphere>";
      break;
  }
  o << "</geometry>\n";
}

}  // namespace

std::string serialize_sdf(const WorldSpec& world) {
  std::ostringstream o;
  o << "<?xml version=\"1.0\"?>\n<sdf version=\"1.7\">\n";
  o << "  <world name=\"" << world.name << "\">\n";
  o << "    <gravity>" << vec_text(world.gravity) << "</gravity>\n";
  for (const auto& m : world.models) {
    o << "    <model name=\"" << m.name << "\">\n";
    o << "      <static>" << (m.is_static ? "true" : "false") << "</static>\n";
    o << "      <pose>" << pose_text(m.root_pose) << "</pose>\n";
    for (const auto& l : m.links) {
      o << "      <link name=\"" << l.name << "\">\n";
      o << "        <pose>" << pose_text(l.pose) << "</pose>\n";
      o << "        <inertial><mass>" << num(l.mass) << "</mass></inertial>\n";
      for (const auto& c : l.collisions) {
        o << "        <collision name=\"" << c.name << "\">\n";
        o << "          <pose>" << pose_text(c.pose) << "</pose>\n";
        write_shape(o, c.shape, "          ");
        o << "        </collision>\n";
      }
      o << "      </link>\n";
    }
    for (const auto& j : m.joints) {
      o << "      <joint name=\"" << j.name << "\" type=\"" << to_string(j.kind) << "\">\n";
      o << "        <parent>" << j.parent << "</parent>\n";
      o << "        <child>" << j.child << "</child>\n";
      o << "        <pose>" << pose_text(j.origin) << "</pose>\n";
      o << "        <axis><xyz>" << vec_text(j.axis) << "</xyz><limit>";
      if (j.kind != JointKind::continuous)
        o << "<lower>" << num(j.limits.lower) << "</lower><upper>" << num(j.limits.upper) << "</upper>";
      o << "<velocity>" << num(j.limits.max_velocity) << "</velocity></limit></axis>\n";
      o << "      </joint>\n";
    }
    o << "    </model>\n";
  }
  o << "  </world>\n</sdf>\n";
  return o.str();
}

namespace {

bool near(double a, double b, double tol) { return std::abs(a - b) <= tol; }
bool near(const Vec3& a, const Vec3& b, double tol) { return (a - b).cwiseAbs().maxCoeff() <= tol; }

}  // namespace

bool structurally_equal(const WorldSpec& a, const WorldSpec& b, double tol) {
  if (a.name != b.name || !near(a.gravity, b.gravity, tol) || a.models.size() != b.models.size())
    return false;
  for (std::size_t i = 0; i < a.models.size(); ++i) {
    const auto& ma = a.models[i];
    const auto& mb = b.models[i];
    if (ma.name != mb.name || ma.is_static != mb.is_static ||
        !approx_equal(ma.root_pose, mb.root_pose, tol) || ma.links.size() != mb.links.size() ||
        ma.joints.size() != mb.joints.size())
      return false;
    for (std::size_t k = 0; k < ma.links.size(); ++k) {
      const auto& la = ma.links[k];
      const auto& lb = mb.links[k];
      if (la.name != lb.name || !approx_equal(la.pose, lb.pose, tol) || !near(la.mass, lb.mass, tol) ||
          la.collisions.size() != lb.collisions.size())
        return false;
      for (std::size_t c = 0; c < la.collisions.size(); ++c) {
        const auto& ca = la.collisions[c];
        const auto& cb = lb.collisions[c];
        if (ca.name != cb.name || !approx_equal(ca.pose, cb.pose, tol) ||
            ca.shape.kind != cb.shape.kind || !near(ca.shape.size, cb.shape.size, tol) ||
            !near(ca.shape.radius, cb.shape.radius, tol) || !near(ca.shape.length, cb.shape.length, tol))
          return false;
      }
    }
    for (std::size_t k = 0; k < ma.joints.size(); ++k) {
      const auto& ja = ma.joints[k];
      const auto& jb = mb.joints[k];
      if (ja.name != jb.name || ja.kind != jb.kind || ja.parent != jb.parent || ja.child != jb.child ||
          !near(ja.axis, jb.axis, tol) || !approx_equal(ja.origin, jb.origin, tol) ||
          !near(ja.limits.lower, jb.limits.lower, tol) || !near(ja.limits.upper, jb.limits.upper, tol) ||
          !near(ja.limits.max_velocity, jb.limits.max_velocity, tol))
        return false;
    }
  }
  return true;
}

}  // namespace mentalsim
