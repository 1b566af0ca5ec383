#include "pinchkit/kinematics.hpp"

#include "pinchkit/error.hpp"

#include <json.hpp>

#include <algorithm>
#include <cmath>
#include <fstream>
#include <set>
#include <sstream>

namespace pinchkit {

using json = nlohmann::json;

RigidTransform wristFromParams(const Eigen::Matrix<double, 6, 1>& params) {
  RigidTransform t;
  t.translation = params.head<3>();
  const Vec3 aa = params.tail<3>();
  const double angle = aa.norm();
  if (angle > 0.0) {
    t.rotation = Eigen::AngleAxisd(angle, aa / angle).toRotationMatrix();
  }
  return t;
}

Eigen::Matrix<double, 6, 1> paramsFromWrist(const RigidTransform& wrist) {
  Eigen::Matrix<double, 6, 1> p;
  p.head<3>() = wrist.translation;
  const Eigen::AngleAxisd aa(wrist.rotation);
  p.tail<3>() = aa.axis() * aa.angle();
  return p;
}

namespace {

std::string lineContext(std::string_view text, std::size_t byte) {
  std::size_t line = 1;
  std::size_t col = 1;
  for (std::size_t i = 0; i < byte && i < text.size(); ++i) {
    if (text[i] == '\n') {
      ++line;
      col = 1;
    } else {
      ++col;
    }
  }
  return "line " + std::to_string(line) + ", column " + std::to_string(col);
}

Vec3 readVec3(const json& j, const std::string& what) {
  if (!j.is_array() || j.size() != 3) {
    throw ParseError(what + ": expected an array of 3 numbers");
  }
  return {j[0].get<double>(), j[1].get<double>(), j[2].get<double>()};
}

RigidTransform readOrigin(const json& j, const std::string& what) {
  RigidTransform t;
  if (j.is_null()) {
    return t;
  }
  if (j.contains("xyz")) {
    t.translation = readVec3(j.at("xyz"), what + ".xyz");
  }
  if (j.contains("rotation")) {
    const json& r = j.at("rotation");
    if (!r.is_array() || r.size() != 9) {
      throw ParseError(what + ".rotation: expected 9 numbers (row-major 3x3)");
    }
    for (int row = 0; row < 3; ++row) {
      for (int col = 0; col < 3; ++col) {
        t.rotation(row, col) = r[row * 3 + col].get<double>();
      }
    }
    const double ortho = (t.rotation.transpose() * t.rotation - Mat3::Identity()).cwiseAbs().maxCoeff();
    if (ortho > 1e-9 || std::abs(t.rotation.determinant() - 1.0) > 1e-9) {
      throw ParseError(what + ".rotation: not a proper rotation matrix");
    }
  }
  return t;
}

}  // namespace

std::size_t HandModel::linkIndex(std::string_view name) const {
  const auto it = link_lookup_.find(name);
  if (it == link_lookup_.end()) {
    throw Error("unknown link '" + std::string(name) + "'");
  }
  return it->second;
}

std::size_t HandModel::fingerIndex(std::string_view name) const {
  for (std::size_t i = 0; i < fingers_.size(); ++i) {
    if (fingers_[i].name == name) {
      return i;
    }
  }
  throw Error("unknown finger '" + std::string(name) + "'");
}

bool HandModel::hasFinger(std::string_view name) const {
  return std::any_of(fingers_.begin(), fingers_.end(),
                     [&](const Finger& f) { return f.name == name; });
}

const std::vector<SurfaceSample>& HandModel::tipSamples(std::size_t finger) const {
  return link_samples_.at(fingers_.at(finger).tip_link);
}

Eigen::VectorXd HandModel::lowerLimits() const {
  Eigen::VectorXd v(dof());
  for (std::size_t i = 0; i < dof(); ++i) v[i] = joints_[i].lower;
  return v;
}

Eigen::VectorXd HandModel::upperLimits() const {
  Eigen::VectorXd v(dof());
  for (std::size_t i = 0; i < dof(); ++i) v[i] = joints_[i].upper;
  return v;
}

Eigen::VectorXd HandModel::clamp(const Eigen::VectorXd& q) const {
  if (static_cast<std::size_t>(q.size()) != dof()) {
    throw DimensionError("joint vector has " + std::to_string(q.size()) + " entries, model has " +
                         std::to_string(dof()));
  }
  return q.cwiseMax(lowerLimits()).cwiseMin(upperLimits());
}

double HandModel::maxFingerLength() const {
  const LinkPoses poses = forwardKinematics(*this, Eigen::VectorXd::Zero(dof()));
  const Vec3 root = poses[root_link_].translation;
  double best = 0.0;
  for (const Finger& f : fingers_) {
    best = std::max(best, (poses[f.tip_link].translation - root).norm());
  }
  return best;
}

HandModel parseHand(std::string_view json_text, std::string_view source) {
  const std::string src(source);
  json doc;
  try {
    doc = json::parse(json_text.begin(), json_text.end());
  } catch (const json::parse_error& e) {
    throw ParseError(src + ": parse error at " + lineContext(json_text, e.byte) + ": " + e.what());
  }

  HandModel model;
  auto internLink = [&](const std::string& name) {
    const auto it = model.link_lookup_.find(name);
    if (it != model.link_lookup_.end()) {
      return it->second;
    }
    const std::size_t idx = model.link_names_.size();
    model.link_names_.push_back(name);
    model.link_lookup_.emplace(name, idx);
    return idx;
  };

  try {
    for (const json& jj : doc.at("joints")) {
      Joint joint;
      joint.name = jj.at("name").get<std::string>();
      const std::string what = src + ": joint '" + joint.name + "'";
      joint.parent_link = internLink(jj.at("parent").get<std::string>());
      joint.child_link = internLink(jj.at("child").get<std::string>());
      const auto type = jj.at("type").get<std::string>();
      if (type == "revolute") {
        joint.type = JointType::kRevolute;
      } else if (type == "prismatic") {
        joint.type = JointType::kPrismatic;
      } else {
        throw ParseError(what + ": unknown joint type '" + type + "'");
      }
      joint.origin = readOrigin(jj.value("origin", json()), what + ".origin");
      joint.axis = readVec3(jj.at("axis"), what + ".axis");
      if (std::abs(joint.axis.norm() - 1.0) > 1e-9) {
        throw ParseError(what + ": non-unit axis");
      }
      const json& lim = jj.at("limits");
      if (!lim.is_array() || lim.size() != 2) {
        throw ParseError(what + ": limits must be [lo, hi]");
      }
      joint.lower = lim[0].get<double>();
      joint.upper = lim[1].get<double>();
      if (!(joint.lower <= joint.upper)) {
        throw ParseError(what + ": limits violate lo <= hi");
      }
      model.joints_.push_back(std::move(joint));
    }

    // Single root, acyclic: every link is the child of at most one joint and
    // following parents from any link terminates at the same root.
    std::vector<int> parent_joint(model.link_names_.size(), -1);
    std::set<std::string> joint_names;
    for (std::size_t i = 0; i < model.joints_.size(); ++i) {
      const Joint& j = model.joints_[i];
      if (!joint_names.insert(j.name).second) {
        throw ParseError(src + ": duplicate joint name '" + j.name + "'");
      }
      if (parent_joint[j.child_link] != -1) {
        throw ParseError(src + ": link '" + model.link_names_[j.child_link] +
                         "' has more than one parent joint");
      }
      parent_joint[j.child_link] = static_cast<int>(i);
    }
    std::vector<std::size_t> roots;
    for (std::size_t l = 0; l < model.link_names_.size(); ++l) {
      if (parent_joint[l] == -1) roots.push_back(l);
    }
    if (roots.size() != 1) {
      throw ParseError(src + ": cyclic tree or multiple roots (" + std::to_string(roots.size()) +
                       " parentless links)");
    }
    model.root_link_ = roots.front();

    // Topological order via depth from root; a cycle never reaches the root.
    std::vector<int> depth(model.link_names_.size(), -1);
    depth[model.root_link_] = 0;
    for (std::size_t l = 0; l < model.link_names_.size(); ++l) {
      std::vector<std::size_t> path;
      std::size_t cur = l;
      while (depth[cur] < 0) {
        path.push_back(cur);
        if (path.size() > model.link_names_.size()) {
          throw ParseError(src + ": cyclic tree");
        }
        cur = model.joints_[static_cast<std::size_t>(parent_joint[cur])].parent_link;
      }
      for (auto it = path.rbegin(); it != path.rend(); ++it) {
        const std::size_t parent =
            model.joints_[static_cast<std::size_t>(parent_joint[*it])].parent_link;
        depth[*it] = depth[parent] + 1;
      }
    }
    model.joint_order_.resize(model.joints_.size());
    for (std::size_t i = 0; i < model.joints_.size(); ++i) model.joint_order_[i] = i;
    std::stable_sort(model.joint_order_.begin(), model.joint_order_.end(),
                     [&](std::size_t a, std::size_t b) {
                       return depth[model.joints_[a].child_link] < depth[model.joints_[b].child_link];
                     });

    std::map<std::string, std::size_t> joint_lookup;
    for (std::size_t i = 0; i < model.joints_.size(); ++i) joint_lookup[model.joints_[i].name] = i;

    for (const json& jf : doc.at("fingers")) {
      Finger finger;
      finger.name = jf.at("name").get<std::string>();
      const std::string what = src + ": finger '" + finger.name + "'";
      for (const json& jn : jf.at("joint_names")) {
        const auto name = jn.get<std::string>();
        const auto it = joint_lookup.find(name);
        if (it == joint_lookup.end()) {
          throw ParseError(what + ": unknown joint '" + name + "'");
        }
        finger.joints.push_back(it->second);
      }
      if (finger.joints.empty()) {
        throw ParseError(what + ": no joints");
      }
      std::size_t expected_parent = model.root_link_;
      for (std::size_t ji : finger.joints) {
        if (model.joints_[ji].parent_link != expected_parent) {
          throw ParseError(what + ": finger joints not a chain");
        }
        expected_parent = model.joints_[ji].child_link;
      }
      const auto tip_name = jf.at("tip_link").get<std::string>();
      if (jf.contains("tip_origin")) {
        if (model.link_lookup_.count(tip_name) != 0) {
          throw ParseError(what + ": tip_link '" + tip_name + "' already exists in the tree");
        }
        HandModel::FixedFrame frame{internLink(tip_name), expected_parent,
                                    readOrigin(jf.at("tip_origin"), what + ".tip_origin")};
        model.fixed_frames_.push_back(frame);
        finger.tip_link = frame.link;
      } else {
        const auto it = model.link_lookup_.find(tip_name);
        if (it == model.link_lookup_.end() || it->second != expected_parent) {
          throw ParseError(what + ": unknown fingertip link '" + tip_name + "'");
        }
        finger.tip_link = it->second;
      }
      model.fingers_.push_back(std::move(finger));
    }

    model.link_samples_.assign(model.link_names_.size(), {});
    if (doc.contains("fingertip_samples")) {
      for (const auto& [tip, arr] : doc.at("fingertip_samples").items()) {
        const auto it = model.link_lookup_.find(tip);
        if (it == model.link_lookup_.end()) {
          throw ParseError(src + ": unknown fingertip link '" + tip + "' in fingertip_samples");
        }
        for (const json& js : arr) {
          SurfaceSample s;
          s.point = readVec3(js.at("point"), src + ": sample point");
          s.normal = readVec3(js.at("normal"), src + ": sample normal");
          if (std::abs(s.normal.norm() - 1.0) > 1e-9) {
            throw ParseError(src + ": non-unit sample normal on '" + tip + "'");
          }
          model.link_samples_[it->second].push_back(s);
        }
      }
    }
  } catch (const json::exception& e) {
    throw ParseError(src + ": schema error: " + e.what());
  }
  return model;
}

HandModel loadHand(const std::string& path) {
  std::ifstream in(path);
  if (!in) {
    throw ParseError("cannot open hand description '" + path + "'");
  }
  std::stringstream buffer;
  buffer << in.rdbuf();
  return parseHand(buffer.str(), path);
}

const RigidTransform& LinkPoses::at(std::string_view link_name) const {
  return poses_.at(model_->linkIndex(link_name));
}

LinkPoses forwardKinematics(const HandModel& model, const Eigen::VectorXd& q,
                            const RigidTransform& root) {
  if (static_cast<std::size_t>(q.size()) != model.dof()) {
    throw DimensionError("forwardKinematics: q has " + std::to_string(q.size()) +
                         " entries, model dof is " + std::to_string(model.dof()));
  }
  std::vector<RigidTransform> poses(model.linkNames().size());
  poses[model.rootLink()] = root;
  for (std::size_t ji : model.jointOrder()) {
    const Joint& j = model.joints()[ji];
    RigidTransform motion;
    if (j.type == JointType::kRevolute) {
      motion.rotation = Eigen::AngleAxisd(q[static_cast<Eigen::Index>(ji)], j.axis).toRotationMatrix();
      motion.translation = j.origin.translation;
      motion.rotation = motion.rotation * j.origin.rotation;
    } else {
      motion.rotation = j.origin.rotation;
      motion.translation = j.origin.translation + q[static_cast<Eigen::Index>(ji)] * j.axis;
    }
    poses[j.child_link] = poses[j.parent_link] * motion;
  }
  for (const auto& frame : model.fixedFrames()) {
    poses[frame.link] = poses[frame.parent_link] * frame.offset;
  }
  return LinkPoses(&model, std::move(poses));
}

JointFrame jointWorldFrame(const HandModel& model, const LinkPoses& poses, std::size_t joint) {
  const Joint& j = model.joints()[joint];
  const RigidTransform& parent = poses[j.parent_link];
  return {parent.rotation * j.axis, parent.apply(j.origin.translation)};
}

Eigen::Matrix<double, 3, Eigen::Dynamic> pointJacobian(const HandModel& model,
                                                       const LinkPoses& poses, std::size_t finger,
                                                       const Vec3& world_point) {
  Eigen::Matrix<double, 3, Eigen::Dynamic> jac =
      Eigen::Matrix<double, 3, Eigen::Dynamic>::Zero(3, static_cast<Eigen::Index>(model.dof()));
  for (std::size_t ji : model.fingers().at(finger).joints) {
    const JointFrame f = jointWorldFrame(model, poses, ji);
    jac.col(static_cast<Eigen::Index>(ji)) = model.joints()[ji].type == JointType::kRevolute
                                                 ? Vec3(f.axis.cross(world_point - f.anchor))
                                                 : f.axis;
  }
  return jac;
}

Eigen::Matrix<double, 3, Eigen::Dynamic> fingertipJacobian(const HandModel& model,
                                                           const Eigen::VectorXd& q,
                                                           std::string_view finger,
                                                           const RigidTransform& root) {
  const std::size_t fi = model.fingerIndex(finger);
  const LinkPoses poses = forwardKinematics(model, q, root);
  const Finger& f = model.fingers()[fi];
  const Eigen::Matrix<double, 3, Eigen::Dynamic> full =
      pointJacobian(model, poses, fi, poses[f.tip_link].translation);
  Eigen::Matrix<double, 3, Eigen::Dynamic> jac(3, static_cast<Eigen::Index>(f.joints.size()));
  for (std::size_t c = 0; c < f.joints.size(); ++c) {
    jac.col(static_cast<Eigen::Index>(c)) = full.col(static_cast<Eigen::Index>(f.joints[c]));
  }
  return jac;
}

}  // namespace pinchkit
