#pragma once

#include <Eigen/Dense>

#include <array>
#include <cstddef>
#include <map>
#include <string>
#include <string_view>
#include <vector>

namespace pinchkit {

using Vec3 = Eigen::Vector3d;
using Mat3 = Eigen::Matrix3d;

/// Rotation + translation. Applies as x -> R x + t.
struct RigidTransform {
  Mat3 rotation = Mat3::Identity();
  Vec3 translation = Vec3::Zero();

  static RigidTransform identity() { return {}; }
  static RigidTransform fromTranslation(const Vec3& t) { return {Mat3::Identity(), t}; }

  Vec3 apply(const Vec3& x) const { return rotation * x + translation; }
  Vec3 applyInverse(const Vec3& x) const { return rotation.transpose() * (x - translation); }
  RigidTransform inverse() const {
    return {rotation.transpose(), -(rotation.transpose() * translation)};
  }
  RigidTransform operator*(const RigidTransform& other) const {
    return {rotation * other.rotation, rotation * other.translation + translation};
  }
};

/// Wrist pose from 6 free parameters: translation (m) then axis-angle (rad).
RigidTransform wristFromParams(const Eigen::Matrix<double, 6, 1>& params);
Eigen::Matrix<double, 6, 1> paramsFromWrist(const RigidTransform& wrist);

enum class JointType { kRevolute, kPrismatic };

struct Joint {
  std::string name;
  std::size_t parent_link = 0;
  std::size_t child_link = 0;
  JointType type = JointType::kRevolute;
  RigidTransform origin;  // parent link -> joint frame at zero displacement
  Vec3 axis = Vec3::UnitZ();  // expressed in the parent link frame
  double lower = 0.0;
  double upper = 0.0;
};

/// Local-frame contact sample on a fingertip, with the direction a force
/// from this point acts on an object (pointing away from the finger).
struct SurfaceSample {
  Vec3 point = Vec3::Zero();
  Vec3 normal = Vec3::UnitY();
};

struct Finger {
  std::string name;
  std::vector<std::size_t> joints;  // root-to-tip order
  std::size_t tip_link = 0;
};

/// Immutable kinematic tree with fingertips. Build with loadHand/parseHand.
class HandModel {
public:
  std::size_t dof() const { return joints_.size(); }
  const std::vector<Joint>& joints() const { return joints_; }
  const std::vector<Finger>& fingers() const { return fingers_; }
  const std::vector<std::string>& linkNames() const { return link_names_; }
  std::size_t rootLink() const { return root_link_; }

  std::size_t linkIndex(std::string_view name) const;
  std::size_t fingerIndex(std::string_view name) const;
  bool hasFinger(std::string_view name) const;
  const Finger& finger(std::string_view name) const { return fingers_[fingerIndex(name)]; }

  /// Samples attached to a finger's tip link (empty when none are declared).
  const std::vector<SurfaceSample>& tipSamples(std::size_t finger) const;

  Eigen::VectorXd lowerLimits() const;
  Eigen::VectorXd upperLimits() const;
  Eigen::VectorXd clamp(const Eigen::VectorXd& q) const;
  /// Longest root-to-tip reach over all fingers at zero configuration (m).
  double maxFingerLength() const;

  /// Joint indices in parent-before-child order.
  const std::vector<std::size_t>& jointOrder() const { return joint_order_; }

  /// Tip frame rigidly offset from a link (declared through a finger's tip_origin).
  struct FixedFrame {
    std::size_t link;
    std::size_t parent_link;
    RigidTransform offset;
  };
  const std::vector<FixedFrame>& fixedFrames() const { return fixed_frames_; }

private:
  friend HandModel parseHand(std::string_view, std::string_view);

  std::vector<Joint> joints_;
  std::vector<Finger> fingers_;
  std::vector<std::string> link_names_;
  std::map<std::string, std::size_t, std::less<>> link_lookup_;
  std::vector<std::vector<SurfaceSample>> link_samples_;  // indexed by link
  std::vector<std::size_t> joint_order_;                 // topological
  std::vector<FixedFrame> fixed_frames_;
  std::size_t root_link_ = 0;
};

/// Parse a hand description from JSON text. `source` names the input in errors.
HandModel parseHand(std::string_view json_text, std::string_view source = "<memory>");
HandModel loadHand(const std::string& path);

/// World transform of every link, indexed like HandModel::linkNames().
class LinkPoses {
public:
  LinkPoses() = default;
  LinkPoses(const HandModel* model, std::vector<RigidTransform> poses)
      : model_(model), poses_(std::move(poses)) {}

  const RigidTransform& operator[](std::size_t link) const { return poses_[link]; }
  const RigidTransform& at(std::string_view link_name) const;
  std::size_t size() const { return poses_.size(); }
  const std::vector<RigidTransform>& all() const { return poses_; }

private:
  const HandModel* model_ = nullptr;
  std::vector<RigidTransform> poses_;
};

/// Forward kinematics. `root` places the hand root link in the world.
LinkPoses forwardKinematics(const HandModel& model, const Eigen::VectorXd& q,
                            const RigidTransform& root = RigidTransform::identity());

/// World axis and anchor of a joint given link poses.
struct JointFrame {
  Vec3 axis;
  Vec3 anchor;
};
JointFrame jointWorldFrame(const HandModel& model, const LinkPoses& poses, std::size_t joint);

/// Positional Jacobian (3 x d_f) of the fingertip frame origin over the finger's joints.
Eigen::Matrix<double, 3, Eigen::Dynamic> fingertipJacobian(const HandModel& model,
                                                           const Eigen::VectorXd& q,
                                                           std::string_view finger,
                                                           const RigidTransform& root =
                                                               RigidTransform::identity());

/// Positional Jacobian (3 x dof) of a world point rigidly attached to the
/// finger's tip link. Columns of joints outside the finger are zero.
Eigen::Matrix<double, 3, Eigen::Dynamic> pointJacobian(const HandModel& model,
                                                       const LinkPoses& poses,
                                                       std::size_t finger, const Vec3& world_point);

}  // namespace pinchkit
