#include "support.hpp"

#include "pinchkit/error.hpp"

#include <numbers>

using namespace pinchkit;
using testing::hand;

namespace {

constexpr double kPi = std::numbers::pi;

Vec3 tipOf(const HandModel& m, const Eigen::VectorXd& q, const std::string& finger) {
  return forwardKinematics(m, q)[m.finger(finger).tip_link].translation;
}

std::string planarJson(const std::string& axis, const std::string& chain, const std::string& tip = "tip") {
  return R"({"joints": [
    {"name": "j1", "parent": "base", "child": "l1", "type": "revolute", "origin": {"xyz": [0,0,0]},
     "axis": )" + axis + R"(, "limits": [-3, 3]},
    {"name": "j2", "parent": "l1", "child": "l2", "type": "revolute", "origin": {"xyz": [0.05,0,0]},
     "axis": [0,0,1], "limits": [-3, 3]}],
    "fingers": [{"name": "thumb", "joint_names": )" + chain + R"(, "tip_link": ")" + tip +
         R"(", "tip_origin": {"xyz": [0.04,0,0]}}],
    "fingertip_samples": {}})";
}

}  // namespace

TEST_CASE("load_hand: planar two-finger fixture has four joints") {
  const HandModel m = hand("hand_planar2f");
  CHECK(m.dof() == 4);
  CHECK(m.fingers().size() == 2);
  CHECK(m.hasFinger("thumb"));
  CHECK(m.hasFinger("index"));
  CHECK(m.tipSamples(m.fingerIndex("thumb")).size() == 13);
}

TEST_CASE("load_hand: structural errors") {
  CHECK_THROWS_WITH_AS(parseHand(planarJson("[0,0,2]", R"(["j1","j2"])")), doctest::Contains("non-unit axis"),
                       ParseError);
  CHECK_THROWS_WITH_AS(parseHand(planarJson("[0,0,1]", R"(["j2"])")),
                       doctest::Contains("finger joints not a chain"), ParseError);
  CHECK_THROWS_WITH_AS(parseHand("{\"joints\": [\n  {,}]}"), doctest::Contains("line 2"), ParseError);
  CHECK_THROWS_AS(loadHand("/nonexistent/hand.json"), ParseError);
  const std::string cyclic = R"({"joints": [
    {"name": "a", "parent": "x", "child": "y", "type": "revolute", "origin": {"xyz": [0,0,0]}, "axis": [0,0,1], "limits": [-1,1]},
    {"name": "b", "parent": "y", "child": "x", "type": "revolute", "origin": {"xyz": [0,0,0]}, "axis": [0,0,1], "limits": [-1,1]}],
    "fingers": [], "fingertip_samples": {}})";
  CHECK_THROWS_WITH_AS(parseHand(cyclic), doctest::Contains("cyclic"), ParseError);
  const std::string bad_tip = R"({"joints": [
    {"name": "a", "parent": "x", "child": "y", "type": "revolute", "origin": {"xyz": [0,0,0]}, "axis": [0,0,1], "limits": [-1,1]}],
    "fingers": [{"name": "thumb", "joint_names": ["a"], "tip_link": "y"}],
    "fingertip_samples": {"nowhere": [{"point": [0,0,0], "normal": [0,1,0]}]}})";
  CHECK_THROWS_WITH_AS(parseHand(bad_tip), doctest::Contains("unknown fingertip link"), ParseError);
}

TEST_CASE("forward_kinematics: planar finger examples") {
  const HandModel m = hand("finger_planar1f");
  CHECK((tipOf(m, Eigen::Vector2d(0, 0), "thumb") - Vec3(0.09, 0, 0)).norm() < 1e-12);
  CHECK((tipOf(m, Eigen::Vector2d(kPi / 2, 0), "thumb") - Vec3(0, 0.09, 0)).norm() < 1e-12);
  CHECK((tipOf(m, Eigen::Vector2d(kPi / 2, -kPi / 2), "thumb") - Vec3(0.04, 0.05, 0)).norm() < 1e-12);
  const LinkPoses poses = forwardKinematics(m, Eigen::Vector2d(0.3, 0.2));
  CHECK(poses[m.rootLink()].translation.norm() == 0.0);
  CHECK((poses[m.rootLink()].rotation - Mat3::Identity()).norm() == 0.0);
  CHECK_THROWS_AS(forwardKinematics(m, Eigen::Vector3d(0, 0, 0)), DimensionError);
}

TEST_CASE("fingertip_jacobian: planar finger examples") {
  const HandModel m = hand("finger_planar1f");
  auto j0 = fingertipJacobian(m, Eigen::Vector2d(0, 0), "thumb");
  CHECK((j0.col(0) - Vec3(0, 0.09, 0)).norm() < 1e-12);
  CHECK((j0.col(1) - Vec3(0, 0.04, 0)).norm() < 1e-12);
  auto j1 = fingertipJacobian(m, Eigen::Vector2d(kPi / 2, 0), "thumb");
  CHECK((j1.col(0) - Vec3(-0.09, 0, 0)).norm() < 1e-12);
  CHECK((j1.col(1) - Vec3(-0.04, 0, 0)).norm() < 1e-12);
  CHECK_THROWS(fingertipJacobian(m, Eigen::Vector2d(0, 0), "pinky"));
}

TEST_CASE("fingertip_jacobian: prismatic column is the axis") {
  const HandModel m = hand("hand_prismatic2f");
  Rng rng(5);
  for (int k = 0; k < 10; ++k) {
    const Eigen::VectorXd q = testing::randomQ(m, rng);
    const auto j = fingertipJacobian(m, q, "index");
    REQUIRE(j.cols() == 1);
    CHECK((j.col(0) - Vec3(1, 0, 0)).norm() == 0.0);
  }
}

TEST_CASE("fingertip_jacobian matches central differences on every fixture") {
  const double h = 1e-6;
  for (const char* name : {"finger_planar1f", "hand_planar2f", "hand_prismatic2f", "hand_4f"}) {
    const HandModel m = hand(name);
    Rng rng(hashString(name));
    for (int trial = 0; trial < 25; ++trial) {
      const Eigen::VectorXd q = testing::randomQ(m, rng);
      for (const Finger& f : m.fingers()) {
        const auto jac = fingertipJacobian(m, q, f.name);
        for (std::size_t c = 0; c < f.joints.size(); ++c) {
          Eigen::VectorXd qp = q;
          Eigen::VectorXd qm = q;
          qp[static_cast<Eigen::Index>(f.joints[c])] += h;
          qm[static_cast<Eigen::Index>(f.joints[c])] -= h;
          const Vec3 fd = (tipOf(m, qp, f.name) - tipOf(m, qm, f.name)) / (2 * h);
          CHECK((fd - jac.col(static_cast<Eigen::Index>(c))).cwiseAbs().maxCoeff() <= 1e-6);
        }
      }
    }
  }
}

TEST_CASE("forward_kinematics is deterministic and finite after clamping") {
  const HandModel m = hand("hand_4f");
  Rng rng(17);
  for (int k = 0; k < 50; ++k) {
    Eigen::VectorXd q(m.dof());
    for (Eigen::Index i = 0; i < q.size(); ++i) q[i] = rng.uniform(-10, 10);
    const Eigen::VectorXd qc = m.clamp(q);
    CHECK((qc.array() >= m.lowerLimits().array()).all());
    CHECK((qc.array() <= m.upperLimits().array()).all());
    const LinkPoses a = forwardKinematics(m, qc);
    const LinkPoses b = forwardKinematics(m, qc);
    for (std::size_t l = 0; l < a.size(); ++l) {
      CHECK(a[l].translation.allFinite());
      CHECK(a[l].rotation.allFinite());
      CHECK(std::memcmp(a[l].translation.data(), b[l].translation.data(), sizeof(double) * 3) == 0);
      CHECK(std::memcmp(a[l].rotation.data(), b[l].rotation.data(), sizeof(double) * 9) == 0);
      CHECK((a[l].rotation.transpose() * a[l].rotation - Mat3::Identity()).norm() < 1e-9);
      CHECK(std::abs(a[l].rotation.determinant() - 1.0) < 1e-9);
    }
  }
}

TEST_CASE("wrist parameters round trip") {
  Rng rng(9);
  for (int k = 0; k < 20; ++k) {
    Eigen::Matrix<double, 6, 1> p;
    for (int i = 0; i < 6; ++i) p[i] = rng.uniform(-1.5, 1.5);
    const RigidTransform t = wristFromParams(p);
    CHECK((wristFromParams(paramsFromWrist(t)).rotation - t.rotation).norm() < 1e-12);
    CHECK((paramsFromWrist(t).head<3>() - p.head<3>()).norm() < 1e-15);
  }
}
