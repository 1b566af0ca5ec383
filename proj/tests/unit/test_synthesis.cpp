#include "support.hpp"

#include "pinchkit/error.hpp"
#include "pinchkit/oracle.hpp"
#include "pinchkit/parallel.hpp"
#include "pinchkit/pipeline.hpp"
#include "pinchkit/synthesis.hpp"

#include <numbers>

using namespace pinchkit;
using testing::hand;

namespace {

bool sameCandidate(const GraspCandidate& a, const GraspCandidate& b) {
  return a.q.size() == b.q.size() &&
         std::memcmp(a.q.data(), b.q.data(), sizeof(double) * static_cast<std::size_t>(a.q.size())) == 0 &&
         std::memcmp(a.wrist.rotation.data(), b.wrist.rotation.data(), sizeof(double) * 9) == 0 &&
         std::memcmp(a.wrist.translation.data(), b.wrist.translation.data(), sizeof(double) * 3) == 0 &&
         a.energy == b.energy && a.converged == b.converged && a.history == b.history;
}

Vec3 tip(const HandModel& m, const Eigen::VectorXd& q, const std::string& f) {
  return forwardKinematics(m, q)[m.finger(f).tip_link].translation;
}

double angleDeg(const Vec3& a, const Vec3& b) {
  return std::acos(std::clamp(a.normalized().dot(b.normalized()), -1.0, 1.0)) * 180.0 / std::numbers::pi;
}

}  // namespace

TEST_CASE("synthesize_precise_grasp: 5 mm sphere converges for most seeds") {
  const HandModel m = hand("hand_planar2f");
  const ObjectShape s = parsePrimitiveSpec("sphere:r=0.005");
  int converged = 0;
  for (std::uint64_t seed = 0; seed < 100; ++seed) {
    const GraspCandidate c = synthesizePreciseGrasp(m, s, taskSeed(1, seed));
    converged += c.converged ? 1 : 0;
    if (c.converged) {
      CHECK(c.e_precise < 1e-3);
      CHECK(c.max_penetration < 5e-4);
    }
    for (std::size_t i = 1; i < c.history.size(); ++i) CHECK(c.history[i] <= c.history[i - 1]);
    CHECK((c.q.array() >= m.lowerLimits().array()).all());
    CHECK((c.q.array() <= m.upperLimits().array()).all());
    CHECK(std::isfinite(c.energy));
  }
  CHECK(converged >= 60);
}

TEST_CASE("synthesize_precise_grasp: an antipodal warm start stops at once") {
  const HandModel m = hand("hand_prismatic2f");
  const ObjectShape s = parsePrimitiveSpec("sphere:r=0.005");
  SynthesisOptions o;
  o.warm_start = WarmStart{RigidTransform::identity(), Eigen::Vector2d(0.015, -0.015)};
  const GraspCandidate c = synthesizePreciseGrasp(m, s, 0, o);
  CHECK(c.converged);
  CHECK(c.iterations <= 5);
  CHECK(c.e_precise < 1e-6);
}

TEST_CASE("synthesize_precise_grasp: objects wider than the aperture") {
  const HandModel m = hand("hand_planar2f");
  const ObjectShape box = parsePrimitiveSpec("box:hx=0.2,hy=0.2,hz=0.2");
  const GraspCandidate c = synthesizePreciseGrasp(m, box, 3);
  CHECK_FALSE(c.converged);
  CHECK(c.reason == "aperture");
}

TEST_CASE("synthesize_precise_grasp: only thumb and index joints move") {
  const HandModel m = hand("hand_4f");
  const ObjectShape s = parsePrimitiveSpec("sphere:r=0.01");
  SynthesisOptions zero;
  zero.iterations = 0;
  for (std::uint64_t seed = 0; seed < 3; ++seed) {
    const GraspCandidate init = synthesizePreciseGrasp(m, s, seed, zero);
    const GraspCandidate c = synthesizePreciseGrasp(m, s, seed);
    for (const std::string name : {"middle", "ring"}) {
      for (std::size_t j : m.finger(name).joints) {
        CHECK(c.q[static_cast<Eigen::Index>(j)] == init.q[static_cast<Eigen::Index>(j)]);
      }
    }
  }
}

TEST_CASE("synthesize_power_grasp: 30 mm sphere with the four-finger hand") {
  const HandModel m = hand("hand_4f");
  const ObjectShape s = parsePrimitiveSpec("sphere:r=0.03");
  int converged = 0;
  for (std::uint64_t seed = 0; seed < 6; ++seed) {
    const GraspCandidate c = synthesizePowerGrasp(m, s, seed);
    if (!c.converged) continue;
    ++converged;
    const LinkPoses poses = forwardKinematics(m, c.q, c.wrist);
    for (std::size_t f = 0; f < m.fingers().size(); ++f) {
      double gap = 1e300;
      for (const SurfaceSample& smp : m.tipSamples(f)) {
        gap = std::min(gap, std::abs(sdfQuery(s, poses[m.fingers()[f].tip_link].apply(smp.point)).value));
      }
      CHECK(gap < 1e-3);
    }
  }
  CHECK(converged >= 1);
}

TEST_CASE("synthesis: zero iterations, determinism, cloud rejection") {
  const HandModel m = hand("hand_4f");
  const ObjectShape s = parsePrimitiveSpec("sphere:r=0.03");
  SynthesisOptions zero;
  zero.iterations = 0;
  const GraspCandidate c0 = synthesizePowerGrasp(m, s, 5, zero);
  CHECK(c0.iterations == 0);
  REQUIRE(c0.history.size() == 1);
  CHECK(c0.energy == c0.history.front());
  CHECK(sameCandidate(synthesizePowerGrasp(m, s, 5), synthesizePowerGrasp(m, s, 5)));
  CHECK_THROWS_AS(synthesizePowerGrasp(m, makeCloudShape(s.cloud, {}, "bare"), 1), Error);
}

TEST_CASE("synthesis is identical across thread counts") {
  const HandModel m = hand("hand_planar2f");
  const std::vector<ObjectShape> objects = {parsePrimitiveSpec("sphere:r=0.004"), parsePrimitiveSpec("sphere:r=0.008")};
  TrialOptions o;
  o.seeds = 6;
  o.global_seed = 77;
  o.jobs = 1;
  const auto serial = runPreciseTrials(m, objects, nullptr, o);
  o.jobs = 4;
  const auto parallel = runPreciseTrials(m, objects, nullptr, o);
  REQUIRE(serial.size() == parallel.size());
  for (std::size_t i = 0; i < serial.size(); ++i) {
    CHECK(serial[i].seed == parallel[i].seed);
    CHECK(sameCandidate(serial[i].candidate, parallel[i].candidate));
  }
}

TEST_CASE("converged precise candidates resist a zero wrench") {
  const HandModel m = hand("hand_planar2f");
  const ObjectShape s = parsePrimitiveSpec("sphere:r=0.006");
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    const GraspCandidate c = synthesizePreciseGrasp(m, s, seed);
    if (!c.converged) continue;
    const auto contacts = objectContacts(m, c.wrist, c.q, s, 1e-3);
    CHECK(wrenchResistance(contacts, 0.5, Wrench::Zero()).feasible);
  }
}

TEST_CASE("parallel_pinch_motion: opposing prismatic fingers") {
  const HandModel m = hand("hand_prismatic2f");
  const Eigen::Vector2d q(0.0, 0.0);
  const Eigen::VectorXd dq = pinchDelta(m, q, 0, 1, 0.01);
  CHECK(dq[0] == doctest::Approx(-0.01).epsilon(1e-12));
  CHECK(dq[1] == doctest::Approx(0.01).epsilon(1e-12));
  const GraspTrajectory t = parallelPinchMotion(m, q, 0.01, 0.005);
  REQUIRE(t.waypoints.size() == 3);
  CHECK(t.waypoints[0].q[0] == doctest::Approx(-0.01));
  CHECK(t.waypoints[2].q[1] == doctest::Approx(-0.005));
  const GraspTrajectory still = parallelPinchMotion(m, q, 0.0, 0.0);
  CHECK(still.waypoints[0].q == still.waypoints[1].q);
  CHECK(still.waypoints[2].q == still.waypoints[1].q);
}

TEST_CASE("parallel_pinch_motion: first-order contract on the revolute fixture") {
  const HandModel m = hand("hand_planar2f");
  Rng rng(44);
  const double alpha = 1e-3;
  int good = 0;
  const int trials = 200;
  for (int k = 0; k < trials; ++k) {
    const Eigen::VectorXd q = testing::randomQ(m, rng);
    const ContactSet a = sampleFingertipContacts(m, q, {0}, 4);
    const ContactSet b = sampleFingertipContacts(m, q, {1}, 4);
    const Vec3 d = (contactCentroid(b.contacts) - contactCentroid(a.contacts)).normalized();
    const Eigen::VectorXd q2 = q + pinchDelta(m, q, 0, 1, alpha);
    const Vec3 mt = tip(m, q2, "thumb") - tip(m, q, "thumb");
    const Vec3 mi = tip(m, q2, "index") - tip(m, q, "index");
    const bool ok = angleDeg(mt, -d) <= 5.0 && angleDeg(mi, d) <= 5.0 && std::abs(mt.norm() - alpha) <= 0.1 * alpha &&
                    std::abs(mi.norm() - alpha) <= 0.1 * alpha;
    good += ok ? 1 : 0;
  }
  CHECK(good >= 190);
}

TEST_CASE("parallel_pinch_motion: swapping thumb and index gives the same motion") {
  const HandModel m = hand("hand_4f");
  Rng rng(5);
  for (int k = 0; k < 30; ++k) {
    const Eigen::VectorXd q = testing::randomQ(m, rng);
    const Eigen::VectorXd a = pinchDelta(m, q, 0, 1, 0.01);
    const Eigen::VectorXd b = pinchDelta(m, q, 1, 0, 0.01);
    CHECK((a - b).norm() == 0.0);
  }
  PinchOptions o;
  o.direction = Vec3(1, 0, 0);
  const HandModel p = hand("hand_prismatic2f");
  CHECK(pinchDelta(p, Eigen::Vector2d(0.0, 0.0), 0, 1, 0.01, o)[1] == doctest::Approx(0.01));
}

TEST_CASE("pseudoInverse truncates small singular values") {
  Eigen::MatrixXd a(3, 2);
  a << 1, 0, 0, 1e-10, 0, 0;
  const Eigen::MatrixXd p = pseudoInverse(a);
  CHECK(p(0, 0) == doctest::Approx(1.0));
  CHECK(p(1, 1) == 0.0);
  Rng rng(1);
  Eigen::MatrixXd b(3, 4);
  for (int i = 0; i < 12; ++i) b.data()[i] = rng.uniform(-1, 1);
  const Eigen::MatrixXd pb = pseudoInverse(b);
  CHECK((b * pb * b - b).norm() < 1e-12);
}

TEST_CASE("sdf_push_motion examples") {
  const HandModel m = hand("finger_planar1f");
  const Eigen::Vector2d q(0.0, 0.0);
  PrimitiveParams pp;
  pp.radius = 0.01;
  const ObjectShape away = makePrimitive(ShapeKind::kSphere, pp, RigidTransform::fromTranslation(Vec3(0.09, 0.02, 0)), 64, 1);
  REQUIRE(sdfQuery(away, tip(m, q, "thumb")).value == doctest::Approx(0.01));
  const Eigen::VectorXd back = sdfPushMotion(m, q, away, -0.005);
  CHECK(sdfQuery(away, tip(m, back, "thumb")).value == doctest::Approx(0.015).epsilon(0.2));
  CHECK(sdfPushMotion(m, q, away, 0.0) == Eigen::VectorXd(q));

  const ObjectShape touching = makePrimitive(ShapeKind::kSphere, pp, RigidTransform::fromTranslation(Vec3(0.09, 0.01, 0)), 64, 1);
  REQUIRE(std::abs(sdfQuery(touching, tip(m, q, "thumb")).value) < 1e-15);
  CHECK(sdfQuery(touching, tip(m, sdfPushMotion(m, q, touching, 0.002), "thumb")).value < 0.0);

  const GraspTrajectory t = sdfPushTrajectory(m, RigidTransform::identity(), q, away, 0.005, 0.002);
  REQUIRE(t.waypoints.size() == 3);
  CHECK(t.waypoints[1].q == Eigen::VectorXd(q));
}

TEST_CASE("aperture_to_config examples") {
  const HandModel p = hand("hand_prismatic2f");
  const Eigen::Vector2d start(0.0, 0.0);
  CHECK(pinchAperture(p, start) == doctest::Approx(0.04));
  const ApertureResult same = apertureToConfig(p, start, pinchAperture(p, start));
  CHECK(same.q == Eigen::VectorXd(start));
  const ApertureResult closer = apertureToConfig(p, start, 0.02);
  CHECK(closer.q[0] == doctest::Approx(0.01).epsilon(1e-6));
  CHECK(closer.q[1] == doctest::Approx(-0.01).epsilon(1e-6));
  CHECK_FALSE(closer.clamped);
  CHECK(apertureToConfig(p, start, 1.0).clamped);

  const HandModel m = hand("hand_planar2f");
  const Eigen::Vector4d ref(0.9, -1.0, 0.9, -1.0);
  double prev = -1.0;
  for (double ap : {0.01, 0.02, 0.03, 0.04}) {
    const ApertureResult r = apertureToConfig(m, ref, ap);
    CHECK(std::abs(pinchAperture(m, r.q) - ap) <= 5e-4);
    CHECK(r.achieved > prev);
    prev = r.achieved;
  }
}

TEST_CASE("bestCandidate: E_precise, then penetration, then seed") {
  auto cand = [](bool converged, double e, double pen, std::uint64_t seed) {
    GraspCandidate c;
    c.converged = converged;
    c.e_precise = e;
    c.max_penetration = pen;
    c.seed = seed;
    return c;
  };
  CHECK_FALSE(bestCandidate({}).has_value());
  CHECK_FALSE(bestCandidate({cand(false, 0.0, 0.0, 1)}).has_value());
  CHECK(bestCandidate({cand(true, 5e-4, 0.0, 1), cand(false, 0.0, 0.0, 2), cand(true, 2e-4, 1e-4, 3)}) == 2u);
  CHECK(bestCandidate({cand(true, 2e-4, 3e-4, 1), cand(true, 2e-4, 1e-4, 9)}) == 1u);
  CHECK(bestCandidate({cand(true, 2e-4, 1e-4, 9), cand(true, 2e-4, 1e-4, 4)}) == 1u);
}
