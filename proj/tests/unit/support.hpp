#pragma once

#include "pinchkit/geometry.hpp"
#include "pinchkit/kinematics.hpp"
#include "pinchkit/random.hpp"

#include <doctest.h>

#include <cmath>
#include <cstring>
#include <string>

namespace testing {

inline std::string fixture(const std::string& name) { return std::string(PINCHKIT_FIXTURE_DIR) + "/" + name; }

inline pinchkit::HandModel hand(const std::string& name) { return pinchkit::loadHand(fixture(name + ".json")); }

inline Eigen::VectorXd randomQ(const pinchkit::HandModel& m, pinchkit::Rng& rng) {
  const Eigen::VectorXd lo = m.lowerLimits();
  const Eigen::VectorXd hi = m.upperLimits();
  Eigen::VectorXd q(m.dof());
  for (Eigen::Index i = 0; i < q.size(); ++i) q[i] = rng.uniform(lo[i], hi[i]);
  return q;
}

inline pinchkit::Vec3 randomUnit(pinchkit::Rng& rng) {
  pinchkit::Vec3 v;
  do {
    v = pinchkit::Vec3(rng.uniform(-1, 1), rng.uniform(-1, 1), rng.uniform(-1, 1));
  } while (v.norm() < 0.1 || v.norm() > 1.0);
  return v.normalized();
}

inline bool relClose(double a, double b, double rel, double abs_floor = 0.0) {
  return std::abs(a - b) <= rel * std::max(std::abs(a), std::abs(b)) + abs_floor;
}

}  // namespace testing
